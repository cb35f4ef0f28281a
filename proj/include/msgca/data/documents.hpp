#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "msgca/data/types.hpp"
#include "msgca/log.hpp"

namespace msgca::data {

inline std::vector<DocumentDay> parse_documents(std::istream& in, const std::string& source = "documents") {
  std::vector<DocumentDay> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      DocumentDay d;
      d.symbol = j.at("symbol").get<std::string>();
      d.date = j.at("date").get<std::string>();
      d.texts = j.at("texts").get<std::vector<std::string>>();
      out.push_back(std::move(d));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(source + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<DocumentDay> load_documents(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open documents file: " + path);
  return parse_documents(in, path);
}

inline void save_documents(const std::string& path, const std::vector<DocumentDay>& days) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write documents file: " + path);
  for (const auto& d : days)
    out << nlohmann::json{{"symbol", d.symbol}, {"date", d.date}, {"texts", d.texts}}.dump() << '\n';
}

inline nlohmann::json embedding_line(const std::string& symbol, const std::string& date,
                                     const std::vector<double>& v) {
  return nlohmann::json{{"symbol", symbol}, {"date", date}, {"vector", v}};
}

/// Reads embeddings.jsonl. `dim` = 0 adopts the width of the first entry.
/// A torn final line (interrupted append) is skipped with a warning.
inline EmbeddingTable parse_embeddings(std::istream& in, std::size_t dim, const std::string& source) {
  EmbeddingTable table;
  table.dim = dim;
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);)
    if (line.find_first_not_of(" \t\r") != std::string::npos) lines.push_back(line);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(lines[i]);
    } catch (const nlohmann::json::exception& e) {
      if (i + 1 == lines.size()) {
        log::warn(source + ": ignoring truncated final line");
        break;
      }
      throw FormatError(source + ": line " + std::to_string(i + 1) + ": " + e.what());
    }
    try {
      auto v = j.at("vector").get<std::vector<double>>();
      if (table.dim == 0) table.dim = v.size();
      for (double x : v)
        if (!std::isfinite(x)) throw DataError(source + ": non-finite value on line " + std::to_string(i + 1));
      table.insert(j.at("symbol").get<std::string>(), j.at("date").get<std::string>(), std::move(v));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(source + ": line " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  if (table.dim == 0) table.dim = dim;
  return table;
}

inline EmbeddingTable load_embeddings(const std::string& path, std::size_t dim = 0) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embeddings file: " + path);
  return parse_embeddings(in, dim, path);
}

inline void save_embeddings(const std::string& path, const EmbeddingTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write embeddings file: " + path);
  for (const auto& [key, v] : table.entries) out << embedding_line(key.first, key.second, v).dump() << '\n';
}

/// Document embeddings laid out on a series' own trading calendar.
struct AlignedDocuments {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> embeddings;  // len x dim
  std::vector<std::uint8_t> mask;  // 1 = documents present that day
};

/// Zero-fill alignment: dates with documents take the table's pooled vector,
/// all other dates are zero rows with mask 0.
inline AlignedDocuments align_documents(const PriceSeries& series, const std::vector<DocumentDay>& days,
                                        const EmbeddingTable& table) {
  AlignedDocuments out;
  out.embeddings.setZero(static_cast<Eigen::Index>(series.size()), static_cast<Eigen::Index>(table.dim));
  out.mask.assign(series.size(), 0);

  std::map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < series.size(); ++i) row_of.emplace(series.dates[i], i);

  std::vector<std::string> missing;
  for (const auto& d : days) {
    if (d.symbol != series.symbol || d.texts.empty()) continue;
    auto it = row_of.find(d.date);
    if (it == row_of.end()) {
      log::warn("dropping documents of " + d.symbol + " on non-trading day " + d.date);
      continue;
    }
    const auto* v = table.find(d.symbol, d.date);
    if (!v) {
      missing.push_back(d.symbol + "@" + d.date);
      continue;
    }
    const auto row = static_cast<Eigen::Index>(it->second);
    for (std::size_t k = 0; k < table.dim; ++k) out.embeddings(row, static_cast<Eigen::Index>(k)) = (*v)[k];
    out.mask[it->second] = 1;
  }
  if (!missing.empty()) {
    std::string keys;
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) keys += (i ? ", " : "") + missing[i];
    if (missing.size() > 20) keys += ", ...";
    throw MissingEmbeddingError("no cached embedding for " + std::to_string(missing.size()) +
                                " document day(s): " + keys);
  }
  return out;
}

}  // namespace msgca::data
