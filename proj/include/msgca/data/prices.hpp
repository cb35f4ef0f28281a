#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "msgca/data/types.hpp"

namespace msgca::data {

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

inline bool is_iso_date(std::string_view s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
  for (std::size_t i : {0, 1, 2, 3, 5, 6, 8, 9})
    if (s[i] < '0' || s[i] > '9') return false;
  const int month = (s[5] - '0') * 10 + (s[6] - '0');
  const int day = (s[8] - '0') * 10 + (s[9] - '0');
  return month >= 1 && month <= 12 && day >= 1 && day <= 31;
}

/// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace detail

/// Parses a price table with header `date,symbol,open,high,close` (columns may
/// appear in any order). One series per symbol, dates sorted ascending.
inline std::vector<PriceSeries> parse_prices(std::istream& in, const std::string& source = "prices") {
  std::string line;
  if (!std::getline(in, line)) throw FormatError(source + ": empty file");
  const auto header = detail::split(detail::trim(line), ',');
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[std::string(detail::trim(header[i]))] = i;
  for (const char* name : {"date", "symbol", "open", "high", "close"})
    if (!col.contains(name)) throw FormatError(source + ": missing column '" + name + "'");

  struct Row {
    std::string date;
    double open, high, close;
  };
  std::map<std::string, std::vector<Row>> by_symbol;
  std::map<SymbolDate, std::size_t> seen;
  std::vector<std::string> malformed;
  std::size_t row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split(line, ',');
    if (fields.size() != header.size()) {
      malformed.push_back(std::to_string(row_no));
      continue;
    }
    const std::string date(detail::trim(fields[col["date"]]));
    const std::string symbol(detail::trim(fields[col["symbol"]]));
    const auto open = detail::parse_double(fields[col["open"]]);
    const auto high = detail::parse_double(fields[col["high"]]);
    const auto close = detail::parse_double(fields[col["close"]]);
    if (symbol.empty() || !detail::is_iso_date(date) || !open || !high || !close ||
        !std::isfinite(*open) || !std::isfinite(*high) || !std::isfinite(*close)) {
      malformed.push_back(std::to_string(row_no));
      continue;
    }
    if (*open <= 0 || *high <= 0 || *close <= 0)
      throw DataError(source + ": non-positive price at row " + std::to_string(row_no) + " (" +
                      symbol + " " + date + ")");
    auto [it, inserted] = seen.emplace(SymbolDate{symbol, date}, row_no);
    if (!inserted)
      throw DataError(source + ": duplicate (symbol, date) " + symbol + " " + date + " at rows " +
                      std::to_string(it->second) + " and " + std::to_string(row_no));
    by_symbol[symbol].push_back({date, *open, *high, *close});
  }
  if (!malformed.empty()) {
    std::string rows;
    for (std::size_t i = 0; i < malformed.size() && i < 20; ++i) rows += (i ? "," : "") + malformed[i];
    if (malformed.size() > 20) rows += ",...";
    throw FormatError(source + ": malformed rows " + rows);
  }

  std::vector<PriceSeries> out;
  for (auto& [symbol, rows] : by_symbol) {
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.date < b.date; });
    PriceSeries s;
    s.symbol = symbol;
    for (const auto& r : rows) {
      s.dates.push_back(r.date);
      s.open.push_back(r.open);
      s.high.push_back(r.high);
      s.close.push_back(r.close);
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<PriceSeries> load_prices(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open price file: " + path);
  return parse_prices(in, path);
}

inline void write_prices(std::ostream& out, const std::vector<PriceSeries>& series) {
  out << "date,symbol,open,high,close\n";
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.size(); ++i)
      out << s.dates[i] << ',' << s.symbol << ',' << detail::format_double(s.open[i]) << ','
          << detail::format_double(s.high[i]) << ',' << detail::format_double(s.close[i]) << '\n';
}

inline void save_prices(const std::string& path, const std::vector<PriceSeries>& series) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write price file: " + path);
  write_prices(out, series);
}

/// Slack absorbing the rounding of p_t / p_{t-1} - 1 at a threshold (e.g. 100.5 / 100).
inline constexpr double kThresholdSlack = 1e-12;

/// Trend of a single return r = p_t / p_{t-1} - 1; both thresholds inclusive.
inline Trend classify_return(double r, const LabelSpec& spec) {
  if (r >= spec.upper - kThresholdSlack) return Trend::kUp;
  if (r <= spec.lower + kThresholdSlack) return Trend::kDown;
  return Trend::kFlat;
}

/// Per-date labels from close-to-close returns. Entry 0 has no label.
/// Series shorter than two dates yield an empty result.
inline std::vector<std::optional<Trend>> compute_labels(const PriceSeries& series, double lower,
                                                        double upper) {
  if (!(lower < 0 && 0 < upper))
    throw ConfigError("label thresholds must satisfy lower < 0 < upper");
  if (series.size() < 2) return {};
  std::vector<std::optional<Trend>> out(series.size());
  for (std::size_t t = 1; t < series.size(); ++t)
    out[t] = classify_return(series.close[t] / series.close[t - 1] - 1.0, {lower, upper});
  return out;
}

}  // namespace msgca::data
