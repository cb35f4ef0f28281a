#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "msgca/error.hpp"

namespace msgca::data {

/// Class indices are fixed: down = 0, flat = 1, up = 2.
enum class Trend : int { kDown = 0, kFlat = 1, kUp = 2 };

inline constexpr int kNumClasses = 3;

inline int to_index(Trend t) { return static_cast<int>(t); }

inline Trend trend_from_index(int i) {
  if (i < 0 || i >= kNumClasses) throw DataError("class index out of range: " + std::to_string(i));
  return static_cast<Trend>(i);
}

/// Report-facing name; the down/flat/up trends are also written as -1/0/1.
inline const char* trend_name(Trend t) {
  switch (t) {
    case Trend::kDown: return "down";
    case Trend::kFlat: return "flat";
    case Trend::kUp: return "up";
  }
  return "?";
}

struct PriceSeries {
  std::string symbol;
  std::vector<std::string> dates;  // ISO-8601, strictly increasing
  std::vector<double> open;
  std::vector<double> high;
  std::vector<double> close;  // adjusted close

  std::size_t size() const { return dates.size(); }
};

struct DocumentDay {
  std::string symbol;
  std::string date;
  std::vector<std::string> texts;
};

using SymbolDate = std::pair<std::string, std::string>;

/// Pooled document embedding per (symbol, date).
struct EmbeddingTable {
  std::size_t dim = 1536;
  std::map<SymbolDate, std::vector<double>> entries;

  const std::vector<double>* find(const std::string& symbol, const std::string& date) const {
    auto it = entries.find({symbol, date});
    return it == entries.end() ? nullptr : &it->second;
  }

  void insert(const std::string& symbol, const std::string& date, std::vector<double> v) {
    if (v.size() != dim)
      throw DataError("embedding for " + symbol + "@" + date + " has width " +
                      std::to_string(v.size()) + ", table expects " + std::to_string(dim));
    entries[{symbol, date}] = std::move(v);
  }

  std::size_t size() const { return entries.size(); }
};

struct LabelSpec {
  double lower = -0.01;
  double upper = 0.01;
};

/// Flat-band thresholds used for the four benchmark markets.
namespace thresholds {
inline constexpr LabelSpec kInnoStock{-0.01, 0.01};
inline constexpr LabelSpec kBigData22{-0.005, 0.005};
inline constexpr LabelSpec kAcl18{-0.004, 0.004};
inline constexpr LabelSpec kCikm18{-0.003, 0.003};
}  // namespace thresholds

struct SplitRatios {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;
};

}  // namespace msgca::data
