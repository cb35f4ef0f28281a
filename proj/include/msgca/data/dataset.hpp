#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <numeric>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "msgca/data/documents.hpp"
#include "msgca/data/graph.hpp"
#include "msgca/data/prices.hpp"
#include "msgca/data/types.hpp"
#include "msgca/log.hpp"

namespace msgca::data {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One stock's modalities on its own trading calendar.
struct StockPanel {
  PriceSeries series;
  AlignedDocuments docs;
  std::vector<std::optional<Trend>> labels;
  std::vector<std::size_t> calendar_index;  // series.dates[i] == Market::calendar[calendar_index[i]]
};

/// A training instance: rows [start, start + ws) of a stock panel, labeled by
/// the trend on the following trading day. Payloads are views into the panel.
struct WindowSample {
  std::string symbol;
  std::size_t stock = 0;
  std::size_t start = 0;
  std::size_t ws = 0;
  Trend label = Trend::kFlat;
  std::shared_ptr<const StockPanel> panel;

  const std::string& date(std::size_t row) const { return panel->series.dates[start + row]; }
  const std::string& last_date() const { return date(ws - 1); }
  const std::string& label_date() const { return panel->series.dates[start + ws]; }
  std::size_t label_calendar_index() const { return panel->calendar_index[start + ws]; }

  /// ws x 3: close, open, high.
  RowMatrix indicators() const {
    RowMatrix m(static_cast<Eigen::Index>(ws), 3);
    for (std::size_t r = 0; r < ws; ++r) {
      const auto i = start + r;
      m(static_cast<Eigen::Index>(r), 0) = panel->series.close[i];
      m(static_cast<Eigen::Index>(r), 1) = panel->series.open[i];
      m(static_cast<Eigen::Index>(r), 2) = panel->series.high[i];
    }
    return m;
  }
  auto doc_embeddings() const {
    return panel->docs.embeddings.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(ws));
  }
  std::span<const std::uint8_t> doc_mask() const {
    return std::span<const std::uint8_t>(panel->docs.mask).subspan(start, ws);
  }
};

inline std::shared_ptr<StockPanel> make_panel(PriceSeries series, AlignedDocuments docs,
                                              std::vector<std::optional<Trend>> labels) {
  auto p = std::make_shared<StockPanel>();
  p->calendar_index.resize(series.size());
  std::iota(p->calendar_index.begin(), p->calendar_index.end(), std::size_t{0});
  p->series = std::move(series);
  p->docs = std::move(docs);
  p->labels = std::move(labels);
  return p;
}

/// Sliding stride-1 windows: len - ws samples; shorter series are skipped.
inline std::vector<WindowSample> build_windows(const std::shared_ptr<const StockPanel>& panel, std::size_t ws,
                                               std::size_t stock_index = 0) {
  if (ws < 2) throw ConfigError("window size must be >= 2");
  const auto len = panel->series.size();
  std::vector<WindowSample> out;
  if (len < ws + 1) {
    log::warn("series " + panel->series.symbol + " has " + std::to_string(len) +
              " dates, needs at least " + std::to_string(ws + 1) + " for window size " +
              std::to_string(ws) + "; skipped");
    return out;
  }
  if (panel->labels.size() != len || panel->docs.mask.size() != len)
    throw DataError("panel of " + panel->series.symbol + " has misaligned modalities");
  for (std::size_t k = 0; k + ws < len; ++k) {
    const auto& label = panel->labels[k + ws];
    if (!label) throw DataError("missing label for " + panel->series.symbol + " " + panel->series.dates[k + ws]);
    out.push_back({panel->series.symbol, stock_index, k, ws, *label, panel});
  }
  return out;
}

inline std::vector<WindowSample> build_windows(const PriceSeries& series, const AlignedDocuments& docs,
                                               const std::vector<std::optional<Trend>>& labels, std::size_t ws) {
  return build_windows(make_panel(series, docs, labels), ws);
}

struct DatasetSplit {
  std::vector<WindowSample> train, valid, test;
  LabelSpec label_spec;
  std::vector<std::string> calendar;  // global trading dates

  const std::vector<WindowSample>& part(const std::string& name) const {
    if (name == "train") return train;
    if (name == "valid") return valid;
    if (name == "test") return test;
    throw ConfigError("unknown split part: " + name);
  }
};

/// Partitions by label-date quantiles: the first round(train * n) distinct
/// label dates go to train, the next round(valid * n) to valid, the rest to test.
/// Each part is ordered by (label date, stock) regardless of input order.
inline DatasetSplit chronological_split(const std::vector<WindowSample>& samples, const SplitRatios& ratios,
                                        const LabelSpec& label_spec = {}, std::vector<std::string> calendar = {}) {
  if (!(ratios.train > 0 && ratios.valid > 0 && ratios.test > 0) ||
      std::abs(ratios.train + ratios.valid + ratios.test - 1.0) > 1e-9)
    throw ConfigError("split ratios must be positive and sum to 1");
  std::set<std::string> label_dates;
  for (const auto& s : samples) label_dates.insert(s.label_date());
  const std::vector<std::string> dates(label_dates.begin(), label_dates.end());
  const auto n = static_cast<long long>(dates.size());
  const long long n_train = std::llround(ratios.train * static_cast<double>(n));
  const long long n_valid = std::llround(ratios.valid * static_cast<double>(n));
  const long long n_test = n - n_train - n_valid;
  if (n_train <= 0 || n_valid <= 0 || n_test <= 0)
    throw ConfigError("chronological split over " + std::to_string(n) +
                      " label date(s) leaves an empty part (train/valid/test = " + std::to_string(n_train) + "/" +
                      std::to_string(n_valid) + "/" + std::to_string(n_test) + ")");
  const std::string& last_train = dates[static_cast<std::size_t>(n_train - 1)];
  const std::string& last_valid = dates[static_cast<std::size_t>(n_train + n_valid - 1)];

  DatasetSplit split;
  split.label_spec = label_spec;
  split.calendar = calendar.empty() ? dates : std::move(calendar);
  for (const auto& s : samples) {
    const auto& d = s.label_date();
    if (d <= last_train)
      split.train.push_back(s);
    else if (d <= last_valid)
      split.valid.push_back(s);
    else
      split.test.push_back(s);
  }
  auto order = [](const WindowSample& a, const WindowSample& b) {
    if (a.label_date() != b.label_date()) return a.label_date() < b.label_date();
    if (a.symbol != b.symbol) return a.symbol < b.symbol;
    return a.start < b.start;
  };
  std::sort(split.train.begin(), split.train.end(), order);
  std::sort(split.valid.begin(), split.valid.end(), order);
  std::sort(split.test.begin(), split.test.end(), order);
  return split;
}

/// Epoch batches of sample indices. The shuffle depends only on (seed, epoch);
/// the last partial batch is kept.
inline std::vector<std::vector<std::size_t>> batch_iter(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                        std::uint64_t epoch) {
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32), 0x6d736763u};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < n; i += batch_size)
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
  return batches;
}

/// All stocks on the global calendar, plus the graph that links them.
struct Market {
  std::vector<std::string> calendar;
  std::vector<std::shared_ptr<const StockPanel>> stocks;  // same order as graph.stocks
  RelationalGraph graph;
  std::size_t doc_dim = 0;
  LabelSpec label_spec;
  // local_index[s][c]: row of calendar date c in stock s's panel, or -1.
  std::vector<std::vector<std::int64_t>> local_index;

  std::size_t num_stocks() const { return stocks.size(); }
};

struct DatasetConfig {
  std::size_t ws = 20;
  LabelSpec labels;
  SplitRatios ratios;
};

struct Dataset {
  std::shared_ptr<const Market> market;
  DatasetSplit split;
};

/// Assembles every modality and the chronological split. Pure function of its inputs.
inline Dataset build_dataset(const std::vector<PriceSeries>& prices, const std::vector<DocumentDay>& documents,
                             const EmbeddingTable& table, const std::vector<GraphEdge>& edges,
                             const DatasetConfig& cfg) {
  if (prices.empty()) throw DataError("no price series");
  auto market = std::make_shared<Market>();
  market->doc_dim = table.dim;
  market->label_spec = cfg.labels;

  std::vector<PriceSeries> sorted = prices;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.symbol < b.symbol; });
  std::vector<std::string> symbols;
  std::set<std::string> all_dates;
  for (const auto& s : sorted) {
    symbols.push_back(s.symbol);
    all_dates.insert(s.dates.begin(), s.dates.end());
  }
  market->calendar.assign(all_dates.begin(), all_dates.end());
  market->graph = build_graph(symbols, edges);

  std::map<std::string, std::vector<DocumentDay>> docs_by_symbol;
  std::set<std::string> known(symbols.begin(), symbols.end());
  for (const auto& d : documents) {
    if (!known.contains(d.symbol)) {
      log::warn("documents for unknown stock '" + d.symbol + "' ignored");
      continue;
    }
    docs_by_symbol[d.symbol].push_back(d);
  }

  std::vector<WindowSample> samples;
  for (std::size_t s = 0; s < sorted.size(); ++s) {
    const auto& series = sorted[s];
    auto panel = std::make_shared<StockPanel>();
    panel->docs = align_documents(series, docs_by_symbol[series.symbol], table);
    panel->labels = compute_labels(series, cfg.labels.lower, cfg.labels.upper);
    if (panel->labels.empty()) panel->labels.assign(series.size(), std::nullopt);
    panel->series = series;
    std::vector<std::int64_t> local(market->calendar.size(), -1);
    for (std::size_t i = 0; i < series.size(); ++i) {
      const auto c = static_cast<std::size_t>(
          std::lower_bound(market->calendar.begin(), market->calendar.end(), series.dates[i]) -
          market->calendar.begin());
      panel->calendar_index.push_back(c);
      local[c] = static_cast<std::int64_t>(i);
    }
    market->local_index.push_back(std::move(local));
    std::shared_ptr<const StockPanel> cpanel = panel;
    market->stocks.push_back(cpanel);
    auto w = build_windows(cpanel, cfg.ws, s);
    samples.insert(samples.end(), w.begin(), w.end());
  }
  Dataset ds;
  ds.split = chronological_split(samples, cfg.ratios, cfg.labels, market->calendar);
  ds.market = std::move(market);
  return ds;
}

inline constexpr int kSplitFormatVersion = 1;

/// JSON container of split membership (not payloads).
inline nlohmann::json split_to_json(const DatasetSplit& split) {
  auto part = [](const std::vector<WindowSample>& samples) {
    auto arr = nlohmann::json::array();
    for (const auto& s : samples)
      arr.push_back({{"symbol", s.symbol},
                     {"start_date", s.date(0)},
                     {"label_date", s.label_date()},
                     {"label", to_index(s.label)}});
    return arr;
  };
  return nlohmann::json{{"format_version", kSplitFormatVersion},
                        {"window_size", split.train.empty() ? 0 : split.train.front().ws},
                        {"label_spec", {{"lower", split.label_spec.lower}, {"upper", split.label_spec.upper}}},
                        {"calendar", split.calendar},
                        {"train", part(split.train)},
                        {"valid", part(split.valid)},
                        {"test", part(split.test)}};
}

inline void save_split(const std::string& path, const DatasetSplit& split) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write split file: " + path);
  out << split_to_json(split).dump(1) << '\n';
}

/// Reads a split container, checking its format version.
inline nlohmann::json load_split_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open split file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(path + ": " + e.what());
  }
  const int version = j.value("format_version", -1);
  if (version != kSplitFormatVersion)
    throw VersionError(path + ": split format version " + std::to_string(version) + ", expected " +
                       std::to_string(kSplitFormatVersion));
  return j;
}

}  // namespace msgca::data
