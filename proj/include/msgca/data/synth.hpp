#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "msgca/data/graph.hpp"
#include "msgca/data/types.hpp"

namespace msgca::data {

struct SynthConfig {
  std::size_t n_stocks = 12;
  std::size_t n_days = 120;
  std::size_t dim = 32;
  double doc_signal = 2.0;        // prototype scale relative to unit-norm noise
  double doc_missing_rate = 0.3;  // probability that a day has no documents
  double conflict_rate = 0.0;     // probability that a day's documents carry a wrong-class prototype
  std::size_t n_sectors = 3;
  std::uint64_t seed = 0;

  double persistence = 0.8;      // probability the latent trend repeats the next day
  double sector_coupling = 0.6;  // on a switch, probability of adopting the sector's trend
  double drift = 0.02;           // mean daily return of up (+) and down (-) regimes
  double return_noise = 0.004;
  double price_lead = 0.0;  // return added on day t in the direction of latent[t + 1]
  std::size_t max_texts_per_day = 3;
  std::string start_date = "2022-01-03";
};

/// Generated market. `latent[s][t]` is the hidden trend index driving the
/// return of day t; documents of day t describe `latent[s][t + 1]` (or a
/// wrong class when conflicted), so they carry next-day signal.
struct SynthDataset {
  std::vector<std::string> stocks;
  std::vector<PriceSeries> prices;
  std::vector<DocumentDay> documents;
  EmbeddingTable embeddings;
  std::vector<GraphEdge> edges;
  std::vector<std::vector<int>> latent;     // n_stocks x (n_days + 1)
  std::vector<std::vector<int>> doc_class;  // n_stocks x n_days, -1 where missing
  std::vector<std::vector<double>> prototypes;
};

namespace detail {

inline std::vector<std::string> business_days(const std::string& start, std::size_t n) {
  using namespace std::chrono;
  int y = 0;
  unsigned m = 0, d = 0;
  if (std::sscanf(start.c_str(), "%d-%u-%u", &y, &m, &d) != 3) throw ConfigError("bad start date " + start);
  sys_days day = year{y} / month{m} / std::chrono::day{d};
  std::vector<std::string> out;
  while (out.size() < n) {
    const weekday wd{day};
    if (wd != Saturday && wd != Sunday) {
      const year_month_day ymd{day};
      char buf[16];
      std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                    static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
      out.emplace_back(buf);
    }
    day += days{1};
  }
  return out;
}

inline int other_class(int c, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(1, 2);
  return (c + pick(rng)) % kNumClasses;
}

}  // namespace detail

inline SynthDataset synth_dataset(const SynthConfig& cfg) {
  for (double r : {cfg.doc_missing_rate, cfg.conflict_rate, cfg.persistence, cfg.sector_coupling})
    if (!(r >= 0 && r <= 1)) throw ConfigError("synth: rates must lie in [0, 1]");
  if (cfg.n_stocks == 0 || cfg.n_days < 2 || cfg.dim == 0 || cfg.n_sectors == 0)
    throw ConfigError("synth: need n_stocks >= 1, n_days >= 2, dim >= 1, n_sectors >= 1");
  if (!(cfg.price_lead >= 0) || !(cfg.return_noise >= 0)) throw ConfigError("synth: price_lead and return_noise must be >= 0");

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> any_class(0, kNumClasses - 1);

  SynthDataset out;
  const auto dates = detail::business_days(cfg.start_date, cfg.n_days);
  const auto horizon = cfg.n_days + 1;

  // Unit-norm class prototypes.
  for (int c = 0; c < kNumClasses; ++c) {
    std::vector<double> p(cfg.dim);
    double norm = 0;
    for (auto& x : p) {
      x = normal(rng);
      norm += x * x;
    }
    for (auto& x : p) x /= std::sqrt(norm);
    out.prototypes.push_back(std::move(p));
  }

  std::vector<std::vector<int>> sector(cfg.n_sectors, std::vector<int>(horizon));
  for (auto& chain : sector) {
    chain[0] = any_class(rng);
    for (std::size_t t = 1; t < horizon; ++t)
      chain[t] = unif(rng) < cfg.persistence ? chain[t - 1] : detail::other_class(chain[t - 1], rng);
  }

  out.embeddings.dim = cfg.dim;
  const double noise_scale = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
  const std::array<double, kNumClasses> drift{-cfg.drift, 0.0, cfg.drift};
  std::uniform_int_distribution<std::size_t> n_texts(1, std::max<std::size_t>(1, cfg.max_texts_per_day));

  for (std::size_t s = 0; s < cfg.n_stocks; ++s) {
    char sym[16];
    std::snprintf(sym, sizeof(sym), "S%03zu", s);
    out.stocks.emplace_back(sym);
    const std::size_t sec = s % cfg.n_sectors;
    out.edges.push_back({sym, "in_sector", "SEC" + std::to_string(sec)});

    std::vector<int> latent(horizon);
    latent[0] = unif(rng) < cfg.sector_coupling ? sector[sec][0] : any_class(rng);
    for (std::size_t t = 1; t < horizon; ++t) {
      if (unif(rng) < cfg.persistence)
        latent[t] = latent[t - 1];
      else if (unif(rng) < cfg.sector_coupling)
        latent[t] = sector[sec][t];
      else
        latent[t] = detail::other_class(latent[t - 1], rng);
    }

    PriceSeries ps;
    ps.symbol = sym;
    ps.dates = dates;
    double close = 100.0 * std::exp(unif(rng) - 0.5);
    for (std::size_t t = 0; t < cfg.n_days; ++t) {
      const double prev = close;
      if (t > 0) {
        const double r = drift[static_cast<std::size_t>(latent[t])] + cfg.return_noise * normal(rng) +
                         cfg.price_lead * (latent[t + 1] - 1);
        close = prev * (1.0 + r);
      }
      const double open = prev * (1.0 + 0.002 * normal(rng));
      const double high = std::max(open, close) * (1.0 + 0.003 * std::abs(normal(rng)));
      ps.open.push_back(open);
      ps.high.push_back(high);
      ps.close.push_back(close);
    }
    out.prices.push_back(std::move(ps));

    std::vector<int> doc_class(cfg.n_days, -1);
    for (std::size_t t = 0; t < cfg.n_days; ++t) {
      if (unif(rng) < cfg.doc_missing_rate) continue;
      int c = latent[t + 1];
      if (unif(rng) < cfg.conflict_rate) c = detail::other_class(c, rng);
      doc_class[t] = c;
      const std::size_t k = n_texts(rng);
      DocumentDay day{sym, dates[t], {}};
      std::vector<double> pooled(cfg.dim, 0.0);
      for (std::size_t i = 0; i < k; ++i) {
        day.texts.push_back("synthetic note " + std::to_string(i + 1) + " for " + sym + " on " + dates[t]);
        for (std::size_t j = 0; j < cfg.dim; ++j)
          pooled[j] += cfg.doc_signal * out.prototypes[static_cast<std::size_t>(c)][j] + noise_scale * normal(rng);
      }
      for (auto& x : pooled) x /= static_cast<double>(k);
      out.embeddings.insert(sym, dates[t], std::move(pooled));
      out.documents.push_back(std::move(day));
    }
    out.doc_class.push_back(std::move(doc_class));
    out.latent.push_back(std::move(latent));
  }
  return out;
}

}  // namespace msgca::data
