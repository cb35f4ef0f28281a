#pragma once

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "msgca/log.hpp"
#include "msgca/metrics.hpp"
#include "msgca/training.hpp"

namespace msgca::evaluation {

using metrics::accuracy;
using metrics::ConfusionMatrix;
using metrics::mcc;

using RowMatrix = compute::Matrix<double>;

struct PcaResult {
  Eigen::VectorXd series;   // t
  Eigen::VectorXd loading;  // d, unit norm
  double explained_ratio = 0;
};

/// Top principal component of the rows of `x` (t x d), found by repeated
/// squaring of the trace-normalized covariance followed by power-iteration
/// polishing. Sign: the largest-magnitude loading is positive.
inline PcaResult pca_project_1d(const RowMatrix& x) {
  if (x.rows() < 2) throw DataError("PCA needs at least two rows");
  const auto d = x.cols();
  const RowMatrix centered = x.rowwise() - x.colwise().mean();
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(x.rows() - 1);
  const double trace = cov.trace();
  PcaResult r;
  if (!(trace > 0) || cov.cwiseAbs().maxCoeff() <= 1e-300) {
    log::warn("PCA on zero-variance features; returning a zero series");
    r.series = Eigen::VectorXd::Zero(x.rows());
    r.loading = Eigen::VectorXd::Unit(d, 0);
    return r;
  }

  Eigen::MatrixXd a = cov / trace;
  for (int k = 0; k < 40; ++k) {
    a = a * a;
    const double t = a.trace();
    if (!(t > 0)) break;
    a /= t;
  }
  Eigen::Index col = 0;
  a.colwise().norm().maxCoeff(&col);
  Eigen::VectorXd v = a.col(col);
  if (!(v.norm() > 0)) v = Eigen::VectorXd::Unit(d, 0);
  v.normalize();
  for (int it = 0; it < 10000; ++it) {
    Eigen::VectorXd next = cov * v;
    const double n = next.norm();
    if (!(n > 0)) break;
    next /= n;
    if (next.dot(v) < 0) next = -next;
    const double change = (next - v).norm();
    v = next;
    if (change < 1e-15) break;
  }
  Eigen::Index big = 0;
  v.cwiseAbs().maxCoeff(&big);
  if (v(big) < 0) v = -v;
  r.loading = v;
  r.series = centered * v;
  r.explained_ratio = v.dot(cov * v) / trace;
  return r;
}

/// Mean squared first difference of the z-scored series (0 for constant input).
inline double smoothness(const Eigen::VectorXd& s) {
  if (s.size() < 2) return 0;
  const double mean = s.mean();
  const double sd = std::sqrt((s.array() - mean).square().sum() / static_cast<double>(s.size()));
  if (!(sd > 1e-300)) return 0;
  const Eigen::VectorXd z = (s.array() - mean) / sd;
  return (z.tail(z.size() - 1) - z.head(z.size() - 1)).squaredNorm() / static_cast<double>(z.size() - 1);
}

struct StabilitySeries {
  std::string stage;  // stage1 | stage2
  std::string kind;   // unstable | stable
  Eigen::VectorXd values;
  double smoothness = 0;
  double explained_ratio = 0;
};

/// One stock's stage features per window, reduced to 1-D and aligned with
/// the close price on each window's last day.
struct StabilityReport {
  std::string symbol;
  std::vector<std::string> dates;
  std::vector<double> closes;
  std::vector<StabilitySeries> series;

  const StabilitySeries* find(const std::string& stage, const std::string& kind) const {
    for (const auto& s : series)
      if (s.stage == stage && s.kind == kind) return &s;
    return nullptr;
  }
};

/// Each window contributes the last time step of every stage tensor; the
/// resulting per-window matrices are PCA-projected to one dimension.
template <typename T>
StabilityReport stability_report(const Msgca<T>& model, const data::Market& market,
                                 const std::vector<const data::WindowSample*>& windows, std::size_t batch_size = 256) {
  if (windows.empty()) throw DataError("stability report needs at least one window");
  compute::NoGradGuard no_grad;
  StabilityReport rep;
  rep.symbol = windows.front()->symbol;
  const char* names[4][2] = {{"stage1", "unstable"}, {"stage1", "stable"}, {"stage2", "unstable"}, {"stage2", "stable"}};
  std::vector<std::vector<Eigen::RowVectorXd>> rows(4);
  for (std::size_t i = 0; i < windows.size(); i += batch_size) {
    const std::vector<const data::WindowSample*> chunk(windows.begin() + static_cast<std::ptrdiff_t>(i),
                                                       windows.begin() + static_cast<std::ptrdiff_t>(std::min(windows.size(), i + batch_size)));
    const auto batch = make_batch<T>(market, chunk);
    const auto out = model.forward(batch);
    const compute::Tensor<T>* tensors[4] = {&out.stage1.unstable, &out.stage1.stable, &out.stage2.unstable,
                                            &out.stage2.stable};
    for (std::size_t b = 0; b < chunk.size(); ++b) {
      const auto last = static_cast<Eigen::Index>((b + 1) * chunk[b]->ws - 1);
      for (int k = 0; k < 4; ++k)
        if (tensors[k]->defined()) rows[static_cast<std::size_t>(k)].push_back(tensors[k]->value().row(last).template cast<double>());
    }
    for (const auto* w : chunk) {
      rep.dates.push_back(w->last_date());
      rep.closes.push_back(w->panel->series.close[w->start + w->ws - 1]);
    }
  }
  for (int k = 0; k < 4; ++k) {
    const auto& r = rows[static_cast<std::size_t>(k)];
    if (r.size() != windows.size()) continue;  // stage absent in this variant
    RowMatrix m(static_cast<Eigen::Index>(r.size()), r.front().size());
    for (std::size_t i = 0; i < r.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = r[i];
    StabilitySeries s{names[k][0], names[k][1], {}, 0, 0};
    if (m.rows() >= 2) {
      const auto pca = pca_project_1d(m);
      s.values = pca.series;
      s.explained_ratio = pca.explained_ratio;
    } else {
      s.values = Eigen::VectorXd::Zero(m.rows());
    }
    s.smoothness = smoothness(s.values);
    rep.series.push_back(std::move(s));
  }
  return rep;
}

inline void write_stability_csv(const std::string& path, const StabilityReport& rep) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write stability dump: " + path);
  out << "date,close,stage,kind,value\n";
  for (const auto& s : rep.series)
    for (Eigen::Index i = 0; i < s.values.size(); ++i)
      out << rep.dates[static_cast<std::size_t>(i)] << ',' << data::detail::format_double(rep.closes[static_cast<std::size_t>(i)])
          << ',' << s.stage << ',' << s.kind << ',' << data::detail::format_double(s.values(i)) << '\n';
}

// ---- multi-seed variant reports ---------------------------------------------

struct SeedRun {
  std::uint64_t seed = 0;
  double test_acc = 0;
  double test_mcc = 0;
  double best_valid_mcc = 0;
  std::size_t best_epoch = 0;
  double seconds_per_epoch = 0;
  std::int64_t peak_mem_bytes = 0;
};

struct VariantReport {
  std::string variant;
  std::vector<SeedRun> runs;
  double acc_mean = 0, acc_var = 0, mcc_mean = 0, mcc_var = 0;
  double seconds_per_epoch = 0;
  std::int64_t peak_mem_bytes = 0;
};

/// Mean and population variance.
inline std::pair<double, double> mean_var(const std::vector<double>& v) {
  if (v.empty()) return {0, 0};
  double m = 0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, s / static_cast<double>(v.size())};
}

inline VariantReport summarize(const std::string& variant, std::vector<SeedRun> runs) {
  VariantReport r;
  r.variant = variant;
  std::vector<double> acc, m, sec;
  for (const auto& x : runs) {
    acc.push_back(x.test_acc);
    m.push_back(x.test_mcc);
    sec.push_back(x.seconds_per_epoch);
    r.peak_mem_bytes = std::max(r.peak_mem_bytes, x.peak_mem_bytes);
  }
  std::tie(r.acc_mean, r.acc_var) = mean_var(acc);
  std::tie(r.mcc_mean, r.mcc_var) = mean_var(m);
  r.seconds_per_epoch = mean_var(sec).first;
  r.runs = std::move(runs);
  return r;
}

template <typename T>
SeedRun train_and_score(const data::Dataset& ds, const training::TrainConfig& cfg,
                        const training::TrainOptions& opt = {}) {
  const auto result = training::train_model<T>(ds, cfg, opt);
  const auto best = result.best_model();
  const auto test = training::evaluate(best, *ds.market, ds.split.test, cfg.batch_size);
  SeedRun run;
  run.seed = cfg.seed;
  run.test_acc = test.acc;
  run.test_mcc = test.mcc;
  run.best_valid_mcc = result.state.best_valid_mcc;
  run.best_epoch = result.state.best_epoch;
  double secs = 0;
  for (const auto& h : result.state.history) {
    secs += h.seconds;
    run.peak_mem_bytes = std::max(run.peak_mem_bytes, h.peak_mem_bytes);
  }
  run.seconds_per_epoch = result.state.history.empty() ? 0 : secs / static_cast<double>(result.state.history.size());
  return run;
}

/// Trains `variant` once per seed (the seed drives initialization and batch
/// order) and reports test ACC / MCC of each run's best-validation weights.
inline VariantReport run_variant(Variant variant, const data::Dataset& ds, training::TrainConfig cfg,
                                 const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw ConfigError("run_variant needs at least one seed");
  if (ds.split.test.empty()) throw DataError("run_variant needs a nonempty test split");
  cfg.model.variant = variant;
  training::TrainOptions opt;
  opt.evaluate_test = false;
  std::vector<SeedRun> runs;
  for (auto seed : seeds) {
    cfg.seed = seed;
    runs.push_back(cfg.precision == training::Precision::kFloat32 ? train_and_score<float>(ds, cfg, opt)
                                                                   : train_and_score<double>(ds, cfg, opt));
  }
  return summarize(variant_name(variant), std::move(runs));
}

inline VariantReport run_variant(const std::string& variant, const data::Dataset& ds,
                                 const training::TrainConfig& cfg, const std::vector<std::uint64_t>& seeds) {
  return run_variant(parse_variant(variant), ds, cfg, seeds);
}

inline void write_report_csv(const std::string& path, const std::vector<VariantReport>& reports) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write report: " + path);
  using data::detail::format_double;
  out << "variant,seeds,acc_mean,acc_var,mcc_mean,mcc_var,seconds_per_epoch,peak_mem_bytes\n";
  for (const auto& r : reports)
    out << r.variant << ',' << r.runs.size() << ',' << format_double(r.acc_mean) << ',' << format_double(r.acc_var)
        << ',' << format_double(r.mcc_mean) << ',' << format_double(r.mcc_var) << ','
        << format_double(r.seconds_per_epoch) << ',' << r.peak_mem_bytes << '\n';
}

inline nlohmann::json report_json(const std::vector<VariantReport>& reports) {
  auto arr = nlohmann::json::array();
  for (const auto& r : reports) {
    auto runs = nlohmann::json::array();
    for (const auto& x : r.runs)
      runs.push_back({{"seed", x.seed},
                      {"test_acc", x.test_acc},
                      {"test_mcc", x.test_mcc},
                      {"best_valid_mcc", x.best_valid_mcc},
                      {"best_epoch", x.best_epoch},
                      {"seconds_per_epoch", x.seconds_per_epoch},
                      {"peak_mem_bytes", x.peak_mem_bytes}});
    arr.push_back({{"variant", r.variant},
                   {"seeds", r.runs.size()},
                   {"acc_mean", r.acc_mean},
                   {"acc_var", r.acc_var},
                   {"mcc_mean", r.mcc_mean},
                   {"mcc_var", r.mcc_var},
                   {"seconds_per_epoch", r.seconds_per_epoch},
                   {"peak_mem_bytes", r.peak_mem_bytes},
                   {"runs", runs}});
  }
  return {{"variants", arr}};
}

inline void write_report_json(const std::string& path, const std::vector<VariantReport>& reports) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write report: " + path);
  out << report_json(reports).dump(2) << '\n';
}

}  // namespace msgca::evaluation
