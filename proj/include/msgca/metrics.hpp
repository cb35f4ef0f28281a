#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>

#include "msgca/data/types.hpp"
#include "msgca/error.hpp"

namespace msgca::metrics {

/// Counts indexed [true][predicted].
template <std::size_t K = data::kNumClasses>
struct ConfusionMatrix {
  std::array<std::array<std::int64_t, K>, K> counts{};

  void add(int truth, int predicted) {
    if (truth < 0 || predicted < 0 || truth >= static_cast<int>(K) || predicted >= static_cast<int>(K))
      throw DataError("class index out of range in confusion matrix");
    ++counts[static_cast<std::size_t>(truth)][static_cast<std::size_t>(predicted)];
  }

  std::int64_t total() const {
    std::int64_t s = 0;
    for (const auto& row : counts)
      for (auto c : row) s += c;
    return s;
  }

  static ConfusionMatrix from(std::span<const int> truth, std::span<const int> predicted) {
    if (truth.size() != predicted.size()) throw ShapeError("label and prediction counts differ");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], predicted[i]);
    return cm;
  }
};

template <std::size_t K>
double accuracy(const ConfusionMatrix<K>& cm) {
  const auto s = cm.total();
  if (s == 0) throw DataError("accuracy of an empty confusion matrix is undefined");
  std::int64_t c = 0;
  for (std::size_t k = 0; k < K; ++k) c += cm.counts[k][k];
  return static_cast<double>(c) / static_cast<double>(s);
}

/// Multiclass Matthews correlation (R_K):
///   (c s - sum p_k t_k) / sqrt((s^2 - sum p_k^2)(s^2 - sum t_k^2))
/// with c the trace, s the total, p_k / t_k predicted / true class totals.
/// A zero factor under the root yields 0. For K = 2 this is the binary
/// (tp tn - fp fn) / sqrt((tp+fp)(tp+fn)(tn+fp)(tn+fn)) formula.
template <std::size_t K>
double mcc(const ConfusionMatrix<K>& cm) {
  std::int64_t s = 0, c = 0, pt = 0, pp = 0, tt = 0;
  std::array<std::int64_t, K> p{}, t{};
  for (std::size_t i = 0; i < K; ++i)
    for (std::size_t j = 0; j < K; ++j) {
      t[i] += cm.counts[i][j];
      p[j] += cm.counts[i][j];
      s += cm.counts[i][j];
    }
  for (std::size_t k = 0; k < K; ++k) {
    c += cm.counts[k][k];
    pt += p[k] * t[k];
    pp += p[k] * p[k];
    tt += t[k] * t[k];
  }
  const std::int64_t num = c * s - pt;
  const std::int64_t a = s * s - pp;
  const std::int64_t b = s * s - tt;
  if (a == 0 || b == 0) return 0.0;
  return static_cast<double>(num) / std::sqrt(static_cast<double>(a) * static_cast<double>(b));
}

}  // namespace msgca::metrics
