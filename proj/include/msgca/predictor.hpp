#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "msgca/compute/ops.hpp"
#include "msgca/compute/params.hpp"
#include "msgca/data/types.hpp"
#include "msgca/log.hpp"

namespace msgca::predictor {

using compute::Init;
using compute::ModelParams;
using compute::Tensor;

inline std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

/// Layer widths t -> ceil(t/2) -> ceil(t/4) -> 1, clamped at 1.
inline std::vector<std::size_t> time_widths(std::size_t t) {
  if (t < 4) log::warn("window of " + std::to_string(t) + " steps is shorter than 4; time-MLP widths clamp at 1");
  return {t, std::max<std::size_t>(1, ceil_div(t, 2)), std::max<std::size_t>(1, ceil_div(t, 4)), 1};
}

/// Layer widths 2d -> d -> ceil(d/2) -> 3.
inline std::vector<std::size_t> feature_widths(std::size_t d) {
  return {2 * d, d, std::max<std::size_t>(1, ceil_div(d, 2)), static_cast<std::size_t>(data::kNumClasses)};
}

template <typename T>
struct Linear {
  Tensor<T> W, b;
};

/// Time-axis MLP (shared by the fused and indicator branches) and feature-axis MLP.
template <typename T>
struct PredictorParams {
  std::vector<Linear<T>> time;
  std::vector<Linear<T>> feature;

  static PredictorParams create(ModelParams<T>& p, std::size_t t, std::size_t d, std::mt19937_64& rng,
                                const std::string& prefix = "predictor") {
    auto add_stack = [&](const std::string& name, const std::vector<std::size_t>& w, bool relu_out) {
      for (std::size_t i = 0; i + 1 < w.size(); ++i) {
        const auto base = prefix + "." + name + std::to_string(i + 1);
        const bool single_relu_unit = relu_out && i > 0 && w[i + 1] == 1;
        p.add(base + ".W", static_cast<Eigen::Index>(w[i]), static_cast<Eigen::Index>(w[i + 1]),
              single_relu_unit ? Init::kXavierNonNegative : Init::kXavierUniform, rng);
        p.add(base + ".b", 1, static_cast<Eigen::Index>(w[i + 1]), Init::kZeros, rng);
      }
    };
    add_stack("time", time_widths(t), true);
    add_stack("feature", feature_widths(d), false);
    return bind(p, prefix);
  }
  static PredictorParams bind(const ModelParams<T>& p, const std::string& prefix = "predictor") {
    PredictorParams out;
    for (int i = 1; i <= 3; ++i) {
      out.time.push_back({p[prefix + ".time" + std::to_string(i) + ".W"], p[prefix + ".time" + std::to_string(i) + ".b"]});
      out.feature.push_back(
          {p[prefix + ".feature" + std::to_string(i) + ".W"], p[prefix + ".feature" + std::to_string(i) + ".b"]});
    }
    return out;
  }
  Eigen::Index window() const { return time.at(0).W.rows(); }
};

/// Reduces each of `blocks` stacked t x d sequences to d features: transpose
/// to d x t, three linear layers over time (ReLU after each), flatten.
template <typename T>
Tensor<T> time_mlp(const Tensor<T>& H, const PredictorParams<T>& p, Eigen::Index blocks) {
  using namespace compute;
  if (blocks < 1 || H.rows() != blocks * p.window())
    throw ShapeError("time_mlp: input " + H.shape() + " is not " + std::to_string(blocks) + " blocks of " +
                     std::to_string(p.window()) + " steps");
  const auto d = H.cols();
  Tensor<T> x = block_transpose(H, blocks);
  for (const auto& layer : p.time) x = relu(add_bias(matmul(x, layer.W), layer.b));
  return reshape(x, blocks, d);
}

/// h = [MLP_t(H_idg) || MLP_t(H_i)], one row per block (2d columns).
template <typename T>
Tensor<T> aggregate_time(const Tensor<T>& H_idg, const Tensor<T>& H_i, const PredictorParams<T>& p,
                         Eigen::Index blocks = 1) {
  return compute::concat_cols<T>({time_mlp(H_idg, p, blocks), time_mlp(H_i, p, blocks)});
}

/// 2d -> d -> ceil(d/2) -> 3 with ReLU after the first two layers; raw logits out.
template <typename T>
Tensor<T> aggregate_features(const Tensor<T>& h, const PredictorParams<T>& p) {
  using namespace compute;
  if (h.cols() != p.feature.at(0).W.rows())
    throw ShapeError("aggregate_features: h " + h.shape() + " vs first layer " + p.feature[0].W.shape());
  Tensor<T> x = h;
  for (std::size_t i = 0; i < p.feature.size(); ++i) {
    x = add_bias(matmul(x, p.feature[i].W), p.feature[i].b);
    if (i + 1 < p.feature.size()) x = relu(x);
  }
  return x;
}

/// Batch-mean softmax cross-entropy.
template <typename T>
Tensor<T> cross_entropy_loss(const Tensor<T>& logits, std::span<const int> labels) {
  return compute::cross_entropy(logits, labels);
}

/// Row-wise argmax.
template <typename T>
std::vector<int> predict_classes(const compute::Matrix<T>& logits) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index arg = 0;
    logits.row(i).maxCoeff(&arg);
    out.push_back(static_cast<int>(arg));
  }
  return out;
}

}  // namespace msgca::predictor
