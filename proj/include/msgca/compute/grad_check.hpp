#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "msgca/compute/params.hpp"

namespace msgca::compute {

struct GradCheckResult {
  double max_relative_error = 0;
  std::string worst_parameter;
  Eigen::Index worst_index = -1;
  double analytic = 0;
  double numeric = 0;
  std::size_t entries_checked = 0;
};

using ScalarObjective = std::function<Tensor<double>(ModelParams<double>&)>;

/// Compares reverse-mode gradients with central differences for every entry
/// of every parameter. Error per entry: |analytic - numeric| / max(1, |analytic|).
inline GradCheckResult grad_check(const ScalarObjective& f, ModelParams<double>& params,
                                  double eps = 1e-6) {
  if (!(eps >= 1e-7 && eps <= 1e-4))
    throw ConfigError("grad_check: eps must lie in [1e-7, 1e-4], got " + std::to_string(eps));

  params.zero_grad();
  {
    Tensor<double> loss = f(params);
    if (!std::isfinite(loss.item())) throw NumericError("grad_check: objective is not finite");
    loss.backward();
  }

  GradCheckResult result;
  NoGradGuard no_grad;
  for (auto& p : params.items()) {
    Matrix<double>& w = p.tensor.mutable_value();
    const Matrix<double> analytic =
        p.tensor.has_grad() ? p.tensor.grad() : Matrix<double>::Zero(w.rows(), w.cols());
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double saved = w.data()[i];
      w.data()[i] = saved + eps;
      const double up = f(params).item();
      w.data()[i] = saved - eps;
      const double down = f(params).item();
      w.data()[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down))
        throw NumericError("grad_check: objective not finite when perturbing " + p.name + "[" +
                           std::to_string(i) + "]");
      const double numeric = (up - down) / (2 * eps);
      const double a = analytic.data()[i];
      const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
      ++result.entries_checked;
      if (err > result.max_relative_error || result.worst_index < 0) {
        result.max_relative_error = std::max(err, result.max_relative_error);
        result.worst_parameter = p.name;
        result.worst_index = i;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace msgca::compute
