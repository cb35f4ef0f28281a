#pragma once

#include <random>

#include "msgca/compute/tensor.hpp"

namespace msgca::testing {

inline compute::Matrix<double> random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng,
                                             double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  compute::Matrix<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

/// Turns on the post-op NaN/Inf scan for the enclosing scope.
class FiniteChecks {
 public:
  FiniteChecks() : previous_(compute::finite_checks()) { compute::set_finite_checks(true); }
  ~FiniteChecks() { compute::set_finite_checks(previous_); }

 private:
  bool previous_;
};

}  // namespace msgca::testing
