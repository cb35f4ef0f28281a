#pragma once

#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "msgca/compute/tensor.hpp"

namespace msgca::compute {

/// A named learnable weight with its Adam moment estimates.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> tensor;
  Matrix<T> adam_m;
  Matrix<T> adam_v;
};

/// kXavierNonNegative draws |U(-a, a)|; used where a single ReLU unit reads
/// ReLU outputs, so an all-negative draw cannot leave the network dead at init.
enum class Init { kZeros, kXavierUniform, kXavierNonNegative };

/// Ordered collection of parameters addressable by stable names. Insertion
/// order is the iteration order everywhere (optimizer, checkpoints, grad checks).
template <typename T>
class ModelParams {
 public:
  Tensor<T>& add(const std::string& name, Eigen::Index rows, Eigen::Index cols, Init init,
                 std::mt19937_64& rng) {
    Matrix<T> value = Matrix<T>::Zero(rows, cols);
    if (init != Init::kZeros) {
      const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (Eigen::Index i = 0; i < value.size(); ++i) {
        const double x = dist(rng);
        value.data()[i] = static_cast<T>(init == Init::kXavierNonNegative ? std::abs(x) : x);
      }
    }
    return add(name, std::move(value));
  }

  Tensor<T>& add(const std::string& name, Matrix<T> value) {
    if (index_.contains(name)) throw ConfigError("duplicate parameter name: " + name);
    index_.emplace(name, params_.size());
    const auto r = value.rows();
    const auto c = value.cols();
    params_.push_back({name, Tensor<T>(std::move(value), true), Matrix<T>::Zero(r, c),
                       Matrix<T>::Zero(r, c)});
    return params_.back().tensor;
  }

  bool contains(const std::string& name) const { return index_.contains(name); }

  Parameter<T>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return params_[it->second];
  }
  const Parameter<T>& at(const std::string& name) const {
    return const_cast<ModelParams*>(this)->at(name);
  }
  Tensor<T>& operator[](const std::string& name) { return at(name).tensor; }
  const Tensor<T>& operator[](const std::string& name) const { return at(name).tensor; }

  std::vector<Parameter<T>>& items() { return params_; }
  const std::vector<Parameter<T>>& items() const { return params_; }
  std::size_t size() const { return params_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.tensor.value().size());
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  /// Deep copy: fresh leaf tensors, same values and optimizer state.
  ModelParams clone() const {
    ModelParams out;
    for (const auto& p : params_) {
      out.add(p.name, p.tensor.value());
      out.params_.back().adam_m = p.adam_m;
      out.params_.back().adam_v = p.adam_v;
    }
    return out;
  }

  /// Copies values (not optimizer state) from a same-layout collection.
  void assign_values(const ModelParams& other) {
    for (auto& p : params_) p.tensor.mutable_value() = other.at(p.name).tensor.value();
  }

  double global_grad_norm() const {
    double s = 0;
    for (const auto& p : params_)
      if (p.tensor.has_grad()) s += static_cast<double>(p.tensor.grad().squaredNorm());
    return std::sqrt(s);
  }

 private:
  std::vector<Parameter<T>> params_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace msgca::compute
