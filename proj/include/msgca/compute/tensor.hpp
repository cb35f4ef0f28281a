#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "msgca/error.hpp"

namespace msgca::compute {

/// Dense row-major matrix; every tensor in the library is 2-D.
template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Process-wide accounting of bytes held by tensor values and gradients.
class MemoryTracker {
 public:
  static void allocate(std::int64_t bytes) {
    const auto now = live().fetch_add(bytes) + bytes;
    auto prev = peak().load();
    while (now > prev && !peak().compare_exchange_weak(prev, now)) {
    }
  }
  static void release(std::int64_t bytes) { live().fetch_sub(bytes); }
  static std::int64_t live_bytes() { return live().load(); }
  static std::int64_t peak_bytes() { return peak().load(); }
  /// Starts a new peak window at the current live size.
  static void reset_peak() { peak().store(live().load()); }

 private:
  static std::atomic<std::int64_t>& live() {
    static std::atomic<std::int64_t> v{0};
    return v;
  }
  static std::atomic<std::int64_t>& peak() {
    static std::atomic<std::int64_t> v{0};
    return v;
  }
};

namespace detail {
inline bool& grad_enabled_flag() {
  thread_local bool enabled = true;
  return enabled;
}
inline bool& finite_checks_flag() {
#ifdef NDEBUG
  thread_local bool enabled = false;
#else
  thread_local bool enabled = true;
#endif
  return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_enabled_flag(); }

/// Enables the post-op NaN/Inf scan on this thread (on by default in debug builds).
inline void set_finite_checks(bool on) { detail::finite_checks_flag() = on; }
inline bool finite_checks() { return detail::finite_checks_flag(); }

/// Disables graph recording on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(std::exchange(detail::grad_enabled_flag(), false)) {}
  ~NoGradGuard() { detail::grad_enabled_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
struct Node {
  Matrix<T> value;
  Matrix<T> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Node(Matrix<T> v, bool rg) : value(std::move(v)), requires_grad(rg) { track(value.size()); }
  ~Node() { MemoryTracker::release(tracked_); }
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  void ensure_grad() {
    if (grad.size() == 0) {
      grad = Matrix<T>::Zero(value.rows(), value.cols());
      track(grad.size());
    }
  }

  template <typename Expr>
  void accumulate(const Expr& g) {
    if (!requires_grad) return;
    ensure_grad();
    grad += g;
  }

 private:
  void track(Eigen::Index n) {
    const auto bytes = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(sizeof(T));
    tracked_ += bytes;
    MemoryTracker::allocate(bytes);
  }
  std::int64_t tracked_ = 0;
};

inline std::string shape_str(Eigen::Index r, Eigen::Index c) {
  std::ostringstream os;
  os << '[' << r << "x" << c << ']';
  return os.str();
}

/// Handle to a node of the computation graph. Copies share the node.
template <typename T>
class Tensor {
 public:
  using Scalar = T;

  Tensor() = default;
  explicit Tensor(Matrix<T> value, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>(std::move(value), requires_grad)) {}

  static Tensor constant(Matrix<T> value) { return Tensor(std::move(value), false); }
  static Tensor zeros(Eigen::Index rows, Eigen::Index cols) {
    return Tensor(Matrix<T>::Zero(rows, cols), false);
  }

  bool defined() const { return static_cast<bool>(node_); }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  std::string shape() const { return shape_str(rows(), cols()); }
  const Matrix<T>& value() const { return node_->value; }
  /// Direct write access; only meaningful for leaves (parameters, grad checks).
  Matrix<T>& mutable_value() { return node_->value; }
  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->grad.size() != 0; }
  const Matrix<T>& grad() const { return node_->grad; }
  Matrix<T>& mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() {
    if (has_grad()) node_->grad.setZero();
  }
  T item() const {
    if (rows() != 1 || cols() != 1) throw ShapeError("item() on non-scalar tensor " + shape());
    return node_->value(0, 0);
  }
  const char* op() const { return node_->op; }
  const std::shared_ptr<Node<T>>& node() const { return node_; }

  /// Reverse-mode sweep seeded with d(self)/d(self) = 1. Requires a 1x1 tensor.
  void backward() const;

 private:
  std::shared_ptr<Node<T>> node_;
};

template <typename T>
void Tensor<T>::backward() const {
  if (rows() != 1 || cols() != 1)
    throw ShapeError("backward() needs a scalar tensor, got " + shape());
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order of the recorded graph.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node<T>* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->ensure_grad();
  node_->grad(0, 0) += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn && n->grad.size() != 0) n->backward_fn(*n);
  }
}

namespace detail {

template <typename T>
void check_finite(const char* op, const Matrix<T>& v) {
  if (finite_checks() && !v.allFinite())
    throw NumericError(std::string("non-finite value produced by ") + op);
}

/// Wraps a forward result; records parents and the backward closure when any
/// input participates in differentiation.
template <typename T, typename Backward>
Tensor<T> record(const char* op, Matrix<T> value, std::initializer_list<const Tensor<T>*> inputs,
                 Backward&& backward) {
  check_finite(op, value);
  bool needs = false;
  if (grad_enabled())
    for (const auto* in : inputs) needs = needs || in->requires_grad();
  Tensor<T> out(std::move(value), needs);
  out.node()->op = op;
  if (needs) {
    for (const auto* in : inputs) out.node()->parents.push_back(in->node());
    out.node()->backward_fn = std::forward<Backward>(backward);
  }
  return out;
}

template <typename T, typename Backward>
Tensor<T> record_many(const char* op, Matrix<T> value, const std::vector<Tensor<T>>& inputs,
                      Backward&& backward) {
  check_finite(op, value);
  bool needs = false;
  if (grad_enabled())
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  Tensor<T> out(std::move(value), needs);
  out.node()->op = op;
  if (needs) {
    for (const auto& in : inputs) out.node()->parents.push_back(in.node());
    out.node()->backward_fn = std::forward<Backward>(backward);
  }
  return out;
}

}  // namespace detail

}  // namespace msgca::compute
