#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "msgca/compute/tensor.hpp"

// Differentiable operations. Each op computes its forward value eagerly and,
// when an input requires a gradient, records a closure that pushes the output
// gradient back into `self.parents` in the order the inputs were given.

namespace msgca::compute {

namespace detail {
inline void require(bool ok, const std::string& op, const std::string& what) {
  if (!ok) throw ShapeError(op + ": " + what);
}
}  // namespace detail

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.cols() == b.rows(), "matmul",
                  "inner dimensions differ: " + a.shape() + " x " + b.shape());
  Matrix<T> out(a.rows(), b.cols());
  out.noalias() = a.value() * b.value();
  return detail::record("matmul", std::move(out), {&a, &b}, [](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) pa.accumulate(self.grad * pb.value.transpose());
    if (pb.requires_grad) pb.accumulate(pa.value.transpose() * self.grad);
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "add",
                  "shape mismatch " + a.shape() + " vs " + b.shape());
  return detail::record("add", Matrix<T>(a.value() + b.value()), {&a, &b}, [](Node<T>& self) {
    self.parents[0]->accumulate(self.grad);
    self.parents[1]->accumulate(self.grad);
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "sub",
                  "shape mismatch " + a.shape() + " vs " + b.shape());
  return detail::record("sub", Matrix<T>(a.value() - b.value()), {&a, &b}, [](Node<T>& self) {
    self.parents[0]->accumulate(self.grad);
    self.parents[1]->accumulate(-self.grad);
  });
}

/// x (n x m) plus a 1 x m bias broadcast over rows.
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  detail::require(bias.rows() == 1 && bias.cols() == x.cols(), "add_bias",
                  "bias " + bias.shape() + " does not broadcast over " + x.shape());
  Matrix<T> out = x.value().rowwise() + bias.value().row(0);
  return detail::record("add_bias", std::move(out), {&x, &bias}, [](Node<T>& self) {
    self.parents[0]->accumulate(self.grad);
    if (self.parents[1]->requires_grad) self.parents[1]->accumulate(self.grad.colwise().sum());
  });
}

template <typename T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "hadamard",
                  "shape mismatch " + a.shape() + " vs " + b.shape());
  return detail::record("hadamard", Matrix<T>(a.value().cwiseProduct(b.value())), {&a, &b},
                        [](Node<T>& self) {
                          auto& pa = *self.parents[0];
                          auto& pb = *self.parents[1];
                          if (pa.requires_grad) pa.accumulate(self.grad.cwiseProduct(pb.value));
                          if (pb.requires_grad) pb.accumulate(self.grad.cwiseProduct(pa.value));
                        });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  return detail::record("scale", Matrix<T>(a.value() * s), {&a},
                        [s](Node<T>& self) { self.parents[0]->accumulate(self.grad * s); });
}

/// Multiplies row i by the constant weights[i].
template <typename T>
Tensor<T> scale_rows(const Tensor<T>& x, std::span<const T> weights) {
  detail::require(static_cast<Eigen::Index>(weights.size()) == x.rows(), "scale_rows",
                  std::to_string(weights.size()) + " weights for " + x.shape());
  Eigen::Matrix<T, Eigen::Dynamic, 1> w(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) w(i) = weights[static_cast<std::size_t>(i)];
  Matrix<T> out = w.asDiagonal() * x.value();
  return detail::record("scale_rows", std::move(out), {&x}, [w](Node<T>& self) {
    self.parents[0]->accumulate(w.asDiagonal() * self.grad);
  });
}

template <typename T>
T sigmoid_scalar(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Matrix<T> out = x.value().unaryExpr([](T v) { return sigmoid_scalar(v); });
  return detail::record("sigmoid", std::move(out), {&x}, [](Node<T>& self) {
    const auto& y = self.value;
    self.parents[0]->accumulate(self.grad.cwiseProduct(y.cwiseProduct((T(1) - y.array()).matrix())));
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Matrix<T> out = x.value().cwiseMax(T(0));
  return detail::record("relu", std::move(out), {&x}, [](Node<T>& self) {
    const auto& in = self.parents[0]->value;
    self.parents[0]->accumulate((in.array() > T(0)).select(self.grad.array(), T(0)).matrix());
  });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
  Matrix<T> out = x.value().unaryExpr([slope](T v) { return v > T(0) ? v : slope * v; });
  return detail::record("leaky_relu", std::move(out), {&x}, [slope](Node<T>& self) {
    const auto& in = self.parents[0]->value;
    self.parents[0]->accumulate((in.array() > T(0)).select(self.grad.array(), slope * self.grad.array()).matrix());
  });
}

template <typename T>
Tensor<T> elu(const Tensor<T>& x, T alpha = T(1)) {
  Matrix<T> out =
      x.value().unaryExpr([alpha](T v) { return v > T(0) ? v : alpha * std::expm1(v); });
  return detail::record("elu", std::move(out), {&x}, [alpha](Node<T>& self) {
    const auto& in = self.parents[0]->value;
    const auto& y = self.value;
    Matrix<T> d = (in.array() > T(0)).select(decltype(y.array())::PlainObject::Ones(in.rows(), in.cols()), y.array() + alpha).matrix();
    self.parents[0]->accumulate(self.grad.cwiseProduct(d));
  });
}

namespace detail {
// Row softmax with optional 0/1 mask; masked entries get exactly zero weight.
// Every row must keep at least one unmasked entry.
template <typename T>
Matrix<T> softmax_forward(const Matrix<T>& x, const Matrix<T>* mask) {
  Matrix<T> y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    T mx = -std::numeric_limits<T>::infinity();
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      if (!mask || (*mask)(i, j) != T(0)) mx = std::max(mx, x(i, j));
    if (!std::isfinite(mx)) throw NumericError("softmax_rows: row " + std::to_string(i) + " fully masked");
    T total = 0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const T e = (!mask || (*mask)(i, j) != T(0)) ? std::exp(x(i, j) - mx) : T(0);
      y(i, j) = e;
      total += e;
    }
    y.row(i) /= total;
  }
  return y;
}
}  // namespace detail

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  return detail::record("softmax_rows", detail::softmax_forward<T>(x.value(), nullptr), {&x},
                        [](Node<T>& self) {
                          const auto& y = self.value;
                          Eigen::Matrix<T, Eigen::Dynamic, 1> dot =
                              self.grad.cwiseProduct(y).rowwise().sum();
                          Matrix<T> gx = y.cwiseProduct((self.grad.colwise() - dot));
                          self.parents[0]->accumulate(gx);
                        });
}

/// Row softmax restricted to entries where `mask` is nonzero.
template <typename T>
Tensor<T> masked_softmax_rows(const Tensor<T>& x, const Matrix<T>& mask) {
  detail::require(mask.rows() == x.rows() && mask.cols() == x.cols(), "masked_softmax_rows",
                  "mask " + shape_str(mask.rows(), mask.cols()) + " vs " + x.shape());
  return detail::record("masked_softmax_rows", detail::softmax_forward<T>(x.value(), &mask), {&x},
                        [](Node<T>& self) {
                          const auto& y = self.value;
                          Eigen::Matrix<T, Eigen::Dynamic, 1> dot =
                              self.grad.cwiseProduct(y).rowwise().sum();
                          Matrix<T> gx = y.cwiseProduct((self.grad.colwise() - dot));
                          self.parents[0]->accumulate(gx);
                        });
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  detail::require(!parts.empty(), "concat_cols", "no inputs");
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    detail::require(p.rows() == parts[0].rows(), "concat_cols",
                    "row count mismatch " + parts[0].shape() + " vs " + p.shape());
    cols += p.cols();
  }
  Matrix<T> out(parts[0].rows(), cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return detail::record_many("concat_cols", std::move(out), parts, [](Node<T>& self) {
    Eigen::Index at = 0;
    for (auto& p : self.parents) {
      const auto c = p->value.cols();
      if (p->requires_grad) p->accumulate(self.grad.middleCols(at, c));
      at += c;
    }
  });
}

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  detail::require(!parts.empty(), "concat_rows", "no inputs");
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    detail::require(p.cols() == parts[0].cols(), "concat_rows",
                    "column count mismatch " + parts[0].shape() + " vs " + p.shape());
    rows += p.rows();
  }
  Matrix<T> out(rows, parts[0].cols());
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return detail::record_many("concat_rows", std::move(out), parts, [](Node<T>& self) {
    Eigen::Index at = 0;
    for (auto& p : self.parents) {
      const auto r = p->value.rows();
      if (p->requires_grad) p->accumulate(self.grad.middleRows(at, r));
      at += r;
    }
  });
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, Eigen::Index start, Eigen::Index count) {
  detail::require(start >= 0 && count >= 0 && start + count <= x.rows(), "slice_rows",
                  "rows [" + std::to_string(start) + ", " + std::to_string(start + count) +
                      ") outside " + x.shape());
  return detail::record("slice_rows", Matrix<T>(x.value().middleRows(start, count)), {&x},
                        [start, count](Node<T>& self) {
                          auto& p = *self.parents[0];
                          p.ensure_grad();
                          p.grad.middleRows(start, count) += self.grad;
                        });
}

/// Row gather; repeated indices accumulate their gradients.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::vector<Eigen::Index> index) {
  Matrix<T> out(static_cast<Eigen::Index>(index.size()), x.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    detail::require(index[i] >= 0 && index[i] < x.rows(), "gather_rows",
                    "index " + std::to_string(index[i]) + " outside " + x.shape());
    out.row(static_cast<Eigen::Index>(i)) = x.value().row(index[i]);
  }
  return detail::record("gather_rows", std::move(out), {&x},
                        [index = std::move(index)](Node<T>& self) {
                          auto& p = *self.parents[0];
                          p.ensure_grad();
                          for (std::size_t i = 0; i < index.size(); ++i)
                            p.grad.row(index[i]) += self.grad.row(static_cast<Eigen::Index>(i));
                        });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  return detail::record("transpose", Matrix<T>(x.value().transpose()), {&x}, [](Node<T>& self) {
    self.parents[0]->accumulate(self.grad.transpose());
  });
}

/// Transposes each of `blocks` stacked row blocks: (B*r) x c -> (B*c) x r.
template <typename T>
Tensor<T> block_transpose(const Tensor<T>& x, Eigen::Index blocks) {
  detail::require(blocks > 0 && x.rows() % blocks == 0, "block_transpose",
                  x.shape() + " not divisible into " + std::to_string(blocks) + " blocks");
  const Eigen::Index r = x.rows() / blocks;
  const Eigen::Index c = x.cols();
  Matrix<T> out(blocks * c, r);
  for (Eigen::Index b = 0; b < blocks; ++b)
    out.middleRows(b * c, c) = x.value().middleRows(b * r, r).transpose();
  return detail::record("block_transpose", std::move(out), {&x}, [blocks, r, c](Node<T>& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (Eigen::Index b = 0; b < blocks; ++b)
      p.grad.middleRows(b * r, r) += self.grad.middleRows(b * c, c).transpose();
  });
}

/// Row-major reshape.
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Eigen::Index rows, Eigen::Index cols) {
  detail::require(rows * cols == x.rows() * x.cols(), "reshape",
                  x.shape() + " cannot become " + shape_str(rows, cols));
  Matrix<T> out = Eigen::Map<const Matrix<T>>(x.value().data(), rows, cols);
  return detail::record("reshape", std::move(out), {&x}, [](Node<T>& self) {
    auto& p = *self.parents[0];
    p.accumulate(Eigen::Map<const Matrix<T>>(self.grad.data(), p.value.rows(), p.value.cols()));
  });
}

/// Per-block product: block b of `a` ((B*r) x k) times block b of `b` ((B*k) x m).
template <typename T>
Tensor<T> block_matmul(const Tensor<T>& a, const Tensor<T>& b, Eigen::Index blocks) {
  detail::require(blocks > 0 && a.rows() % blocks == 0 && b.rows() % blocks == 0, "block_matmul",
                  a.shape() + ", " + b.shape() + " not divisible into " + std::to_string(blocks) +
                      " blocks");
  const Eigen::Index r = a.rows() / blocks;
  const Eigen::Index k = b.rows() / blocks;
  detail::require(a.cols() == k, "block_matmul",
                  "inner dimensions differ: " + a.shape() + " x " + b.shape());
  Matrix<T> out(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < blocks; ++i)
    out.middleRows(i * r, r).noalias() = a.value().middleRows(i * r, r) * b.value().middleRows(i * k, k);
  return detail::record("block_matmul", std::move(out), {&a, &b}, [blocks, r, k](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (Eigen::Index i = 0; i < blocks; ++i)
        pa.grad.middleRows(i * r, r).noalias() +=
            self.grad.middleRows(i * r, r) * pb.value.middleRows(i * k, k).transpose();
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (Eigen::Index i = 0; i < blocks; ++i)
        pb.grad.middleRows(i * k, k).noalias() +=
            pa.value.middleRows(i * r, r).transpose() * self.grad.middleRows(i * r, r);
    }
  });
}

/// Per-block a_b * b_bᵀ: (B*r) x k with (B*s) x k -> (B*r) x s.
template <typename T>
Tensor<T> block_matmul_nt(const Tensor<T>& a, const Tensor<T>& b, Eigen::Index blocks) {
  detail::require(blocks > 0 && a.rows() % blocks == 0 && b.rows() % blocks == 0,
                  "block_matmul_nt",
                  a.shape() + ", " + b.shape() + " not divisible into " + std::to_string(blocks) +
                      " blocks");
  detail::require(a.cols() == b.cols(), "block_matmul_nt",
                  "inner dimensions differ: " + a.shape() + " x " + b.shape() + "ᵀ");
  const Eigen::Index r = a.rows() / blocks;
  const Eigen::Index s = b.rows() / blocks;
  Matrix<T> out(a.rows(), s);
  for (Eigen::Index i = 0; i < blocks; ++i)
    out.middleRows(i * r, r).noalias() =
        a.value().middleRows(i * r, r) * b.value().middleRows(i * s, s).transpose();
  return detail::record("block_matmul_nt", std::move(out), {&a, &b}, [blocks, r, s](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (Eigen::Index i = 0; i < blocks; ++i)
        pa.grad.middleRows(i * r, r).noalias() +=
            self.grad.middleRows(i * r, r) * pb.value.middleRows(i * s, s);
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (Eigen::Index i = 0; i < blocks; ++i)
        pb.grad.middleRows(i * s, s).noalias() +=
            self.grad.middleRows(i * r, r).transpose() * pa.value.middleRows(i * r, r);
    }
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  Matrix<T> out(1, 1);
  out(0, 0) = x.value().sum();
  return detail::record("sum", std::move(out), {&x}, [](Node<T>& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    p.grad.array() += self.grad(0, 0);
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  detail::require(x.rows() * x.cols() > 0, "mean", "empty tensor");
  return scale(sum(x), T(1) / static_cast<T>(x.rows() * x.cols()));
}

/// Mean softmax cross-entropy of n x C logits against class indices.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  const auto n = logits.rows();
  detail::require(static_cast<Eigen::Index>(labels.size()) == n && n > 0, "cross_entropy",
                  std::to_string(labels.size()) + " labels for logits " + logits.shape());
  Matrix<T> prob(n, logits.cols());
  T total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    detail::require(y >= 0 && y < logits.cols(), "cross_entropy",
                    "label " + std::to_string(y) + " outside [0, " + std::to_string(logits.cols()) + ")");
    const T mx = logits.value().row(i).maxCoeff();
    auto shifted = (logits.value().row(i).array() - mx).eval();
    const T lse = std::log(shifted.exp().sum());
    prob.row(i) = (shifted - lse).exp().matrix();
    total += lse - shifted(y);
  }
  Matrix<T> out(1, 1);
  out(0, 0) = total / static_cast<T>(n);
  std::vector<int> y(labels.begin(), labels.end());
  return detail::record("cross_entropy", std::move(out), {&logits},
                        [prob = std::move(prob), y = std::move(y)](Node<T>& self) {
                          Matrix<T> g = prob;
                          for (std::size_t i = 0; i < y.size(); ++i)
                            g(static_cast<Eigen::Index>(i), y[i]) -= T(1);
                          g *= self.grad(0, 0) / static_cast<T>(y.size());
                          self.parents[0]->accumulate(g);
                        });
}

}  // namespace msgca::compute
