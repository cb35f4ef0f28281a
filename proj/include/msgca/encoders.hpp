#pragma once

#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "msgca/compute/ops.hpp"
#include "msgca/compute/params.hpp"
#include "msgca/data/graph.hpp"
#include "msgca/log.hpp"

namespace msgca::encoders {

using compute::Init;
using compute::Matrix;
using compute::ModelParams;
using compute::Tensor;

/// Per-indicator lifts (1 x d each) and the 3d x d fusion projection.
template <typename T>
struct IndicatorEncoderParams {
  Tensor<T> W_ic, b_ic, W_io, b_io, W_ih, b_ih, W_i, b_i;

  static IndicatorEncoderParams create(ModelParams<T>& p, std::size_t d, std::mt19937_64& rng,
                                       const std::string& prefix = "indicator") {
    const auto D = static_cast<Eigen::Index>(d);
    p.add(prefix + ".W_ic", 1, D, Init::kXavierUniform, rng);
    p.add(prefix + ".b_ic", 1, D, Init::kZeros, rng);
    p.add(prefix + ".W_io", 1, D, Init::kXavierUniform, rng);
    p.add(prefix + ".b_io", 1, D, Init::kZeros, rng);
    p.add(prefix + ".W_ih", 1, D, Init::kXavierUniform, rng);
    p.add(prefix + ".b_ih", 1, D, Init::kZeros, rng);
    p.add(prefix + ".W_i", 3 * D, D, Init::kXavierUniform, rng);
    p.add(prefix + ".b_i", 1, D, Init::kZeros, rng);
    return bind(p, prefix);
  }

  static IndicatorEncoderParams bind(const ModelParams<T>& p, const std::string& prefix = "indicator") {
    return {p[prefix + ".W_ic"], p[prefix + ".b_ic"], p[prefix + ".W_io"], p[prefix + ".b_io"],
            p[prefix + ".W_ih"], p[prefix + ".b_ih"], p[prefix + ".W_i"],  p[prefix + ".b_i"]};
  }

  std::size_t d() const { return static_cast<std::size_t>(W_i.cols()); }
};

namespace detail {
template <typename T>
Tensor<T> column(const Tensor<T>& x, Eigen::Index c) {
  Matrix<T> e = Matrix<T>::Zero(x.cols(), 1);
  e(c, 0) = T(1);
  return compute::matmul(x, Tensor<T>::constant(std::move(e)));
}
}  // namespace detail

/// Rows of `indicators` are (close, open, high) per time step. Each column is
/// lifted to d features, the three lifts are concatenated and projected to d.
template <typename T>
Tensor<T> encode_indicators(const Tensor<T>& indicators, const IndicatorEncoderParams<T>& p) {
  using namespace compute;
  if (indicators.cols() != 3 || indicators.rows() < 1)
    throw ShapeError("encode_indicators: expected t x 3 input, got " + indicators.shape());
  if (!indicators.value().allFinite()) throw DataError("encode_indicators: non-finite indicator value");
  auto v_c = add_bias(matmul(detail::column(indicators, 0), p.W_ic), p.b_ic);
  auto v_o = add_bias(matmul(detail::column(indicators, 1), p.W_io), p.b_io);
  auto v_h = add_bias(matmul(detail::column(indicators, 2), p.W_ih), p.b_ih);
  return add_bias(matmul(concat_cols<T>({v_c, v_o, v_h}), p.W_i), p.b_i);
}

template <typename T>
struct DocEncoderParams {
  Tensor<T> W_d, b_d;

  static DocEncoderParams create(ModelParams<T>& p, std::size_t doc_dim, std::size_t d, std::mt19937_64& rng,
                                 const std::string& prefix = "document") {
    p.add(prefix + ".W_d", static_cast<Eigen::Index>(doc_dim), static_cast<Eigen::Index>(d), Init::kXavierUniform,
          rng);
    p.add(prefix + ".b_d", 1, static_cast<Eigen::Index>(d), Init::kZeros, rng);
    return bind(p, prefix);
  }
  static DocEncoderParams bind(const ModelParams<T>& p, const std::string& prefix = "document") {
    return {p[prefix + ".W_d"], p[prefix + ".b_d"]};
  }
};

/// Affine projection of present-day embeddings; rows with mask 0 come out
/// exactly zero (bias included), which is the zero-fill for missing days.
template <typename T>
Tensor<T> encode_documents(const Tensor<T>& docs, std::span<const T> mask, const DocEncoderParams<T>& p) {
  using namespace compute;
  if (static_cast<Eigen::Index>(mask.size()) != docs.rows())
    throw ShapeError("encode_documents: mask of length " + std::to_string(mask.size()) + " for documents " +
                     docs.shape());
  if (docs.cols() != p.W_d.rows())
    throw ShapeError("encode_documents: embedding width " + std::to_string(docs.cols()) + " but W_d is " +
                     p.W_d.shape());
  return scale_rows(add_bias(matmul(docs, p.W_d), p.b_d), mask);
}

/// Multi-head graph attention weights: W (d x d) and a (2d x 1) per layer and head.
template <typename T>
struct GatParams {
  std::vector<std::vector<Tensor<T>>> W;  // [layer][head]
  std::vector<std::vector<Tensor<T>>> a;

  static GatParams create(ModelParams<T>& p, std::size_t d, std::size_t heads, std::size_t layers,
                          std::mt19937_64& rng, const std::string& prefix = "gat") {
    if (heads < 1 || layers < 1) throw ConfigError("GAT needs at least one head and one layer");
    const auto D = static_cast<Eigen::Index>(d);
    for (std::size_t l = 0; l < layers; ++l)
      for (std::size_t k = 0; k < heads; ++k) {
        const auto base = prefix + ".l" + std::to_string(l) + ".h" + std::to_string(k);
        p.add(base + ".W", D, D, Init::kXavierUniform, rng);
        p.add(base + ".a", 2 * D, 1, Init::kXavierUniform, rng);
      }
    return bind(p, heads, layers, prefix);
  }
  static GatParams bind(const ModelParams<T>& p, std::size_t heads, std::size_t layers,
                        const std::string& prefix = "gat") {
    GatParams g;
    g.W.resize(layers);
    g.a.resize(layers);
    for (std::size_t l = 0; l < layers; ++l)
      for (std::size_t k = 0; k < heads; ++k) {
        const auto base = prefix + ".l" + std::to_string(l) + ".h" + std::to_string(k);
        g.W[l].push_back(p[base + ".W"]);
        g.a[l].push_back(p[base + ".a"]);
      }
    return g;
  }
  std::size_t heads() const { return W.empty() ? 0 : W[0].size(); }
  std::size_t layers() const { return W.size(); }
};

struct GatOptions {
  double leaky_slope = 0.2;
  bool keep_attention = false;
};

template <typename T>
struct GatResult {
  Tensor<T> output;                         // (blocks * n) x d
  std::vector<Tensor<T>> attention;         // last layer, per head, (blocks * n) x n
};

/// 0/1 neighbourhood mask over `symbols` (self-loops included). Symbols the
/// graph does not know become isolates; each is reported once.
template <typename T>
Matrix<T> adjacency_mask(const data::RelationalGraph& graph, const std::vector<std::string>& symbols) {
  const auto n = static_cast<Eigen::Index>(symbols.size());
  Matrix<T> mask = Matrix<T>::Zero(n, n);
  std::vector<std::optional<std::size_t>> idx;
  std::set<std::string> reported;
  for (const auto& s : symbols) {
    idx.push_back(graph.index_of(s));
    if (!idx.back() && reported.insert(s).second)
      log::warn("stock " + s + " absent from relational graph; treated as isolate");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    mask(i, i) = T(1);
    if (!idx[static_cast<std::size_t>(i)]) continue;
    for (Eigen::Index j = 0; j < n; ++j)
      if (idx[static_cast<std::size_t>(j)] &&
          graph.are_neighbors(*idx[static_cast<std::size_t>(i)], *idx[static_cast<std::size_t>(j)]))
        mask(i, j) = T(1);
  }
  return mask;
}

/// Graph attention over `blocks` stacked snapshots of the same n-node graph
/// (one snapshot per timestamp, shared weights). Per head k and node i:
///   e_ij = LeakyReLU(a_k . [h_i W_k || h_j W_k]),  alpha = softmax over j in N(i),
/// heads are averaged and passed through ELU.
template <typename T>
GatResult<T> gat_encode_graph(const Tensor<T>& features, const Matrix<T>& adjacency, Eigen::Index blocks,
                              const GatParams<T>& p, const GatOptions& opt = {}) {
  using namespace compute;
  const auto n = adjacency.rows();
  if (adjacency.cols() != n || blocks < 1 || features.rows() != blocks * n)
    throw ShapeError("gat_encode_graph: features " + features.shape() + " do not hold " + std::to_string(blocks) +
                     " snapshots of a " + std::to_string(n) + "-node graph");
  Matrix<T> mask(blocks * n, n);
  for (Eigen::Index b = 0; b < blocks; ++b) mask.middleRows(b * n, n) = adjacency;
  const auto ones = Tensor<T>::constant(Matrix<T>::Ones(blocks * n, 1));
  const auto slope = static_cast<T>(opt.leaky_slope);

  GatResult<T> result;
  Tensor<T> h = features;
  for (std::size_t l = 0; l < p.layers(); ++l) {
    const auto d = p.W[l][0].rows();
    if (h.cols() != d) throw ShapeError("gat_encode_graph: layer input " + h.shape() + " vs W " + p.W[l][0].shape());
    std::vector<Tensor<T>> heads;
    const bool last = l + 1 == p.layers();
    if (last) result.attention.clear();
    for (std::size_t k = 0; k < p.heads(); ++k) {
      auto z = matmul(h, p.W[l][k]);
      auto s_src = matmul(z, slice_rows(p.a[l][k], 0, d));
      auto s_dst = matmul(z, slice_rows(p.a[l][k], d, d));
      auto scores = block_matmul_nt(concat_cols<T>({s_src, ones}), concat_cols<T>({ones, s_dst}), blocks);
      auto alpha = masked_softmax_rows(leaky_relu(scores, slope), mask);
      if (last && opt.keep_attention) result.attention.push_back(alpha);
      heads.push_back(block_matmul(alpha, z, blocks));
    }
    Tensor<T> avg = heads[0];
    for (std::size_t k = 1; k < heads.size(); ++k) avg = add(avg, heads[k]);
    h = elu(scale(avg, T(1) / static_cast<T>(heads.size())));
  }
  result.output = h;
  return result;
}

}  // namespace msgca::encoders
