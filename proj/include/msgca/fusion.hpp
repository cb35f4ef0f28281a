#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "msgca/compute/ops.hpp"
#include "msgca/compute/params.hpp"

namespace msgca::fusion {

using compute::Init;
using compute::Matrix;
using compute::ModelParams;
using compute::Tensor;

/// Per-head query/key/value projections, each d x d; d' = heads * d.
template <typename T>
struct CrossAttnParams {
  std::vector<Tensor<T>> W_q, W_k, W_v;

  static CrossAttnParams create(ModelParams<T>& p, const std::string& prefix, std::size_t d, std::size_t heads,
                                std::mt19937_64& rng) {
    if (heads < 1) throw ConfigError("cross-attention needs at least one head");
    const auto D = static_cast<Eigen::Index>(d);
    for (std::size_t m = 0; m < heads; ++m) {
      const auto base = prefix + ".head" + std::to_string(m);
      p.add(base + ".W_q", D, D, Init::kXavierUniform, rng);
      p.add(base + ".W_k", D, D, Init::kXavierUniform, rng);
      p.add(base + ".W_v", D, D, Init::kXavierUniform, rng);
    }
    return bind(p, prefix, heads);
  }
  static CrossAttnParams bind(const ModelParams<T>& p, const std::string& prefix, std::size_t heads) {
    CrossAttnParams c;
    for (std::size_t m = 0; m < heads; ++m) {
      const auto base = prefix + ".head" + std::to_string(m);
      c.W_q.push_back(p[base + ".W_q"]);
      c.W_k.push_back(p[base + ".W_k"]);
      c.W_v.push_back(p[base + ".W_v"]);
    }
    return c;
  }
  std::size_t heads() const { return W_q.size(); }
  Eigen::Index d() const { return W_q.at(0).rows(); }
  Eigen::Index d_prime() const { return static_cast<Eigen::Index>(heads()) * W_v.at(0).cols(); }
};

template <typename T>
struct CrossAttnOutput {
  Tensor<T> unstable;   // (blocks * t) x d'
  Tensor<T> attention;  // (blocks * t) x t, shared by all heads
};

/// Multi-head cross-attention over `blocks` stacked sequences of length t.
/// Head scores Q_m K_mᵀ / sqrt(d') are averaged over heads, a single row
/// softmax is taken, and that attention matrix is applied to every head's
/// values; head outputs are concatenated.
template <typename T>
CrossAttnOutput<T> cross_attention(const Tensor<T>& query_src, const Tensor<T>& kv_src, const CrossAttnParams<T>& p,
                                   Eigen::Index blocks = 1) {
  using namespace compute;
  if (query_src.rows() != kv_src.rows() || query_src.cols() != p.d() || kv_src.cols() != p.d())
    throw ShapeError("cross_attention: query " + query_src.shape() + " and key/value " + kv_src.shape() +
                     " must both be t x " + std::to_string(p.d()));
  const auto M = p.heads();
  const T inv = T(1) / (static_cast<T>(M) * std::sqrt(static_cast<T>(p.d_prime())));
  Tensor<T> scores;
  std::vector<Tensor<T>> values;
  for (std::size_t m = 0; m < M; ++m) {
    auto q = matmul(query_src, p.W_q[m]);
    auto k = matmul(kv_src, p.W_k[m]);
    auto s = block_matmul_nt(q, k, blocks);
    scores = m == 0 ? s : add(scores, s);
    values.push_back(matmul(kv_src, p.W_v[m]));
  }
  auto attention = softmax_rows(scale(scores, inv));
  std::vector<Tensor<T>> heads;
  for (const auto& v : values) heads.push_back(block_matmul(attention, v, blocks));
  return {concat_cols(heads), attention};
}

/// W_a: d' x d over the unstable features, W_b: d x d over the guide.
template <typename T>
struct GateParams {
  Tensor<T> W_a, b, W_b, b_guide;

  static GateParams create(ModelParams<T>& p, const std::string& prefix, Eigen::Index d_prime, Eigen::Index d,
                           std::mt19937_64& rng, bool with_gate = true) {
    p.add(prefix + ".W_a", d_prime, d, Init::kXavierUniform, rng);
    p.add(prefix + ".b", 1, d, Init::kZeros, rng);
    if (with_gate) {
      p.add(prefix + ".W_b", d, d, Init::kXavierUniform, rng);
      p.add(prefix + ".b_guide", 1, d, Init::kZeros, rng);
    }
    return bind(p, prefix);
  }
  static GateParams bind(const ModelParams<T>& p, const std::string& prefix) {
    GateParams g{p[prefix + ".W_a"], p[prefix + ".b"], {}, {}};
    if (p.contains(prefix + ".W_b")) {
      g.W_b = p[prefix + ".W_b"];
      g.b_guide = p[prefix + ".b_guide"];
    }
    return g;
  }
  bool has_gate() const { return W_b.defined(); }
};

template <typename T>
struct GateOutput {
  Tensor<T> stable;  // t x d
  Tensor<T> gate;    // t x d, in (0, 1); undefined when the gate is disabled
};

/// H_a = unstable W_a + b;  H_b = sigmoid(guide W_b + b');  stable = H_a ⊙ H_b.
/// Without gate weights (cross-attention-only fusion) the gate is identically 1.
template <typename T>
GateOutput<T> gated_selection(const Tensor<T>& unstable, const Tensor<T>& guide, const GateParams<T>& p) {
  using namespace compute;
  if (unstable.cols() != p.W_a.rows())
    throw ShapeError("gated_selection: unstable " + unstable.shape() + " vs W_a " + p.W_a.shape());
  auto h_a = add_bias(matmul(unstable, p.W_a), p.b);
  if (!p.has_gate()) return {h_a, {}};
  if (guide.rows() != unstable.rows() || guide.cols() != p.W_b.rows())
    throw ShapeError("gated_selection: guide " + guide.shape() + " vs unstable " + unstable.shape());
  auto h_b = sigmoid(add_bias(matmul(guide, p.W_b), p.b_guide));
  return {hadamard(h_a, h_b), h_b};
}

/// How a fusion stage forms its unstable features and selects from them.
enum class StageMode {
  kGatedCrossAttention,  // cross-attention then guide-driven gate
  kGlu,                  // linear map of the key/value modality, gated
  kCrossAttentionOnly,   // cross-attention, gate fixed at 1
};

template <typename T>
struct FusionBlockParams {
  CrossAttnParams<T> attn;  // empty for kGlu
  Tensor<T> W_glu;          // d x d', kGlu only
  GateParams<T> gate;
};

template <typename T>
struct FusionStageParams {
  StageMode mode = StageMode::kGatedCrossAttention;
  std::vector<FusionBlockParams<T>> blocks;  // stacked layers, residual-free

  static FusionStageParams create(ModelParams<T>& p, const std::string& prefix, std::size_t d, std::size_t heads,
                                  std::size_t layers, StageMode mode, std::mt19937_64& rng) {
    if (layers < 1) throw ConfigError("fusion stage needs at least one layer");
    const auto D = static_cast<Eigen::Index>(d);
    const auto d_prime = static_cast<Eigen::Index>(heads) * D;
    for (std::size_t l = 0; l < layers; ++l) {
      const auto base = prefix + ".b" + std::to_string(l);
      if (mode == StageMode::kGlu)
        p.add(base + ".W_glu", D, d_prime, Init::kXavierUniform, rng);
      else
        CrossAttnParams<T>::create(p, base + ".attn", d, heads, rng);
      GateParams<T>::create(p, base + ".gate", d_prime, D, rng, mode != StageMode::kCrossAttentionOnly);
    }
    return bind(p, prefix, heads, layers, mode);
  }
  static FusionStageParams bind(const ModelParams<T>& p, const std::string& prefix, std::size_t heads,
                                std::size_t layers, StageMode mode) {
    FusionStageParams s;
    s.mode = mode;
    for (std::size_t l = 0; l < layers; ++l) {
      const auto base = prefix + ".b" + std::to_string(l);
      FusionBlockParams<T> b;
      if (mode == StageMode::kGlu)
        b.W_glu = p[base + ".W_glu"];
      else
        b.attn = CrossAttnParams<T>::bind(p, base + ".attn", heads);
      b.gate = GateParams<T>::bind(p, base + ".gate");
      s.blocks.push_back(std::move(b));
    }
    return s;
  }
};

/// Tensors retained for the stability study (last stacked block of the stage).
template <typename T>
struct FusionStageOutput {
  Tensor<T> unstable;   // t x d'
  Tensor<T> stable;     // t x d
  Tensor<T> gate_values;
  Tensor<T> attention;  // undefined for kGlu
};

/// One fusion stage: query attends to kv, the guide gates the result.
/// Stacked blocks feed each block's stable output in as the next query.
template <typename T>
FusionStageOutput<T> fusion_stage(const Tensor<T>& query, const Tensor<T>& kv, const Tensor<T>& guide,
                                  const FusionStageParams<T>& p, Eigen::Index blocks = 1) {
  using namespace compute;
  FusionStageOutput<T> out;
  Tensor<T> q = query;
  for (const auto& b : p.blocks) {
    if (p.mode == StageMode::kGlu) {
      out.unstable = matmul(kv, b.W_glu);
      out.attention = {};
    } else {
      auto ca = cross_attention(q, kv, b.attn, blocks);
      out.unstable = ca.unstable;
      out.attention = ca.attention;
    }
    auto g = gated_selection(out.unstable, guide, b.gate);
    out.stable = g.stable;
    out.gate_values = g.gate;
    q = out.stable;
  }
  return out;
}

template <typename T>
struct TrimodalOutput {
  Tensor<T> H_id;   // stage-1 stable, t x d
  Tensor<T> H_idg;  // stage-2 stable, t x d
  FusionStageOutput<T> stage1, stage2;
};

/// Two-stage sequential fusion: indicators attend to documents (gated by the
/// indicators), then the stage-1 stable features attend to the graph
/// features (gated by the stage-1 stable features).
template <typename T>
TrimodalOutput<T> fuse_trimodal(const Tensor<T>& v_i, const Tensor<T>& v_d, const Tensor<T>& v_g,
                                const FusionStageParams<T>& stage1, const FusionStageParams<T>& stage2,
                                Eigen::Index blocks = 1) {
  if (v_i.rows() != v_d.rows() || v_i.rows() != v_g.rows() || v_i.cols() != v_d.cols() || v_i.cols() != v_g.cols())
    throw ShapeError("fuse_trimodal: modality shapes differ: " + v_i.shape() + ", " + v_d.shape() + ", " +
                     v_g.shape());
  TrimodalOutput<T> out;
  out.stage1 = fusion_stage(v_i, v_d, v_i, stage1, blocks);
  out.H_id = out.stage1.stable;
  out.stage2 = fusion_stage(out.H_id, v_g, out.H_id, stage2, blocks);
  out.H_idg = out.stage2.stable;
  return out;
}

}  // namespace msgca::fusion
