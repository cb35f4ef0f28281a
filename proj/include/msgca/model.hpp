#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "msgca/compute/ops.hpp"
#include "msgca/compute/params.hpp"
#include "msgca/data/dataset.hpp"
#include "msgca/encoders.hpp"
#include "msgca/fusion.hpp"
#include "msgca/predictor.hpp"

namespace msgca {

/// Model variants: the full architecture, two fusion ablations and three
/// single-modality drops.
enum class Variant { kFull, kGluFusion, kCaFusion, kDropGraph, kDropDocs, kDropIndicators };

inline const std::vector<std::pair<std::string, Variant>>& variant_names() {
  static const std::vector<std::pair<std::string, Variant>> names{
      {"full", Variant::kFull},           {"glu_fusion", Variant::kGluFusion},
      {"ca_fusion", Variant::kCaFusion},  {"drop_graph", Variant::kDropGraph},
      {"drop_docs", Variant::kDropDocs},  {"drop_indicators", Variant::kDropIndicators}};
  return names;
}

inline Variant parse_variant(const std::string& name) {
  for (const auto& [n, v] : variant_names())
    if (n == name) return v;
  throw ConfigError("unknown variant '" + name + "' (expected full, glu_fusion, ca_fusion, drop_graph, drop_docs, drop_indicators)");
}

inline std::string variant_name(Variant v) {
  for (const auto& [n, x] : variant_names())
    if (x == v) return n;
  return "?";
}

struct ModelConfig {
  std::size_t d = 64;
  std::size_t window = 20;
  std::size_t heads = 2;      // cross-attention heads
  std::size_t gat_heads = 2;  // graph attention heads
  std::size_t gat_layers = 1;
  std::size_t fusion_layers = 1;
  std::size_t doc_dim = 1536;
  double leaky_slope = 0.2;
  std::string graph_encoder = "gat";
  Variant variant = Variant::kFull;

  bool uses_indicators() const { return variant != Variant::kDropIndicators; }
  bool uses_documents() const { return variant != Variant::kDropDocs; }
  // Graph nodes start from indicator features, so the graph is inert without them.
  bool uses_graph() const { return variant != Variant::kDropGraph && uses_indicators(); }

  fusion::StageMode stage_mode() const {
    if (variant == Variant::kGluFusion) return fusion::StageMode::kGlu;
    if (variant == Variant::kCaFusion) return fusion::StageMode::kCrossAttentionOnly;
    return fusion::StageMode::kGatedCrossAttention;
  }

  void validate() const {
    if (d < 1 || window < 2 || heads < 1 || gat_heads < 1 || gat_layers < 1 || fusion_layers < 1 || doc_dim < 1)
      throw ConfigError("model config: d, heads, layers, doc_dim must be positive and window >= 2");
    if (graph_encoder != "gat")
      throw ConfigError("graph encoder '" + graph_encoder + "' is not available (only 'gat' is built)");
  }
};

/// Model input for a batch of windows. Graph features are computed on
/// `snapshots` market-wide snapshots (one per calendar date touched by the
/// batch) and gathered back per window row.
template <typename T>
struct Batch {
  Eigen::Index size = 0;
  Eigen::Index window = 0;
  Eigen::Index snapshots = 0;
  compute::Matrix<T> market_indicators;  // (snapshots * n) x 3
  compute::Matrix<T> adjacency;          // n x n, self-loops included
  std::vector<Eigen::Index> gather;      // size*window rows into market_indicators
  compute::Matrix<T> documents;          // (size * window) x doc_dim
  std::vector<T> doc_mask;               // size * window
  std::vector<int> labels;
};

/// Indicator features of one stock-day: close, open and high as percent
/// change from the previous close (the first day uses its own close).
inline std::array<double, 3> indicator_features(const data::StockPanel& panel, std::size_t row) {
  const auto& s = panel.series;
  const double ref = row > 0 ? s.close[row - 1] : s.close[row];
  return {100.0 * (s.close[row] / ref - 1.0), 100.0 * (s.open[row] / ref - 1.0), 100.0 * (s.high[row] / ref - 1.0)};
}

template <typename T>
Batch<T> make_batch(const data::Market& market, const std::vector<const data::WindowSample*>& samples) {
  if (samples.empty()) throw DataError("empty batch");
  Batch<T> b;
  b.size = static_cast<Eigen::Index>(samples.size());
  b.window = static_cast<Eigen::Index>(samples[0]->ws);
  const auto n = static_cast<Eigen::Index>(market.num_stocks());

  std::vector<std::size_t> dates;
  for (const auto* s : samples) {
    if (static_cast<Eigen::Index>(s->ws) != b.window) throw DataError("batch mixes window sizes");
    for (std::size_t r = 0; r < s->ws; ++r) dates.push_back(s->panel->calendar_index[s->start + r]);
  }
  std::sort(dates.begin(), dates.end());
  dates.erase(std::unique(dates.begin(), dates.end()), dates.end());
  b.snapshots = static_cast<Eigen::Index>(dates.size());

  b.market_indicators = compute::Matrix<T>::Zero(b.snapshots * n, 3);
  for (Eigen::Index u = 0; u < b.snapshots; ++u)
    for (Eigen::Index s = 0; s < n; ++s) {
      const auto local = market.local_index[static_cast<std::size_t>(s)][dates[static_cast<std::size_t>(u)]];
      if (local < 0) continue;
      const auto f = indicator_features(*market.stocks[static_cast<std::size_t>(s)], static_cast<std::size_t>(local));
      for (int c = 0; c < 3; ++c) b.market_indicators(u * n + s, c) = static_cast<T>(f[static_cast<std::size_t>(c)]);
    }
  b.adjacency = encoders::adjacency_mask<T>(market.graph, market.graph.stocks);

  const auto dim = static_cast<Eigen::Index>(market.doc_dim);
  b.documents = compute::Matrix<T>::Zero(b.size * b.window, dim);
  b.doc_mask.reserve(static_cast<std::size_t>(b.size * b.window));
  b.gather.reserve(static_cast<std::size_t>(b.size * b.window));
  for (Eigen::Index i = 0; i < b.size; ++i) {
    const auto* s = samples[static_cast<std::size_t>(i)];
    const auto docs = s->doc_embeddings();
    const auto mask = s->doc_mask();
    for (Eigen::Index r = 0; r < b.window; ++r) {
      const auto c = s->panel->calendar_index[s->start + static_cast<std::size_t>(r)];
      const auto u = std::lower_bound(dates.begin(), dates.end(), c) - dates.begin();
      b.gather.push_back(static_cast<Eigen::Index>(u) * n + static_cast<Eigen::Index>(s->stock));
      b.documents.row(i * b.window + r) = docs.row(r).template cast<T>();
      b.doc_mask.push_back(static_cast<T>(mask[static_cast<std::size_t>(r)]));
    }
    b.labels.push_back(data::to_index(s->label));
  }
  return b;
}

template <typename T>
struct ForwardOutput {
  compute::Tensor<T> logits;  // size x 3
  compute::Tensor<T> v_i, v_d, v_g;
  compute::Tensor<T> H_id, H_idg;
  fusion::FusionStageOutput<T> stage1, stage2;  // undefined tensors where a stage is skipped
  std::vector<compute::Tensor<T>> graph_attention;
};

/// The full multimodal network over all three modalities.
template <typename T>
class Msgca {
 public:
  Msgca(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(seed);
    const auto mode = cfg_.stage_mode();
    if (cfg_.uses_indicators()) encoders::IndicatorEncoderParams<T>::create(params_, cfg_.d, rng);
    if (cfg_.uses_documents()) encoders::DocEncoderParams<T>::create(params_, cfg_.doc_dim, cfg_.d, rng);
    if (cfg_.uses_graph()) encoders::GatParams<T>::create(params_, cfg_.d, cfg_.gat_heads, cfg_.gat_layers, rng);
    if (cfg_.uses_documents())
      fusion::FusionStageParams<T>::create(params_, "fusion1", cfg_.d, cfg_.heads, cfg_.fusion_layers, mode, rng);
    if (cfg_.uses_graph())
      fusion::FusionStageParams<T>::create(params_, "fusion2", cfg_.d, cfg_.heads, cfg_.fusion_layers, mode, rng);
    predictor::PredictorParams<T>::create(params_, cfg_.window, cfg_.d, rng);
  }

  /// Adopts existing weights (e.g. from a checkpoint); names must match the layout.
  Msgca(const ModelConfig& cfg, compute::ModelParams<T> params) : Msgca(cfg, 0) {
    for (auto& p : params_.items()) {
      if (!params.contains(p.name)) throw DataError("parameter " + p.name + " missing from supplied weights");
      const auto& src = params.at(p.name);
      if (src.tensor.rows() != p.tensor.rows() || src.tensor.cols() != p.tensor.cols())
        throw DataError("parameter " + p.name + " has shape " + src.tensor.shape() + ", model expects " +
                        p.tensor.shape());
    }
    if (params.size() != params_.size()) throw DataError("supplied weights carry parameters the model does not use");
    params_ = std::move(params);
  }

  const ModelConfig& config() const { return cfg_; }
  compute::ModelParams<T>& params() { return params_; }
  const compute::ModelParams<T>& params() const { return params_; }

  ForwardOutput<T> forward(const Batch<T>& batch, bool keep_graph_attention = false) const {
    using compute::Tensor;
    if (batch.window != static_cast<Eigen::Index>(cfg_.window))
      throw ShapeError("batch window " + std::to_string(batch.window) + " differs from model window " +
                       std::to_string(cfg_.window));
    const auto rows = batch.size * batch.window;
    const auto d = static_cast<Eigen::Index>(cfg_.d);
    const auto mode = cfg_.stage_mode();
    ForwardOutput<T> out;

    Tensor<T> vi_all;
    if (cfg_.uses_indicators()) {
      vi_all = encoders::encode_indicators(Tensor<T>::constant(batch.market_indicators),
                                           encoders::IndicatorEncoderParams<T>::bind(params_));
      out.v_i = compute::gather_rows(vi_all, batch.gather);
    } else {
      out.v_i = Tensor<T>::zeros(rows, d);
    }

    if (cfg_.uses_graph()) {
      auto gat = encoders::gat_encode_graph(
          vi_all, batch.adjacency, batch.snapshots,
          encoders::GatParams<T>::bind(params_, cfg_.gat_heads, cfg_.gat_layers),
          {cfg_.leaky_slope, keep_graph_attention});
      out.v_g = compute::gather_rows(gat.output, batch.gather);
      out.graph_attention = std::move(gat.attention);
    } else {
      out.v_g = Tensor<T>::zeros(rows, d);
    }

    if (cfg_.uses_documents()) {
      out.v_d = encoders::encode_documents(Tensor<T>::constant(batch.documents), std::span<const T>(batch.doc_mask),
                                           encoders::DocEncoderParams<T>::bind(params_));
      const auto stage = fusion::FusionStageParams<T>::bind(params_, "fusion1", cfg_.heads, cfg_.fusion_layers, mode);
      // Without indicators the documents lead their own stage.
      const auto& lead = cfg_.uses_indicators() ? out.v_i : out.v_d;
      out.stage1 = fusion::fusion_stage(lead, out.v_d, lead, stage, batch.size);
      out.H_id = out.stage1.stable;
    } else {
      out.v_d = Tensor<T>::zeros(rows, d);
      out.H_id = out.v_i;
    }

    if (cfg_.uses_graph()) {
      const auto stage = fusion::FusionStageParams<T>::bind(params_, "fusion2", cfg_.heads, cfg_.fusion_layers, mode);
      out.stage2 = fusion::fusion_stage(out.H_id, out.v_g, out.H_id, stage, batch.size);
      out.H_idg = out.stage2.stable;
    } else {
      out.H_idg = out.H_id;
    }

    const auto pred = predictor::PredictorParams<T>::bind(params_);
    auto h = predictor::aggregate_time(out.H_idg, out.v_i, pred, batch.size);
    out.logits = predictor::aggregate_features(h, pred);
    return out;
  }

  compute::Tensor<T> loss(const Batch<T>& batch) const {
    return predictor::cross_entropy_loss(forward(batch).logits, std::span<const int>(batch.labels));
  }

 private:
  ModelConfig cfg_;
  compute::ModelParams<T> params_;
};

}  // namespace msgca
