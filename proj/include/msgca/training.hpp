#pragma once

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "msgca/compute/params.hpp"
#include "msgca/data/dataset.hpp"
#include "msgca/metrics.hpp"
#include "msgca/model.hpp"

namespace msgca::training {

enum class Precision { kFloat64, kFloat32 };

inline std::string precision_name(Precision p) { return p == Precision::kFloat32 ? "float32" : "float64"; }

inline Precision parse_precision(const std::string& s) {
  if (s == "float64" || s == "double" || s == "64") return Precision::kFloat64;
  if (s == "float32" || s == "float" || s == "32") return Precision::kFloat32;
  throw ConfigError("unknown precision '" + s + "' (expected float64 or float32)");
}

struct TrainConfig {
  ModelConfig model;
  std::size_t epochs = 200;
  std::size_t batch_size = 1024;
  double lr = 1e-4;
  double warmup_frac = 0.1;
  std::uint64_t seed = 0;
  Precision precision = Precision::kFloat64;
  double clip_norm = 0.0;  // global-norm clip; 0 disables

  void validate() const {
    model.validate();
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(lr > 0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
    if (!(warmup_frac >= 0 && warmup_frac <= 0.5)) throw ConfigError("warmup_frac must lie in [0, 0.5]");
    if (clip_norm < 0) throw ConfigError("clip_norm must be >= 0");
  }
};

inline nlohmann::json to_json(const ModelConfig& m) {
  return {{"d", m.d},
          {"window", m.window},
          {"heads", m.heads},
          {"gat_heads", m.gat_heads},
          {"gat_layers", m.gat_layers},
          {"fusion_layers", m.fusion_layers},
          {"doc_dim", m.doc_dim},
          {"leaky_slope", m.leaky_slope},
          {"graph_encoder", m.graph_encoder},
          {"variant", variant_name(m.variant)}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig m;
  m.d = j.at("d").get<std::size_t>();
  m.window = j.at("window").get<std::size_t>();
  m.heads = j.at("heads").get<std::size_t>();
  m.gat_heads = j.at("gat_heads").get<std::size_t>();
  m.gat_layers = j.at("gat_layers").get<std::size_t>();
  m.fusion_layers = j.at("fusion_layers").get<std::size_t>();
  m.doc_dim = j.at("doc_dim").get<std::size_t>();
  m.leaky_slope = j.at("leaky_slope").get<double>();
  m.graph_encoder = j.at("graph_encoder").get<std::string>();
  m.variant = parse_variant(j.at("variant").get<std::string>());
  return m;
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"model", to_json(c.model)},         {"epochs", c.epochs}, {"batch_size", c.batch_size},
          {"lr", c.lr},                        {"warmup_frac", c.warmup_frac},
          {"seed", c.seed},                    {"precision", precision_name(c.precision)},
          {"clip_norm", c.clip_norm}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.model = model_config_from_json(j.at("model"));
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.lr = j.at("lr").get<double>();
  c.warmup_frac = j.at("warmup_frac").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.precision = parse_precision(j.at("precision").get<std::string>());
  c.clip_norm = j.at("clip_norm").get<double>();
  return c;
}

/// Linear warmup to `base` over the first warmup_frac * total steps, then constant.
inline double lr_schedule(double base, std::size_t step, std::size_t total, double warmup_frac) {
  const double warmup = warmup_frac * static_cast<double>(total);
  if (warmup <= 0) return base;
  return base * std::min(1.0, static_cast<double>(step) / warmup);
}

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam update using each parameter's accumulated gradient.
/// `step` counts from 1. Parameters that never received a gradient are left alone.
template <typename T>
void adam_step(compute::ModelParams<T>& params, double lr, std::size_t step, const AdamOptions& opt = {}) {
  if (step < 1) throw ConfigError("adam step counter starts at 1");
  const T b1 = static_cast<T>(opt.beta1), b2 = static_cast<T>(opt.beta2);
  const T c1 = static_cast<T>(1.0 - std::pow(opt.beta1, static_cast<double>(step)));
  const T c2 = static_cast<T>(1.0 - std::pow(opt.beta2, static_cast<double>(step)));
  const T rate = static_cast<T>(lr), eps = static_cast<T>(opt.eps);
  for (auto& p : params.items()) {
    if (!p.tensor.has_grad()) continue;
    const auto& g = p.tensor.grad();
    p.adam_m = b1 * p.adam_m + (T(1) - b1) * g;
    p.adam_v = b2 * p.adam_v + (T(1) - b2) * g.cwiseProduct(g);
    auto& w = p.tensor.mutable_value();
    w.array() -= rate * (p.adam_m.array() / c1) / ((p.adam_v.array() / c2).sqrt() + eps);
  }
}

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;
  double valid_acc = 0;
  double valid_mcc = 0;
  double seconds = 0;
  std::int64_t peak_mem_bytes = 0;

  bool same_metrics(const EpochRecord& o) const {
    return epoch == o.epoch && train_loss == o.train_loss && valid_acc == o.valid_acc && valid_mcc == o.valid_mcc;
  }
};

struct Evaluation {
  metrics::ConfusionMatrix<> confusion;
  std::vector<int> predictions;
  double loss = 0;
  double acc = 0;
  double mcc = 0;
};

/// Batched inference over `samples` in their stored order.
template <typename T>
Evaluation evaluate(const Msgca<T>& model, const data::Market& market, const std::vector<data::WindowSample>& samples,
                    std::size_t batch_size) {
  if (samples.empty()) throw DataError("cannot evaluate an empty sample set");
  compute::NoGradGuard no_grad;
  Evaluation ev;
  double loss_sum = 0;
  std::vector<int> truth;
  for (std::size_t i = 0; i < samples.size(); i += batch_size) {
    std::vector<const data::WindowSample*> ptrs;
    for (std::size_t k = i; k < std::min(samples.size(), i + batch_size); ++k) ptrs.push_back(&samples[k]);
    const auto batch = make_batch<T>(market, ptrs);
    const auto logits = model.forward(batch).logits;
    loss_sum += static_cast<double>(
                    predictor::cross_entropy_loss(logits, std::span<const int>(batch.labels)).item()) *
                static_cast<double>(ptrs.size());
    const auto pred = predictor::predict_classes(logits.value());
    ev.predictions.insert(ev.predictions.end(), pred.begin(), pred.end());
    truth.insert(truth.end(), batch.labels.begin(), batch.labels.end());
  }
  ev.confusion = metrics::ConfusionMatrix<>::from(truth, ev.predictions);
  ev.loss = loss_sum / static_cast<double>(samples.size());
  ev.acc = metrics::accuracy(ev.confusion);
  ev.mcc = metrics::mcc(ev.confusion);
  return ev;
}

/// Everything needed to continue a run exactly where it stopped.
template <typename T>
struct TrainState {
  compute::ModelParams<T> params;  // current weights and Adam moments
  std::size_t step = 0;            // optimizer steps taken
  std::size_t epoch = 0;           // epochs completed
  std::vector<EpochRecord> history;
  compute::ModelParams<T> best;  // weights at the best validation MCC
  std::size_t best_epoch = 0;    // 0 = initial weights
  double best_valid_mcc = -std::numeric_limits<double>::infinity();
  double best_test_acc = std::numeric_limits<double>::quiet_NaN();
  double best_test_mcc = std::numeric_limits<double>::quiet_NaN();
};

template <typename To, typename From>
compute::ModelParams<To> convert_params(const compute::ModelParams<From>& src) {
  compute::ModelParams<To> out;
  for (const auto& p : src.items()) {
    out.add(p.name, p.tensor.value().template cast<To>());
    out.items().back().adam_m = p.adam_m.template cast<To>();
    out.items().back().adam_v = p.adam_v.template cast<To>();
  }
  return out;
}

template <typename To, typename From>
TrainState<To> convert_state(const TrainState<From>& s) {
  TrainState<To> out;
  out.params = convert_params<To>(s.params);
  out.best = convert_params<To>(s.best);
  out.step = s.step;
  out.epoch = s.epoch;
  out.history = s.history;
  out.best_epoch = s.best_epoch;
  out.best_valid_mcc = s.best_valid_mcc;
  out.best_test_acc = s.best_test_acc;
  out.best_test_mcc = s.best_test_mcc;
  return out;
}

// ---- checkpoint container -------------------------------------------------------
//
// "MSGCACKP" | u32 version | u64 header length | JSON header | payload | u64 FNV-1a
// The payload holds, per parameter in header order, value, Adam m and Adam v,
// followed by the best-checkpoint values; all as little-endian float64.

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'M', 'S', 'G', 'C', 'A', 'C', 'K', 'P'};

struct Checkpoint {
  TrainConfig config;
  TrainState<double> state;
};

namespace detail {

inline std::uint64_t fnv1a(const char* data, std::size_t n) {
  std::uint64_t h = 1469598103934665603ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 1099511628211ull;
  }
  return h;
}

template <typename V>
void put(std::string& buf, const V& v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof(V));
}

inline void put_matrix(std::string& buf, const compute::Matrix<double>& m) {
  buf.append(reinterpret_cast<const char*>(m.data()), sizeof(double) * static_cast<std::size_t>(m.size()));
}

inline nlohmann::json json_number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

inline double number_or_nan(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

inline nlohmann::json history_json(const std::vector<EpochRecord>& h) {
  auto arr = nlohmann::json::array();
  for (const auto& r : h)
    arr.push_back({{"epoch", r.epoch},
                   {"train_loss", r.train_loss},
                   {"valid_acc", r.valid_acc},
                   {"valid_mcc", r.valid_mcc},
                   {"seconds", r.seconds},
                   {"peak_mem_bytes", r.peak_mem_bytes}});
  return arr;
}

inline std::vector<EpochRecord> history_from_json(const nlohmann::json& arr) {
  std::vector<EpochRecord> h;
  for (const auto& r : arr)
    h.push_back({r.at("epoch").get<std::size_t>(), r.at("train_loss").get<double>(), r.at("valid_acc").get<double>(),
                 r.at("valid_mcc").get<double>(), r.at("seconds").get<double>(),
                 r.at("peak_mem_bytes").get<std::int64_t>()});
  return h;
}

}  // namespace detail

/// Writes atomically (temporary file + rename).
inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  const auto& s = ck.state;
  const bool has_best = s.best.size() == s.params.size() && s.best.size() > 0;
  nlohmann::json header{{"config", to_json(ck.config)},
                        {"step", s.step},
                        {"epoch", s.epoch},
                        {"history", detail::history_json(s.history)},
                        {"best_epoch", s.best_epoch},
                        {"best_valid_mcc", detail::json_number(s.best_valid_mcc)},
                        {"best_test_acc", detail::json_number(s.best_test_acc)},
                        {"best_test_mcc", detail::json_number(s.best_test_mcc)},
                        {"has_best", has_best}};
  auto index = nlohmann::json::array();
  for (const auto& p : s.params.items()) index.push_back({{"name", p.name}, {"rows", p.tensor.rows()}, {"cols", p.tensor.cols()}});
  header["params"] = index;
  const std::string text = header.dump();

  std::string buf(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put(buf, kCheckpointVersion);
  detail::put(buf, static_cast<std::uint64_t>(text.size()));
  buf += text;
  for (const auto& p : s.params.items()) {
    detail::put_matrix(buf, p.tensor.value());
    detail::put_matrix(buf, p.adam_m);
    detail::put_matrix(buf, p.adam_v);
  }
  if (has_best)
    for (const auto& p : s.params.items()) detail::put_matrix(buf, s.best.at(p.name).tensor.value());
  detail::put(buf, detail::fnv1a(buf.data(), buf.size()));

  const auto tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint: " + tmp);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw DataError("short write to checkpoint: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

/// Reads and fully validates a checkpoint before returning any state.
inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  constexpr std::size_t fixed = sizeof(kCheckpointMagic) + sizeof(std::uint32_t) + sizeof(std::uint64_t);
  if (buf.size() < fixed + sizeof(std::uint64_t) || std::memcmp(buf.data(), kCheckpointMagic, 8) != 0)
    throw CorruptionError(path + ": not a checkpoint file or truncated header");
  std::uint32_t version = 0;
  std::memcpy(&version, buf.data() + 8, sizeof(version));
  if (version != kCheckpointVersion)
    throw VersionError(path + ": checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kCheckpointVersion) + "); re-export it with a matching release");
  std::uint64_t stored = 0;
  std::memcpy(&stored, buf.data() + buf.size() - sizeof(stored), sizeof(stored));
  if (detail::fnv1a(buf.data(), buf.size() - sizeof(stored)) != stored)
    throw CorruptionError(path + ": checksum mismatch (file truncated or damaged)");
  std::uint64_t header_len = 0;
  std::memcpy(&header_len, buf.data() + 12, sizeof(header_len));
  if (fixed + header_len > buf.size() - sizeof(stored)) throw CorruptionError(path + ": header overruns file");

  Checkpoint ck;
  try {
    const auto header = nlohmann::json::parse(buf.substr(fixed, header_len));
    ck.config = train_config_from_json(header.at("config"));
    auto& s = ck.state;
    s.step = header.at("step").get<std::size_t>();
    s.epoch = header.at("epoch").get<std::size_t>();
    s.history = detail::history_from_json(header.at("history"));
    s.best_epoch = header.at("best_epoch").get<std::size_t>();
    s.best_valid_mcc = detail::number_or_nan(header.at("best_valid_mcc"));
    if (std::isnan(s.best_valid_mcc)) s.best_valid_mcc = -std::numeric_limits<double>::infinity();
    s.best_test_acc = detail::number_or_nan(header.at("best_test_acc"));
    s.best_test_mcc = detail::number_or_nan(header.at("best_test_mcc"));
    const bool has_best = header.at("has_best").get<bool>();

    std::size_t offset = fixed + header_len;
    const std::size_t end = buf.size() - sizeof(stored);
    auto take = [&](Eigen::Index r, Eigen::Index c) {
      compute::Matrix<double> m(r, c);
      const auto bytes = sizeof(double) * static_cast<std::size_t>(m.size());
      if (offset + bytes > end) throw CorruptionError(path + ": payload shorter than header declares");
      std::memcpy(m.data(), buf.data() + offset, bytes);
      offset += bytes;
      return m;
    };
    std::vector<std::tuple<std::string, Eigen::Index, Eigen::Index>> layout;
    for (const auto& p : header.at("params"))
      layout.emplace_back(p.at("name").get<std::string>(), p.at("rows").get<Eigen::Index>(),
                          p.at("cols").get<Eigen::Index>());
    for (const auto& [name, r, c] : layout) {
      s.params.add(name, take(r, c));
      s.params.items().back().adam_m = take(r, c);
      s.params.items().back().adam_v = take(r, c);
    }
    if (has_best)
      for (const auto& [name, r, c] : layout) s.best.add(name, take(r, c));
    if (offset != end) throw CorruptionError(path + ": trailing bytes after payload");
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(path + ": malformed header: " + e.what());
  }
  return ck;
}

// ---- training loop --------------------------------------------------------------

struct TrainOptions {
  std::string log_csv;          // per-epoch metrics, appended; empty disables
  std::string checkpoint_path;  // written after every epoch; empty disables
  std::size_t stop_after_epoch = 0;  // stop early (for interruption tests); 0 runs all epochs
  bool evaluate_test = true;         // score the test split whenever validation MCC improves
  std::function<void(const EpochRecord&)> on_epoch;
};

template <typename T>
struct TrainResult {
  TrainState<T> state;
  Msgca<T> best_model() const { return Msgca<T>(config.model, state.best.clone()); }
  TrainConfig config;
};

namespace detail {

inline void append_csv(const std::string& path, const EpochRecord& r) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw DataError("cannot write training log: " + path);
  if (fresh) out << "epoch,train_loss,valid_acc,valid_mcc,seconds,peak_mem_bytes\n";
  out << r.epoch << ',' << data::detail::format_double(r.train_loss) << ','
      << data::detail::format_double(r.valid_acc) << ',' << data::detail::format_double(r.valid_mcc) << ','
      << data::detail::format_double(r.seconds) << ',' << r.peak_mem_bytes << '\n';
}

template <typename T>
void clip_gradients(compute::ModelParams<T>& params, double max_norm) {
  const double norm = params.global_grad_norm();
  if (max_norm <= 0 || norm <= max_norm) return;
  const T scale = static_cast<T>(max_norm / norm);
  for (auto& p : params.items())
    if (p.tensor.has_grad()) p.tensor.mutable_grad() *= scale;
}

template <typename T>
double param_norm(const compute::ModelParams<T>& params) {
  double s = 0;
  for (const auto& p : params.items()) s += static_cast<double>(p.tensor.value().squaredNorm());
  return std::sqrt(s);
}

}  // namespace detail

/// Runs (or resumes) training: per batch forward, loss, backward, Adam with
/// warmup; validation after every epoch; the weights with the best validation
/// MCC (earliest on ties) are kept.
template <typename T>
TrainResult<T> train_model(const data::Dataset& dataset, const TrainConfig& cfg, const TrainOptions& opt = {},
                           const TrainState<T>* resume = nullptr) {
  cfg.validate();
  const auto& split = dataset.split;
  const auto& market = *dataset.market;
  if (split.train.empty() || split.valid.empty()) throw DataError("training needs nonempty train and valid splits");
  if (split.train.front().ws != cfg.model.window)
    throw ConfigError("model window " + std::to_string(cfg.model.window) + " differs from dataset window " +
                      std::to_string(split.train.front().ws));
  if (cfg.model.doc_dim != market.doc_dim)
    throw ConfigError("model doc_dim " + std::to_string(cfg.model.doc_dim) + " differs from embedding width " +
                      std::to_string(market.doc_dim));

  Msgca<T> model(cfg.model, cfg.seed);
  TrainResult<T> result;
  result.config = cfg;
  auto& st = result.state;
  if (resume) {
    st = TrainState<T>{resume->params.clone(), resume->step, resume->epoch, resume->history, resume->best.clone(),
                       resume->best_epoch, resume->best_valid_mcc, resume->best_test_acc, resume->best_test_mcc};
    model = Msgca<T>(cfg.model, st.params.clone());
    // Keep the restored Adam moments.
    for (auto& p : model.params().items()) {
      p.adam_m = st.params.at(p.name).adam_m;
      p.adam_v = st.params.at(p.name).adam_v;
    }
  } else {
    st.best = model.params().clone();
  }

  const std::size_t n_train = split.train.size();
  const std::size_t per_epoch = (n_train + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = per_epoch * cfg.epochs;
  const std::size_t last_epoch = opt.stop_after_epoch ? std::min(cfg.epochs, opt.stop_after_epoch) : cfg.epochs;

  for (std::size_t epoch = st.epoch; epoch < last_epoch; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    compute::MemoryTracker::reset_peak();
    double loss_sum = 0;
    const auto batches = data::batch_iter(n_train, cfg.batch_size, cfg.seed, epoch);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      std::vector<const data::WindowSample*> ptrs;
      for (auto i : batches[b]) ptrs.push_back(&split.train[i]);
      const auto batch = make_batch<T>(market, ptrs);
      model.params().zero_grad();
      const auto where = [&] {
        return "at epoch " + std::to_string(epoch + 1) + ", batch " + std::to_string(b) + " (parameter norm " +
               data::detail::format_double(detail::param_norm(model.params())) + ")";
      };
      double value = 0;
      try {
        auto loss = model.loss(batch);
        value = static_cast<double>(loss.item());
        if (!std::isfinite(value)) throw NumericError("non-finite training loss " + where());
        loss.backward();
      } catch (const NumericError& e) {
        if (std::string(e.what()).rfind("non-finite training loss", 0) == 0) throw;
        throw NumericError("non-finite training loss " + where() + ": " + e.what());
      }
      detail::clip_gradients(model.params(), cfg.clip_norm);
      ++st.step;
      adam_step(model.params(), lr_schedule(cfg.lr, st.step, total_steps, cfg.warmup_frac), st.step);
      loss_sum += value;
    }

    const auto valid = evaluate(model, market, split.valid, cfg.batch_size);
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.train_loss = loss_sum / static_cast<double>(batches.size());
    rec.valid_acc = valid.acc;
    rec.valid_mcc = valid.mcc;
    if (valid.mcc > st.best_valid_mcc) {
      st.best_valid_mcc = valid.mcc;
      st.best_epoch = epoch + 1;
      st.best = model.params().clone();
      if (opt.evaluate_test && !split.test.empty()) {
        const auto test = evaluate(model, market, split.test, cfg.batch_size);
        st.best_test_acc = test.acc;
        st.best_test_mcc = test.mcc;
      }
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rec.peak_mem_bytes = compute::MemoryTracker::peak_bytes();
    st.history.push_back(rec);
    st.epoch = epoch + 1;
    st.params = model.params().clone();

    if (!opt.log_csv.empty()) detail::append_csv(opt.log_csv, rec);
    if (!opt.checkpoint_path.empty()) save_checkpoint(opt.checkpoint_path, {cfg, convert_state<double>(st)});
    if (opt.on_epoch) opt.on_epoch(rec);
  }
  st.params = model.params().clone();
  return result;
}

}  // namespace msgca::training
