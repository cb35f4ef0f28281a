#pragma once

#include "msgca/embed/client.hpp"
#include "msgca/evaluation.hpp"
#include "msgca/training.hpp"
#include "msgca/data/synth.hpp"

#include <CLI11.hpp>
#include <boost/lexical_cast.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace msgca::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kConfigExit = 1, kDataExit = 2, kNumericExit = 3 };

inline int exit_code(const Error& e) {
  switch (e.kind()) {
    case Error::Kind::kConfig: return kConfigExit;
    case Error::Kind::kData: return kDataExit;
    case Error::Kind::kNumeric: return kNumericExit;
  }
  return kDataExit;
}

/// One configurable value: INI `[section] key`, command-line `--flag`.
struct Setting {
  std::string section, key, flag, fallback, help;
  std::vector<std::string> commands;  // empty: every subcommand
};

inline const std::vector<Setting>& settings() {
  static const std::vector<std::string> data_cmds{"train", "eval", "ablate", "dump-features"};
  static const std::vector<std::string> model_cmds{"train", "ablate"};
  static const std::vector<Setting> table{
      {"data", "prices", "--prices", "", "price CSV (date,symbol,open,high,close)", {"train", "eval", "ablate", "dump-features"}},
      {"data", "documents", "--documents", "", "documents JSONL", {"train", "eval", "ablate", "dump-features", "embed"}},
      {"data", "embeddings", "--embeddings", "", "embeddings JSONL", {"train", "eval", "ablate", "dump-features", "embed"}},
      {"data", "graph", "--graph", "", "relational graph TSV", data_cmds},
      {"data", "ws", "--ws", "20", "window size in trading days", model_cmds},
      {"data", "lower", "--lower", "-0.01", "down threshold on daily return", data_cmds},
      {"data", "upper", "--upper", "0.01", "up threshold on daily return", data_cmds},
      {"data", "train_ratio", "--train-ratio", "0.8", "share of label dates for training", data_cmds},
      {"data", "valid_ratio", "--valid-ratio", "0.1", "share of label dates for validation", data_cmds},
      {"data", "test_ratio", "--test-ratio", "0.1", "share of label dates for testing", data_cmds},
      {"synth", "stocks", "--stocks", "12", "number of synthetic stocks", {"synth"}},
      {"synth", "days", "--days", "120", "number of trading days", {"synth"}},
      {"synth", "dim", "--dim", "32", "embedding width", {"synth"}},
      {"synth", "doc_signal", "--doc-signal", "2.0", "prototype scale in embeddings", {"synth"}},
      {"synth", "missing", "--missing", "0.3", "probability a day has no documents", {"synth"}},
      {"synth", "conflict", "--conflict", "0.0", "probability a day's documents point the wrong way", {"synth"}},
      {"synth", "sectors", "--sectors", "3", "number of sectors", {"synth"}},
      {"training", "seed", "--seed", "0", "master seed", {"synth", "train", "ablate"}},
      {"training", "variant", "--variant", "full", "model variant", {"train"}},
      {"training", "d", "--d", "64", "latent width", model_cmds},
      {"training", "heads", "--heads", "2", "cross-attention heads", model_cmds},
      {"training", "gat_heads", "--gat-heads", "2", "graph attention heads", model_cmds},
      {"training", "gat_layers", "--gat-layers", "1", "graph attention layers", model_cmds},
      {"training", "fusion_layers", "--fusion-layers", "1", "stacked blocks per fusion stage", model_cmds},
      {"training", "epochs", "--epochs", "200", "training epochs", model_cmds},
      {"training", "batch_size", "--batch-size", "1024", "windows per batch", {"train", "eval", "ablate", "dump-features"}},
      {"training", "lr", "--lr", "1e-4", "base learning rate", model_cmds},
      {"training", "warmup_frac", "--warmup", "0.1", "warmup share of total steps", model_cmds},
      {"training", "precision", "--precision", "float64", "float64 or float32", model_cmds},
      {"training", "clip_norm", "--clip-norm", "0", "gradient clipping norm (0 = off)", model_cmds},
      {"training", "resume", "--resume", "", "checkpoint to resume from", {"train"}},
      {"evaluation", "checkpoint", "--checkpoint", "", "trained checkpoint", {"eval", "dump-features"}},
      {"evaluation", "split", "--split", "test", "train, valid or test", {"eval", "dump-features"}},
      {"evaluation", "variants", "--variants", "full,glu_fusion,ca_fusion,drop_graph,drop_docs,drop_indicators",
       "comma-separated variants", {"ablate"}},
      {"evaluation", "seeds", "--seeds", "", "comma-separated seeds (default: 5 from the master seed)", {"ablate"}},
      {"evaluation", "symbol", "--symbol", "", "stock to dump (default: first)", {"dump-features"}},
      {"embed", "backend", "--backend", "file", "file or http", {"embed"}},
      {"embed", "endpoint", "--endpoint", "", "embeddings service URL", {"embed"}},
      {"embed", "token_env", "--token-env", "MSGCA_EMBED_TOKEN", "environment variable holding the auth token", {"embed"}},
      {"embed", "model", "--model", "text-embedding-ada-002", "provider model name", {"embed"}},
      {"embed", "cache", "--cache", "", "text-keyed JSONL cache (file backend)", {"embed"}},
      {"embed", "dim", "--embed-dim", "1536", "expected embedding width", {"embed"}},
      {"embed", "max_batch", "--max-batch", "64", "texts per request", {"embed"}},
      {"embed", "max_parallel", "--max-parallel", "4", "concurrent requests", {"embed"}},
      {"output", "dir", "--out", "", "output directory (default runs/<datetime>)", {}},
  };
  return table;
}

/// Effective configuration: defaults, then the INI file, then flags.
class RunConfig {
 public:
  RunConfig() {
    for (const auto& s : settings()) values_[s.section + "." + s.key] = s.fallback;
  }

  void load_ini(const std::string& path) {
    if (!fs::exists(path)) throw ConfigError("config file not found: " + path);
    boost::property_tree::ptree tree;
    try {
      boost::property_tree::ini_parser::read_ini(path, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ConfigError(std::string("config file: ") + e.what());
    }
    for (const auto& [section, body] : tree) {
      if (body.empty()) throw ConfigError("config file: key '" + section + "' outside any section");
      for (const auto& [key, value] : body) {
        const auto full = section + "." + key;
        if (!values_.contains(full)) throw ConfigError("config file: unknown key [" + section + "] " + key);
        values_[full] = value.get_value<std::string>();
      }
    }
  }

  void set(const std::string& key, const std::string& value) {
    if (!values_.contains(key)) throw ConfigError("unknown setting " + key);
    values_[key] = value;
  }

  const std::string& str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown setting " + key);
    return it->second;
  }

  template <typename V>
  V get(const std::string& key) const {
    const auto& s = str(key);
    try {
      return boost::lexical_cast<V>(s);
    } catch (const boost::bad_lexical_cast&) {
      throw ConfigError("setting " + key + " has invalid value '" + s + "'");
    }
  }

  std::vector<std::string> list(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(str(key));
    for (std::string item; std::getline(ss, item, ',');) {
      const auto t = std::string(data::detail::trim(item));
      if (!t.empty()) out.push_back(t);
    }
    return out;
  }

  /// Writes every setting, grouped by section, as INI.
  void write_ini(const std::string& path) const {
    boost::property_tree::ptree tree;
    for (const auto& s : settings()) tree.put(boost::property_tree::ptree::path_type(s.section + "\x1f" + s.key, '\x1f'), str(s.section + "." + s.key));
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    boost::property_tree::ini_parser::write_ini(out, tree);
  }

 private:
  std::map<std::string, std::string> values_;
};

inline std::string timestamp_dir() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  localtime_r(&now, &tm);
  std::ostringstream os;
  os << "runs/" << std::put_time(&tm, "%Y%m%d-%H%M%S");
  return os.str();
}

inline std::string prepare_output(RunConfig& cfg) {
  if (cfg.str("output.dir").empty()) cfg.set("output.dir", timestamp_dir());
  const auto dir = cfg.str("output.dir");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory " + dir + ": " + ec.message());
  cfg.write_ini((fs::path(dir) / "config.ini").string());
  return dir;
}

inline std::string out_file(const RunConfig& cfg, const std::string& name) {
  return (fs::path(cfg.str("output.dir")) / name).string();
}

inline void require_file(const RunConfig& cfg, const std::string& key) {
  const auto& p = cfg.str(key);
  if (p.empty()) throw ConfigError("missing required setting " + key + " (--" + key.substr(key.find('.') + 1) + ")");
  if (!fs::exists(p)) throw ConfigError(key + ": file not found: " + p);
}

inline data::Dataset load_dataset(const RunConfig& cfg, std::size_t ws) {
  require_file(cfg, "data.prices");
  const auto prices = data::load_prices(cfg.str("data.prices"));
  std::vector<data::DocumentDay> docs;
  if (!cfg.str("data.documents").empty()) {
    require_file(cfg, "data.documents");
    docs = data::load_documents(cfg.str("data.documents"));
  }
  data::EmbeddingTable table;
  if (!cfg.str("data.embeddings").empty()) {
    require_file(cfg, "data.embeddings");
    table = data::load_embeddings(cfg.str("data.embeddings"));
  } else if (!docs.empty()) {
    throw ConfigError("documents given without --embeddings");
  }
  std::vector<data::GraphEdge> edges;
  if (!cfg.str("data.graph").empty()) {
    require_file(cfg, "data.graph");
    std::ifstream in(cfg.str("data.graph"));
    edges = data::parse_graph_edges(in, cfg.str("data.graph"));
  }
  data::DatasetConfig dc;
  dc.ws = ws;
  dc.labels = {cfg.get<double>("data.lower"), cfg.get<double>("data.upper")};
  if (!(dc.labels.lower < dc.labels.upper)) throw ConfigError("data.lower must be below data.upper");
  dc.ratios = {cfg.get<double>("data.train_ratio"), cfg.get<double>("data.valid_ratio"),
               cfg.get<double>("data.test_ratio")};
  return data::build_dataset(prices, docs, table, edges, dc);
}

inline training::TrainConfig train_config(const RunConfig& cfg, std::size_t doc_dim) {
  training::TrainConfig tc;
  auto& m = tc.model;
  m.variant = parse_variant(cfg.str("training.variant"));
  m.d = cfg.get<std::size_t>("training.d");
  m.window = cfg.get<std::size_t>("data.ws");
  m.heads = cfg.get<std::size_t>("training.heads");
  m.gat_heads = cfg.get<std::size_t>("training.gat_heads");
  m.gat_layers = cfg.get<std::size_t>("training.gat_layers");
  m.fusion_layers = cfg.get<std::size_t>("training.fusion_layers");
  m.doc_dim = doc_dim;
  tc.epochs = cfg.get<std::size_t>("training.epochs");
  tc.batch_size = cfg.get<std::size_t>("training.batch_size");
  tc.lr = cfg.get<double>("training.lr");
  tc.warmup_frac = cfg.get<double>("training.warmup_frac");
  tc.seed = cfg.get<std::uint64_t>("training.seed");
  tc.precision = training::parse_precision(cfg.str("training.precision"));
  tc.clip_norm = cfg.get<double>("training.clip_norm");
  tc.validate();
  return tc;
}

inline std::string fmt(double v) { return data::detail::format_double(v); }

// ---- subcommands ------------------------------------------------------------------

inline int cmd_synth(RunConfig& cfg, std::ostream& out) {
  data::SynthConfig sc;
  sc.n_stocks = cfg.get<std::size_t>("synth.stocks");
  sc.n_days = cfg.get<std::size_t>("synth.days");
  sc.dim = cfg.get<std::size_t>("synth.dim");
  sc.doc_signal = cfg.get<double>("synth.doc_signal");
  sc.doc_missing_rate = cfg.get<double>("synth.missing");
  sc.conflict_rate = cfg.get<double>("synth.conflict");
  sc.n_sectors = cfg.get<std::size_t>("synth.sectors");
  sc.seed = cfg.get<std::uint64_t>("training.seed");
  const auto syn = data::synth_dataset(sc);
  const auto dir = prepare_output(cfg);
  data::save_prices(out_file(cfg, "prices.csv"), syn.prices);
  data::save_documents(out_file(cfg, "documents.jsonl"), syn.documents);
  data::save_embeddings(out_file(cfg, "embeddings.jsonl"), syn.embeddings);
  data::save_graph_edges(out_file(cfg, "graph.tsv"), syn.edges);
  out << "wrote " << syn.prices.size() << " stocks x " << sc.n_days << " days to " << dir << '\n';
  return kOk;
}

inline int cmd_embed(RunConfig& cfg, std::ostream& out) {
  require_file(cfg, "data.documents");
  embed::ProviderConfig pc;
  pc.backend = embed::parse_backend(cfg.str("embed.backend"));
  pc.endpoint = cfg.str("embed.endpoint");
  pc.token_env = cfg.str("embed.token_env");
  pc.model = cfg.str("embed.model");
  pc.cache_path = cfg.str("embed.cache");
  pc.dim = cfg.get<std::size_t>("embed.dim");
  pc.max_batch = cfg.get<std::size_t>("embed.max_batch");
  pc.max_parallel = cfg.get<std::size_t>("embed.max_parallel");
  pc.validate();
  const auto days = data::load_documents(cfg.str("data.documents"));
  auto provider = embed::make_provider(pc);
  prepare_output(cfg);
  const auto target = cfg.str("data.embeddings").empty() ? out_file(cfg, "embeddings.jsonl") : cfg.str("data.embeddings");
  const auto table = embed::build_embedding_table(days, pc, *provider, target);
  out << "embeddings: " << table.size() << " entries of width " << table.dim << " in " << target << '\n';
  return kOk;
}

inline int cmd_train(RunConfig& cfg, std::ostream& out) {
  const auto ds = load_dataset(cfg, cfg.get<std::size_t>("data.ws"));
  auto tc = train_config(cfg, ds.market->doc_dim);
  std::optional<training::Checkpoint> resume;
  if (!cfg.str("training.resume").empty()) {
    require_file(cfg, "training.resume");
    resume = training::load_checkpoint(cfg.str("training.resume"));
    if (training::to_json(resume->config.model) != training::to_json(tc.model))
      throw ConfigError("resume checkpoint was trained with a different model configuration");
  }
  prepare_output(cfg);
  const auto ckpt = out_file(cfg, "checkpoint.bin");
  const auto log_csv = out_file(cfg, "metrics.csv");
  if (!resume) fs::remove(log_csv);

  training::TrainOptions opt;
  opt.log_csv = log_csv;
  opt.checkpoint_path = ckpt;
  opt.on_epoch = [&out](const training::EpochRecord& r) {
    out << "epoch " << r.epoch << " loss " << fmt(r.train_loss) << " valid_acc " << fmt(r.valid_acc) << " valid_mcc "
        << fmt(r.valid_mcc) << " " << std::fixed << std::setprecision(2) << r.seconds << "s peak "
        << r.peak_mem_bytes << "B" << std::defaultfloat << '\n';
  };

  nlohmann::json summary;
  auto run = [&]<typename T>() {
    std::optional<training::TrainState<T>> start;
    if (resume) start = training::convert_state<T>(resume->state);
    const auto result = training::train_model<T>(ds, tc, opt, start ? &*start : nullptr);
    const auto& s = result.state;
    summary = {{"best_epoch", s.best_epoch},
               {"best_valid_mcc", s.best_valid_mcc},
               {"test_acc", s.best_test_acc},
               {"test_mcc", s.best_test_mcc},
               {"epochs", s.epoch},
               {"checkpoint", ckpt}};
  };
  if (tc.precision == training::Precision::kFloat32)
    run.template operator()<float>();
  else
    run.template operator()<double>();
  std::ofstream(out_file(cfg, "summary.json")) << summary.dump(2) << '\n';
  out << "best epoch " << summary["best_epoch"] << " valid_mcc " << fmt(summary["best_valid_mcc"].get<double>())
      << " test_acc " << fmt(summary["test_acc"].get<double>()) << " test_mcc "
      << fmt(summary["test_mcc"].get<double>()) << '\n';
  return kOk;
}

template <typename T>
Msgca<T> model_from_checkpoint(const training::Checkpoint& ck) {
  const auto state = training::convert_state<T>(ck.state);
  return Msgca<T>(ck.config.model, state.best.size() ? state.best.clone() : state.params.clone());
}

inline int cmd_eval(RunConfig& cfg, std::ostream& out) {
  require_file(cfg, "evaluation.checkpoint");
  const auto ck = training::load_checkpoint(cfg.str("evaluation.checkpoint"));
  const auto ds = load_dataset(cfg, ck.config.model.window);
  if (ds.market->doc_dim != ck.config.model.doc_dim)
    throw ConfigError("embedding width " + std::to_string(ds.market->doc_dim) + " differs from the checkpoint's " +
                      std::to_string(ck.config.model.doc_dim));
  const auto& part = ds.split.part(cfg.str("evaluation.split"));
  const auto bs = ck.config.batch_size;
  training::Evaluation ev;
  if (ck.config.precision == training::Precision::kFloat32)
    ev = training::evaluate(model_from_checkpoint<float>(ck), *ds.market, part, bs);
  else
    ev = training::evaluate(model_from_checkpoint<double>(ck), *ds.market, part, bs);
  prepare_output(cfg);
  nlohmann::json j{{"split", cfg.str("evaluation.split")},
                   {"samples", part.size()},
                   {"acc", ev.acc},
                   {"mcc", ev.mcc},
                   {"loss", ev.loss},
                   {"confusion", ev.confusion.counts}};
  std::ofstream(out_file(cfg, "eval.json")) << j.dump(2) << '\n';
  out << cfg.str("evaluation.split") << " acc " << fmt(ev.acc) << " mcc " << fmt(ev.mcc) << '\n';
  return kOk;
}

inline int cmd_ablate(RunConfig& cfg, std::ostream& out) {
  const auto ds = load_dataset(cfg, cfg.get<std::size_t>("data.ws"));
  const auto tc = train_config(cfg, ds.market->doc_dim);
  std::vector<std::uint64_t> seeds;
  for (const auto& s : cfg.list("evaluation.seeds")) {
    try {
      seeds.push_back(boost::lexical_cast<std::uint64_t>(s));
    } catch (const boost::bad_lexical_cast&) {
      throw ConfigError("invalid seed '" + s + "'");
    }
  }
  if (seeds.empty())
    for (std::uint64_t k = 0; k < 5; ++k) seeds.push_back(tc.seed + k);
  const auto variants = cfg.list("evaluation.variants");
  if (variants.empty()) throw ConfigError("no variants to run");
  for (const auto& v : variants) parse_variant(v);
  prepare_output(cfg);
  std::vector<evaluation::VariantReport> reports;
  for (const auto& v : variants) {
    reports.push_back(evaluation::run_variant(v, ds, tc, seeds));
    const auto& r = reports.back();
    out << std::left << std::setw(16) << r.variant << " acc " << fmt(r.acc_mean) << " (var " << fmt(r.acc_var)
        << ")  mcc " << fmt(r.mcc_mean) << " (var " << fmt(r.mcc_var) << ")  " << std::fixed << std::setprecision(2)
        << r.seconds_per_epoch << " s/epoch" << std::defaultfloat << '\n';
  }
  evaluation::write_report_csv(out_file(cfg, "report.csv"), reports);
  evaluation::write_report_json(out_file(cfg, "report.json"), reports);
  return kOk;
}

inline int cmd_dump_features(RunConfig& cfg, std::ostream& out) {
  require_file(cfg, "evaluation.checkpoint");
  const auto ck = training::load_checkpoint(cfg.str("evaluation.checkpoint"));
  const auto ds = load_dataset(cfg, ck.config.model.window);
  const auto& part = ds.split.part(cfg.str("evaluation.split"));
  auto symbol = cfg.str("evaluation.symbol");
  if (symbol.empty() && !part.empty()) symbol = part.front().symbol;
  std::vector<const data::WindowSample*> windows;
  for (const auto& w : part)
    if (w.symbol == symbol) windows.push_back(&w);
  if (windows.empty()) throw DataError("no " + cfg.str("evaluation.split") + " windows for stock '" + symbol + "'");
  const auto bs = ck.config.batch_size;
  const auto rep = ck.config.precision == training::Precision::kFloat32
                       ? evaluation::stability_report(model_from_checkpoint<float>(ck), *ds.market, windows, bs)
                       : evaluation::stability_report(model_from_checkpoint<double>(ck), *ds.market, windows, bs);
  prepare_output(cfg);
  evaluation::write_stability_csv(out_file(cfg, "stability.csv"), rep);
  for (const auto& s : rep.series)
    out << s.stage << ' ' << s.kind << " smoothness " << fmt(s.smoothness) << " explained " << fmt(s.explained_ratio)
        << '\n';
  return kOk;
}

/// Parses argv and runs one subcommand. Returns the process exit status.
inline int run_command(int argc, const char* const* argv, std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
  CLI::App app{"Multimodal stock movement prediction with gated cross-attention fusion", "msgca"};
  app.require_subcommand(1);
  RunConfig cfg;
  std::map<std::string, std::string> flag_values;
  std::map<std::string, CLI::Option*> flag_options;
  std::map<std::string, std::string> config_paths;

  using Handler = int (*)(RunConfig&, std::ostream&);
  const std::vector<std::tuple<std::string, std::string, Handler>> commands{
      {"synth", "write a synthetic dataset", cmd_synth},
      {"embed", "build the embedding table for a documents file", cmd_embed},
      {"train", "train a model, writing a checkpoint and per-epoch metrics", cmd_train},
      {"eval", "score a checkpoint on a split", cmd_eval},
      {"ablate", "train each variant over several seeds and report ACC/MCC", cmd_ablate},
      {"dump-features", "write 1-D projections of unstable and stable fusion features", cmd_dump_features},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, desc, fn] : commands) {
    auto* sub = app.add_subcommand(name, desc);
    subs[name] = sub;
    sub->add_option("--config", config_paths[name], "INI configuration file");
    for (const auto& s : settings()) {
      if (!s.commands.empty() && std::find(s.commands.begin(), s.commands.end(), name) == s.commands.end()) continue;
      const auto key = s.section + "." + s.key;
      const auto id = name + "|" + key;
      auto help = s.help;
      if (!s.fallback.empty()) help += " [" + s.fallback + "]";
      flag_options[id] = sub->add_option(s.flag, flag_values[id], help);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kConfigExit;
  }

  try {
    for (const auto& [name, desc, fn] : commands) {
      if (!subs[name]->parsed()) continue;
      if (!config_paths[name].empty()) cfg.load_ini(config_paths[name]);
      for (const auto& [id, opt] : flag_options)
        if (id.rfind(name + "|", 0) == 0 && opt->count() > 0) cfg.set(id.substr(name.size() + 1), flag_values[id]);
      return fn(cfg, out);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kDataExit;
  }
  return kConfigExit;
}

}  // namespace msgca::cli
