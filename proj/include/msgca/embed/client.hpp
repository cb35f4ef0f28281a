#pragma once

// Eigen goes first: resolv.h (via httplib) defines a `_res` macro that clashes with Eigen identifiers.
#include "msgca/data/documents.hpp"

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "msgca/error.hpp"
#include "msgca/log.hpp"

namespace msgca::embed {

using Vector = std::vector<double>;

struct EmbedRequest {
  std::vector<std::string> texts;
  std::string model;

  void validate() const {
    if (texts.empty()) throw ConfigError("embedding request has no texts");
    for (std::size_t i = 0; i < texts.size(); ++i)
      if (texts[i].find_first_not_of(" \t\r\n") == std::string::npos)
        throw DataError("embedding request text " + std::to_string(i) + " is blank");
  }
};

enum class Backend { kFile, kHttp };

inline Backend parse_backend(const std::string& s) {
  if (s == "file") return Backend::kFile;
  if (s == "http") return Backend::kHttp;
  throw ConfigError("unknown embedding backend '" + s + "' (expected file or http)");
}

inline std::string backend_name(Backend b) { return b == Backend::kFile ? "file" : "http"; }

struct ProviderConfig {
  Backend backend = Backend::kFile;
  std::string endpoint;                       // http: full URL of the embeddings route
  std::string token_env = "MSGCA_EMBED_TOKEN";  // empty: no Authorization header
  std::string model = "text-embedding-ada-002";
  std::string cache_path;                     // file: text-keyed JSONL {"text","embedding"}
  std::size_t dim = 1536;
  std::size_t max_batch = 64;
  std::size_t max_parallel = 4;
  int attempts = 3;
  int backoff_ms = 500;       // doubled after each failed attempt
  int timeout_seconds = 60;

  void validate() const {
    if (dim == 0) throw ConfigError("embedding dim must be positive");
    if (max_batch == 0) throw ConfigError("embedding max_batch must be at least 1");
    if (max_parallel == 0) throw ConfigError("embedding max_parallel must be at least 1");
    if (attempts < 1) throw ConfigError("embedding attempts must be at least 1");
    if (backend == Backend::kHttp && endpoint.empty()) throw ConfigError("http embedding backend needs an endpoint");
    if (backend == Backend::kFile && cache_path.empty()) throw ConfigError("file embedding backend needs a cache path");
  }
};

/// Maps a batch of texts to vectors, one per text, in order.
class Provider {
 public:
  virtual ~Provider() = default;
  virtual std::vector<Vector> embed_batch(const std::vector<std::string>& texts, const std::string& model) = 0;
};

/// Read-only lookup in a text-keyed JSONL cache.
class FileProvider : public Provider {
 public:
  explicit FileProvider(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open embedding cache: " + path);
    std::size_t line_no = 0;
    for (std::string line; std::getline(in, line);) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        const auto j = nlohmann::json::parse(line);
        cache_[j.at("text").get<std::string>()] = j.at("embedding").get<Vector>();
      } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": line " + std::to_string(line_no) + ": " + e.what());
      }
    }
  }

  std::vector<Vector> embed_batch(const std::vector<std::string>& texts, const std::string&) override {
    std::vector<Vector> out;
    std::vector<std::string> missing;
    for (const auto& t : texts) {
      auto it = cache_.find(t);
      if (it == cache_.end())
        missing.push_back(t);
      else
        out.push_back(it->second);
    }
    if (!missing.empty()) {
      std::string list;
      for (std::size_t i = 0; i < missing.size() && i < 5; ++i) list += (i ? ", \"" : "\"") + missing[i] + "\"";
      if (missing.size() > 5) list += ", ...";
      throw MissingEmbeddingError(std::to_string(missing.size()) + " text(s) absent from embedding cache: " + list);
    }
    return out;
  }

  std::size_t size() const { return cache_.size(); }

 private:
  std::unordered_map<std::string, Vector> cache_;
};

namespace detail {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

inline Endpoint split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("endpoint is not an absolute URL: " + url);
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw ConfigError("unsupported endpoint scheme: " + scheme);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (scheme == "https") throw ConfigError("https endpoints need a build with OpenSSL");
#endif
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

inline bool retryable(int status) { return status == 429 || status >= 500; }

}  // namespace detail

/// POST {"model", "input": [texts]} -> {"data": [{"index", "embedding"}]}.
/// Transport failures, 429 and 5xx are retried with exponential backoff.
class HttpProvider : public Provider {
 public:
  explicit HttpProvider(const ProviderConfig& cfg) : cfg_(cfg), endpoint_(detail::split_url(cfg.endpoint)) {
    if (!cfg.token_env.empty()) {
      const char* tok = std::getenv(cfg.token_env.c_str());
      if (tok == nullptr || *tok == '\0')
        throw ConfigError("environment variable " + cfg.token_env + " is not set (embedding auth token)");
      token_ = tok;
    }
  }

  std::vector<Vector> embed_batch(const std::vector<std::string>& texts, const std::string& model) override {
    const auto body = nlohmann::json{{"model", model}, {"input", texts}}.dump();
    std::string last_error;
    for (int attempt = 1; attempt <= cfg_.attempts; ++attempt) {
      if (attempt > 1)
        std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<long>(cfg_.backoff_ms) << (attempt - 2)));
      httplib::Client client(endpoint_.origin);
      client.set_connection_timeout(cfg_.timeout_seconds);
      client.set_read_timeout(cfg_.timeout_seconds);
      httplib::Headers headers;
      if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
      auto res = client.Post(endpoint_.path, headers, body, "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (detail::retryable(res->status)) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      if (res->status != 200)
        throw ProviderError("embedding service answered HTTP " + std::to_string(res->status) + ": " +
                            res->body.substr(0, 200));
      return parse_response(res->body, texts.size());
    }
    throw ProviderError("embedding service failed after " + std::to_string(cfg_.attempts) + " attempts (" +
                        last_error + ")");
  }

  static std::vector<Vector> parse_response(const std::string& body, std::size_t expected) {
    std::vector<std::pair<std::size_t, Vector>> items;
    try {
      const auto j = nlohmann::json::parse(body);
      for (const auto& d : j.at("data"))
        items.emplace_back(d.at("index").get<std::size_t>(), d.at("embedding").get<Vector>());
    } catch (const nlohmann::json::exception& e) {
      throw ProviderError(std::string("malformed embedding response: ") + e.what());
    }
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    if (items.size() != expected)
      throw ContractError("embedding service returned " + std::to_string(items.size()) + " vectors for " +
                          std::to_string(expected) + " texts");
    std::vector<Vector> out;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (items[i].first != i) throw ContractError("embedding response indices are not 0.." + std::to_string(expected - 1));
      out.push_back(std::move(items[i].second));
    }
    return out;
  }

 private:
  ProviderConfig cfg_;
  detail::Endpoint endpoint_;
  std::string token_;
};

inline std::unique_ptr<Provider> make_provider(const ProviderConfig& cfg) {
  cfg.validate();
  if (cfg.backend == Backend::kFile) return std::make_unique<FileProvider>(cfg.cache_path);
  return std::make_unique<HttpProvider>(cfg);
}

/// Splits the request into max_batch chunks, issues at most max_parallel at
/// once, and reassembles results in input order. Every vector must be dim wide.
inline std::vector<Vector> embed_texts(const EmbedRequest& req, const ProviderConfig& cfg, Provider& provider) {
  req.validate();
  cfg.validate();
  const auto n = req.texts.size();
  const auto n_chunks = (n + cfg.max_batch - 1) / cfg.max_batch;
  std::vector<Vector> out(n);
  std::vector<std::exception_ptr> errors(n_chunks);
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t c; (c = next.fetch_add(1)) < n_chunks;) {
      try {
        const auto lo = c * cfg.max_batch, hi = std::min(n, lo + cfg.max_batch);
        std::vector<std::string> chunk(req.texts.begin() + static_cast<std::ptrdiff_t>(lo),
                                       req.texts.begin() + static_cast<std::ptrdiff_t>(hi));
        auto vecs = provider.embed_batch(chunk, req.model);
        if (vecs.size() != chunk.size())
          throw ContractError("provider returned " + std::to_string(vecs.size()) + " vectors for " +
                              std::to_string(chunk.size()) + " texts");
        for (std::size_t i = 0; i < vecs.size(); ++i) {
          if (vecs[i].size() != cfg.dim)
            throw ContractError("embedding width mismatch: expected " + std::to_string(cfg.dim) + ", got " +
                                std::to_string(vecs[i].size()));
          out[lo + i] = std::move(vecs[i]);
        }
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
  };

  const auto n_threads = std::min(cfg.max_parallel, n_chunks);
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

inline std::vector<Vector> embed_texts(const EmbedRequest& req, const ProviderConfig& cfg) {
  auto provider = make_provider(cfg);
  return embed_texts(req, cfg, *provider);
}

/// Embeds every (symbol, date) not already in `out_path`, mean-pooling the
/// day's texts, and appends each finished entry to the file as it lands.
/// An interrupted run leaves a valid prefix that the next run resumes from.
inline data::EmbeddingTable build_embedding_table(const std::vector<data::DocumentDay>& days,
                                                  const ProviderConfig& cfg, Provider& provider,
                                                  const std::string& out_path) {
  cfg.validate();
  data::EmbeddingTable table;
  table.dim = cfg.dim;
  if (std::filesystem::exists(out_path)) table = data::load_embeddings(out_path, cfg.dim);
  table.dim = cfg.dim;

  std::map<data::SymbolDate, std::vector<std::string>> pending;
  for (const auto& d : days) {
    if (table.find(d.symbol, d.date)) continue;
    for (const auto& t : d.texts)
      if (t.find_first_not_of(" \t\r\n") != std::string::npos) pending[{d.symbol, d.date}].push_back(t);
  }
  if (pending.empty()) return table;

  std::ofstream out(out_path, std::ios::binary | std::ios::app);
  if (!out) throw DataError("cannot append to embeddings file: " + out_path);

  // One round covers roughly max_parallel full requests, then its days are flushed.
  const auto round_texts = cfg.max_batch * cfg.max_parallel;
  auto it = pending.begin();
  while (it != pending.end()) {
    std::vector<std::pair<data::SymbolDate, std::size_t>> keys;  // key, text count
    EmbedRequest req{{}, cfg.model};
    for (; it != pending.end() && (req.texts.empty() || req.texts.size() + it->second.size() <= round_texts); ++it) {
      keys.emplace_back(it->first, it->second.size());
      req.texts.insert(req.texts.end(), it->second.begin(), it->second.end());
    }
    const auto vecs = embed_texts(req, cfg, provider);
    std::size_t pos = 0;
    for (const auto& [key, count] : keys) {
      Vector pooled(cfg.dim, 0.0);
      for (std::size_t k = 0; k < count; ++k)
        for (std::size_t j = 0; j < cfg.dim; ++j) pooled[j] += vecs[pos + k][j];
      for (auto& x : pooled) x /= static_cast<double>(count);
      pos += count;
      out << data::embedding_line(key.first, key.second, pooled).dump() << '\n';
      table.insert(key.first, key.second, std::move(pooled));
    }
    out.flush();
  }
  return table;
}

}  // namespace msgca::embed
