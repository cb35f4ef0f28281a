#pragma once

#include <stdexcept>
#include <string>

namespace msgca {

/// Base of every error raised by the library. `kind()` drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  enum class Kind { kConfig, kData, kNumeric };

  Error(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(Kind::kConfig, what) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(Kind::kNumeric, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(Kind::kNumeric, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(Kind::kData, what) {}
};

/// Input file does not follow its documented layout.
class FormatError : public DataError {
 public:
  explicit FormatError(const std::string& what) : DataError(what) {}
};

class MissingEmbeddingError : public DataError {
 public:
  explicit MissingEmbeddingError(const std::string& what) : DataError(what) {}
};

/// Embedding provider failed after retries, or returned a malformed payload.
class ProviderError : public DataError {
 public:
  explicit ProviderError(const std::string& what) : DataError(what) {}
};

/// Provider answered with vectors of the wrong width or count.
class ContractError : public DataError {
 public:
  explicit ContractError(const std::string& what) : DataError(what) {}
};

class CorruptionError : public DataError {
 public:
  explicit CorruptionError(const std::string& what) : DataError(what) {}
};

class VersionError : public DataError {
 public:
  explicit VersionError(const std::string& what) : DataError(what) {}
};

}  // namespace msgca
