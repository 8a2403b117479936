#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace wukong {

/// Stable error classes. The numeric values are the CLI exit codes and the
/// C API status codes, so never renumber an existing entry.
enum class ErrorCode : int {
  Internal = 1,
  Usage = 2,
  Parse = 3,
  Integrity = 4,
  MissingBlob = 5,
  ExternalTool = 6,
  Conversion = 7,
  Provider = 8,
  ProviderContract = 9,
  Dims = 10,
  CacheFormat = 11,
  CacheVersion = 12,
  CacheMiss = 13,
  Config = 14,
  Domain = 15,
  TrainingDiverged = 16,
  Backend = 17,
  ContextOverflow = 18,
  StrategyUnsatisfiable = 19,
  Template = 20,
  GenerationParse = 21,
  SkipDocument = 22,
  Io = 23,
  EmptyRun = 24,
  NotFound = 25,
};

const char* error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

#define WUKONG_DEFINE_ERROR(Name, Code)                                   \
  class Name : public Error {                                             \
   public:                                                                \
    explicit Name(const std::string& message) : Error(Code, message) {}   \
  };

WUKONG_DEFINE_ERROR(UsageError, ErrorCode::Usage)
WUKONG_DEFINE_ERROR(IntegrityError, ErrorCode::Integrity)
WUKONG_DEFINE_ERROR(MissingBlobError, ErrorCode::MissingBlob)
WUKONG_DEFINE_ERROR(ConversionError, ErrorCode::Conversion)
WUKONG_DEFINE_ERROR(ProviderContractError, ErrorCode::ProviderContract)
WUKONG_DEFINE_ERROR(DimsError, ErrorCode::Dims)
WUKONG_DEFINE_ERROR(CacheFormatError, ErrorCode::CacheFormat)
WUKONG_DEFINE_ERROR(CacheVersionError, ErrorCode::CacheVersion)
WUKONG_DEFINE_ERROR(ConfigError, ErrorCode::Config)
WUKONG_DEFINE_ERROR(DomainError, ErrorCode::Domain)
WUKONG_DEFINE_ERROR(StrategyUnsatisfiableError, ErrorCode::StrategyUnsatisfiable)
WUKONG_DEFINE_ERROR(TemplateError, ErrorCode::Template)
WUKONG_DEFINE_ERROR(GenerationParseError, ErrorCode::GenerationParse)
WUKONG_DEFINE_ERROR(SkipDocumentSignal, ErrorCode::SkipDocument)
WUKONG_DEFINE_ERROR(IoError, ErrorCode::Io)
WUKONG_DEFINE_ERROR(EmptyRunError, ErrorCode::EmptyRun)
WUKONG_DEFINE_ERROR(NotFoundError, ErrorCode::NotFound)
WUKONG_DEFINE_ERROR(BackendError, ErrorCode::Backend)

#undef WUKONG_DEFINE_ERROR

/// Malformed markup, with 1-based line and column of the offending byte.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t line = 0, std::size_t column = 0);
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

class ExternalToolError : public Error {
 public:
  ExternalToolError(const std::string& message, int exit_status, std::string diagnostics);
  int exit_status() const noexcept { return exit_status_; }
  const std::string& diagnostics() const noexcept { return diagnostics_; }

 private:
  int exit_status_;
  std::string diagnostics_;
};

/// Provider failures. `retryable` is set for transport-level problems.
class ProviderError : public Error {
 public:
  explicit ProviderError(const std::string& message, bool retryable = true)
      : Error(ErrorCode::Provider, message), retryable_(retryable) {}
  bool retryable() const noexcept { return retryable_; }

 private:
  bool retryable_;
};

class CacheMissError : public Error {
 public:
  explicit CacheMissError(std::vector<std::string> missing);
  const std::vector<std::string>& missing_chunk_ids() const noexcept { return missing_; }

 private:
  std::vector<std::string> missing_;
};

class TrainingDivergedError : public Error {
 public:
  explicit TrainingDivergedError(std::size_t epoch);
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

/// Thrown by backends for failures that a retry may fix (timeouts, 5xx, 429).
class TransientBackendError : public BackendError {
 public:
  using BackendError::BackendError;
};

class ContextOverflowError : public Error {
 public:
  ContextOverflowError(std::size_t token_estimate, std::size_t limit);
  std::size_t token_estimate() const noexcept { return token_estimate_; }

 private:
  std::size_t token_estimate_;
};

}  // namespace wukong
