#include "wukong/errors.hpp"

namespace wukong {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::Internal: return "InternalError";
    case ErrorCode::Usage: return "UsageError";
    case ErrorCode::Parse: return "ParseError";
    case ErrorCode::Integrity: return "IntegrityError";
    case ErrorCode::MissingBlob: return "MissingBlobError";
    case ErrorCode::ExternalTool: return "ExternalToolError";
    case ErrorCode::Conversion: return "ConversionError";
    case ErrorCode::Provider: return "ProviderError";
    case ErrorCode::ProviderContract: return "ProviderContractError";
    case ErrorCode::Dims: return "DimsError";
    case ErrorCode::CacheFormat: return "CacheFormatError";
    case ErrorCode::CacheVersion: return "CacheVersionError";
    case ErrorCode::CacheMiss: return "CacheMissError";
    case ErrorCode::Config: return "ConfigError";
    case ErrorCode::Domain: return "DomainError";
    case ErrorCode::TrainingDiverged: return "TrainingDivergedError";
    case ErrorCode::Backend: return "BackendError";
    case ErrorCode::ContextOverflow: return "ContextOverflowError";
    case ErrorCode::StrategyUnsatisfiable: return "StrategyUnsatisfiableError";
    case ErrorCode::Template: return "TemplateError";
    case ErrorCode::GenerationParse: return "GenerationParseError";
    case ErrorCode::SkipDocument: return "SkipDocumentSignal";
    case ErrorCode::Io: return "IoError";
    case ErrorCode::EmptyRun: return "EmptyRunError";
    case ErrorCode::NotFound: return "NotFoundError";
  }
  return "UnknownError";
}

namespace {

std::string with_position(const std::string& message, std::size_t line, std::size_t column) {
  if (line == 0) return message;
  return message + " (line " + std::to_string(line) + ", column " + std::to_string(column) + ")";
}

std::string join_ids(const std::vector<std::string>& ids) {
  std::string out;
  for (const auto& id : ids) {
    if (!out.empty()) out += ", ";
    out += id;
  }
  return out;
}

}  // namespace

ParseError::ParseError(const std::string& message, std::size_t line, std::size_t column)
    : Error(ErrorCode::Parse, with_position(message, line, column)), line_(line), column_(column) {}

ExternalToolError::ExternalToolError(const std::string& message, int exit_status,
                                     std::string diagnostics)
    : Error(ErrorCode::ExternalTool,
            message + " (exit status " + std::to_string(exit_status) + ")"),
      exit_status_(exit_status),
      diagnostics_(std::move(diagnostics)) {}

CacheMissError::CacheMissError(std::vector<std::string> missing)
    : Error(ErrorCode::CacheMiss, "missing cached embeddings for: " + join_ids(missing)),
      missing_(std::move(missing)) {}

TrainingDivergedError::TrainingDivergedError(std::size_t epoch)
    : Error(ErrorCode::TrainingDiverged,
            "training diverged (non-finite loss) at epoch " + std::to_string(epoch)),
      epoch_(epoch) {}

ContextOverflowError::ContextOverflowError(std::size_t token_estimate, std::size_t limit)
    : Error(ErrorCode::ContextOverflow, "prompt of ~" + std::to_string(token_estimate) +
                                            " tokens exceeds backend context of " +
                                            std::to_string(limit)),
      token_estimate_(token_estimate) {}

}  // namespace wukong
