#include "finrag/error.hpp"

namespace finrag {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DuplicateDocument: return "DuplicateDocument";
    case ErrorCode::EmptyDocument: return "EmptyDocument";
    case ErrorCode::InvalidChunkSpec: return "InvalidChunkSpec";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::EmbedderUnavailable: return "EmbedderUnavailable";
    case ErrorCode::BackendContractViolation: return "BackendContractViolation";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::DuplicateChunk: return "DuplicateChunk";
    case ErrorCode::EmptyIndex: return "EmptyIndex";
    case ErrorCode::GeneratorUnavailable: return "GeneratorUnavailable";
    case ErrorCode::EmptyGeneration: return "EmptyGeneration";
    case ErrorCode::InvalidQuestion: return "InvalidQuestion";
    case ErrorCode::InvalidState: return "InvalidState";
    case ErrorCode::ResourceExhausted: return "ResourceExhausted";
    case ErrorCode::MetricUnavailable: return "MetricUnavailable";
    case ErrorCode::ReferenceMissing: return "ReferenceMissing";
    case ErrorCode::InvalidScore: return "InvalidScore";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DuplicateVerdict: return "DuplicateVerdict";
    case ErrorCode::UnknownQuestion: return "UnknownQuestion";
    case ErrorCode::UnknownCategory: return "UnknownCategory";
    case ErrorCode::InvalidSplit: return "InvalidSplit";
    case ErrorCode::InvalidSample: return "InvalidSample";
    case ErrorCode::ManifestWriteFailure: return "ManifestWriteFailure";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::Timeout: return "Timeout";
  }
  return "Unknown";
}

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::None: return "none";
    case Stage::Retrieve: return "retrieve";
    case Stage::Augment: return "augment";
    case Stage::Generate: return "generate";
    case Stage::Reason: return "reason";
    case Stage::Evaluate: return "evaluate";
  }
  return "none";
}

bool is_retryable(ErrorCode code) {
  return code == ErrorCode::EmbedderUnavailable || code == ErrorCode::GeneratorUnavailable;
}

namespace {

std::string decorate(ErrorCode code, const std::string& message, Stage stage,
                     std::optional<std::size_t> line) {
  std::string out(to_string(code));
  if (stage != Stage::None) {
    out += " [";
    out += to_string(stage);
    out += "]";
  }
  if (line) out += " at line " + std::to_string(*line);
  if (!message.empty()) out += ": " + message;
  return out;
}

}  // namespace

Error::Error(ErrorCode code, const std::string& message, Stage stage,
             std::optional<std::size_t> line)
    : std::runtime_error(decorate(code, message, stage, line)),
      code_(code),
      message_(message),
      stage_(stage),
      line_(line) {}

Error Error::with_stage(Stage stage) const {
  if (stage_ != Stage::None) return *this;
  return Error(code_, message_, stage, line_);
}

}  // namespace finrag
