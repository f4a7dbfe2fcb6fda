#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace finrag {

enum class ErrorCode {
  InvalidArgument,
  DuplicateDocument,
  EmptyDocument,
  InvalidChunkSpec,
  NotFound,
  EmbedderUnavailable,
  BackendContractViolation,
  DimensionMismatch,
  ZeroVector,
  DuplicateChunk,
  EmptyIndex,
  GeneratorUnavailable,
  EmptyGeneration,
  InvalidQuestion,
  InvalidState,
  ResourceExhausted,
  MetricUnavailable,
  ReferenceMissing,
  InvalidScore,
  ParseError,
  DuplicateVerdict,
  UnknownQuestion,
  UnknownCategory,
  InvalidSplit,
  InvalidSample,
  ManifestWriteFailure,
  IoError,
  ConfigError,
  Timeout,
};

// Pipeline stage an error is attributed to. Benchmark records use this to
// say whether a configuration failed in retrieval, augmentation or generation.
enum class Stage { None, Retrieve, Augment, Generate, Reason, Evaluate };

std::string_view to_string(ErrorCode code);
std::string_view to_string(Stage stage);

// Retryable errors are transport-level unavailability of a model endpoint.
bool is_retryable(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, Stage stage = Stage::None,
        std::optional<std::size_t> line = std::nullopt);

  ErrorCode code() const noexcept { return code_; }
  Stage stage() const noexcept { return stage_; }
  std::optional<std::size_t> line() const noexcept { return line_; }
  const std::string& message() const noexcept { return message_; }

  // Same error re-labelled with the stage it surfaced in. An already
  // labelled error keeps its original stage.
  Error with_stage(Stage stage) const;

 private:
  ErrorCode code_;
  std::string message_;
  Stage stage_;
  std::optional<std::size_t> line_;
};

}  // namespace finrag
