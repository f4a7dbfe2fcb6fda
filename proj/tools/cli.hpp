#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "finrag/corpus.hpp"
#include "finrag/embedder.hpp"
#include "finrag/error.hpp"
#include "finrag/generator.hpp"
#include "finrag/vindex.hpp"

namespace finrag::cli {

enum ExitCode : int { kOk = 0, kInputError = 1, kEngineError = 2, kBackendUnavailable = 3 };

int exit_code_for(ErrorCode code);

// Settings shared by ingest, index, ask, solve, dataprep and eval. Unknown
// keys are rejected; relative paths resolve against the config file.
struct EngineConfig {
  std::filesystem::path base_dir;
  std::filesystem::path workspace = "finrag_workspace";
  std::vector<std::filesystem::path> corpus_paths;
  ChunkSpec chunking;
  EmbedderBackendSpec embedder;
  GeneratorBackendSpec generator;
  std::optional<GeneratorBackendSpec> judge;  // defaults to the generator
  std::size_t k = kDefaultTopK;
  std::size_t context_budget_tokens = kDefaultContextBudgetTokens;
  bool ooda = false;
  std::size_t max_iterations = 5;
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  std::filesystem::path resolve(const std::filesystem::path& p) const;
  std::filesystem::path workspace_dir() const { return resolve(workspace); }
  void validate() const;
  static EngineConfig from_json(const Json& j, const std::filesystem::path& base_dir);
  static EngineConfig load(const std::filesystem::path& path);
};

// Full command line without the program name. Never throws.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace finrag::cli
