#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "finrag/corpus.hpp"
#include "finrag/embedder.hpp"
#include "finrag/generator.hpp"
#include "finrag/vindex.hpp"

namespace finrag {

using ChunkTable = std::unordered_map<std::string, Chunk>;

ChunkTable make_chunk_table(std::vector<Chunk> chunks);

// Embeds every chunk (batched) and indexes it under its chunk_id.
VectorIndex build_index(Embedder& embedder, const std::vector<Chunk>& chunks);

struct RetrievedContext {
  RetrievalHit hit;
  std::string text;
  std::string tag;  // provenance shown to the generator
  Metadata metadata;
};

struct AugmentationSpec {
  // Hits whose text contains any keyword (ASCII case-insensitive) move ahead
  // of the rest; order within each group is preserved.
  std::vector<std::string> keywords;
  // Put document metadata into each context's provenance tag.
  bool attach_metadata = true;
};

// The "A" step: metadata tagging plus optional stable keyword boost. Always
// a permutation of its input.
std::vector<RetrievedContext> augment(std::vector<RetrievedContext> hits, const AugmentationSpec& spec);

struct RagConfig {
  std::string config_id = "generic-rag";
  std::size_t k = kDefaultTopK;
  std::size_t context_budget_tokens = kDefaultContextBudgetTokens;
  AugmentationSpec augmentation;
  GenerationParams generation;
};

struct RagAnswer {
  std::string question;
  std::string answer_text;
  // Contexts in prompt order (after augmentation); hit.rank keeps the
  // retrieval rank.
  std::vector<RetrievedContext> retrieved;
  std::size_t contexts_in_prompt = 0;
  std::string prompt_version;
  std::string config_id;
  double latency_ms = 0.0;
};

// One-pass Retrieve -> Augment -> Generate. Exactly one embedder call and
// one generator call per answer. Shareable across threads.
class RagEngine {
 public:
  RagEngine(std::shared_ptr<Embedder> embedder, std::shared_ptr<const VectorIndex> index,
            std::shared_ptr<const ChunkTable> chunks, std::shared_ptr<Generator> generator, RagConfig config = {});

  // Throws InvalidQuestion for blank input; backend and index errors
  // propagate labelled with the stage they occurred in.
  RagAnswer answer_one_pass(std::string_view question) const;

  const RagConfig& config() const noexcept { return config_; }
  Embedder& embedder() const noexcept { return *embedder_; }
  Generator& generator() const noexcept { return *generator_; }

 private:
  std::shared_ptr<Embedder> embedder_;
  std::shared_ptr<const VectorIndex> index_;
  std::shared_ptr<const ChunkTable> chunks_;
  std::shared_ptr<Generator> generator_;
  RagConfig config_;
};

}  // namespace finrag
