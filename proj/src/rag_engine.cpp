#include "finrag/rag_engine.hpp"

#include <algorithm>
#include <chrono>

#include "finrag/error.hpp"
#include "finrag/util.hpp"

namespace finrag {

ChunkTable make_chunk_table(std::vector<Chunk> chunks) {
  ChunkTable table;
  table.reserve(chunks.size());
  for (auto& c : chunks) {
    auto id = c.chunk_id;
    if (!table.emplace(id, std::move(c)).second) {
      throw Error(ErrorCode::DuplicateChunk, "chunk '" + id + "' appears twice");
    }
  }
  return table;
}

VectorIndex build_index(Embedder& embedder, const std::vector<Chunk>& chunks) {
  VectorIndex index(embedder.dims(), embedder.fingerprint());
  std::vector<std::string> texts;
  texts.reserve(chunks.size());
  for (const auto& c : chunks) texts.push_back(c.text);
  auto vectors = embedder.embed_batch(texts);
  for (std::size_t i = 0; i < chunks.size(); ++i) index.add(chunks[i].chunk_id, vectors[i]);
  return index;
}

namespace {

std::string make_tag(const std::string& chunk_id, const Metadata& metadata, bool attach) {
  std::string tag = chunk_id;
  if (!attach) return tag;
  for (const auto& [k, v] : metadata) {
    if (k == "seq") continue;
    tag += " " + k + "=" + v;
  }
  return tag;
}

}  // namespace

std::vector<RetrievedContext> augment(std::vector<RetrievedContext> hits, const AugmentationSpec& spec) {
  for (auto& h : hits) h.tag = make_tag(h.hit.chunk_id, h.metadata, spec.attach_metadata);
  if (spec.keywords.empty()) return hits;
  std::vector<std::string> lowered;
  for (const auto& k : spec.keywords) lowered.push_back(to_lower_ascii(k));
  std::stable_partition(hits.begin(), hits.end(), [&](const RetrievedContext& h) {
    const auto text = to_lower_ascii(h.text);
    return std::any_of(lowered.begin(), lowered.end(),
                       [&](const std::string& k) { return !k.empty() && text.find(k) != std::string::npos; });
  });
  return hits;
}

RagEngine::RagEngine(std::shared_ptr<Embedder> embedder, std::shared_ptr<const VectorIndex> index,
                     std::shared_ptr<const ChunkTable> chunks, std::shared_ptr<Generator> generator, RagConfig config)
    : embedder_(std::move(embedder)),
      index_(std::move(index)),
      chunks_(std::move(chunks)),
      generator_(std::move(generator)),
      config_(std::move(config)) {
  if (!embedder_ || !index_ || !chunks_ || !generator_) {
    throw Error(ErrorCode::InvalidArgument, "RagEngine needs an embedder, index, chunk table and generator");
  }
  if (config_.k == 0) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
}

RagAnswer RagEngine::answer_one_pass(std::string_view question) const {
  if (trim(question).empty()) throw Error(ErrorCode::InvalidQuestion, "question must be non-empty");
  const auto started = std::chrono::steady_clock::now();

  auto staged = [](Stage stage, auto&& fn) {
    try {
      return fn();
    } catch (const Error& e) {
      throw e.with_stage(stage);
    }
  };

  std::vector<RetrievedContext> contexts = staged(Stage::Retrieve, [&] {
    if (index_->empty()) throw Error(ErrorCode::EmptyIndex, "index has no entries");
    auto query = embedder_->embed(question);
    std::vector<RetrievedContext> out;
    for (auto& hit : index_->retrieve_top_k(query, config_.k)) {
      auto it = chunks_->find(hit.chunk_id);
      if (it == chunks_->end()) throw Error(ErrorCode::NotFound, "indexed chunk '" + hit.chunk_id + "' has no text");
      out.push_back({std::move(hit), it->second.text, {}, it->second.metadata});
    }
    return out;
  });

  contexts = staged(Stage::Augment, [&] { return augment(std::move(contexts), config_.augmentation); });

  RagAnswer answer;
  answer.question = std::string(question);
  answer.config_id = config_.config_id;
  staged(Stage::Generate, [&] {
    std::vector<PromptContext> prompt_contexts;
    for (const auto& c : contexts) prompt_contexts.push_back({c.tag, c.text});
    auto prompt = build_rag_prompt(question, prompt_contexts, config_.context_budget_tokens);
    answer.answer_text = generator_->complete(prompt.messages, config_.generation);
    answer.contexts_in_prompt = prompt.contexts_included;
    answer.prompt_version = prompt.prompt_version;
    return 0;
  });
  answer.retrieved = std::move(contexts);
  answer.latency_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  return answer;
}

}  // namespace finrag
