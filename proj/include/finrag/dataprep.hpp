#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "finrag/benchmark.hpp"
#include "finrag/corpus.hpp"
#include "finrag/generator.hpp"

namespace finrag {

inline constexpr std::size_t kDefaultPairsPerChunk = 3;

enum class TripletOrigin { Generated, Dataset };
std::string_view to_string(TripletOrigin origin);

struct Triplet {
  std::string triplet_id;  // "<source_id>#<n>", unique within a generation
  std::string query;
  std::string context;
  std::string answer;
  std::string source_id;  // chunk_id when generated, question_id when from a dataset
  TripletOrigin origin = TripletOrigin::Generated;

  Json to_json() const;
  static Triplet from_json(const Json& j, std::size_t line = 0);
};

void save_triplets(const std::filesystem::path& path, const std::vector<Triplet>& triplets);
std::vector<Triplet> load_triplets(const std::filesystem::path& path);

// A chunk or question that produced no triplets, and why.
struct Rejection {
  std::string source_id;
  std::string reason;
};

struct TripletBatch {
  std::vector<Triplet> triplets;
  std::vector<Rejection> rejections;  // unparseable generator output, skipped questions
  std::vector<Rejection> errors;      // generator failures; output is partial
};

// Line-delimited {chunk_id, reason}.
void save_rejections(const std::filesystem::path& path, const std::vector<Rejection>& rejections);

// Parses "Q1: ... / A1: ..." blocks numbered from 1. Anything else, a gap
// in the numbering, an empty field or more than `max_pairs` pairs is a
// ParseError; output is never repaired.
std::vector<std::pair<std::string, std::string>> parse_pairs(std::string_view text, std::size_t max_pairs);

// One generator call per chunk, up to `workers` at a time. Triplets follow
// chunk order.
TripletBatch generate_triplets(const std::vector<Chunk>& chunks, Generator& generator,
                               std::size_t per_chunk = kDefaultPairsPerChunk, const GenerationParams& params = {},
                               std::size_t workers = 4);

// One triplet per (question, reference context). Questions without
// reference contexts are skipped and logged.
TripletBatch triplets_from_dataset(const std::vector<BenchmarkQuestion>& questions);

// n triplets drawn without replacement, in input order. InvalidSample if
// n exceeds the input or the input repeats a triplet_id.
std::vector<Triplet> sample_subset(const std::vector<Triplet>& triplets, std::size_t n, std::uint64_t seed);

// {query, positive_context, chunk_id | question_id} per line.
struct EmbedderPair {
  std::string query;
  std::string positive_context;
  std::string source_id;
  TripletOrigin origin = TripletOrigin::Generated;

  bool operator==(const EmbedderPair&) const = default;
};
std::size_t export_embedder_pairs(const std::vector<Triplet>& triplets, const std::filesystem::path& path);
std::vector<EmbedderPair> load_embedder_pairs(const std::filesystem::path& path);

// {messages: [user query, assistant answer], metadata: {triplet_id, source_id, origin}}
// per line. The context is never written.
std::size_t export_generator_pairs(const std::vector<Triplet>& triplets, const std::filesystem::path& path);

// Field audit of a generator export: every record has exactly the keys
// above, two messages, and message contents equal to the source triplet's
// query and answer. Returns the number of offending records.
std::size_t audit_generator_export(const std::filesystem::path& path, const std::vector<Triplet>& triplets);

}  // namespace finrag
