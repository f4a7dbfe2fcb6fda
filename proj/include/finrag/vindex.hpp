#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "finrag/embedder.hpp"

namespace finrag {

inline constexpr std::size_t kDefaultTopK = 10;

struct RetrievalHit {
  std::string chunk_id;
  double score = 0.0;  // cosine similarity in [-1, 1]
  std::size_t rank = 0;  // 1-based

  friend bool operator==(const RetrievalHit&, const RetrievalHit&) = default;
};

// Scores are ordered by their value rounded to 12 significant digits, so
// last-ulp noise never decides a rank; equal keys fall back to chunk_id
// ascending.
double ranking_key(double score);
bool ranks_before(double score_a, std::string_view id_a, double score_b, std::string_view id_b);

struct IndexEntry {
  std::string chunk_id;
  EmbeddingVector vector;
};

// Reference ranking: direct pairwise cosine_similarity for every entry and a
// full sort under the tie rule. Serial and unoptimized; kept as the oracle
// for VectorIndex::retrieve_top_k.
std::vector<RetrievalHit> brute_force_rank(std::span<const IndexEntry> entries, const EmbeddingVector& query);

namespace kernels {

// scores[i] = cosine(query, row i) for a row-major matrix with precomputed
// row norms. The parallel version splits rows across OpenMP threads; the
// per-row arithmetic is identical, so both produce bit-equal scores.
void score_rows(std::span<const float> rows, std::span<const double> row_norms, std::size_t dims,
                std::span<const float> query, std::span<double> scores);
void score_rows_serial(std::span<const float> rows, std::span<const double> row_norms, std::size_t dims,
                       std::span<const float> query, std::span<double> scores);

}  // namespace kernels

// Exact in-memory cosine index. Build phase is single-writer; once built,
// any number of threads may query concurrently.
class VectorIndex {
 public:
  VectorIndex(std::size_t dims, std::string fingerprint);

  void add(std::string chunk_id, const EmbeddingVector& vector);

  // min(k, size) hits sorted by score descending (tie: chunk_id ascending).
  // Throws EmptyIndex, InvalidArgument for k == 0, DimensionMismatch.
  std::vector<RetrievalHit> retrieve_top_k(const EmbeddingVector& query, std::size_t k = kDefaultTopK) const;

  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }
  std::size_t dims() const noexcept { return dims_; }
  const std::string& fingerprint() const noexcept { return fingerprint_; }
  bool contains(const std::string& chunk_id) const { return id_set_.count(chunk_id) != 0; }

  // Insertion order.
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  std::vector<IndexEntry> entries() const;

  // Header line {format, dims, count, fingerprint, created} then one
  // {chunk_id, vector} record per entry, vector as base64 of little-endian
  // float32. Round-trips bit-exactly.
  void save(const std::filesystem::path& path, std::optional<std::string> created = std::nullopt) const;
  static VectorIndex load(const std::filesystem::path& path);

 private:
  std::size_t dims_;
  std::string fingerprint_;
  std::vector<std::string> ids_;
  std::unordered_set<std::string> id_set_;
  std::vector<float> rows_;
  std::vector<double> norms_;
};

std::string encode_vector(std::span<const float> values);
std::vector<float> decode_vector(std::string_view base64, std::size_t dims);

}  // namespace finrag
