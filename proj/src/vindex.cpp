#include "finrag/vindex.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <ctime>
#include <numeric>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "finrag/error.hpp"
#include "finrag/util.hpp"

namespace finrag {

double ranking_key(double score) { return round_significant(score, 12); }

bool ranks_before(double score_a, std::string_view id_a, double score_b, std::string_view id_b) {
  const double ka = ranking_key(score_a);
  const double kb = ranking_key(score_b);
  if (ka != kb) return ka > kb;
  return id_a < id_b;
}

std::vector<RetrievalHit> brute_force_rank(std::span<const IndexEntry> entries, const EmbeddingVector& query) {
  std::vector<RetrievalHit> hits;
  hits.reserve(entries.size());
  for (const auto& e : entries) hits.push_back({e.chunk_id, cosine_similarity(query, e.vector), 0});
  std::sort(hits.begin(), hits.end(), [](const RetrievalHit& a, const RetrievalHit& b) {
    return ranks_before(a.score, a.chunk_id, b.score, b.chunk_id);
  });
  for (std::size_t i = 0; i < hits.size(); ++i) hits[i].rank = i + 1;
  return hits;
}

namespace kernels {

namespace {

inline double row_score(const float* row, double row_norm, std::span<const float> query, double query_norm) {
  const double c = dot(std::span<const float>(row, query.size()), query) / (query_norm * row_norm);
  return std::clamp(c, -1.0, 1.0);
}

}  // namespace

void score_rows(std::span<const float> rows, std::span<const double> row_norms, std::size_t dims,
                std::span<const float> query, std::span<double> scores) {
  const double qn = std::sqrt(squared_norm(query));
  const auto n = static_cast<std::ptrdiff_t>(row_norms.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(i);
    scores[r] = row_score(rows.data() + r * dims, row_norms[r], query, qn);
  }
}

void score_rows_serial(std::span<const float> rows, std::span<const double> row_norms, std::size_t dims,
                       std::span<const float> query, std::span<double> scores) {
  const double qn = std::sqrt(squared_norm(query));
  for (std::size_t r = 0; r < row_norms.size(); ++r) {
    scores[r] = row_score(rows.data() + r * dims, row_norms[r], query, qn);
  }
}

}  // namespace kernels

VectorIndex::VectorIndex(std::size_t dims, std::string fingerprint) : dims_(dims), fingerprint_(std::move(fingerprint)) {
  if (dims_ == 0) throw Error(ErrorCode::InvalidArgument, "index dims must be positive");
}

void VectorIndex::add(std::string chunk_id, const EmbeddingVector& vector) {
  if (vector.dims() != dims_) {
    throw Error(ErrorCode::DimensionMismatch,
                "index has " + std::to_string(dims_) + " dims, vector has " + std::to_string(vector.dims()));
  }
  if (id_set_.count(chunk_id)) throw Error(ErrorCode::DuplicateChunk, "chunk '" + chunk_id + "' already indexed");
  auto values = vector.values();
  rows_.insert(rows_.end(), values.begin(), values.end());
  norms_.push_back(std::sqrt(squared_norm(values)));
  id_set_.insert(chunk_id);
  ids_.push_back(std::move(chunk_id));
}

std::vector<RetrievalHit> VectorIndex::retrieve_top_k(const EmbeddingVector& query, std::size_t k) const {
  if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  if (empty()) throw Error(ErrorCode::EmptyIndex, "index has no entries");
  if (query.dims() != dims_) {
    throw Error(ErrorCode::DimensionMismatch,
                "index has " + std::to_string(dims_) + " dims, query has " + std::to_string(query.dims()));
  }
  if (squared_norm(query.values()) == 0.0) throw Error(ErrorCode::ZeroVector, "query vector is zero");

  const std::size_t n = size();
  std::vector<double> scores(n);
  kernels::score_rows(rows_, norms_, dims_, query.values(), scores);

  auto before = [&](std::size_t a, std::size_t b) { return ranks_before(scores[a], ids_[a], scores[b], ids_[b]); };
  const std::size_t take = std::min(k, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(), before);

  std::vector<RetrievalHit> hits;
  hits.reserve(take);
  for (std::size_t i = 0; i < take; ++i) hits.push_back({ids_[order[i]], scores[order[i]], i + 1});
  return hits;
}

std::vector<IndexEntry> VectorIndex::entries() const {
  std::vector<IndexEntry> out;
  out.reserve(size());
  for (std::size_t i = 0; i < size(); ++i) {
    std::vector<float> v(rows_.begin() + static_cast<std::ptrdiff_t>(i * dims_),
                         rows_.begin() + static_cast<std::ptrdiff_t>((i + 1) * dims_));
    out.push_back({ids_[i], EmbeddingVector::from_unit(std::move(v))});
  }
  return out;
}

std::string encode_vector(std::span<const float> values) {
  std::vector<std::uint8_t> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, &values[i], 4);
    for (int b = 0; b < 4; ++b) bytes[i * 4 + static_cast<std::size_t>(b)] = static_cast<std::uint8_t>(bits >> (8 * b));
  }
  return base64_encode(bytes);
}

std::vector<float> decode_vector(std::string_view base64, std::size_t dims) {
  auto bytes = base64_decode(base64);
  if (bytes.size() != dims * 4) {
    throw Error(ErrorCode::ParseError, "vector has " + std::to_string(bytes.size() / 4) + " floats, expected " +
                                           std::to_string(dims));
  }
  std::vector<float> out(dims);
  for (std::size_t i = 0; i < dims; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= std::uint32_t{bytes[i * 4 + static_cast<std::size_t>(b)]} << (8 * b);
    std::memcpy(&out[i], &bits, 4);
  }
  return out;
}


void VectorIndex::save(const std::filesystem::path& path, std::optional<std::string> created) const {
  Json header{{"format", "finrag-index-v1"},
              {"dims", dims_},
              {"count", size()},
              {"fingerprint", fingerprint_},
              {"created", created ? *created : utc_now()}};
  std::string out = header.dump() + "\n";
  for (std::size_t i = 0; i < size(); ++i) {
    std::span<const float> row(rows_.data() + i * dims_, dims_);
    out += Json{{"chunk_id", ids_[i]}, {"vector", encode_vector(row)}}.dump() + "\n";
  }
  write_file_atomic(path, out);
}

VectorIndex VectorIndex::load(const std::filesystem::path& path) {
  std::optional<VectorIndex> index;
  std::size_t expected = 0;
  read_jsonl(path, [&](const Json& rec, std::size_t line) {
    if (!index) {
      if (rec.value("format", std::string{}) != "finrag-index-v1") {
        throw Error(ErrorCode::ParseError, "not an index snapshot", Stage::None, line);
      }
      const auto dims = static_cast<std::size_t>(require_int(rec, "dims", line));
      expected = static_cast<std::size_t>(require_int(rec, "count", line));
      index.emplace(dims, require_string(rec, "fingerprint", line));
      return;
    }
    try {
      auto values = decode_vector(require_string(rec, "vector", line), index->dims());
      index->add(require_string(rec, "chunk_id", line), EmbeddingVector::from_unit(std::move(values)));
    } catch (const Error& e) {
      if (e.line()) throw;
      throw Error(e.code(), e.message(), Stage::None, line);
    }
  });
  if (!index) throw Error(ErrorCode::ParseError, "index snapshot " + path.string() + " is empty");
  if (index->size() != expected) {
    throw Error(ErrorCode::ParseError, "snapshot header says " + std::to_string(expected) + " entries, found " +
                                           std::to_string(index->size()));
  }
  return std::move(*index);
}

}  // namespace finrag
