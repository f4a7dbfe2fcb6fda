#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "finrag/http.hpp"

namespace finrag {

class Tokenizer;

// Unit-norm embedding. Values are stored as 32-bit floats (the snapshot
// format); normalization happens in double precision at construction.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;

  // Throws ZeroVector for an all-zero input and InvalidArgument for
  // non-finite entries or empty input.
  static EmbeddingVector normalized(std::span<const double> raw);
  static EmbeddingVector normalized(std::span<const float> raw);

  // Adopts already-normalized values verbatim (snapshot load). Entries must
  // be finite and the norm within 1e-6 of one.
  static EmbeddingVector from_unit(std::vector<float> values);

  std::size_t dims() const noexcept { return values_.size(); }
  std::span<const float> values() const noexcept { return values_; }

  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;

 private:
  explicit EmbeddingVector(std::vector<float> v) : values_(std::move(v)) {}
  std::vector<float> values_;
};

// Sum of a[i]*b[i] in double precision, strictly left to right.
double dot(std::span<const float> a, std::span<const float> b);
double squared_norm(std::span<const float> a);

// dot(a,b) / (|a| |b|), clamped to [-1, 1]. Symmetric bit-for-bit.
// Throws DimensionMismatch and ZeroVector.
double cosine_similarity(std::span<const float> a, std::span<const float> b);
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

enum class EmbedderKind { Remote, HashMock };

struct EmbedderBackendSpec {
  EmbedderKind kind = EmbedderKind::HashMock;
  std::string endpoint;    // remote only
  std::string model_name;  // remote only
  std::size_t dims = 256;
  std::uint64_t seed = 0x5eed;  // hash_mock only
  std::size_t batch_size = 32;
  RetryPolicy retry;

  // Throws ConfigError when required fields for `kind` are missing.
  void validate() const;
  std::string fingerprint() const;

  Json to_json() const;
  static EmbedderBackendSpec from_json(const Json& j);
};

class Embedder {
 public:
  virtual ~Embedder() = default;

  // Throws InvalidArgument on empty text. Counts one backend call.
  EmbeddingVector embed(std::string_view text);

  // Embeds in requests of at most batch_size texts; one call per request.
  std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts);

  virtual std::size_t dims() const = 0;
  virtual std::string fingerprint() const = 0;

  std::uint64_t calls() const noexcept { return calls_.load(); }

 protected:
  virtual std::vector<EmbeddingVector> embed_request(std::span<const std::string> texts) = 0;
  virtual std::size_t batch_size() const { return 32; }

 private:
  std::atomic<std::uint64_t> calls_{0};
};

// Feature-hashing mock. Each token (ASCII-lowercased; pure punctuation
// skipped) is hashed with hash64(token, seed); the low bits pick an index
// in [0, dims), the top bit a sign, and the signed counts are accumulated
// then L2-normalized. Text without word tokens falls back to hashing the
// whole text as one token.
class HashMockEmbedder final : public Embedder {
 public:
  HashMockEmbedder(std::size_t dims, std::uint64_t seed);

  std::size_t dims() const override { return dims_; }
  std::string fingerprint() const override;

  std::vector<double> raw_counts(std::string_view text) const;

 protected:
  std::vector<EmbeddingVector> embed_request(std::span<const std::string> texts) override;

 private:
  std::size_t dims_;
  std::uint64_t seed_;
};

// Embeddings-endpoint client: POST {model, input:[...]} and read
// data[].{index, embedding}.
class RemoteEmbedder final : public Embedder {
 public:
  explicit RemoteEmbedder(EmbedderBackendSpec spec);

  std::size_t dims() const override { return spec_.dims; }
  std::string fingerprint() const override { return spec_.fingerprint(); }

 protected:
  std::vector<EmbeddingVector> embed_request(std::span<const std::string> texts) override;
  std::size_t batch_size() const override { return spec_.batch_size; }

 private:
  EmbedderBackendSpec spec_;
};

std::shared_ptr<Embedder> make_embedder(const EmbedderBackendSpec& spec);

}  // namespace finrag
