#include "finrag/embedder.hpp"

#include <algorithm>
#include <cmath>

#include "finrag/corpus.hpp"
#include "finrag/error.hpp"
#include "finrag/util.hpp"

namespace finrag {

namespace {

template <typename T>
EmbeddingVector normalize_impl(std::span<const T> raw, std::vector<float>& out) {
  if (raw.empty()) throw Error(ErrorCode::InvalidArgument, "embedding must have at least one dimension");
  double sq = 0.0;
  for (T v : raw) {
    if (!std::isfinite(static_cast<double>(v))) throw Error(ErrorCode::InvalidArgument, "non-finite embedding entry");
    sq += static_cast<double>(v) * static_cast<double>(v);
  }
  if (sq == 0.0) throw Error(ErrorCode::ZeroVector, "cannot normalize a zero vector");
  const double norm = std::sqrt(sq);
  out.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = static_cast<float>(static_cast<double>(raw[i]) / norm);
  return EmbeddingVector::from_unit(std::move(out));
}

}  // namespace

EmbeddingVector EmbeddingVector::normalized(std::span<const double> raw) {
  std::vector<float> out;
  return normalize_impl(raw, out);
}

EmbeddingVector EmbeddingVector::normalized(std::span<const float> raw) {
  std::vector<float> out;
  return normalize_impl(raw, out);
}

EmbeddingVector EmbeddingVector::from_unit(std::vector<float> values) {
  if (values.empty()) throw Error(ErrorCode::InvalidArgument, "embedding must have at least one dimension");
  for (float v : values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "non-finite embedding entry");
  }
  const double norm = std::sqrt(squared_norm(values));
  if (std::fabs(norm - 1.0) > 1e-6) {
    throw Error(ErrorCode::BackendContractViolation, "embedding is not unit norm (|v| = " + std::to_string(norm) + ")");
  }
  return EmbeddingVector(std::move(values));
}

double dot(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

double squared_norm(std::span<const float> a) { return dot(a, a); }

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                "dims " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  const double na = squared_norm(a);
  const double nb = squared_norm(b);
  if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::ZeroVector, "cosine of a zero vector is undefined");
  const double c = dot(a, b) / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(c, -1.0, 1.0);
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  return cosine_similarity(a.values(), b.values());
}

void EmbedderBackendSpec::validate() const {
  if (dims == 0) throw Error(ErrorCode::ConfigError, "embedder dims must be positive");
  if (batch_size == 0) throw Error(ErrorCode::ConfigError, "embedder batch_size must be positive");
  if (kind == EmbedderKind::Remote && (endpoint.empty() || model_name.empty())) {
    throw Error(ErrorCode::ConfigError, "remote embedder requires endpoint and model");
  }
}

std::string EmbedderBackendSpec::fingerprint() const {
  if (kind == EmbedderKind::HashMock) {
    return "hash_mock:dims=" + std::to_string(dims) + ":seed=" + std::to_string(seed);
  }
  return "remote:" + model_name + "@" + endpoint + ":dims=" + std::to_string(dims);
}

Json EmbedderBackendSpec::to_json() const {
  Json j;
  if (kind == EmbedderKind::HashMock) {
    j = {{"kind", "hash_mock"}, {"dims", dims}, {"seed", seed}};
  } else {
    j = {{"kind", "remote"},
         {"endpoint", endpoint},
         {"model", model_name},
         {"dims", dims},
         {"batch_size", batch_size},
         {"retry",
          {{"max_retries", retry.max_retries}, {"backoff_ms", retry.backoff_base_ms}, {"timeout_ms", retry.timeout_ms}}}};
  }
  return j;
}

namespace {

RetryPolicy parse_retry(const Json& j) {
  reject_unknown_keys(j, {"max_retries", "backoff_ms", "timeout_ms"}, "retry");
  RetryPolicy r;
  r.max_retries = j.value("max_retries", r.max_retries);
  r.backoff_base_ms = j.value("backoff_ms", r.backoff_base_ms);
  r.timeout_ms = j.value("timeout_ms", r.timeout_ms);
  if (r.max_retries < 0 || r.backoff_base_ms < 0 || r.timeout_ms <= 0) {
    throw Error(ErrorCode::ConfigError, "retry settings must be non-negative");
  }
  return r;
}

}  // namespace

EmbedderBackendSpec EmbedderBackendSpec::from_json(const Json& j) {
  reject_unknown_keys(j, {"kind", "endpoint", "model", "dims", "seed", "batch_size", "retry"}, "embedder");
  EmbedderBackendSpec s;
  try {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "hash_mock") {
      s.kind = EmbedderKind::HashMock;
    } else if (kind == "remote") {
      s.kind = EmbedderKind::Remote;
    } else {
      throw Error(ErrorCode::ConfigError, "unknown embedder kind '" + kind + "'");
    }
    s.endpoint = j.value("endpoint", std::string{});
    s.model_name = j.value("model", std::string{});
    s.dims = j.value("dims", s.dims);
    s.seed = j.value("seed", s.seed);
    s.batch_size = j.value("batch_size", s.batch_size);
    if (j.contains("retry")) s.retry = parse_retry(j.at("retry"));
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("embedder: ") + e.what());
  }
  s.validate();
  return s;
}

EmbeddingVector Embedder::embed(std::string_view text) {
  if (text.empty()) throw Error(ErrorCode::InvalidArgument, "cannot embed empty text");
  std::string owned(text);
  ++calls_;
  auto out = embed_request(std::span<const std::string>(&owned, 1));
  if (out.size() != 1) throw Error(ErrorCode::BackendContractViolation, "expected exactly one embedding");
  return std::move(out.front());
}

std::vector<EmbeddingVector> Embedder::embed_batch(std::span<const std::string> texts) {
  for (const auto& t : texts) {
    if (t.empty()) throw Error(ErrorCode::InvalidArgument, "cannot embed empty text");
  }
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  const std::size_t step = std::max<std::size_t>(1, batch_size());
  for (std::size_t i = 0; i < texts.size(); i += step) {
    auto part = texts.subspan(i, std::min(step, texts.size() - i));
    ++calls_;
    auto vecs = embed_request(part);
    if (vecs.size() != part.size()) throw Error(ErrorCode::BackendContractViolation, "embedding count mismatch");
    std::move(vecs.begin(), vecs.end(), std::back_inserter(out));
  }
  return out;
}

HashMockEmbedder::HashMockEmbedder(std::size_t dims, std::uint64_t seed) : dims_(dims), seed_(seed) {
  if (dims == 0) throw Error(ErrorCode::ConfigError, "hash_mock dims must be positive");
}

std::string HashMockEmbedder::fingerprint() const {
  return "hash_mock:dims=" + std::to_string(dims_) + ":seed=" + std::to_string(seed_);
}

std::vector<double> HashMockEmbedder::raw_counts(std::string_view text) const {
  std::vector<double> acc(dims_, 0.0);
  auto add = [&](std::string_view token) {
    const std::uint64_t h = hash64(token, seed_);
    const std::size_t index = static_cast<std::size_t>(h % dims_);
    acc[index] += (h >> 63) ? -1.0 : 1.0;
  };
  bool any = false;
  for (const auto& tok : default_tokenizer().tokenize(text)) {
    if (tok.size() == 1 && !std::isalnum(static_cast<unsigned char>(tok[0])) &&
        static_cast<unsigned char>(tok[0]) < 0x80) {
      continue;
    }
    add(to_lower_ascii(tok));
    any = true;
  }
  if (!any || std::all_of(acc.begin(), acc.end(), [](double v) { return v == 0.0; })) {
    add(text);
  }
  return acc;
}

std::vector<EmbeddingVector> HashMockEmbedder::embed_request(std::span<const std::string> texts) {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    auto counts = raw_counts(t);
    out.push_back(EmbeddingVector::normalized(std::span<const double>(counts)));
  }
  return out;
}

RemoteEmbedder::RemoteEmbedder(EmbedderBackendSpec spec) : spec_(std::move(spec)) {
  if (spec_.kind != EmbedderKind::Remote) throw Error(ErrorCode::ConfigError, "RemoteEmbedder needs a remote spec");
  spec_.validate();
}

std::vector<EmbeddingVector> RemoteEmbedder::embed_request(std::span<const std::string> texts) {
  Json body{{"model", spec_.model_name}, {"input", Json::array()}};
  for (const auto& t : texts) body["input"].push_back(t);
  Json response = post_json(spec_.endpoint, body, spec_.retry, ErrorCode::EmbedderUnavailable);

  std::vector<std::optional<EmbeddingVector>> slots(texts.size());
  try {
    const auto& data = response.at("data");
    if (!data.is_array() || data.size() != texts.size()) {
      throw Error(ErrorCode::BackendContractViolation, "embedding response has wrong number of entries");
    }
    for (const auto& item : data) {
      const auto index = item.at("index").get<std::size_t>();
      auto values = item.at("embedding").get<std::vector<double>>();
      if (index >= slots.size() || slots[index]) {
        throw Error(ErrorCode::BackendContractViolation, "embedding response has bad index " + std::to_string(index));
      }
      if (values.size() != spec_.dims) {
        throw Error(ErrorCode::BackendContractViolation, "expected " + std::to_string(spec_.dims) +
                                                             " dims, got " + std::to_string(values.size()));
      }
      slots[index] = EmbeddingVector::normalized(std::span<const double>(values));
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::BackendContractViolation, std::string("malformed embedding response: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ZeroVector || e.code() == ErrorCode::InvalidArgument) {
      throw Error(ErrorCode::BackendContractViolation, e.message());
    }
    throw;
  }
  std::vector<EmbeddingVector> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

std::shared_ptr<Embedder> make_embedder(const EmbedderBackendSpec& spec) {
  spec.validate();
  if (spec.kind == EmbedderKind::HashMock) return std::make_shared<HashMockEmbedder>(spec.dims, spec.seed);
  return std::make_shared<RemoteEmbedder>(spec);
}

}  // namespace finrag
