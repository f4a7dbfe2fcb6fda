#include "finrag/dataprep.hpp"

#include <algorithm>
#include <atomic>
#include <map>
#include <mutex>
#include <optional>
#include <regex>
#include <set>
#include <thread>

#include "finrag/error.hpp"
#include "finrag/prompts.hpp"

namespace finrag {

namespace {

TripletOrigin origin_from_string(const std::string& s, std::size_t line) {
  if (s == "generated") return TripletOrigin::Generated;
  if (s == "dataset") return TripletOrigin::Dataset;
  throw Error(ErrorCode::ParseError, "unknown origin '" + s + "'", Stage::None,
              line ? std::optional<std::size_t>(line) : std::nullopt);
}

const char* source_key(TripletOrigin origin) {
  return origin == TripletOrigin::Generated ? "chunk_id" : "question_id";
}

std::string triplet_id(const std::string& source_id, std::size_t n) { return source_id + "#" + std::to_string(n); }

}  // namespace

std::string_view to_string(TripletOrigin origin) {
  return origin == TripletOrigin::Generated ? "generated" : "dataset";
}

Json Triplet::to_json() const {
  return {{"triplet_id", triplet_id}, {"query", query},         {"context", context},
          {"answer", answer},         {"source_id", source_id}, {"origin", std::string(to_string(origin))}};
}

Triplet Triplet::from_json(const Json& j, std::size_t line) {
  reject_unknown_keys(j, {"triplet_id", "query", "context", "answer", "source_id", "origin"}, "triplet");
  Triplet t;
  t.triplet_id = require_string(j, "triplet_id", line);
  t.query = require_string(j, "query", line);
  t.context = require_string(j, "context", line);
  t.answer = require_string(j, "answer", line);
  t.source_id = require_string(j, "source_id", line);
  t.origin = origin_from_string(require_string(j, "origin", line), line);
  if (trim(t.query).empty() || trim(t.context).empty() || trim(t.answer).empty()) {
    throw Error(ErrorCode::ParseError, "triplet '" + t.triplet_id + "' has an empty text", Stage::None,
                line ? std::optional<std::size_t>(line) : std::nullopt);
  }
  return t;
}

void save_triplets(const std::filesystem::path& path, const std::vector<Triplet>& triplets) {
  std::vector<Json> rows;
  for (const auto& t : triplets) rows.push_back(t.to_json());
  write_file_atomic(path, to_jsonl(rows));
}

std::vector<Triplet> load_triplets(const std::filesystem::path& path) {
  std::vector<Triplet> out;
  read_jsonl(path, [&](const Json& j, std::size_t line) { out.push_back(Triplet::from_json(j, line)); });
  return out;
}

void save_rejections(const std::filesystem::path& path, const std::vector<Rejection>& rejections) {
  std::vector<Json> rows;
  for (const auto& r : rejections) rows.push_back({{"chunk_id", r.source_id}, {"reason", r.reason}});
  write_file_atomic(path, to_jsonl(rows));
}

std::vector<std::pair<std::string, std::string>> parse_pairs(std::string_view text, std::size_t max_pairs) {
  static const std::regex kLine(R"(^\s*([QA])(\d+)\s*:\s*(.*?)\s*$)");
  std::vector<std::pair<std::string, std::string>> pairs;
  std::optional<std::string> question;
  for (const auto& raw : split_lines(text)) {
    if (trim(raw).empty()) continue;
    std::smatch m;
    if (!std::regex_match(raw, m, kLine)) throw Error(ErrorCode::ParseError, "unexpected line '" + trim(raw) + "'");
    const bool is_question = m[1] == "Q";
    const auto number = std::stoul(m[2]);
    const std::string body = m[3];
    const auto expected = pairs.size() + 1;
    if (number != expected) {
      throw Error(ErrorCode::ParseError, std::string(is_question ? "Q" : "A") + std::to_string(number) +
                                             " where " + (question ? "A" : "Q") + std::to_string(expected) +
                                             " was expected");
    }
    if (body.empty()) throw Error(ErrorCode::ParseError, "empty " + std::string(m[1]) + std::to_string(number));
    if (is_question == question.has_value()) {
      throw Error(ErrorCode::ParseError, std::string(is_question ? "Q" : "A") + std::to_string(number) + " out of order");
    }
    if (is_question) {
      question = body;
    } else {
      pairs.emplace_back(std::move(*question), body);
      question.reset();
    }
  }
  if (question) throw Error(ErrorCode::ParseError, "Q" + std::to_string(pairs.size() + 1) + " has no answer");
  if (pairs.empty()) throw Error(ErrorCode::ParseError, "no question and answer pairs");
  if (pairs.size() > max_pairs) {
    throw Error(ErrorCode::ParseError,
                std::to_string(pairs.size()) + " pairs where at most " + std::to_string(max_pairs) + " were asked for");
  }
  return pairs;
}

TripletBatch generate_triplets(const std::vector<Chunk>& chunks, Generator& generator, std::size_t per_chunk,
                               const GenerationParams& params, std::size_t workers) {
  if (per_chunk == 0) throw Error(ErrorCode::InvalidArgument, "per_chunk must be at least 1");
  const auto& tpl = prompts::get("dataprep_triplets");

  struct Outcome {
    std::vector<Triplet> triplets;
    std::optional<Rejection> rejection;
    std::optional<Rejection> error;
  };
  std::vector<Outcome> outcomes(chunks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < chunks.size(); i = next++) {
      const auto& chunk = chunks[i];
      const prompts::Vars vars{{"count", std::to_string(per_chunk)}, {"context", chunk.text}};
      std::string reply;
      try {
        reply = generator.complete(
            {{Role::System, prompts::render(tpl.system, vars)}, {Role::User, prompts::render(tpl.user, vars)}}, params);
      } catch (const Error& e) {
        outcomes[i].error = Rejection{chunk.chunk_id, e.what()};
        continue;
      }
      try {
        auto pairs = parse_pairs(reply, per_chunk);
        for (std::size_t n = 0; n < pairs.size(); ++n) {
          outcomes[i].triplets.push_back({triplet_id(chunk.chunk_id, n + 1), std::move(pairs[n].first), chunk.text,
                                          std::move(pairs[n].second), chunk.chunk_id, TripletOrigin::Generated});
        }
      } catch (const Error& e) {
        outcomes[i].rejection = Rejection{chunk.chunk_id, e.message()};
      }
    }
  };
  const auto n = std::max<std::size_t>(1, std::min(workers, chunks.size()));
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < n; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();

  TripletBatch batch;
  for (auto& o : outcomes) {
    std::move(o.triplets.begin(), o.triplets.end(), std::back_inserter(batch.triplets));
    if (o.rejection) batch.rejections.push_back(std::move(*o.rejection));
    if (o.error) batch.errors.push_back(std::move(*o.error));
  }
  return batch;
}

TripletBatch triplets_from_dataset(const std::vector<BenchmarkQuestion>& questions) {
  TripletBatch batch;
  for (const auto& q : questions) {
    std::size_t n = 0;
    for (const auto& ctx : q.reference_contexts) {
      if (trim(ctx).empty()) continue;
      batch.triplets.push_back(
          {triplet_id(q.question_id, ++n), q.question, ctx, q.reference_answer, q.question_id, TripletOrigin::Dataset});
    }
    if (n == 0) batch.rejections.push_back({q.question_id, "no reference context"});
  }
  return batch;
}

std::vector<Triplet> sample_subset(const std::vector<Triplet>& triplets, std::size_t n, std::uint64_t seed) {
  if (n > triplets.size()) {
    throw Error(ErrorCode::InvalidSample, "cannot sample " + std::to_string(n) + " of " +
                                              std::to_string(triplets.size()) + " triplets");
  }
  std::set<std::string> ids;
  for (const auto& t : triplets) {
    if (!ids.insert(t.triplet_id).second) {
      throw Error(ErrorCode::InvalidSample, "triplet id '" + t.triplet_id + "' repeats");
    }
  }
  auto perm = seeded_permutation(triplets.size(), seed);
  perm.resize(n);
  std::sort(perm.begin(), perm.end());
  std::vector<Triplet> out;
  out.reserve(n);
  for (auto i : perm) out.push_back(triplets[i]);
  return out;
}

std::size_t export_embedder_pairs(const std::vector<Triplet>& triplets, const std::filesystem::path& path) {
  std::vector<Json> rows;
  for (const auto& t : triplets) {
    rows.push_back({{"query", t.query}, {"positive_context", t.context}, {source_key(t.origin), t.source_id}});
  }
  write_file_atomic(path, to_jsonl(rows));
  return rows.size();
}

std::vector<EmbedderPair> load_embedder_pairs(const std::filesystem::path& path) {
  std::vector<EmbedderPair> out;
  read_jsonl(path, [&](const Json& j, std::size_t line) {
    reject_unknown_keys(j, {"query", "positive_context", "chunk_id", "question_id"}, "embedder pair");
    EmbedderPair p;
    p.query = require_string(j, "query", line);
    p.positive_context = require_string(j, "positive_context", line);
    if (j.contains("chunk_id") == j.contains("question_id")) {
      throw Error(ErrorCode::ParseError, "embedder pair needs exactly one of chunk_id and question_id", Stage::None,
                  line);
    }
    p.origin = j.contains("chunk_id") ? TripletOrigin::Generated : TripletOrigin::Dataset;
    p.source_id = require_string(j, source_key(p.origin), line);
    out.push_back(std::move(p));
  });
  return out;
}

std::size_t export_generator_pairs(const std::vector<Triplet>& triplets, const std::filesystem::path& path) {
  std::vector<Json> rows;
  for (const auto& t : triplets) {
    rows.push_back({{"messages", {{{"role", "user"}, {"content", t.query}}, {{"role", "assistant"}, {"content", t.answer}}}},
                    {"metadata",
                     {{"triplet_id", t.triplet_id},
                      {"source_id", t.source_id},
                      {"origin", std::string(to_string(t.origin))}}}});
  }
  write_file_atomic(path, to_jsonl(rows));
  return rows.size();
}

std::size_t audit_generator_export(const std::filesystem::path& path, const std::vector<Triplet>& triplets) {
  std::map<std::string, const Triplet*> by_id;
  for (const auto& t : triplets) by_id[t.triplet_id] = &t;
  std::size_t bad = 0;
  for (const auto& row : read_jsonl(path)) {
    const bool ok = [&] {
      if (!row.is_object() || row.size() != 2 || !row.contains("messages") || !row.contains("metadata")) return false;
      const auto& meta = row.at("metadata");
      if (!meta.is_object() || meta.size() != 3 || !meta.contains("triplet_id")) return false;
      auto it = by_id.find(meta.at("triplet_id").get<std::string>());
      if (it == by_id.end()) return false;
      const Triplet& t = *it->second;
      if (meta.value("source_id", "") != t.source_id || meta.value("origin", "") != to_string(t.origin)) return false;
      const Json expected = {{{"role", "user"}, {"content", t.query}}, {{"role", "assistant"}, {"content", t.answer}}};
      return row.at("messages") == expected;
    }();
    if (!ok) ++bad;
  }
  return bad;
}

}  // namespace finrag
