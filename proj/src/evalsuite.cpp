#include "finrag/evalsuite.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <set>

#include "finrag/error.hpp"

namespace finrag {

namespace {

constexpr std::array<std::string_view, kCategoryCount> kLabels = {
    "0-RETRIEVE",         "1-COMPARE",          "2-CALC-CHANGE",      "3-CALC-COMPLEX",
    "4-CALC-AND-JUDGE",   "5-EXPLAIN-FACTORS",  "6-OTHER-ADVANCED"};

std::string join_contexts(const std::vector<std::string>& texts) {
  std::string out;
  for (const auto& t : texts) {
    if (!out.empty()) out += "\n\n";
    out += t;
  }
  return out;
}

std::string numbered_contexts(const std::vector<std::string>& texts) {
  std::string out;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (!out.empty()) out += "\n\n";
    out += "[" + std::to_string(i + 1) + "] " + texts[i];
  }
  return out;
}

bool blank(std::string_view s) { return trim(s).empty(); }

std::optional<double> mean(const std::vector<double>& values) {
  if (values.empty()) return std::nullopt;
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

// Records in question_id order so means do not depend on input order.
std::vector<const MetricRecord*> ordered(const std::vector<MetricRecord>& records) {
  std::vector<const MetricRecord*> out;
  for (const auto& r : records) out.push_back(&r);
  std::sort(out.begin(), out.end(), [](const MetricRecord* a, const MetricRecord* b) {
    return a->question_id < b->question_id;
  });
  return out;
}

template <typename T>
Json opt(const std::optional<T>& v) {
  return v ? Json(*v) : Json(nullptr);
}

template <typename T>
std::optional<T> opt_get(const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

}  // namespace

std::string_view category_label(int code) {
  if (code < 0 || code >= kCategoryCount) {
    throw Error(ErrorCode::UnknownCategory, "category " + std::to_string(code) + " is outside 0..6");
  }
  return kLabels[static_cast<std::size_t>(code)];
}

bool is_easier(int code) {
  category_label(code);
  return code <= 2;
}

int parse_category(const Json& value, std::size_t line) {
  const auto where = line ? std::optional<std::size_t>(line) : std::nullopt;
  if (value.is_number_integer()) {
    const auto code = value.get<std::int64_t>();
    if (code < 0 || code >= kCategoryCount) {
      throw Error(ErrorCode::UnknownCategory, "category " + std::to_string(code) + " is outside 0..6", Stage::None,
                  where);
    }
    return static_cast<int>(code);
  }
  if (value.is_string()) {
    const auto s = value.get<std::string>();
    for (int i = 0; i < kCategoryCount; ++i) {
      if (s == kLabels[static_cast<std::size_t>(i)] || s == std::to_string(i)) return i;
    }
    throw Error(ErrorCode::UnknownCategory, "unknown category '" + s + "'", Stage::None, where);
  }
  throw Error(ErrorCode::ParseError, "category must be a code or label", Stage::None, where);
}

std::string_view to_string(Metric metric) {
  switch (metric) {
    case Metric::Relevancy: return "relevancy";
    case Metric::Faithfulness: return "faithfulness";
    case Metric::Correctness: return "correctness";
  }
  return "?";
}

ParsedScore parse_judge_reply(std::string_view text) {
  std::optional<double> score;
  std::string reason;
  for (const auto& raw : split_lines(text)) {
    const auto line = trim(raw);
    if (!score && starts_with_ci(line, "SCORE:")) {
      const auto value = trim(std::string_view(line).substr(6));
      char* end = nullptr;
      const double v = std::strtod(value.c_str(), &end);
      if (value.empty() || end != value.c_str() + value.size() || !std::isfinite(v)) {
        throw Error(ErrorCode::BackendContractViolation, "judge score '" + value + "' is not a number",
                    Stage::Evaluate);
      }
      score = v;
    } else if (starts_with_ci(line, "REASON:")) {
      reason = trim(std::string_view(line).substr(7));
    }
  }
  if (!score) throw Error(ErrorCode::BackendContractViolation, "judge reply has no SCORE line", Stage::Evaluate);
  return {*score, reason};
}

Judge::Judge(std::shared_ptr<Generator> generator, GenerationParams params)
    : generator_(std::move(generator)), params_(params) {
  if (!generator_) throw Error(ErrorCode::InvalidArgument, "judge needs a generator backend");
}

JudgeVerdict Judge::ask(Metric metric, std::string_view template_name, const prompts::Vars& vars) {
  const auto& tpl = prompts::get(template_name);
  std::string reply;
  try {
    reply = generator_->complete(
        {{Role::System, prompts::render(tpl.system, vars)}, {Role::User, prompts::render(tpl.user, vars)}}, params_);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::GeneratorUnavailable || e.code() == ErrorCode::EmptyGeneration) {
      throw Error(ErrorCode::MetricUnavailable, std::string(to_string(metric)) + ": " + e.message(), Stage::Evaluate);
    }
    throw e.with_stage(Stage::Evaluate);
  }
  auto parsed = parse_judge_reply(reply);
  const bool binary = metric != Metric::Correctness;
  if (binary ? (parsed.score != 0.0 && parsed.score != 1.0) : (parsed.score < 1.0 || parsed.score > 5.0)) {
    throw Error(ErrorCode::BackendContractViolation,
                std::string(to_string(metric)) + " score " + trim(reply.substr(0, 40)) + " is out of range",
                Stage::Evaluate);
  }
  return {metric, parsed.score, parsed.reason, generator_->fingerprint(), tpl.version};
}

JudgeVerdict Judge::relevancy(std::string_view query, std::string_view response,
                              const std::vector<std::string>& contexts) {
  if (blank(response)) return {Metric::Relevancy, 0.0, "empty response", backend_id(), ""};
  return ask(Metric::Relevancy, "judge_relevancy",
             {{"query", std::string(query)}, {"response", std::string(response)}, {"contexts", numbered_contexts(contexts)}});
}

JudgeVerdict Judge::faithfulness(std::string_view response, const std::vector<std::string>& contexts) {
  if (blank(response)) return {Metric::Faithfulness, 0.0, "empty response", backend_id(), ""};
  if (contexts.empty()) return {Metric::Faithfulness, 0.0, "no context to support the response", backend_id(), ""};
  return ask(Metric::Faithfulness, "judge_faithfulness",
             {{"response", std::string(response)}, {"contexts", numbered_contexts(contexts)}});
}

JudgeVerdict Judge::correctness(std::string_view query, std::string_view response, std::string_view reference) {
  if (blank(reference)) throw Error(ErrorCode::ReferenceMissing, "no reference answer", Stage::Evaluate);
  if (blank(response)) return {Metric::Correctness, 1.0, "empty response", backend_id(), ""};
  return ask(Metric::Correctness, "judge_correctness",
             {{"query", std::string(query)}, {"response", std::string(response)}, {"reference", std::string(reference)}});
}

int similarity_binary(double raw) { return raw >= kSimilarityThreshold ? 1 : 0; }

SimilarityScore context_similarity(Embedder& embedder, const std::vector<std::string>& retrieved,
                                   const std::vector<std::string>& reference) {
  const auto ref = join_contexts(reference);
  if (blank(ref)) throw Error(ErrorCode::ReferenceMissing, "no reference context", Stage::Evaluate);
  const auto got = join_contexts(retrieved);
  if (blank(got)) throw Error(ErrorCode::InvalidArgument, "no retrieved context", Stage::Evaluate);
  const std::vector<std::string> texts{got, ref};
  auto vectors = embedder.embed_batch(texts);
  const double raw = cosine_similarity(vectors[0], vectors[1]);
  return {raw, similarity_binary(raw)};
}

double correctness_to_pct(double score) {
  if (!(score >= 1.0 && score <= 5.0)) {
    throw Error(ErrorCode::InvalidScore, "correctness score must lie in [1, 5]", Stage::Evaluate);
  }
  return (score - 1.0) / 4.0;
}

Json MetricRecord::to_json() const {
  Json j{{"question_id", question_id},
         {"config_id", config_id},
         {"category", category},
         {"answer", answer},
         {"failed", failed},
         {"relevancy", opt(relevancy)},
         {"faithfulness", opt(faithfulness)},
         {"context_similarity_raw", opt(context_similarity_raw)},
         {"context_similarity_binary", opt(context_similarity_binary)},
         {"correctness_raw", opt(correctness_raw)},
         {"correctness_pct", opt(correctness_pct)},
         {"human_correct", opt(human_correct)},
         {"unavailable", unavailable},
         {"contexts", contexts}};
  if (!error.empty()) j["error"] = error;
  if (!trace.empty()) j["trace"] = trace;
  return j;
}

MetricRecord MetricRecord::from_json(const Json& j, std::size_t line) {
  MetricRecord r;
  try {
    r.question_id = require_string(j, "question_id", line);
    r.config_id = require_string(j, "config_id", line);
    r.category = parse_category(j.at("category"), line);
    r.answer = j.value("answer", "");
    r.failed = j.value("failed", false);
    r.error = j.value("error", "");
    r.relevancy = opt_get<int>(j, "relevancy");
    r.faithfulness = opt_get<int>(j, "faithfulness");
    r.context_similarity_raw = opt_get<double>(j, "context_similarity_raw");
    r.context_similarity_binary = opt_get<int>(j, "context_similarity_binary");
    r.correctness_raw = opt_get<double>(j, "correctness_raw");
    r.correctness_pct = opt_get<double>(j, "correctness_pct");
    r.human_correct = opt_get<int>(j, "human_correct");
    r.unavailable = j.value("unavailable", std::vector<std::string>{});
    r.contexts = j.value("contexts", std::vector<std::string>{});
    r.trace = j.value("trace", "");
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("bad metric record: ") + e.what(), Stage::None,
                line ? std::optional<std::size_t>(line) : std::nullopt);
  }
  return r;
}

void save_records(const std::filesystem::path& path, const std::vector<MetricRecord>& records) {
  std::vector<Json> rows;
  rows.reserve(records.size());
  for (const auto& r : records) rows.push_back(r.to_json());
  write_file_atomic(path, to_jsonl(rows));
}

std::vector<MetricRecord> load_records(const std::filesystem::path& path) {
  std::vector<MetricRecord> out;
  read_jsonl(path, [&](const Json& j, std::size_t line) { out.push_back(MetricRecord::from_json(j, line)); });
  return out;
}

HumanVerdicts ingest_human_verdicts(const std::filesystem::path& path, const std::vector<std::string>& known_ids) {
  const std::set<std::string> known(known_ids.begin(), known_ids.end());
  HumanVerdicts verdicts;
  std::vector<std::size_t> unknown_rows;
  std::vector<std::string> unknown_ids;
  read_jsonl(path, [&](const Json& row, std::size_t line) {
    if (!row.is_object()) throw Error(ErrorCode::ParseError, "verdict row must be an object", Stage::None, line);
    for (const auto& [key, _] : row.items()) {
      if (key != "question_id" && key != "verdict" && key != "grader_id" && key != "note") {
        throw Error(ErrorCode::ParseError, "unknown field '" + key + "'", Stage::None, line);
      }
    }
    const auto id = require_string(row, "question_id", line);
    require_string(row, "grader_id", line);
    if (row.contains("note") && !row.at("note").is_string()) {
      throw Error(ErrorCode::ParseError, "note must be a string", Stage::None, line);
    }
    const auto verdict = require_int(row, "verdict", line);
    if (verdict != 0 && verdict != 1) {
      throw Error(ErrorCode::ParseError, "verdict must be 0 or 1, got " + std::to_string(verdict), Stage::None, line);
    }
    if (!known.count(id)) {
      unknown_rows.push_back(line);
      unknown_ids.push_back(id);
      return;
    }
    if (!verdicts.emplace(id, static_cast<int>(verdict)).second) {
      throw Error(ErrorCode::DuplicateVerdict, "second verdict for '" + id + "'", Stage::None, line);
    }
  });
  if (!unknown_rows.empty()) {
    std::string msg = "verdicts for unknown questions:";
    for (std::size_t i = 0; i < unknown_rows.size(); ++i) {
      msg += " line " + std::to_string(unknown_rows[i]) + " ('" + unknown_ids[i] + "')";
    }
    throw Error(ErrorCode::UnknownQuestion, msg, Stage::None, unknown_rows.front());
  }
  return verdicts;
}

std::size_t merge_human_verdicts(std::vector<MetricRecord>& records, const HumanVerdicts& verdicts) {
  std::size_t merged = 0;
  for (auto& r : records) {
    auto it = verdicts.find(r.question_id);
    if (it == verdicts.end()) continue;
    r.human_correct = it->second;
    ++merged;
  }
  return merged;
}

CorrectnessRow aggregate(const std::vector<MetricRecord>& records) {
  CorrectnessRow row;
  row.questions = records.size();
  if (!records.empty()) row.config_id = records.front().config_id;
  std::vector<double> easier, harder, overall, automated;
  for (const auto* r : ordered(records)) {
    category_label(r->category);
    if (r->human_correct) {
      const double v = *r->human_correct;
      (is_easier(r->category) ? easier : harder).push_back(v);
      overall.push_back(v);
    }
    if (r->failed) {
      automated.push_back(0.0);
    } else if (r->correctness_pct) {
      automated.push_back(*r->correctness_pct);
    }
  }
  row.human_pending = overall.empty();
  row.easier = mean(easier);
  row.harder = mean(harder);
  row.overall = mean(overall);
  row.automated = mean(automated);
  return row;
}

RetrievalRow retrieval_means(const std::vector<MetricRecord>& records) {
  RetrievalRow row;
  row.questions = records.size();
  if (!records.empty()) row.config_id = records.front().config_id;
  std::vector<double> rel, faith, sim, simb;
  for (const auto* r : ordered(records)) {
    if (r->relevancy) rel.push_back(*r->relevancy);
    if (r->faithfulness) faith.push_back(*r->faithfulness);
    if (r->context_similarity_raw) sim.push_back(*r->context_similarity_raw);
    if (r->context_similarity_binary) simb.push_back(*r->context_similarity_binary);
  }
  row.relevancy = mean(rel);
  row.faithfulness = mean(faith);
  row.context_similarity = mean(sim);
  row.context_similarity_binary = mean(simb);
  return row;
}

std::string format_percent(const std::optional<double>& fraction) {
  if (!fraction) return "N/A";
  return std::to_string(round_half_up_percent(*fraction)) + "%";
}

}  // namespace finrag
