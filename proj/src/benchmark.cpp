#include "finrag/benchmark.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <future>
#include <mutex>
#include <thread>

#include "finrag/error.hpp"
#include "finrag/prompts.hpp"

namespace finrag {

namespace {

constexpr std::string_view kManifestFormat = "finrag-manifest-v1";

std::optional<std::size_t> at_line(std::size_t line) {
  return line ? std::optional<std::size_t>(line) : std::nullopt;
}

std::vector<std::string> string_list(const Json& j, const char* key, std::size_t line) {
  if (!j.contains(key)) throw Error(ErrorCode::ParseError, std::string("missing field '") + key + "'", Stage::None, at_line(line));
  const auto& v = j.at(key);
  if (!v.is_array()) throw Error(ErrorCode::ParseError, std::string("field '") + key + "' must be a list", Stage::None, at_line(line));
  std::vector<std::string> out;
  for (const auto& e : v) {
    if (!e.is_string()) {
      throw Error(ErrorCode::ParseError, std::string("field '") + key + "' must hold strings", Stage::None, at_line(line));
    }
    out.push_back(e.get<std::string>());
  }
  return out;
}

std::string require_nonempty(const Json& j, const char* key, std::size_t line) {
  auto v = require_string(j, key, line);
  if (trim(v).empty()) throw Error(ErrorCode::ParseError, std::string("field '") + key + "' is empty", Stage::None, at_line(line));
  return v;
}

std::string id_string(const Json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  return {};
}

ModelVariant variant_from_string(const std::string& s) {
  if (s == "generic") return ModelVariant::Generic;
  if (s == "fine_tuned") return ModelVariant::FineTuned;
  throw Error(ErrorCode::ConfigError, "model variant must be 'generic' or 'fine_tuned', got '" + s + "'");
}

Reasoning reasoning_from_string(const std::string& s) {
  if (s == "one_pass") return Reasoning::OnePass;
  if (s == "ooda") return Reasoning::Ooda;
  throw Error(ErrorCode::ConfigError, "reasoning must be 'one_pass' or 'ooda', got '" + s + "'");
}

// Question ids may contain anything; trace file names may not.
std::string file_safe(const std::string& id) {
  std::string out;
  for (unsigned char c : id) {
    out += (std::isalnum(c) || c == '-' || c == '_' || c == '.') ? static_cast<char>(c) : '_';
  }
  return out + "-" + hex64(hash64(id)).substr(0, 8);
}

std::string fmt_fixed3(const std::optional<double>& v) {
  if (!v) return "N/A";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", *v);
  return buf;
}

std::string csv_number(const std::optional<double>& v) {
  if (!v) return "";
  return Json(*v).dump();
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += (c == '"') ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

std::string pad(const std::string& s, std::size_t width, bool right) {
  if (s.size() >= width) return s;
  const std::string fill(width - s.size(), ' ');
  return right ? fill + s : s + fill;
}

std::string render_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& r : rows) width[c] = std::max(width[c], r[c].size());
  }
  auto line = [&](const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c) out += " | ";
      out += pad(cells[c], width[c], c > 0);
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out + "\n";
  };
  std::string out = line(header);
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c) out += "-+-";
    out += std::string(width[c], '-');
  }
  out += "\n";
  for (const auto& r : rows) out += line(r);
  return out;
}

void log_to(const RunOptions& o, const std::string& msg) {
  if (o.log) o.log(msg);
}

MetricRecord failed_record(const SystemConfiguration& config, const BenchmarkQuestion& q, std::string error) {
  MetricRecord r;
  r.question_id = q.question_id;
  r.config_id = config.config_id;
  r.category = q.category;
  r.failed = true;
  r.error = std::move(error);
  return r;
}

// Everything one question needs, held by shared_ptr so a timed-out worker
// thread can finish on its own after the runner has moved on.
struct QuestionJob {
  SystemConfiguration config;
  BenchmarkQuestion question;
  std::shared_ptr<RagEngine> engine;
  std::shared_ptr<OodaReasoner> reasoner;
  std::shared_ptr<Judge> judge;
  std::shared_ptr<Embedder> similarity;
  std::filesystem::path output_dir;

  MetricRecord operator()() const {
    MetricRecord rec;
    rec.question_id = question.question_id;
    rec.config_id = config.config_id;
    rec.category = question.category;
    std::vector<std::string> context_texts;
    try {
      if (config.reasoning == Reasoning::OnePass) {
        auto answer = engine->answer_one_pass(question.question);
        rec.answer = answer.answer_text;
        for (std::size_t i = 0; i < answer.contexts_in_prompt; ++i) {
          context_texts.push_back(answer.retrieved[i].text);
          rec.contexts.push_back(answer.retrieved[i].hit.chunk_id);
        }
      } else {
        Task task{question.question, "", {std::make_shared<RagResource>(engine)}};
        auto episode = reasoner->run(task, config.max_iterations);
        rec.answer = episode.conclusion->answer_text;
        const auto rel = std::filesystem::path("traces") / config.config_id / (file_safe(question.question_id) + ".jsonl");
        std::filesystem::create_directories((output_dir / rel).parent_path());
        write_trace(output_dir / rel, episode.trace);
        rec.trace = rel.generic_string();
      }
    } catch (const std::exception& e) {
      return failed_record(config, question, e.what());
    }

    auto unavailable = [&](std::string_view metric, const std::exception& e) {
      rec.unavailable.push_back(std::string(metric) + ": " + e.what());
    };
    if (config.reasoning == Reasoning::OnePass) {
      try {
        rec.relevancy = static_cast<int>(judge->relevancy(question.question, rec.answer, context_texts).score);
      } catch (const Error& e) {
        unavailable("relevancy", e);
      }
      try {
        rec.faithfulness = static_cast<int>(judge->faithfulness(rec.answer, context_texts).score);
      } catch (const Error& e) {
        unavailable("faithfulness", e);
      }
      if (!question.reference_contexts.empty()) {
        try {
          auto s = context_similarity(*similarity, context_texts, question.reference_contexts);
          rec.context_similarity_raw = s.raw;
          rec.context_similarity_binary = s.binary;
        } catch (const Error& e) {
          unavailable("context_similarity", e);
        }
      }
    }
    try {
      auto v = judge->correctness(question.question, rec.answer, question.reference_answer);
      rec.correctness_raw = v.score;
      rec.correctness_pct = correctness_to_pct(v.score);
    } catch (const Error& e) {
      unavailable("correctness", e);
    }
    return rec;
  }
};

MetricRecord run_with_timeout(const QuestionJob& job, double timeout_s) {
  if (timeout_s <= 0) return job();
  auto promise = std::make_shared<std::promise<MetricRecord>>();
  auto result = promise->get_future();
  std::thread([promise, job] {
    try {
      promise->set_value(job());
    } catch (...) {
      promise->set_exception(std::current_exception());
    }
  }).detach();
  const auto limit = std::chrono::duration<double>(timeout_s);
  if (result.wait_for(limit) != std::future_status::ready) {
    return failed_record(job.config, job.question,
                         Error(ErrorCode::Timeout, "no answer within " + Json(timeout_s).dump() + " s").what());
  }
  try {
    return result.get();
  } catch (const std::exception& e) {
    return failed_record(job.config, job.question, e.what());
  }
}

Json config_json_with_backends(const SystemConfiguration& c, const BenchStack& stack) {
  auto j = c.to_json();
  j["embedder_fingerprint"] = stack.embedder(c.retriever)->fingerprint();
  j["generator_fingerprint"] = stack.generator(c.generator)->fingerprint();
  return j;
}

std::vector<std::string> ids_of(const std::vector<BenchmarkQuestion>& qs) {
  std::vector<std::string> out;
  for (const auto& q : qs) out.push_back(q.question_id);
  return out;
}

void write_report_files(const std::filesystem::path& dir, const Report& report) {
  write_file_atomic(dir / "report.txt", report.text);
  write_file_atomic(dir / "table1.csv", report.retrieval_csv);
  write_file_atomic(dir / "table2.csv", report.correctness_csv);
}

void merge_verdicts(std::map<std::string, std::vector<MetricRecord>>& records,
                    const std::map<std::string, std::filesystem::path>& files) {
  for (const auto& [config_id, path] : files) {
    auto it = records.find(config_id);
    if (it == records.end()) {
      throw Error(ErrorCode::ConfigError, "human verdicts given for unknown configuration '" + config_id + "'");
    }
    std::vector<std::string> known;
    for (const auto& r : it->second) known.push_back(r.question_id);
    merge_human_verdicts(it->second, ingest_human_verdicts(path, known));
  }
}

}  // namespace

// ---- dataset ----

Json BenchmarkQuestion::to_json() const {
  return {{"question_id", question_id},       {"question", question},
          {"reference_answer", reference_answer}, {"reference_contexts", reference_contexts},
          {"source_doc_ids", source_doc_ids}, {"category", category}};
}

BenchmarkQuestion BenchmarkQuestion::from_json(const Json& j, std::size_t line) {
  if (!j.is_object()) throw Error(ErrorCode::ParseError, "question row must be an object", Stage::None, at_line(line));
  for (const auto& [key, _] : j.items()) {
    if (key != "question_id" && key != "question" && key != "reference_answer" && key != "reference_contexts" &&
        key != "source_doc_ids" && key != "category") {
      throw Error(ErrorCode::ParseError, "unknown field '" + key + "'", Stage::None, at_line(line));
    }
  }
  BenchmarkQuestion q;
  q.question_id = require_nonempty(j, "question_id", line);
  q.question = require_nonempty(j, "question", line);
  q.reference_answer = require_nonempty(j, "reference_answer", line);
  q.reference_contexts = j.contains("reference_contexts") ? string_list(j, "reference_contexts", line)
                                                           : std::vector<std::string>{};
  q.source_doc_ids = string_list(j, "source_doc_ids", line);
  if (q.source_doc_ids.empty()) throw Error(ErrorCode::ParseError, "source_doc_ids is empty", Stage::None, at_line(line));
  if (!j.contains("category")) throw Error(ErrorCode::ParseError, "missing field 'category'", Stage::None, at_line(line));
  q.category = parse_category(j.at("category"), line);
  return q;
}

std::vector<BenchmarkQuestion> load_dataset(const std::filesystem::path& path, std::vector<std::string>* warnings) {
  std::vector<BenchmarkQuestion> out;
  std::map<std::string, std::size_t> seen;
  read_jsonl(path, [&](const Json& j, std::size_t line) {
    auto q = BenchmarkQuestion::from_json(j, line);
    auto [it, fresh] = seen.emplace(q.question_id, line);
    if (!fresh) {
      throw Error(ErrorCode::ParseError,
                  "question_id '" + q.question_id + "' repeats line " + std::to_string(it->second), Stage::None, line);
    }
    out.push_back(std::move(q));
  });
  if (out.empty() && warnings) warnings->push_back("dataset " + path.string() + " holds no questions");
  return out;
}

void save_dataset(const std::filesystem::path& path, const std::vector<BenchmarkQuestion>& questions) {
  std::vector<Json> rows;
  for (const auto& q : questions) rows.push_back(q.to_json());
  write_file_atomic(path, to_jsonl(rows));
}

std::string dataset_fingerprint(const std::vector<BenchmarkQuestion>& questions) {
  auto sorted = questions;
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.question_id < b.question_id; });
  std::vector<Json> rows;
  for (const auto& q : sorted) rows.push_back(q.to_json());
  return hex64(hash64(to_jsonl(rows)));
}

std::pair<std::vector<BenchmarkQuestion>, std::vector<BenchmarkQuestion>> split_train_test(
    std::vector<BenchmarkQuestion> questions, std::size_t n_train, std::uint64_t seed) {
  if (n_train >= questions.size()) {
    throw Error(ErrorCode::InvalidSplit, "n_train " + std::to_string(n_train) + " must be below the " +
                                             std::to_string(questions.size()) + " available questions");
  }
  std::sort(questions.begin(), questions.end(),
            [](const auto& a, const auto& b) { return a.question_id < b.question_id; });
  const auto perm = seeded_permutation(questions.size(), seed);
  std::vector<bool> in_train(questions.size(), false);
  for (std::size_t i = 0; i < n_train; ++i) in_train[perm[i]] = true;
  std::vector<BenchmarkQuestion> train, test;
  for (std::size_t i = 0; i < questions.size(); ++i) {
    (in_train[i] ? train : test).push_back(std::move(questions[i]));
  }
  return {std::move(train), std::move(test)};
}

ConversionResult convert_financebench(const std::filesystem::path& path, const std::set<std::string>& known_doc_ids,
                                      const std::map<std::string, int>& categories) {
  ConversionResult result;
  read_jsonl(path, [&](const Json& row, std::size_t line) {
    const auto id = row.contains("financebench_id") ? id_string(row.at("financebench_id")) : std::string{};
    auto flag = [&](std::string reason) { result.flagged.push_back({line, id, std::move(reason)}); };
    if (id.empty()) return flag("missing financebench_id");
    const auto question = row.value("question", std::string{});
    const auto answer = row.value("answer", std::string{});
    const auto doc = row.value("doc_name", std::string{});
    if (trim(question).empty() || trim(answer).empty()) return flag("missing question or answer");
    if (trim(doc).empty()) return flag("missing doc_name");
    if (!known_doc_ids.empty() && !known_doc_ids.count(doc)) return flag("unresolvable source '" + doc + "'");

    BenchmarkQuestion q;
    q.question_id = id;
    q.question = question;
    q.reference_answer = answer;
    q.source_doc_ids = {doc};
    if (auto it = categories.find(id); it != categories.end()) {
      q.category = it->second;
    } else if (row.contains("category")) {
      try {
        q.category = parse_category(row.at("category"), line);
      } catch (const Error& e) {
        return flag(e.message());
      }
    } else {
      return flag("no difficulty category");
    }
    if (row.contains("evidence") && row.at("evidence").is_array()) {
      for (const auto& ev : row.at("evidence")) {
        if (!ev.is_object()) continue;
        auto text = ev.value("evidence_text", std::string{});
        if (!trim(text).empty()) q.reference_contexts.push_back(text);
        auto ev_doc = ev.value("doc_name", std::string{});
        if (!ev_doc.empty() && std::find(q.source_doc_ids.begin(), q.source_doc_ids.end(), ev_doc) == q.source_doc_ids.end()) {
          if (!known_doc_ids.empty() && !known_doc_ids.count(ev_doc)) return flag("unresolvable source '" + ev_doc + "'");
          q.source_doc_ids.push_back(ev_doc);
        }
      }
    }
    result.questions.push_back(std::move(q));
  });
  return result;
}

// ---- configurations ----

std::string_view to_string(ModelVariant v) { return v == ModelVariant::Generic ? "generic" : "fine_tuned"; }
std::string_view to_string(Reasoning r) { return r == Reasoning::OnePass ? "one_pass" : "ooda"; }

Json SystemConfiguration::to_json() const {
  Json j{{"id", config_id},
         {"label", label},
         {"retriever", std::string(to_string(retriever))},
         {"generator", std::string(to_string(generator))},
         {"reasoning", std::string(to_string(reasoning))},
         {"k", k},
         {"prompt_version", prompts::get("rag_answer").version}};
  if (reasoning == Reasoning::Ooda) j["max_iterations"] = max_iterations;
  return j;
}

SystemConfiguration SystemConfiguration::from_json(const Json& j) {
  if (j.is_string()) return preset(j.get<std::string>());
  reject_unknown_keys(j, {"id", "label", "retriever", "generator", "reasoning", "max_iterations", "k", "prompt_version"},
                      "configuration");
  SystemConfiguration c;
  try {
    c.config_id = j.at("id").get<std::string>();
    c.label = j.value("label", c.config_id);
    c.retriever = variant_from_string(j.value("retriever", std::string("generic")));
    c.generator = variant_from_string(j.value("generator", std::string("generic")));
    c.reasoning = reasoning_from_string(j.value("reasoning", std::string("one_pass")));
    c.max_iterations = j.value("max_iterations", c.max_iterations);
    c.k = j.value("k", c.k);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("configuration: ") + e.what());
  }
  if (j.contains("prompt_version") && j.at("prompt_version") != prompts::get("rag_answer").version) {
    throw Error(ErrorCode::ConfigError, "configuration '" + c.config_id + "' asks for prompt " +
                                            j.at("prompt_version").dump() + ", which this build does not ship");
  }
  if (c.config_id.empty()) throw Error(ErrorCode::ConfigError, "configuration id is empty");
  if (c.k == 0) throw Error(ErrorCode::ConfigError, "configuration '" + c.config_id + "' has k = 0");
  if (c.max_iterations == 0) throw Error(ErrorCode::ConfigError, "configuration '" + c.config_id + "' has max_iterations = 0");
  return c;
}

std::vector<SystemConfiguration> canonical_presets() {
  using MV = ModelVariant;
  return {
      {"generic-rag", "Generic RAG", MV::Generic, MV::Generic, Reasoning::OnePass, 5, kDefaultTopK},
      {"ft-generator", "Fine-Tuned Generator", MV::Generic, MV::FineTuned, Reasoning::OnePass, 5, kDefaultTopK},
      {"ft-retriever", "Fine-Tuned Retriever", MV::FineTuned, MV::Generic, Reasoning::OnePass, 5, kDefaultTopK},
      {"fully-ft", "Fully Fine-Tuned RAG", MV::FineTuned, MV::FineTuned, Reasoning::OnePass, 5, kDefaultTopK},
      {"generic-rag-ooda", "Generic RAG with OODA Reasoning", MV::Generic, MV::Generic, Reasoning::Ooda, 5,
       kDefaultTopK},
  };
}

const SystemConfiguration& preset(std::string_view config_id) {
  static const auto presets = canonical_presets();
  for (const auto& p : presets) {
    if (p.config_id == config_id) return p;
  }
  throw Error(ErrorCode::ConfigError, "unknown preset '" + std::string(config_id) + "'");
}

// ---- run config ----

std::filesystem::path RunConfig::resolve(const std::filesystem::path& p) const {
  if (p.empty() || p.is_absolute() || base_dir.empty()) return p;
  return base_dir / p;
}

void RunConfig::validate() const {
  if (dataset.empty()) throw Error(ErrorCode::ConfigError, "run config needs a dataset");
  if (corpus_paths.empty()) throw Error(ErrorCode::ConfigError, "run config needs at least one corpus path");
  finrag::validate(chunking);
  if (workers == 0) throw Error(ErrorCode::ConfigError, "workers must be at least 1");
  if (configurations.empty()) throw Error(ErrorCode::ConfigError, "run config lists no configurations");
  std::set<std::string> ids;
  for (const auto& c : configurations) {
    if (!ids.insert(c.config_id).second) throw Error(ErrorCode::ConfigError, "configuration '" + c.config_id + "' repeats");
    if (c.retriever == ModelVariant::FineTuned && !backends.fine_tuned_embedder) {
      throw Error(ErrorCode::ConfigError, "'" + c.config_id + "' needs backends.embedders.fine_tuned");
    }
    if (c.generator == ModelVariant::FineTuned && !backends.fine_tuned_generator) {
      throw Error(ErrorCode::ConfigError, "'" + c.config_id + "' needs backends.generators.fine_tuned");
    }
  }
  for (const auto& [id, _] : human_verdicts) {
    if (!ids.count(id)) throw Error(ErrorCode::ConfigError, "human verdicts for unknown configuration '" + id + "'");
  }
}

Json RunConfig::to_json() const {
  auto abs = [&](const std::filesystem::path& p) { return std::filesystem::absolute(resolve(p)).lexically_normal().string(); };
  Json paths = Json::array();
  for (const auto& p : corpus_paths) paths.push_back(abs(p));
  Json embedders{{"generic", backends.generic_embedder.to_json()}};
  if (backends.fine_tuned_embedder) embedders["fine_tuned"] = backends.fine_tuned_embedder->to_json();
  Json generators{{"generic", backends.generic_generator.to_json()}};
  if (backends.fine_tuned_generator) generators["fine_tuned"] = backends.fine_tuned_generator->to_json();
  Json configs = Json::array();
  for (const auto& c : configurations) {
    auto j = c.to_json();
    j.erase("prompt_version");
    configs.push_back(j);
  }
  Json verdicts = Json::object();
  for (const auto& [id, p] : human_verdicts) verdicts[id] = abs(p);
  return {{"dataset", abs(dataset)},
          {"corpus",
           {{"paths", paths},
            {"chunk_size", chunking.size_tokens},
            {"overlap", chunking.overlap_tokens},
            {"sentence_snap", chunking.sentence_snap}}},
          {"split", {{"n_train", n_train}, {"seed", split_seed}, {"evaluate", evaluate_all ? "all" : "test"}}},
          {"backends", {{"embedders", embedders}, {"generators", generators}, {"judge", backends.judge.to_json()}}},
          {"configurations", configs},
          {"context_budget_tokens", context_budget_tokens},
          {"workers", workers},
          {"timeouts", {{"one_pass_s", timeout_one_pass_s}, {"ooda_s", timeout_ooda_s}}},
          {"human_verdicts", verdicts},
          {"output_dir", abs(output_dir)}};
}

RunConfig RunConfig::from_json(const Json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, "run config must be a JSON object");
  reject_unknown_keys(j, {"dataset", "corpus", "split", "backends", "configurations", "context_budget_tokens", "workers",
                          "timeouts", "human_verdicts", "output_dir"},
                      "run config");
  RunConfig c;
  c.base_dir = base_dir;
  try {
    c.dataset = j.at("dataset").get<std::string>();
    const auto& corpus = j.at("corpus");
    reject_unknown_keys(corpus, {"paths", "chunk_size", "overlap", "sentence_snap"}, "corpus");
    for (const auto& p : corpus.at("paths")) c.corpus_paths.emplace_back(p.get<std::string>());
    c.chunking.size_tokens = corpus.value("chunk_size", c.chunking.size_tokens);
    c.chunking.overlap_tokens = corpus.value("overlap", c.chunking.overlap_tokens);
    c.chunking.sentence_snap = corpus.value("sentence_snap", c.chunking.sentence_snap);
    if (j.contains("split")) {
      const auto& s = j.at("split");
      reject_unknown_keys(s, {"n_train", "seed", "evaluate"}, "split");
      c.n_train = s.value("n_train", c.n_train);
      c.split_seed = s.value("seed", c.split_seed);
      const auto evaluate = s.value("evaluate", std::string("test"));
      if (evaluate != "test" && evaluate != "all") throw Error(ErrorCode::ConfigError, "split.evaluate must be 'test' or 'all'");
      c.evaluate_all = evaluate == "all";
    }
    const auto& b = j.at("backends");
    reject_unknown_keys(b, {"embedders", "generators", "judge"}, "backends");
    const auto& emb = b.at("embedders");
    reject_unknown_keys(emb, {"generic", "fine_tuned"}, "backends.embedders");
    c.backends.generic_embedder = EmbedderBackendSpec::from_json(emb.at("generic"));
    if (emb.contains("fine_tuned")) c.backends.fine_tuned_embedder = EmbedderBackendSpec::from_json(emb.at("fine_tuned"));
    const auto& gen = b.at("generators");
    reject_unknown_keys(gen, {"generic", "fine_tuned"}, "backends.generators");
    c.backends.generic_generator = GeneratorBackendSpec::from_json(gen.at("generic"), base_dir);
    if (gen.contains("fine_tuned")) {
      c.backends.fine_tuned_generator = GeneratorBackendSpec::from_json(gen.at("fine_tuned"), base_dir);
    }
    c.backends.judge = GeneratorBackendSpec::from_json(b.at("judge"), base_dir);
    if (j.contains("configurations")) {
      for (const auto& cj : j.at("configurations")) c.configurations.push_back(SystemConfiguration::from_json(cj));
    } else {
      c.configurations = canonical_presets();
    }
    c.context_budget_tokens = j.value("context_budget_tokens", c.context_budget_tokens);
    c.workers = j.value("workers", c.workers);
    if (j.contains("timeouts")) {
      const auto& t = j.at("timeouts");
      reject_unknown_keys(t, {"one_pass_s", "ooda_s"}, "timeouts");
      c.timeout_one_pass_s = t.value("one_pass_s", c.timeout_one_pass_s);
      c.timeout_ooda_s = t.value("ooda_s", c.timeout_ooda_s);
    }
    if (j.contains("human_verdicts")) {
      for (const auto& [id, p] : j.at("human_verdicts").items()) c.human_verdicts[id] = p.get<std::string>();
    }
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("run config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
  return from_json(j, path.parent_path());
}

// ---- stack ----

BenchStack::BenchStack(const RunConfig& config) {
  CorpusStore store;
  std::string failures;
  for (const auto& p : config.corpus_paths) {
    auto r = import_path(store, config.resolve(p));
    for (const auto& f : r.failures) failures += "\n  " + f.source + ": " + f.message;
  }
  if (!failures.empty()) throw Error(ErrorCode::ConfigError, "corpus import failed:" + failures);
  if (store.size() == 0) throw Error(ErrorCode::ConfigError, "corpus is empty");
  documents_ = store.size();
  auto chunks = chunk_corpus(store, config.chunking);
  std::string digest;
  for (const auto& c : chunks) digest += c.chunk_id + '\t' + c.text + '\n';
  corpus_fingerprint_ = hex64(hash64(digest));

  embedders_[ModelVariant::Generic] = make_embedder(config.backends.generic_embedder);
  if (config.backends.fine_tuned_embedder) {
    embedders_[ModelVariant::FineTuned] = make_embedder(*config.backends.fine_tuned_embedder);
  }
  for (const auto& [variant, emb] : embedders_) {
    indexes_[variant] = std::make_shared<const VectorIndex>(build_index(*emb, chunks));
  }
  generators_[ModelVariant::Generic] = make_generator(config.backends.generic_generator);
  if (config.backends.fine_tuned_generator) {
    generators_[ModelVariant::FineTuned] = make_generator(*config.backends.fine_tuned_generator);
  }
  judge_ = make_generator(config.backends.judge);
  chunks_ = std::make_shared<const ChunkTable>(make_chunk_table(std::move(chunks)));
}

std::shared_ptr<Embedder> BenchStack::embedder(ModelVariant v) const {
  auto it = embedders_.find(v);
  if (it == embedders_.end()) throw Error(ErrorCode::ConfigError, "no " + std::string(to_string(v)) + " embedder");
  return it->second;
}

std::shared_ptr<const VectorIndex> BenchStack::index(ModelVariant v) const {
  auto it = indexes_.find(v);
  if (it == indexes_.end()) throw Error(ErrorCode::ConfigError, "no " + std::string(to_string(v)) + " index");
  return it->second;
}

std::shared_ptr<Generator> BenchStack::generator(ModelVariant v) const {
  auto it = generators_.find(v);
  if (it == generators_.end()) throw Error(ErrorCode::ConfigError, "no " + std::string(to_string(v)) + " generator");
  return it->second;
}

// ---- runner ----

std::vector<MetricRecord> run_configuration(const SystemConfiguration& config,
                                            const std::vector<BenchmarkQuestion>& questions, const BenchStack& stack,
                                            const RunnerOptions& options) {
  RagConfig rag;
  rag.config_id = config.config_id;
  rag.k = config.k;
  rag.context_budget_tokens = options.context_budget_tokens;
  auto engine = std::make_shared<RagEngine>(stack.embedder(config.retriever), stack.index(config.retriever),
                                            stack.chunks(), stack.generator(config.generator), rag);
  std::shared_ptr<OodaReasoner> reasoner;
  if (config.reasoning == Reasoning::Ooda) {
    OodaConfig oc;
    oc.max_iterations = config.max_iterations;
    reasoner = std::make_shared<OodaReasoner>(stack.generator(config.generator), oc);
  }
  auto judge = std::make_shared<Judge>(stack.judge());

  std::vector<const BenchmarkQuestion*> todo;
  for (const auto& q : questions) {
    if (!options.skip.count(q.question_id)) todo.push_back(&q);
  }
  std::vector<std::optional<MetricRecord>> slots(todo.size());
  std::atomic<std::size_t> next{0};
  std::mutex report_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < todo.size(); i = next++) {
      QuestionJob job{config, *todo[i], engine, reasoner, judge, stack.similarity_embedder(), options.output_dir};
      slots[i] = run_with_timeout(job, options.timeout_s);
      if (options.on_record) {
        std::lock_guard lock(report_mu);
        options.on_record(*slots[i]);
      }
    }
  };
  const auto n = std::max<std::size_t>(1, std::min(options.workers, todo.size()));
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < n; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();

  std::vector<MetricRecord> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.question_id < b.question_id; });
  return out;
}

// ---- report ----

Report render_report(const std::vector<SystemConfiguration>& configs,
                     const std::map<std::string, std::vector<MetricRecord>>& records) {
  static const std::vector<MetricRecord> kNone;
  auto records_of = [&](const std::string& id) -> const std::vector<MetricRecord>& {
    auto it = records.find(id);
    return it == records.end() ? kNone : it->second;
  };
  Report report;

  std::vector<std::vector<std::string>> t1;
  report.retrieval_csv = "config_id,label,questions,relevancy,faithfulness,context_similarity,context_similarity_binary\n";
  for (const auto& c : configs) {
    // Iterative retrieval is not comparable with one-step retrieval.
    if (c.reasoning != Reasoning::OnePass) continue;
    const auto row = retrieval_means(records_of(c.config_id));
    t1.push_back({c.label, fmt_fixed3(row.relevancy), fmt_fixed3(row.faithfulness), fmt_fixed3(row.context_similarity)});
    report.retrieval_csv += csv_field(c.config_id) + "," + csv_field(c.label) + "," + std::to_string(row.questions) +
                            "," + csv_number(row.relevancy) + "," + csv_number(row.faithfulness) + "," +
                            csv_number(row.context_similarity) + "," + csv_number(row.context_similarity_binary) + "\n";
  }

  std::vector<std::vector<std::string>> t2;
  report.correctness_csv =
      "config_id,label,questions,failed,human_easier,human_harder,human_overall,automated_correctness\n";
  std::string counts;
  for (const auto& c : configs) {
    const auto& recs = records_of(c.config_id);
    const auto row = aggregate(recs);
    const auto failed = std::count_if(recs.begin(), recs.end(), [](const MetricRecord& r) { return r.failed; });
    auto human = [&](const std::optional<double>& v) { return row.human_pending ? std::string("pending") : format_percent(v); };
    auto human_csv = [&](const std::optional<double>& v) { return row.human_pending ? std::string("pending") : csv_number(v); };
    t2.push_back({c.label, human(row.easier), human(row.harder), human(row.overall), format_percent(row.automated)});
    report.correctness_csv += csv_field(c.config_id) + "," + csv_field(c.label) + "," + std::to_string(row.questions) +
                              "," + std::to_string(failed) + "," + human_csv(row.easier) + "," +
                              human_csv(row.harder) + "," + human_csv(row.overall) + "," + csv_number(row.automated) +
                              "\n";
    counts += "  " + c.config_id + ": " + std::to_string(row.questions) + " questions, " + std::to_string(failed) +
              " failed\n";
  }

  report.text = "Table 1. Retrieval quality metrics of question-answering systems\n\n";
  report.text += t1.empty() ? "(no one-pass configurations)\n"
                            : render_table({"Configuration", "Relevancy", "Faithfulness", "Context similarity"}, t1);
  report.text += "\nConfigurations with OODA reasoning retrieve iteratively and are not listed in Table 1.\n";
  report.text += "\nTable 2. Answer correctness metrics of question-answering systems\n\n";
  report.text += render_table({"Configuration", "Human Evaluation EASIER", "Human Evaluation HARDER",
                               "Human Evaluation OVERALL", "Automated Correctness OVERALL"},
                              t2);
  report.text += "\nEASIER QUESTIONS: 0-RETRIEVE, 1-COMPARE, 2-CALC-CHANGE\n";
  report.text += "HARDER QUESTIONS: 3-CALC-COMPLEX, 4-CALC-AND-JUDGE, 5-EXPLAIN-FACTORS, 6-OTHER-ADVANCED\n";
  report.text += "Automated correctness is the 1-5 judge score mapped to (score - 1) / 4.\n";
  report.text += "\nQuestions per configuration:\n" + counts;
  return report;
}

// ---- full runs ----

namespace {

RunResult execute(const RunConfig& config, const std::vector<BenchmarkQuestion>& dataset,
                  const std::vector<BenchmarkQuestion>& train, const std::vector<BenchmarkQuestion>& test,
                  const RunOptions& options) {
  const auto out_dir = config.resolve(config.output_dir);
  const auto& evaluated = config.evaluate_all ? dataset : test;
  BenchStack stack(config);

  Json configs = Json::array();
  for (const auto& c : config.configurations) configs.push_back(config_json_with_backends(c, stack));
  Json prompt_versions = Json::array();
  for (const auto& n : prompts::names()) prompt_versions.push_back(prompts::get(n).version);
  Json manifest{{"format", kManifestFormat},
                {"created", options.created ? *options.created : utc_now()},
                {"run_config", config.to_json()},
                {"dataset",
                 {{"path", std::filesystem::absolute(config.resolve(config.dataset)).lexically_normal().string()},
                  {"fingerprint", dataset_fingerprint(dataset)},
                  {"questions", dataset.size()}}},
                {"split",
                 {{"algorithm", kPermutationAlgorithm},
                  {"seed", config.split_seed},
                  {"n_train", config.n_train},
                  {"evaluate", config.evaluate_all ? "all" : "test"},
                  {"train_ids", ids_of(train)},
                  {"test_ids", ids_of(test)}}},
                {"corpus",
                 {{"fingerprint", stack.corpus_fingerprint()},
                  {"documents", stack.document_count()},
                  {"chunks", stack.chunk_count()},
                  {"tokenizer", default_tokenizer().name()}}},
                {"configurations", configs},
                {"judge", stack.judge()->fingerprint()},
                {"prompts", prompt_versions}};
  try {
    std::filesystem::create_directories(out_dir / "records");
    write_file_atomic(out_dir / "manifest.json", manifest.dump(2) + "\n");
  } catch (const std::exception& e) {
    throw Error(ErrorCode::ManifestWriteFailure, std::string("cannot write manifest: ") + e.what());
  }

  RunResult result;
  result.output_dir = out_dir;
  for (const auto& c : config.configurations) {
    const auto final_path = out_dir / "records" / (c.config_id + ".jsonl");
    const auto partial_path = out_dir / "records" / (c.config_id + ".partial.jsonl");
    std::map<std::string, MetricRecord> done;
    if (options.resume) {
      for (const auto& p : {final_path, partial_path}) {
        if (!std::filesystem::exists(p)) continue;
        for (auto& r : load_records(p)) {
          if (!r.failed) done[r.question_id] = std::move(r);
        }
      }
    } else {
      std::filesystem::remove(partial_path);
    }
    RunnerOptions ro;
    ro.workers = config.workers;
    ro.timeout_s = c.reasoning == Reasoning::Ooda ? config.timeout_ooda_s : config.timeout_one_pass_s;
    ro.context_budget_tokens = config.context_budget_tokens;
    ro.output_dir = out_dir;
    for (const auto& [id, _] : done) ro.skip.insert(id);
    std::ofstream partial(partial_path, std::ios::app);
    ro.on_record = [&](const MetricRecord& r) { partial << r.to_json().dump() << "\n" << std::flush; };
    log_to(options, c.config_id + ": " + std::to_string(evaluated.size() - ro.skip.size()) + " question(s) to run, " +
                        std::to_string(ro.skip.size()) + " resumed");
    auto fresh = run_configuration(c, evaluated, stack, ro);
    partial.close();

    std::set<std::string> wanted;
    for (const auto& q : evaluated) wanted.insert(q.question_id);
    std::vector<MetricRecord> records;
    for (auto& [id, r] : done) {
      if (wanted.count(id)) records.push_back(std::move(r));
    }
    for (auto& r : fresh) records.push_back(std::move(r));
    std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.question_id < b.question_id; });
    result.records[c.config_id] = std::move(records);
  }

  merge_verdicts(result.records, [&] {
    std::map<std::string, std::filesystem::path> files;
    for (const auto& [id, p] : config.human_verdicts) files[id] = config.resolve(p);
    return files;
  }());
  for (const auto& c : config.configurations) {
    save_records(out_dir / "records" / (c.config_id + ".jsonl"), result.records[c.config_id]);
    std::filesystem::remove(out_dir / "records" / (c.config_id + ".partial.jsonl"));
  }
  result.report = render_report(config.configurations, result.records);
  write_report_files(out_dir, result.report);
  log_to(options, "report written to " + (out_dir / "report.txt").string());
  return result;
}

}  // namespace

RunResult run_benchmark(const RunConfig& config, const RunOptions& options) {
  config.validate();
  std::vector<std::string> warnings;
  auto dataset = load_dataset(config.resolve(config.dataset), &warnings);
  for (const auto& w : warnings) log_to(options, "warning: " + w);
  if (dataset.empty()) throw Error(ErrorCode::InvalidArgument, "dataset holds no questions");
  std::vector<BenchmarkQuestion> train, test;
  if (config.evaluate_all && config.n_train == 0) {
    test = dataset;
    std::sort(test.begin(), test.end(), [](const auto& a, const auto& b) { return a.question_id < b.question_id; });
  } else {
    std::tie(train, test) = split_train_test(dataset, config.n_train, config.split_seed);
  }
  return execute(config, dataset, train, test, options);
}

RunResult run_from_manifest(const std::filesystem::path& manifest_path,
                            const std::optional<std::filesystem::path>& output_dir, const RunOptions& options) {
  Json manifest;
  try {
    manifest = Json::parse(read_file(manifest_path));
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseError, manifest_path.string() + ": " + e.what());
  }
  if (manifest.value("format", "") != kManifestFormat) {
    throw Error(ErrorCode::ParseError, manifest_path.string() + " is not a run manifest");
  }
  auto config = RunConfig::from_json(manifest.at("run_config"), {});
  if (output_dir) config.output_dir = std::filesystem::absolute(*output_dir);
  auto result = [&] {
    auto dataset = load_dataset(config.resolve(config.dataset));
    const auto expected = manifest.at("dataset").at("fingerprint").get<std::string>();
    if (dataset_fingerprint(dataset) != expected) {
      throw Error(ErrorCode::ConfigError, "dataset changed since the manifest was written (fingerprint " +
                                              dataset_fingerprint(dataset) + ", expected " + expected + ")");
    }
    std::vector<BenchmarkQuestion> train, test;
    if (config.evaluate_all && config.n_train == 0) {
      test = dataset;
      std::sort(test.begin(), test.end(), [](const auto& a, const auto& b) { return a.question_id < b.question_id; });
    } else {
      std::tie(train, test) = split_train_test(dataset, config.n_train, config.split_seed);
    }
    const auto& split = manifest.at("split");
    if (ids_of(test) != split.at("test_ids").get<std::vector<std::string>>() ||
        ids_of(train) != split.at("train_ids").get<std::vector<std::string>>()) {
      throw Error(ErrorCode::ConfigError, "split no longer matches the manifest");
    }
    RunOptions o = options;
    if (!o.created) o.created = manifest.value("created", std::string{});
    return execute(config, dataset, train, test, o);
  }();
  return result;
}

Report report_from_run(const std::filesystem::path& run_dir,
                       const std::map<std::string, std::filesystem::path>& human_verdicts) {
  Json manifest;
  try {
    manifest = Json::parse(read_file(run_dir / "manifest.json"));
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseError, (run_dir / "manifest.json").string() + ": " + e.what());
  }
  std::vector<SystemConfiguration> configs;
  for (const auto& cj : manifest.at("configurations")) {
    auto j = cj;
    j.erase("embedder_fingerprint");
    j.erase("generator_fingerprint");
    configs.push_back(SystemConfiguration::from_json(j));
  }
  std::map<std::string, std::vector<MetricRecord>> records;
  for (const auto& c : configs) records[c.config_id] = load_records(run_dir / "records" / (c.config_id + ".jsonl"));
  merge_verdicts(records, human_verdicts);
  for (const auto& c : configs) save_records(run_dir / "records" / (c.config_id + ".jsonl"), records[c.config_id]);
  auto report = render_report(configs, records);
  write_report_files(run_dir, report);
  return report;
}

}  // namespace finrag
