#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <map>
#include <memory>
#include <set>

#include "finrag/benchmark.hpp"
#include "finrag/dataprep.hpp"
#include "finrag/evalsuite.hpp"
#include "finrag/ooda.hpp"
#include "finrag/rag_engine.hpp"
#include "finrag/util.hpp"

namespace finrag::cli {

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmbedderUnavailable:
    case ErrorCode::GeneratorUnavailable:
    case ErrorCode::MetricUnavailable:
    case ErrorCode::Timeout:
      return kBackendUnavailable;
    case ErrorCode::InvalidArgument:
    case ErrorCode::DuplicateDocument:
    case ErrorCode::EmptyDocument:
    case ErrorCode::InvalidChunkSpec:
    case ErrorCode::NotFound:
    case ErrorCode::InvalidQuestion:
    case ErrorCode::ReferenceMissing:
    case ErrorCode::ParseError:
    case ErrorCode::DuplicateVerdict:
    case ErrorCode::UnknownQuestion:
    case ErrorCode::UnknownCategory:
    case ErrorCode::InvalidSplit:
    case ErrorCode::InvalidSample:
    case ErrorCode::IoError:
    case ErrorCode::ConfigError:
      return kInputError;
    default:
      return kEngineError;
  }
}

std::filesystem::path EngineConfig::resolve(const std::filesystem::path& p) const {
  if (p.empty() || p.is_absolute() || base_dir.empty()) return p;
  return base_dir / p;
}

void EngineConfig::validate() const {
  finrag::validate(chunking);
  embedder.validate();
  generator.validate();
  if (judge) judge->validate();
  if (k == 0) throw Error(ErrorCode::ConfigError, "k must be at least 1");
  if (max_iterations == 0) throw Error(ErrorCode::ConfigError, "reasoning.max_iterations must be at least 1");
  if (workers == 0) throw Error(ErrorCode::ConfigError, "workers must be at least 1");
}

EngineConfig EngineConfig::from_json(const Json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, "engine config must be a JSON object");
  reject_unknown_keys(j, {"workspace", "corpus", "embedder", "generator", "judge", "k", "context_budget_tokens",
                          "reasoning", "seed", "workers"},
                      "engine config");
  EngineConfig c;
  c.base_dir = base_dir;
  try {
    if (j.contains("workspace")) c.workspace = j.at("workspace").get<std::string>();
    if (j.contains("corpus")) {
      const auto& corpus = j.at("corpus");
      reject_unknown_keys(corpus, {"paths", "chunk_size", "overlap", "sentence_snap"}, "corpus");
      for (const auto& p : corpus.value("paths", Json::array())) c.corpus_paths.emplace_back(p.get<std::string>());
      c.chunking.size_tokens = corpus.value("chunk_size", c.chunking.size_tokens);
      c.chunking.overlap_tokens = corpus.value("overlap", c.chunking.overlap_tokens);
      c.chunking.sentence_snap = corpus.value("sentence_snap", c.chunking.sentence_snap);
    }
    if (!j.contains("embedder")) throw Error(ErrorCode::ConfigError, "engine config needs an embedder");
    if (!j.contains("generator")) throw Error(ErrorCode::ConfigError, "engine config needs a generator");
    c.embedder = EmbedderBackendSpec::from_json(j.at("embedder"));
    c.generator = GeneratorBackendSpec::from_json(j.at("generator"), base_dir);
    if (j.contains("judge")) c.judge = GeneratorBackendSpec::from_json(j.at("judge"), base_dir);
    c.k = j.value("k", c.k);
    c.context_budget_tokens = j.value("context_budget_tokens", c.context_budget_tokens);
    if (j.contains("reasoning")) {
      const auto& r = j.at("reasoning");
      reject_unknown_keys(r, {"mode", "max_iterations"}, "reasoning");
      const auto mode = r.value("mode", std::string("one_pass"));
      if (mode != "one_pass" && mode != "ooda") {
        throw Error(ErrorCode::ConfigError, "reasoning.mode must be 'one_pass' or 'ooda'");
      }
      c.ooda = mode == "ooda";
      c.max_iterations = r.value("max_iterations", c.max_iterations);
    }
    c.seed = j.value("seed", c.seed);
    c.workers = j.value("workers", c.workers);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("engine config: ") + e.what());
  }
  c.validate();
  return c;
}

EngineConfig EngineConfig::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::ConfigError, "config file " + path.string() + " not found");
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
  return from_json(j, path.parent_path());
}

namespace {

namespace fs = std::filesystem;

fs::path corpus_file(const EngineConfig& c) { return c.workspace_dir() / "corpus.jsonl"; }
fs::path chunks_file(const EngineConfig& c) { return c.workspace_dir() / "chunks.jsonl"; }
fs::path index_file(const EngineConfig& c) { return c.workspace_dir() / "index.jsonl"; }

std::vector<Chunk> require_chunks(const EngineConfig& c) {
  if (!fs::exists(chunks_file(c))) {
    throw Error(ErrorCode::NotFound, "no chunks in " + c.workspace_dir().string() + "; run 'finrag ingest' first");
  }
  return load_chunks(chunks_file(c));
}

std::shared_ptr<RagEngine> open_engine(const EngineConfig& c, std::size_t k) {
  if (!fs::exists(index_file(c))) {
    throw Error(ErrorCode::EmptyIndex, "no index in " + c.workspace_dir().string() + "; run 'finrag index' first",
                Stage::Retrieve);
  }
  auto index = std::make_shared<const VectorIndex>(VectorIndex::load(index_file(c)));
  auto embedder = make_embedder(c.embedder);
  if (index->fingerprint() != embedder->fingerprint()) {
    throw Error(ErrorCode::ConfigError, "index was built with " + index->fingerprint() + " but the config names " +
                                            embedder->fingerprint() + "; run 'finrag index' again");
  }
  RagConfig rag;
  rag.config_id = c.ooda ? "generic-rag-ooda" : "generic-rag";
  rag.k = k;
  rag.context_budget_tokens = c.context_budget_tokens;
  return std::make_shared<RagEngine>(embedder, index,
                                     std::make_shared<const ChunkTable>(make_chunk_table(require_chunks(c))),
                                     make_generator(c.generator), rag);
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

struct Context {
  std::ostream& out;
  std::ostream& err;
};

int cmd_ingest(Context& ctx, const fs::path& config_path, const std::vector<std::string>& paths, bool force) {
  const auto c = EngineConfig::load(config_path);
  CorpusStore store;
  if (!force && fs::exists(corpus_file(c))) store = CorpusStore::load(corpus_file(c));
  std::vector<fs::path> sources;
  for (const auto& p : c.corpus_paths) sources.push_back(c.resolve(p));
  for (const auto& p : paths) sources.emplace_back(p);
  if (sources.empty()) throw Error(ErrorCode::InvalidArgument, "nothing to ingest: no corpus paths given");

  std::vector<ImportFailure> failures;
  for (const auto& s : sources) {
    auto r = import_path(store, s);
    failures.insert(failures.end(), r.failures.begin(), r.failures.end());
  }
  const auto chunks = chunk_corpus(store, c.chunking);
  std::size_t tokens = 0;
  for (const auto* d : store.documents()) tokens += default_tokenizer().tokenize_spans(d->text).size();
  fs::create_directories(c.workspace_dir());
  store.save(corpus_file(c));
  save_chunks(chunks, chunks_file(c));

  for (const auto& f : failures) ctx.err << "error: " << f.source << ": " << f.message << "\n";
  ctx.out << Json{{"documents", store.size()}, {"chunks", chunks.size()}, {"tokens", tokens}}.dump() << "\n";
  return failures.empty() ? kOk : kInputError;
}

int cmd_index(Context& ctx, const fs::path& config_path, const std::optional<std::string>& created) {
  const auto c = EngineConfig::load(config_path);
  const auto chunks = require_chunks(c);
  auto embedder = make_embedder(c.embedder);
  const auto index = build_index(*embedder, chunks);
  index.save(index_file(c), created);
  ctx.out << Json{{"chunks", index.size()}, {"dims", index.dims()}, {"embedder", index.fingerprint()}}.dump() << "\n";
  return kOk;
}

int cmd_ask(Context& ctx, const fs::path& config_path, const std::string& question, std::optional<std::size_t> k) {
  const auto c = EngineConfig::load(config_path);
  const auto engine = open_engine(c, k.value_or(c.k));
  const auto answer = engine->answer_one_pass(question);
  ctx.out << answer.answer_text << "\n\nEvidence:\n";
  for (std::size_t i = 0; i < answer.retrieved.size(); ++i) {
    const auto& r = answer.retrieved[i];
    ctx.out << "  " << r.hit.rank << ". " << r.hit.chunk_id << "  score=" << fixed(r.hit.score, 6)
            << (i < answer.contexts_in_prompt ? "" : "  (over budget)") << "\n";
  }
  return kOk;
}

int cmd_solve(Context& ctx, const fs::path& config_path, const std::string& question, const std::string& instructions,
              std::optional<std::size_t> max_iterations, std::optional<fs::path> trace_path,
              const std::optional<fs::path>& replay) {
  const auto c = EngineConfig::load(config_path);
  auto engine = open_engine(c, c.k);
  OodaConfig oc;
  oc.max_iterations = c.max_iterations;
  OodaReasoner reasoner(make_generator(c.generator), oc);

  std::optional<TraceSummary> recorded;
  Task task{question, instructions, {std::make_shared<RagResource>(engine)}};
  std::size_t iterations = max_iterations.value_or(c.max_iterations);
  if (replay) {
    recorded = read_trace(*replay);
    task.question = recorded->question;
    task.instructions = recorded->instructions;
    iterations = recorded->max_iterations;
  } else if (trim(question).empty()) {
    throw Error(ErrorCode::InvalidQuestion, "solve needs a question or --replay");
  }
  auto episode = reasoner.run(task, iterations);
  const auto& conclusion = *episode.conclusion;
  if (!trace_path) {
    trace_path = c.workspace_dir() / "traces" / ("solve-" + hex64(hash64(task.question)).substr(0, 12) + ".jsonl");
  }
  fs::create_directories(trace_path->parent_path().empty() ? fs::path(".") : trace_path->parent_path());
  write_trace(*trace_path, episode.trace);

  ctx.out << conclusion.answer_text << "\n\n";
  ctx.out << "iterations: " << conclusion.iterations_used << "\n";
  ctx.out << "verification: " << to_string(conclusion.verification) << "\n";
  ctx.out << "evidence:";
  for (auto id : conclusion.evidence) ctx.out << " E" << id;
  ctx.out << "\ntrace: " << trace_path->string() << "\n";
  if (recorded) {
    const bool same = recorded->conclusion.answer_text == conclusion.answer_text &&
                      recorded->conclusion.verification == conclusion.verification &&
                      recorded->conclusion.evidence == conclusion.evidence &&
                      recorded->conclusion.iterations_used == conclusion.iterations_used;
    ctx.out << "replay: " << (same ? "identical" : "differs") << "\n";
    return same ? kOk : kEngineError;
  }
  return kOk;
}

int cmd_bench(Context& ctx, const std::optional<fs::path>& run_config, const std::optional<fs::path>& manifest,
              const std::optional<fs::path>& out_dir, bool resume, const std::optional<std::string>& created) {
  RunOptions opts;
  opts.resume = resume;
  opts.created = created;
  opts.log = [&](const std::string& m) { ctx.err << m << "\n"; };
  RunResult result;
  if (manifest) {
    result = run_from_manifest(*manifest, out_dir, opts);
  } else {
    if (!run_config) throw Error(ErrorCode::InvalidArgument, "bench needs a run config or --from-manifest");
    auto config = RunConfig::load(*run_config);
    if (out_dir) config.output_dir = fs::absolute(*out_dir);
    result = run_benchmark(config, opts);
  }
  ctx.out << result.report.text;
  std::size_t failed = 0;
  for (const auto& [_, recs] : result.records) {
    failed += std::count_if(recs.begin(), recs.end(), [](const MetricRecord& r) { return r.failed; });
  }
  if (failed) ctx.err << failed << " question(s) failed; see " << (result.output_dir / "records").string() << "\n";
  return kOk;
}

void write_triplet_outputs(Context& ctx, const fs::path& out_dir, const TripletBatch& batch,
                           const std::vector<Triplet>& triplets) {
  fs::create_directories(out_dir);
  save_triplets(out_dir / "triplets.jsonl", triplets);
  const auto emb = export_embedder_pairs(triplets, out_dir / "embedder_pairs.jsonl");
  const auto gen = export_generator_pairs(triplets, out_dir / "generator_pairs.jsonl");
  auto rejected = batch.rejections;
  rejected.insert(rejected.end(), batch.errors.begin(), batch.errors.end());
  save_rejections(out_dir / "rejections.jsonl", rejected);
  for (const auto& e : batch.errors) ctx.err << "error: " << e.source_id << ": " << e.reason << "\n";
  ctx.out << Json{{"triplets", triplets.size()},
                  {"embedder_pairs", emb},
                  {"generator_pairs", gen},
                  {"rejected", batch.rejections.size()},
                  {"errors", batch.errors.size()}}
                 .dump()
          << "\n";
}

int cmd_dataprep_generate(Context& ctx, const fs::path& config_path, std::size_t per_chunk,
                          std::optional<std::size_t> sample, const fs::path& out_dir) {
  const auto c = EngineConfig::load(config_path);
  auto generator = make_generator(c.generator);
  auto batch = generate_triplets(require_chunks(c), *generator, per_chunk, {}, c.workers);
  auto triplets = sample ? sample_subset(batch.triplets, *sample, c.seed) : batch.triplets;
  write_triplet_outputs(ctx, out_dir, batch, triplets);
  return batch.errors.empty() ? kOk : kBackendUnavailable;
}

int cmd_dataprep_dataset(Context& ctx, const fs::path& dataset, std::optional<std::size_t> sample,
                         std::uint64_t seed, const fs::path& out_dir) {
  const auto batch = triplets_from_dataset(load_dataset(dataset));
  for (const auto& r : batch.rejections) ctx.err << "skipped " << r.source_id << ": " << r.reason << "\n";
  auto triplets = sample ? sample_subset(batch.triplets, *sample, seed) : batch.triplets;
  write_triplet_outputs(ctx, out_dir, batch, triplets);
  return kOk;
}

int cmd_dataprep_financebench(Context& ctx, const fs::path& input, const std::optional<fs::path>& categories_path,
                              const std::optional<fs::path>& corpus_path, const fs::path& out) {
  std::map<std::string, int> categories;
  if (categories_path) {
    Json j;
    try {
      j = Json::parse(read_file(*categories_path));
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::ParseError, categories_path->string() + ": " + e.what());
    }
    if (!j.is_object()) throw Error(ErrorCode::ParseError, categories_path->string() + " must map ids to categories");
    for (const auto& [id, v] : j.items()) categories[id] = parse_category(v);
  }
  std::set<std::string> known;
  if (corpus_path) {
    CorpusStore store;
    auto r = import_path(store, *corpus_path);
    for (const auto& f : r.failures) ctx.err << "error: " << f.source << ": " << f.message << "\n";
    for (const auto* d : store.documents()) known.insert(d->doc_id);
  }
  const auto result = convert_financebench(input, known, categories);
  for (const auto& f : result.flagged) {
    ctx.err << "flagged line " << f.line << " (" << f.question_id << "): " << f.reason << "\n";
  }
  save_dataset(out, result.questions);
  ctx.out << Json{{"questions", result.questions.size()}, {"flagged", result.flagged.size()}}.dump() << "\n";
  return kOk;
}

int cmd_eval(Context& ctx, const fs::path& config_path, const fs::path& dataset_path, const fs::path& answers_path,
             const std::string& config_id, const std::optional<fs::path>& out) {
  const auto c = EngineConfig::load(config_path);
  std::map<std::string, BenchmarkQuestion> questions;
  for (auto& q : load_dataset(dataset_path)) questions.emplace(q.question_id, std::move(q));
  Judge judge(make_generator(c.judge ? *c.judge : c.generator));
  auto embedder = make_embedder(c.embedder);

  std::vector<MetricRecord> records;
  std::string unknown;
  read_jsonl(answers_path, [&](const Json& row, std::size_t line) {
    reject_unknown_keys(row, {"question_id", "answer", "contexts"}, "answer row");
    const auto id = require_string(row, "question_id", line);
    auto it = questions.find(id);
    if (it == questions.end()) {
      unknown += "\n  line " + std::to_string(line) + " ('" + id + "')";
      return;
    }
    const auto& q = it->second;
    MetricRecord rec;
    rec.question_id = id;
    rec.config_id = config_id;
    rec.category = q.category;
    rec.answer = require_string(row, "answer", line);
    std::vector<std::string> contexts;
    if (row.contains("contexts")) contexts = row.at("contexts").get<std::vector<std::string>>();
    auto metric = [&](const char* name, auto&& fn) {
      try {
        fn();
      } catch (const Error& e) {
        rec.unavailable.push_back(std::string(name) + ": " + e.what());
      }
    };
    if (!contexts.empty()) {
      metric("relevancy", [&] { rec.relevancy = static_cast<int>(judge.relevancy(q.question, rec.answer, contexts).score); });
      metric("faithfulness", [&] { rec.faithfulness = static_cast<int>(judge.faithfulness(rec.answer, contexts).score); });
      if (!q.reference_contexts.empty()) {
        metric("context_similarity", [&] {
          auto s = context_similarity(*embedder, contexts, q.reference_contexts);
          rec.context_similarity_raw = s.raw;
          rec.context_similarity_binary = s.binary;
        });
      }
    }
    metric("correctness", [&] {
      auto v = judge.correctness(q.question, rec.answer, q.reference_answer);
      rec.correctness_raw = v.score;
      rec.correctness_pct = correctness_to_pct(v.score);
    });
    records.push_back(std::move(rec));
  });
  if (!unknown.empty()) throw Error(ErrorCode::UnknownQuestion, "answers for questions not in the dataset:" + unknown);
  std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.question_id < b.question_id; });
  if (out) save_records(*out, records);

  const auto correctness = aggregate(records);
  const auto retrieval = retrieval_means(records);
  auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
  ctx.out << Json{{"questions", records.size()},
                  {"automated_correctness", opt(correctness.automated)},
                  {"relevancy", opt(retrieval.relevancy)},
                  {"faithfulness", opt(retrieval.faithfulness)},
                  {"context_similarity", opt(retrieval.context_similarity)}}
                 .dump()
          << "\n";
  return kOk;
}

int cmd_report(Context& ctx, const fs::path& run_dir, const std::vector<std::string>& human) {
  std::map<std::string, fs::path> verdicts;
  for (const auto& h : human) {
    const auto eq = h.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == h.size()) {
      throw Error(ErrorCode::InvalidArgument, "--human expects CONFIG_ID=PATH, got '" + h + "'");
    }
    verdicts[h.substr(0, eq)] = h.substr(eq + 1);
  }
  ctx.out << report_from_run(run_dir, verdicts).text;
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Context ctx{out, err};
  CLI::App app{"Financial question answering with retrieval, iterative reasoning and evaluation", "finrag"};
  app.require_subcommand(1);

  fs::path config_path = "finrag.json";
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "Engine config file")->capture_default_str();
  };

  std::function<int()> action;

  auto* ingest = app.add_subcommand("ingest", "Import documents into the workspace and chunk them");
  add_config(ingest);
  std::vector<std::string> ingest_paths;
  bool force = false;
  ingest->add_option("paths", ingest_paths, "Files or directories in addition to corpus.paths");
  ingest->add_flag("--force", force, "Start from an empty corpus instead of adding to the existing one");
  ingest->callback([&] { action = [&] { return cmd_ingest(ctx, config_path, ingest_paths, force); }; });

  auto* index = app.add_subcommand("index", "Embed the workspace chunks and write the vector index");
  add_config(index);
  std::optional<std::string> created;
  index->add_option("--created", created, "Timestamp recorded in the index header");
  index->callback([&] { action = [&] { return cmd_index(ctx, config_path, created); }; });

  auto* ask = app.add_subcommand("ask", "Answer a question with one retrieve-augment-generate pass");
  add_config(ask);
  std::string question;
  std::optional<std::size_t> k;
  ask->add_option("question", question, "Question text")->required();
  ask->add_option("--k", k, "Number of chunks to retrieve");
  ask->callback([&] {
    action = [&] {
      // reasoning.mode = "ooda" routes plain questions through the loop.
      if (EngineConfig::load(config_path).ooda) {
        return cmd_solve(ctx, config_path, question, "", std::nullopt, std::nullopt, std::nullopt);
      }
      return cmd_ask(ctx, config_path, question, k);
    };
  });

  auto* solve = app.add_subcommand("solve", "Answer a question with the observe-orient-decide-act loop");
  add_config(solve);
  std::string instructions;
  std::optional<std::size_t> max_iterations;
  std::optional<fs::path> trace_path, replay;
  solve->add_option("question", question, "Question text");
  solve->add_option("--instructions", instructions, "Extra task instructions");
  solve->add_option("--max-iterations", max_iterations, "Iteration cap");
  solve->add_option("--trace", trace_path, "Where to write the episode trace");
  solve->add_option("--replay", replay, "Re-run a recorded trace and compare conclusions");
  solve->callback([&] {
    action = [&] { return cmd_solve(ctx, config_path, question, instructions, max_iterations, trace_path, replay); };
  });

  auto* bench = app.add_subcommand("bench", "Run a benchmark over system configurations");
  std::optional<fs::path> run_config, manifest, out_dir;
  bool resume = false;
  bench->add_option("run_config", run_config, "Run config file");
  bench->add_option("--from-manifest", manifest, "Re-run the configuration recorded in a manifest");
  bench->add_option("--out", out_dir, "Output directory (overrides the config)");
  bench->add_flag("--resume", resume, "Skip questions already answered in the output directory");
  bench->add_option("--created", created, "Timestamp recorded in the manifest");
  bench->callback([&] { action = [&] { return cmd_bench(ctx, run_config, manifest, out_dir, resume, created); }; });

  auto* dataprep = app.add_subcommand("dataprep", "Build fine-tuning data");
  dataprep->require_subcommand(1);
  fs::path prep_out = "dataprep_out";
  std::optional<std::size_t> sample;
  std::size_t per_chunk = kDefaultPairsPerChunk;
  auto* generate = dataprep->add_subcommand("generate", "Generate question-answer pairs from the workspace chunks");
  add_config(generate);
  generate->add_option("--per-chunk", per_chunk, "Pairs requested per chunk")->capture_default_str();
  generate->add_option("--sample", sample, "Keep a seeded random subset of this size");
  generate->add_option("--out", prep_out, "Output directory")->capture_default_str();
  generate->callback([&] { action = [&] { return cmd_dataprep_generate(ctx, config_path, per_chunk, sample, prep_out); }; });

  auto* from_dataset = dataprep->add_subcommand("dataset", "Pair benchmark questions with their reference contexts");
  fs::path dataset;
  std::uint64_t seed = 0;
  from_dataset->add_option("dataset", dataset, "Question dataset")->required();
  from_dataset->add_option("--sample", sample, "Keep a seeded random subset of this size");
  from_dataset->add_option("--seed", seed, "Sampling seed")->capture_default_str();
  from_dataset->add_option("--out", prep_out, "Output directory")->capture_default_str();
  from_dataset->callback([&] { action = [&] { return cmd_dataprep_dataset(ctx, dataset, sample, seed, prep_out); }; });

  auto* fb = dataprep->add_subcommand("financebench", "Convert FinanceBench rows to the question dataset format");
  fs::path fb_input, fb_out = "questions.jsonl";
  std::optional<fs::path> fb_categories, fb_corpus;
  fb->add_option("input", fb_input, "FinanceBench JSONL")->required();
  fb->add_option("--categories", fb_categories, "JSON object mapping financebench_id to category");
  fb->add_option("--corpus", fb_corpus, "Corpus used to check that source documents exist");
  fb->add_option("--out", fb_out, "Output dataset")->capture_default_str();
  fb->callback([&] { action = [&] { return cmd_dataprep_financebench(ctx, fb_input, fb_categories, fb_corpus, fb_out); }; });

  auto* eval = app.add_subcommand("eval", "Score answers with the judge");
  add_config(eval);
  fs::path answers;
  std::string config_id = "external";
  std::optional<fs::path> eval_out;
  eval->add_option("--dataset", dataset, "Question dataset")->required();
  eval->add_option("--answers", answers, "JSONL of {question_id, answer, contexts?}")->required();
  eval->add_option("--config-id", config_id, "Configuration id written into the records")->capture_default_str();
  eval->add_option("--out", eval_out, "Where to write the metric records");
  eval->callback([&] { action = [&] { return cmd_eval(ctx, config_path, dataset, answers, config_id, eval_out); }; });

  auto* report = app.add_subcommand("report", "Render the tables of a finished benchmark run");
  fs::path run_dir;
  std::vector<std::string> human;
  report->add_option("run_dir", run_dir, "Benchmark output directory")->required();
  report->add_option("--human", human, "CONFIG_ID=PATH of a human verdict file (repeatable)");
  report->callback([&] { action = [&] { return cmd_report(ctx, run_dir, human); }; });

  std::vector<std::string> argv_store{"finrag"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << e.what() << "\n";
      return kOk;
    }
    err << "error: " << e.what() << "\n";
    return kInputError;
  }

  try {
    return action();
  } catch (const Error& e) {
    err << "error";
    if (e.stage() != Stage::None) err << " [" << to_string(e.stage()) << "]";
    err << ": " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kEngineError;
  }
}

}  // namespace finrag::cli
