#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "finrag/corpus.hpp"
#include "finrag/embedder.hpp"
#include "finrag/evalsuite.hpp"
#include "finrag/generator.hpp"
#include "finrag/ooda.hpp"
#include "finrag/rag_engine.hpp"
#include "finrag/vindex.hpp"

namespace finrag {

struct BenchmarkQuestion {
  std::string question_id;
  std::string question;
  std::string reference_answer;
  std::vector<std::string> reference_contexts;  // may be empty
  std::vector<std::string> source_doc_ids;
  int category = 0;

  Json to_json() const;
  // ParseError / UnknownCategory carry `line`.
  static BenchmarkQuestion from_json(const Json& j, std::size_t line = 0);
};

// Line-delimited questions. An empty file yields no questions and a warning.
std::vector<BenchmarkQuestion> load_dataset(const std::filesystem::path& path,
                                            std::vector<std::string>* warnings = nullptr);
void save_dataset(const std::filesystem::path& path, const std::vector<BenchmarkQuestion>& questions);
std::string dataset_fingerprint(const std::vector<BenchmarkQuestion>& questions);

// Questions are ordered by id, permuted with seeded_permutation, and the
// first n_train become the training set. Both halves come back id-ordered.
// InvalidSplit unless n_train < size.
std::pair<std::vector<BenchmarkQuestion>, std::vector<BenchmarkQuestion>> split_train_test(
    std::vector<BenchmarkQuestion> questions, std::size_t n_train, std::uint64_t seed);

// Public FinanceBench rows (financebench_id, question, answer, doc_name,
// evidence[].evidence_text) to the dataset format. Rows whose source
// document is not in `known_doc_ids` (when non-empty) or that have no
// category in `categories` are flagged and left out.
struct ConversionFlag {
  std::size_t line = 0;
  std::string question_id;
  std::string reason;
};
struct ConversionResult {
  std::vector<BenchmarkQuestion> questions;
  std::vector<ConversionFlag> flagged;
};
ConversionResult convert_financebench(const std::filesystem::path& path, const std::set<std::string>& known_doc_ids,
                                      const std::map<std::string, int>& categories);

enum class ModelVariant { Generic, FineTuned };
enum class Reasoning { OnePass, Ooda };
std::string_view to_string(ModelVariant v);
std::string_view to_string(Reasoning r);

struct SystemConfiguration {
  std::string config_id;
  std::string label;  // row name in reports
  ModelVariant retriever = ModelVariant::Generic;
  ModelVariant generator = ModelVariant::Generic;
  Reasoning reasoning = Reasoning::OnePass;
  std::size_t max_iterations = 5;
  std::size_t k = kDefaultTopK;

  Json to_json() const;
  static SystemConfiguration from_json(const Json& j);
};

// generic-rag, ft-generator, ft-retriever, fully-ft, generic-rag-ooda.
std::vector<SystemConfiguration> canonical_presets();
const SystemConfiguration& preset(std::string_view config_id);

struct BackendSet {
  EmbedderBackendSpec generic_embedder;
  std::optional<EmbedderBackendSpec> fine_tuned_embedder;
  GeneratorBackendSpec generic_generator;
  std::optional<GeneratorBackendSpec> fine_tuned_generator;
  GeneratorBackendSpec judge;
};

// Declarative benchmark run. Relative paths resolve against base_dir.
struct RunConfig {
  std::filesystem::path base_dir;
  std::filesystem::path dataset;
  std::vector<std::filesystem::path> corpus_paths;
  ChunkSpec chunking;
  std::size_t n_train = 0;
  std::uint64_t split_seed = 0;
  bool evaluate_all = false;  // otherwise only the test split
  BackendSet backends;
  std::vector<SystemConfiguration> configurations;
  std::size_t context_budget_tokens = kDefaultContextBudgetTokens;
  std::size_t workers = 1;
  double timeout_one_pass_s = 120.0;
  double timeout_ooda_s = 600.0;
  // Human-verdict file per config_id; verdict rows carry no config id.
  std::map<std::string, std::filesystem::path> human_verdicts;
  std::filesystem::path output_dir = "bench_out";

  std::filesystem::path resolve(const std::filesystem::path& p) const;
  void validate() const;
  Json to_json() const;
  static RunConfig from_json(const Json& j, const std::filesystem::path& base_dir);
  static RunConfig load(const std::filesystem::path& path);
};

// Corpus, indexes and backends shared by every configuration of a run.
class BenchStack {
 public:
  explicit BenchStack(const RunConfig& config);

  std::shared_ptr<Embedder> embedder(ModelVariant v) const;
  std::shared_ptr<const VectorIndex> index(ModelVariant v) const;
  std::shared_ptr<Generator> generator(ModelVariant v) const;
  std::shared_ptr<Generator> judge() const { return judge_; }
  std::shared_ptr<const ChunkTable> chunks() const { return chunks_; }
  // Fixed embedder for context similarity so all configurations are
  // measured on one scale.
  std::shared_ptr<Embedder> similarity_embedder() const { return embedder(ModelVariant::Generic); }
  std::string corpus_fingerprint() const { return corpus_fingerprint_; }
  std::size_t document_count() const { return documents_; }
  std::size_t chunk_count() const { return chunks_->size(); }

 private:
  std::map<ModelVariant, std::shared_ptr<Embedder>> embedders_;
  std::map<ModelVariant, std::shared_ptr<const VectorIndex>> indexes_;
  std::map<ModelVariant, std::shared_ptr<Generator>> generators_;
  std::shared_ptr<Generator> judge_;
  std::shared_ptr<const ChunkTable> chunks_;
  std::string corpus_fingerprint_;
  std::size_t documents_ = 0;
};

struct RunnerOptions {
  std::size_t workers = 1;
  double timeout_s = 120.0;
  std::size_t context_budget_tokens = kDefaultContextBudgetTokens;
  std::filesystem::path output_dir;  // traces go under output_dir/traces
  std::set<std::string> skip;        // question ids already completed
  // Called with each finished record, from worker threads, serialized.
  std::function<void(const MetricRecord&)> on_record;
};

// One record per question, ordered by question_id. Failures become failed
// records; they never stop the run.
std::vector<MetricRecord> run_configuration(const SystemConfiguration& config,
                                            const std::vector<BenchmarkQuestion>& questions, const BenchStack& stack,
                                            const RunnerOptions& options);

struct Report {
  std::string text;
  std::string retrieval_csv;
  std::string correctness_csv;
};

// Table-1 style retrieval rows (one-pass configurations only) and Table-2
// style correctness rows, in configuration order.
Report render_report(const std::vector<SystemConfiguration>& configs,
                     const std::map<std::string, std::vector<MetricRecord>>& records);

struct RunOptions {
  bool resume = false;
  std::optional<std::string> created;  // manifest timestamp override
  std::function<void(const std::string&)> log;
};

struct RunResult {
  std::filesystem::path output_dir;
  std::map<std::string, std::vector<MetricRecord>> records;
  Report report;
};

// Writes manifest.json before the first question, then
// records/<config_id>.jsonl, traces/, report.txt, table1.csv, table2.csv.
RunResult run_benchmark(const RunConfig& config, const RunOptions& options = {});

// Re-executes the run described by a manifest. The dataset must still
// match the recorded fingerprint and split.
RunResult run_from_manifest(const std::filesystem::path& manifest,
                            const std::optional<std::filesystem::path>& output_dir, const RunOptions& options = {});

// Rebuilds the report from a finished run's manifest and records, merging
// human-verdict files (per config_id) first. Rewrites the record streams
// and report files.
Report report_from_run(const std::filesystem::path& run_dir,
                       const std::map<std::string, std::filesystem::path>& human_verdicts = {});

}  // namespace finrag
