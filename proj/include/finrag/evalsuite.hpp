#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "finrag/embedder.hpp"
#include "finrag/generator.hpp"
#include "finrag/prompts.hpp"
#include "finrag/util.hpp"

namespace finrag {

// Difficulty categories 0..6; codes 0-2 form the easier band.
inline constexpr int kCategoryCount = 7;
std::string_view category_label(int code);  // e.g. "2-CALC-CHANGE"; UnknownCategory outside 0..6
bool is_easier(int code);
// Accepts either the bare code or its label.
int parse_category(const Json& value, std::size_t line = 0);

enum class Metric { Relevancy, Faithfulness, Correctness };
std::string_view to_string(Metric metric);

struct JudgeVerdict {
  Metric metric = Metric::Relevancy;
  double score = 0.0;
  std::string justification;
  std::string judge_backend_id;
  std::string prompt_version;  // empty when no judge call was made
};

// Rubric-prompted LLM judge. Generator failures surface as MetricUnavailable;
// malformed or out-of-range scores as BackendContractViolation.
class Judge {
 public:
  explicit Judge(std::shared_ptr<Generator> generator, GenerationParams params = {});

  JudgeVerdict relevancy(std::string_view query, std::string_view response, const std::vector<std::string>& contexts);
  JudgeVerdict faithfulness(std::string_view response, const std::vector<std::string>& contexts);
  JudgeVerdict correctness(std::string_view query, std::string_view response, std::string_view reference);

  std::string backend_id() const { return generator_->fingerprint(); }

 private:
  JudgeVerdict ask(Metric metric, std::string_view template_name, const prompts::Vars& vars);
  std::shared_ptr<Generator> generator_;
  GenerationParams params_;
};

// "SCORE: x" / "REASON: y" reply format shared by all rubric prompts.
struct ParsedScore {
  double score = 0.0;
  std::string reason;
};
ParsedScore parse_judge_reply(std::string_view text);

inline constexpr double kSimilarityThreshold = 0.8;

struct SimilarityScore {
  double raw = 0.0;
  int binary = 0;
};

// 1 iff raw >= 0.8.
int similarity_binary(double raw);

// Cosine between the embedding of the retrieved texts and of the reference
// texts, each concatenated in order with blank lines. ReferenceMissing if the
// reference list is empty or blank; InvalidArgument if nothing was retrieved.
SimilarityScore context_similarity(Embedder& embedder, const std::vector<std::string>& retrieved,
                                   const std::vector<std::string>& reference);

// (score - 1) / 4; InvalidScore outside [1, 5].
double correctness_to_pct(double score);

struct MetricRecord {
  std::string question_id;
  std::string config_id;
  int category = 0;
  std::string answer;
  bool failed = false;  // the system under test produced no answer
  std::string error;
  std::optional<int> relevancy;
  std::optional<int> faithfulness;
  std::optional<double> context_similarity_raw;
  std::optional<int> context_similarity_binary;
  std::optional<double> correctness_raw;
  std::optional<double> correctness_pct;
  std::optional<int> human_correct;
  std::vector<std::string> unavailable;  // metrics the judge could not score
  std::vector<std::string> contexts;     // chunk ids shown to the generator
  std::string trace;                     // episode trace file, reasoning configs only

  Json to_json() const;
  static MetricRecord from_json(const Json& j, std::size_t line = 0);
};

void save_records(const std::filesystem::path& path, const std::vector<MetricRecord>& records);
std::vector<MetricRecord> load_records(const std::filesystem::path& path);

using HumanVerdicts = std::map<std::string, int>;

// Line-delimited {question_id, verdict, grader_id, note?}. Verdicts outside
// {0,1} and malformed rows raise ParseError, repeated ids DuplicateVerdict,
// ids outside `known_ids` UnknownQuestion listing every offending row.
HumanVerdicts ingest_human_verdicts(const std::filesystem::path& path, const std::vector<std::string>& known_ids);
// Returns how many records received a verdict.
std::size_t merge_human_verdicts(std::vector<MetricRecord>& records, const HumanVerdicts& verdicts);

struct CorrectnessRow {
  std::string config_id;
  std::size_t questions = 0;
  bool human_pending = true;  // no record carries a human verdict
  std::optional<double> easier;
  std::optional<double> harder;
  std::optional<double> overall;
  std::optional<double> automated;  // mean correctness_pct, failed answers count as 0
};

struct RetrievalRow {
  std::string config_id;
  std::size_t questions = 0;
  std::optional<double> relevancy;
  std::optional<double> faithfulness;
  std::optional<double> context_similarity;  // mean of the raw cosines
  std::optional<double> context_similarity_binary;
};

// Band means over records of a single configuration. A band without any
// human-graded question is empty (N/A), never 0.
CorrectnessRow aggregate(const std::vector<MetricRecord>& records);
RetrievalRow retrieval_means(const std::vector<MetricRecord>& records);

// "67%" with half-up rounding, or "N/A".
std::string format_percent(const std::optional<double>& fraction);

}  // namespace finrag
