#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "finrag/generator.hpp"
#include "finrag/rag_engine.hpp"
#include "finrag/util.hpp"

namespace finrag {

// Something the reasoner can ask a sub-question of.
class Resource {
 public:
  virtual ~Resource() = default;
  virtual std::string name() const = 0;
  virtual RagAnswer query(std::string_view sub_question) = 0;
};

class RagResource final : public Resource {
 public:
  explicit RagResource(std::shared_ptr<const RagEngine> engine, std::string name = "rag");
  std::string name() const override { return name_; }
  RagAnswer query(std::string_view sub_question) override { return engine_->answer_one_pass(sub_question); }

 private:
  std::shared_ptr<const RagEngine> engine_;
  std::string name_;
};

struct Task {
  std::string question;
  std::string instructions;
  std::vector<std::shared_ptr<Resource>> resources;

  void validate() const;
};

// One evidence record. Failed lookups are kept as records with an error.
struct Observation {
  std::size_t id = 0;  // 1-based, unique within an episode
  std::size_t iteration = 0;
  std::string sub_question;
  std::optional<RagAnswer> answer;
  std::string resource;
  std::string error;

  bool ok() const noexcept { return answer.has_value(); }
};

struct Orientation {
  std::string understanding;
  std::optional<std::string> answer;  // absent when the evidence is insufficient
  std::vector<std::string> missing;
  std::vector<std::string> contradictions;
};

// Reads the UNDERSTANDING / ANSWER / MISSING / CONTRADICTION line format.
// An absent or NONE answer with nothing listed as missing reopens
// `question` itself.
Orientation parse_orientation(std::string_view text, std::string_view question);

enum class DecisionKind { Conclude, Continue, Abort };
std::string_view to_string(DecisionKind kind);

struct Decision {
  DecisionKind kind = DecisionKind::Conclude;
  std::vector<std::string> next;  // Continue only
  bool best_effort = false;       // Conclude without resolving the open items
};

enum class VerificationStatus { Consistent, Inconsistent, Unverified };
std::string_view to_string(VerificationStatus status);

struct OodaIteration {
  std::size_t index = 0;
  std::vector<std::size_t> observations;  // ids added during this iteration
  Orientation orientation;
  Decision decision;
  std::vector<std::string> actions;
};

struct Conclusion {
  std::string answer_text;
  std::vector<std::size_t> evidence;  // observation ids
  std::size_t iterations_used = 0;
  VerificationStatus verification = VerificationStatus::Unverified;
};

struct OodaConfig {
  std::size_t max_iterations = 5;
  std::size_t max_pending = 5;
  GenerationParams generation;
};

// Evolving episode state. Evidence only ever grows.
struct EpisodeState {
  Task task;
  std::size_t max_iterations = 5;
  std::size_t iteration = 0;
  std::vector<Observation> evidence;
  std::vector<std::string> pending;
  std::set<std::string> asked;  // normalized sub-questions already queued
  std::vector<OodaIteration> iterations;
  std::optional<Conclusion> conclusion;
  std::vector<Json> trace;
};

class OodaReasoner {
 public:
  explicit OodaReasoner(std::shared_ptr<Generator> generator, OodaConfig config = {});

  // Runs the loop to a conclusion within max_iterations. Throws
  // InvalidArgument for max_iterations == 0, ResourceExhausted when every
  // lookup failed, and propagates generator failures during orient.
  Conclusion solve(const Task& task, std::size_t max_iterations);
  Conclusion solve(const Task& task) { return solve(task, config_.max_iterations); }

  // Same as solve but returns the full episode, trace included.
  EpisodeState run(const Task& task, std::size_t max_iterations);

  std::vector<std::string> decompose_question(std::string_view question, std::string_view instructions = {});
  // Ids of the records appended; clears the pending list.
  std::vector<std::size_t> observe(EpisodeState& state);
  Orientation orient(const EpisodeState& state);
  Decision decide(const EpisodeState& state, const Orientation& orientation) const;
  void act(EpisodeState& state, const Decision& decision, const Orientation& orientation);
  VerificationStatus verify_conclusion(const EpisodeState& state, std::string_view conclusion,
                                       const std::vector<std::size_t>& evidence);

  const OodaConfig& config() const noexcept { return config_; }

 private:
  std::vector<std::string> fresh(const EpisodeState& state, const std::vector<std::string>& candidates) const;
  std::vector<std::string> retries(const EpisodeState& state) const;

  std::shared_ptr<Generator> generator_;
  OodaConfig config_;
};

// Evidence block shared by the orient and verify prompts.
std::string render_evidence(const std::vector<Observation>& evidence, const std::vector<std::size_t>& ids = {});

void write_trace(const std::filesystem::path& path, const std::vector<Json>& trace);

// Question, instructions and conclusion recorded in a trace file.
struct TraceSummary {
  std::string question;
  std::string instructions;
  std::size_t max_iterations = 0;
  Conclusion conclusion;
};
TraceSummary read_trace(const std::filesystem::path& path);

}  // namespace finrag
