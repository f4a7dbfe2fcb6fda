#pragma once

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "finrag/corpus.hpp"
#include "finrag/http.hpp"

namespace finrag {

enum class Role { System, User, Assistant };

std::string_view to_string(Role role);
Role role_from_string(std::string_view s);

struct ChatMessage {
  Role role = Role::User;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct GenerationParams {
  double temperature = 0.0;
  int max_output_tokens = 512;
  std::optional<std::int64_t> seed;
};

// "role: content" lines; the text scripted matchers run against.
std::string render_messages(const std::vector<ChatMessage>& messages);

// Bounded counter used to cap concurrent requests to one backend.
class InFlightLimiter {
 public:
  explicit InFlightLimiter(std::size_t limit) : limit_(limit == 0 ? 1 : limit) {}
  void acquire();
  void release();
  std::size_t peak() const noexcept { return peak_.load(); }

 private:
  std::size_t limit_;
  std::size_t active_ = 0;
  std::atomic<std::size_t> peak_{0};
  std::mutex mu_;
  std::condition_variable cv_;
};

class Generator {
 public:
  explicit Generator(std::size_t max_in_flight = 4) : limiter_(max_in_flight) {}
  virtual ~Generator() = default;

  // Requires a non-empty message list ending in a user message whose
  // content is non-empty. Throws GeneratorUnavailable (retryable) and
  // EmptyGeneration. Counts one call.
  std::string complete(const std::vector<ChatMessage>& messages, const GenerationParams& params = {});

  virtual std::string fingerprint() const = 0;
  std::uint64_t calls() const noexcept { return calls_.load(); }
  std::size_t peak_in_flight() const noexcept { return limiter_.peak(); }

 protected:
  virtual std::string complete_request(const std::vector<ChatMessage>& messages, const GenerationParams& params) = 0;

 private:
  std::atomic<std::uint64_t> calls_{0};
  InFlightLimiter limiter_;
};

// Condition over the rendered prompt. Every populated field must hold.
struct ScriptMatcher {
  enum class Target { Prompt, LastUser, System };
  Target target = Target::Prompt;
  std::vector<std::string> contains_all;
  std::vector<std::string> contains_any;
  std::vector<std::string> not_contains;
  std::optional<std::string> regex;  // ECMAScript, searched anywhere in the target
};

struct ScriptRule {
  ScriptMatcher when;
  // Response template; "{N}" expands to regex capture group N.
  std::string respond;
  // Named built-in responder used instead of `respond`:
  //   "extractive_reader" - for RAG prompts, the context sentence sharing the
  //   most words with the query (ties: earliest), or the fallback text.
  std::optional<std::string> builtin;
  // Simulated failure: "unavailable" or "empty".
  std::optional<std::string> fail;
};

// Ordered rules, first match wins; the fallback answers everything else.
struct ScriptedBehavior {
  std::vector<ScriptRule> rules;
  std::string fallback = "I don't know.";

  Json to_json() const;
  static ScriptedBehavior from_json(const Json& j);
  static ScriptedBehavior load(const std::filesystem::path& path);
};

// Deterministic, I/O-free generator driven by a ScriptedBehavior. A pure
// function of (messages, behavior).
class ScriptedGenerator final : public Generator {
 public:
  explicit ScriptedGenerator(ScriptedBehavior behavior, std::size_t max_in_flight = 4);

  std::string fingerprint() const override { return fingerprint_; }
  const ScriptedBehavior& behavior() const noexcept { return behavior_; }

 protected:
  std::string complete_request(const std::vector<ChatMessage>& messages, const GenerationParams& params) override;

 private:
  ScriptedBehavior behavior_;
  std::vector<std::optional<std::regex>> compiled_;
  std::string fingerprint_;
};

// Sentence of `context_block` with the largest word overlap with
// `question` (case-insensitive, words of 3+ characters). Empty if none
// overlaps.
std::string extract_best_sentence(std::string_view question, std::string_view context_block);

enum class GeneratorKind { Remote, Scripted };

struct GeneratorBackendSpec {
  GeneratorKind kind = GeneratorKind::Scripted;
  std::string endpoint;
  std::string model_name;
  std::filesystem::path rules_path;         // scripted, file form
  std::optional<ScriptedBehavior> behavior;  // scripted, inline form
  std::size_t max_in_flight = 4;
  RetryPolicy retry;

  void validate() const;
  Json to_json() const;
  // Relative rules paths resolve against `base_dir`.
  static GeneratorBackendSpec from_json(const Json& j, const std::filesystem::path& base_dir = {});
};

// Chat-completions client: POST {model, messages, temperature, max_tokens,
// seed?} and read choices[0].message.content.
class RemoteGenerator final : public Generator {
 public:
  explicit RemoteGenerator(GeneratorBackendSpec spec);
  std::string fingerprint() const override;

 protected:
  std::string complete_request(const std::vector<ChatMessage>& messages, const GenerationParams& params) override;

 private:
  GeneratorBackendSpec spec_;
};

std::shared_ptr<Generator> make_generator(const GeneratorBackendSpec& spec);

// ---- RAG prompt construction ----

inline constexpr std::size_t kDefaultContextBudgetTokens = 3000;

struct PromptContext {
  std::string tag;  // provenance, e.g. "d1#0 company=X"
  std::string text;
};

struct RagPrompt {
  std::vector<ChatMessage> messages;
  std::size_t contexts_included = 0;
  std::size_t contexts_dropped = 0;
  std::string prompt_version;
};

inline constexpr std::string_view kNoContextMarker = "(no context retrieved)";

// System message with the answer-from-context instruction, user message
// with contexts in the given order and then the question. Contexts are
// admitted whole, in order, while their summed token count stays within
// `budget_tokens`; the first one that does not fit and everything after it
// are dropped. Throws InvalidQuestion on an empty question.
RagPrompt build_rag_prompt(std::string_view question, const std::vector<PromptContext>& contexts,
                           std::size_t budget_tokens = kDefaultContextBudgetTokens,
                           const Tokenizer& tokenizer = default_tokenizer());

}  // namespace finrag
