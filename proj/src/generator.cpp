#include "finrag/generator.hpp"

#include <algorithm>
#include <set>

#include "finrag/error.hpp"
#include "finrag/prompts.hpp"
#include "finrag/util.hpp"

namespace finrag {

std::string_view to_string(Role role) {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

Role role_from_string(std::string_view s) {
  if (s == "system") return Role::System;
  if (s == "user") return Role::User;
  if (s == "assistant") return Role::Assistant;
  throw Error(ErrorCode::ParseError, "unknown chat role '" + std::string(s) + "'");
}

std::string render_messages(const std::vector<ChatMessage>& messages) {
  std::string out;
  for (const auto& m : messages) {
    out += to_string(m.role);
    out += ": ";
    out += m.content;
    out += '\n';
  }
  return out;
}

void InFlightLimiter::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return active_ < limit_; });
  ++active_;
  std::size_t seen = peak_.load();
  while (active_ > seen && !peak_.compare_exchange_weak(seen, active_)) {
  }
}

void InFlightLimiter::release() {
  {
    std::lock_guard lock(mu_);
    --active_;
  }
  cv_.notify_one();
}

std::string Generator::complete(const std::vector<ChatMessage>& messages, const GenerationParams& params) {
  if (messages.empty()) throw Error(ErrorCode::InvalidArgument, "no messages to complete");
  if (messages.back().role != Role::User) throw Error(ErrorCode::InvalidArgument, "last message must be from the user");
  for (const auto& m : messages) {
    if (m.role != Role::System && m.content.empty()) {
      throw Error(ErrorCode::InvalidArgument, "user and assistant messages must be non-empty");
    }
  }
  if (params.temperature < 0.0) throw Error(ErrorCode::InvalidArgument, "temperature must be >= 0");
  if (params.max_output_tokens < 1) throw Error(ErrorCode::InvalidArgument, "max_output_tokens must be >= 1");

  ++calls_;
  limiter_.acquire();
  struct Release {
    InFlightLimiter& l;
    ~Release() { l.release(); }
  } release{limiter_};
  std::string out = complete_request(messages, params);
  if (trim(out).empty()) throw Error(ErrorCode::EmptyGeneration, "backend returned an empty completion");
  return out;
}

// ---- scripted backend ----

namespace {

bool contains(std::string_view hay, std::string_view needle) { return hay.find(needle) != std::string_view::npos; }

ScriptMatcher::Target parse_target(const std::string& s) {
  if (s == "prompt") return ScriptMatcher::Target::Prompt;
  if (s == "last_user") return ScriptMatcher::Target::LastUser;
  if (s == "system") return ScriptMatcher::Target::System;
  throw Error(ErrorCode::ConfigError, "unknown matcher target '" + s + "'");
}

std::string_view target_name(ScriptMatcher::Target t) {
  switch (t) {
    case ScriptMatcher::Target::Prompt: return "prompt";
    case ScriptMatcher::Target::LastUser: return "last_user";
    case ScriptMatcher::Target::System: return "system";
  }
  return "prompt";
}

std::vector<std::string> string_list(const Json& j, const char* key) {
  if (!j.contains(key)) return {};
  const auto& v = j.at(key);
  if (v.is_string()) return {v.get<std::string>()};
  return v.get<std::vector<std::string>>();
}

const std::set<std::string, std::less<>>& stop_words() {
  static const std::set<std::string, std::less<>> words = {
      "the", "what", "was", "were", "which", "who", "how", "and", "for", "with", "that", "this",
      "from", "its", "are", "did", "does", "has", "have", "had", "much", "many", "there", "their"};
  return words;
}

std::set<std::string> content_words(std::string_view text) {
  std::set<std::string> out;
  for (const auto& tok : default_tokenizer().tokenize(text)) {
    if (tok.size() < 3) continue;
    auto w = to_lower_ascii(tok);
    if (!stop_words().count(w)) out.insert(std::move(w));
  }
  return out;
}

std::vector<std::string> split_sentences(std::string_view block) {
  std::vector<std::string> out;
  for (const auto& raw_line : split_lines(block)) {
    std::string_view line = raw_line;
    // Provenance tag lines look like "[3] source: ..." and are not content.
    if (!line.empty() && line.front() == '[' && contains(line, "] source:")) continue;
    std::size_t start = 0;
    for (std::size_t i = 0; i < line.size(); ++i) {
      char c = line[i];
      if ((c == '.' || c == '!' || c == '?') && (i + 1 == line.size() || line[i + 1] == ' ')) {
        auto s = trim(line.substr(start, i + 1 - start));
        if (!s.empty()) out.push_back(std::move(s));
        start = i + 1;
      }
    }
    auto rest = trim(line.substr(start));
    if (!rest.empty()) out.push_back(std::move(rest));
  }
  return out;
}

struct RagParts {
  std::string question;
  std::string contexts;
};

std::optional<RagParts> parse_rag_prompt(std::string_view user) {
  if (!contains(user, prompts::kRagMarker)) return std::nullopt;
  constexpr std::string_view rule = "---------------------";
  auto a = user.find(rule);
  if (a == std::string_view::npos) return std::nullopt;
  auto b = user.find(rule, a + rule.size());
  if (b == std::string_view::npos) return std::nullopt;
  RagParts p;
  p.contexts = std::string(user.substr(a + rule.size(), b - a - rule.size()));
  auto q = user.find("Query: ", b);
  if (q == std::string_view::npos) return std::nullopt;
  auto end = user.find('\n', q);
  p.question = trim(user.substr(q + 7, end == std::string_view::npos ? std::string_view::npos : end - q - 7));
  return p;
}

std::string expand_template(const std::string& tpl, const std::smatch* m) {
  std::string out;
  for (std::size_t i = 0; i < tpl.size(); ++i) {
    if (tpl[i] == '{' && m) {
      std::size_t j = i + 1;
      while (j < tpl.size() && std::isdigit(static_cast<unsigned char>(tpl[j]))) ++j;
      if (j > i + 1 && j < tpl.size() && tpl[j] == '}') {
        auto group = static_cast<std::size_t>(std::stoul(tpl.substr(i + 1, j - i - 1)));
        if (group < m->size()) out += (*m)[group].str();
        i = j;
        continue;
      }
    }
    out += tpl[i];
  }
  return out;
}

}  // namespace

std::string extract_best_sentence(std::string_view question, std::string_view context_block) {
  const auto q = content_words(question);
  std::string best;
  std::size_t best_score = 0;
  for (const auto& s : split_sentences(context_block)) {
    std::size_t score = 0;
    for (const auto& w : content_words(s)) score += q.count(w);
    if (score > best_score) {
      best_score = score;
      best = s;
    }
  }
  return best;
}

Json ScriptedBehavior::to_json() const {
  Json rules_json = Json::array();
  for (const auto& r : rules) {
    Json when = Json::object();
    if (r.when.target != ScriptMatcher::Target::Prompt) when["target"] = target_name(r.when.target);
    if (!r.when.contains_all.empty()) when["contains_all"] = r.when.contains_all;
    if (!r.when.contains_any.empty()) when["contains_any"] = r.when.contains_any;
    if (!r.when.not_contains.empty()) when["not_contains"] = r.when.not_contains;
    if (r.when.regex) when["regex"] = *r.when.regex;
    Json rule{{"when", when}};
    if (!r.respond.empty()) rule["respond"] = r.respond;
    if (r.builtin) rule["builtin"] = *r.builtin;
    if (r.fail) rule["fail"] = *r.fail;
    rules_json.push_back(std::move(rule));
  }
  return Json{{"rules", rules_json}, {"fallback", fallback}};
}

ScriptedBehavior ScriptedBehavior::from_json(const Json& j) {
  reject_unknown_keys(j, {"rules", "fallback", "version"}, "scripted behavior");
  ScriptedBehavior b;
  try {
    if (j.contains("fallback")) b.fallback = j.at("fallback").get<std::string>();
    for (const auto& r : j.value("rules", Json::array())) {
      reject_unknown_keys(r, {"when", "respond", "builtin", "fail"}, "scripted rule");
      ScriptRule rule;
      const Json when = r.value("when", Json::object());
      reject_unknown_keys(when, {"target", "contains_all", "contains_any", "not_contains", "regex"}, "rule matcher");
      if (when.contains("target")) rule.when.target = parse_target(when.at("target").get<std::string>());
      rule.when.contains_all = string_list(when, "contains_all");
      rule.when.contains_any = string_list(when, "contains_any");
      rule.when.not_contains = string_list(when, "not_contains");
      if (when.contains("regex")) rule.when.regex = when.at("regex").get<std::string>();
      rule.respond = r.value("respond", std::string{});
      if (r.contains("builtin")) {
        rule.builtin = r.at("builtin").get<std::string>();
        if (*rule.builtin != "extractive_reader") {
          throw Error(ErrorCode::ConfigError, "unknown builtin '" + *rule.builtin + "'");
        }
      }
      if (r.contains("fail")) {
        rule.fail = r.at("fail").get<std::string>();
        if (*rule.fail != "unavailable" && *rule.fail != "empty") {
          throw Error(ErrorCode::ConfigError, "unknown failure mode '" + *rule.fail + "'");
        }
      }
      if (rule.respond.empty() && !rule.builtin && !rule.fail) {
        throw Error(ErrorCode::ConfigError, "scripted rule needs respond, builtin or fail");
      }
      b.rules.push_back(std::move(rule));
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("scripted behavior: ") + e.what());
  }
  if (trim(b.fallback).empty()) throw Error(ErrorCode::ConfigError, "scripted fallback must be non-empty");
  return b;
}

ScriptedBehavior ScriptedBehavior::load(const std::filesystem::path& path) {
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
  return from_json(j);
}

ScriptedGenerator::ScriptedGenerator(ScriptedBehavior behavior, std::size_t max_in_flight)
    : Generator(max_in_flight), behavior_(std::move(behavior)) {
  for (const auto& r : behavior_.rules) {
    if (r.when.regex) {
      try {
        compiled_.emplace_back(std::regex(*r.when.regex, std::regex::ECMAScript));
      } catch (const std::regex_error& e) {
        throw Error(ErrorCode::ConfigError, "bad regex '" + *r.when.regex + "': " + e.what());
      }
    } else {
      compiled_.emplace_back(std::nullopt);
    }
  }
  fingerprint_ = "scripted:" + hex64(hash64(behavior_.to_json().dump()));
}

std::string ScriptedGenerator::complete_request(const std::vector<ChatMessage>& messages, const GenerationParams&) {
  const std::string prompt = render_messages(messages);
  const std::string& last_user = messages.back().content;
  std::string system;
  for (const auto& m : messages) {
    if (m.role == Role::System) system += m.content + "\n";
  }

  for (std::size_t i = 0; i < behavior_.rules.size(); ++i) {
    const auto& rule = behavior_.rules[i];
    const std::string& target = rule.when.target == ScriptMatcher::Target::Prompt     ? prompt
                                : rule.when.target == ScriptMatcher::Target::LastUser ? last_user
                                                                                      : system;
    bool ok = std::all_of(rule.when.contains_all.begin(), rule.when.contains_all.end(),
                          [&](const std::string& s) { return contains(target, s); });
    ok = ok && (rule.when.contains_any.empty() ||
                std::any_of(rule.when.contains_any.begin(), rule.when.contains_any.end(),
                            [&](const std::string& s) { return contains(target, s); }));
    ok = ok && std::none_of(rule.when.not_contains.begin(), rule.when.not_contains.end(),
                            [&](const std::string& s) { return contains(target, s); });
    std::smatch match;
    if (ok && compiled_[i]) ok = std::regex_search(target, match, *compiled_[i]);
    if (!ok) continue;

    if (rule.fail) {
      if (*rule.fail == "unavailable") throw Error(ErrorCode::GeneratorUnavailable, "scripted outage");
      return "";
    }
    if (rule.builtin) {
      auto parts = parse_rag_prompt(last_user);
      if (!parts) return behavior_.fallback;
      auto sentence = extract_best_sentence(parts->question, parts->contexts);
      return sentence.empty() ? behavior_.fallback : sentence;
    }
    return expand_template(rule.respond, compiled_[i] ? &match : nullptr);
  }
  return behavior_.fallback;
}

// ---- backend specs ----

void GeneratorBackendSpec::validate() const {
  if (kind == GeneratorKind::Remote && (endpoint.empty() || model_name.empty())) {
    throw Error(ErrorCode::ConfigError, "remote generator requires endpoint and model");
  }
  if (kind == GeneratorKind::Scripted && rules_path.empty() && !behavior) {
    throw Error(ErrorCode::ConfigError, "scripted generator requires rules or an inline behavior");
  }
}

Json GeneratorBackendSpec::to_json() const {
  if (kind == GeneratorKind::Scripted) {
    Json j{{"kind", "scripted"}, {"max_in_flight", max_in_flight}};
    if (behavior) {
      j["behavior"] = behavior->to_json();
    } else {
      j["rules"] = rules_path.string();
    }
    return j;
  }
  return Json{{"kind", "remote"},
              {"endpoint", endpoint},
              {"model", model_name},
              {"max_in_flight", max_in_flight},
              {"retry",
               {{"max_retries", retry.max_retries},
                {"backoff_ms", retry.backoff_base_ms},
                {"timeout_ms", retry.timeout_ms}}}};
}

GeneratorBackendSpec GeneratorBackendSpec::from_json(const Json& j, const std::filesystem::path& base_dir) {
  reject_unknown_keys(j, {"kind", "endpoint", "model", "rules", "behavior", "max_in_flight", "retry"}, "generator");
  GeneratorBackendSpec s;
  try {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "scripted") {
      s.kind = GeneratorKind::Scripted;
    } else if (kind == "remote") {
      s.kind = GeneratorKind::Remote;
    } else {
      throw Error(ErrorCode::ConfigError, "unknown generator kind '" + kind + "'");
    }
    s.endpoint = j.value("endpoint", std::string{});
    s.model_name = j.value("model", std::string{});
    if (j.contains("rules")) {
      std::filesystem::path p = j.at("rules").get<std::string>();
      s.rules_path = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    }
    if (j.contains("behavior")) s.behavior = ScriptedBehavior::from_json(j.at("behavior"));
    s.max_in_flight = j.value("max_in_flight", s.max_in_flight);
    if (j.contains("retry")) {
      const auto& r = j.at("retry");
      reject_unknown_keys(r, {"max_retries", "backoff_ms", "timeout_ms"}, "retry");
      s.retry.max_retries = r.value("max_retries", s.retry.max_retries);
      s.retry.backoff_base_ms = r.value("backoff_ms", s.retry.backoff_base_ms);
      s.retry.timeout_ms = r.value("timeout_ms", s.retry.timeout_ms);
    }
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("generator: ") + e.what());
  }
  s.validate();
  return s;
}

RemoteGenerator::RemoteGenerator(GeneratorBackendSpec spec)
    : Generator(spec.max_in_flight), spec_(std::move(spec)) {
  if (spec_.kind != GeneratorKind::Remote) throw Error(ErrorCode::ConfigError, "RemoteGenerator needs a remote spec");
  spec_.validate();
}

std::string RemoteGenerator::fingerprint() const { return "remote:" + spec_.model_name + "@" + spec_.endpoint; }

std::string RemoteGenerator::complete_request(const std::vector<ChatMessage>& messages,
                                              const GenerationParams& params) {
  Json body{{"model", spec_.model_name},
            {"messages", Json::array()},
            {"temperature", params.temperature},
            {"max_tokens", params.max_output_tokens}};
  for (const auto& m : messages) body["messages"].push_back({{"role", to_string(m.role)}, {"content", m.content}});
  if (params.seed) body["seed"] = *params.seed;

  Json response = post_json(spec_.endpoint, body, spec_.retry, ErrorCode::GeneratorUnavailable);
  try {
    const auto& content = response.at("choices").at(0).at("message").at("content");
    if (content.is_null()) throw Error(ErrorCode::EmptyGeneration, "provider returned no content");
    return content.get<std::string>();
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::BackendContractViolation, std::string("malformed chat response: ") + e.what());
  }
}

std::shared_ptr<Generator> make_generator(const GeneratorBackendSpec& spec) {
  spec.validate();
  if (spec.kind == GeneratorKind::Remote) return std::make_shared<RemoteGenerator>(spec);
  auto behavior = spec.behavior ? *spec.behavior : ScriptedBehavior::load(spec.rules_path);
  return std::make_shared<ScriptedGenerator>(std::move(behavior), spec.max_in_flight);
}

// ---- RAG prompt ----

RagPrompt build_rag_prompt(std::string_view question, const std::vector<PromptContext>& contexts,
                           std::size_t budget_tokens, const Tokenizer& tokenizer) {
  if (trim(question).empty()) throw Error(ErrorCode::InvalidQuestion, "question must be non-empty");
  const auto& tpl = prompts::get("rag_answer");

  RagPrompt out;
  out.prompt_version = tpl.version;
  std::string block;
  std::size_t used = 0;
  for (const auto& ctx : contexts) {
    const std::size_t cost = tokenizer.tokenize_spans(ctx.text).size();
    if (used + cost > budget_tokens) break;
    used += cost;
    ++out.contexts_included;
    if (!block.empty()) block += "\n\n";
    block += "[" + std::to_string(out.contexts_included) + "] source: " + ctx.tag + "\n" + ctx.text;
  }
  out.contexts_dropped = contexts.size() - out.contexts_included;
  if (out.contexts_included == 0) block = std::string(kNoContextMarker);

  out.messages.push_back({Role::System, tpl.system});
  out.messages.push_back(
      {Role::User, prompts::render(tpl.user, {{"contexts", block}, {"question", std::string(question)}})});
  return out;
}

}  // namespace finrag
