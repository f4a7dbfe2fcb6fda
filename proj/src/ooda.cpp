#include "finrag/ooda.hpp"

#include <algorithm>
#include <future>
#include <regex>

#include "finrag/error.hpp"
#include "finrag/prompts.hpp"

namespace finrag {

namespace {

constexpr std::string_view kNoAnswerText = "No answer could be determined from the evidence.";

std::vector<ChatMessage> stage_messages(std::string_view name, const prompts::Vars& vars) {
  const auto& tpl = prompts::get(name);
  return {{Role::System, prompts::render(tpl.system, vars)}, {Role::User, prompts::render(tpl.user, vars)}};
}

bool is_none(std::string_view value) {
  const auto v = to_lower_ascii(trim(value));
  return v.empty() || v == "none" || v == "none." || v == "n/a";
}

// Value after "PREFIX:" when `line` starts with it, case-insensitively.
std::optional<std::string> field(std::string_view line, std::string_view prefix) {
  if (!starts_with_ci(line, prefix)) return std::nullopt;
  auto rest = line.substr(prefix.size());
  if (rest.empty() || rest.front() != ':') return std::nullopt;
  return trim(rest.substr(1));
}

Json hit_json(const RetrievedContext& c) {
  return {{"chunk_id", c.hit.chunk_id}, {"score", c.hit.score}, {"rank", c.hit.rank}};
}

Json observation_json(const Observation& o) {
  Json j{{"id", o.id}, {"iteration", o.iteration}, {"sub_question", o.sub_question}, {"ok", o.ok()},
         {"resource", o.resource}};
  if (o.ok()) {
    j["answer"] = o.answer->answer_text;
    Json contexts = Json::array();
    for (const auto& c : o.answer->retrieved) contexts.push_back(hit_json(c));
    j["contexts"] = contexts;
  } else {
    j["error"] = o.error;
  }
  return j;
}

Json orientation_json(const Orientation& o) {
  return {{"understanding", o.understanding},
          {"answer", o.answer ? Json(*o.answer) : Json(nullptr)},
          {"missing", o.missing},
          {"contradictions", o.contradictions}};
}

Json conclusion_json(const Conclusion& c) {
  return {{"answer_text", c.answer_text},
          {"evidence", c.evidence},
          {"iterations_used", c.iterations_used},
          {"verification", std::string(to_string(c.verification))}};
}

VerificationStatus verification_from_string(std::string_view s) {
  if (s == "consistent") return VerificationStatus::Consistent;
  if (s == "inconsistent") return VerificationStatus::Inconsistent;
  if (s == "unverified") return VerificationStatus::Unverified;
  throw Error(ErrorCode::ParseError, "unknown verification status '" + std::string(s) + "'");
}

std::size_t attempts(const EpisodeState& state, const std::string& normalized) {
  return static_cast<std::size_t>(std::count_if(state.evidence.begin(), state.evidence.end(), [&](const Observation& o) {
    return normalize_text(o.sub_question) == normalized;
  }));
}

bool answered(const EpisodeState& state, const std::string& normalized) {
  return std::any_of(state.evidence.begin(), state.evidence.end(), [&](const Observation& o) {
    return o.ok() && normalize_text(o.sub_question) == normalized;
  });
}

}  // namespace

RagResource::RagResource(std::shared_ptr<const RagEngine> engine, std::string name)
    : engine_(std::move(engine)), name_(std::move(name)) {
  if (!engine_) throw Error(ErrorCode::InvalidArgument, "RAG resource needs an engine");
}

void Task::validate() const {
  if (trim(question).empty()) throw Error(ErrorCode::InvalidQuestion, "question is empty", Stage::Reason);
  if (resources.empty()) throw Error(ErrorCode::InvalidArgument, "a task needs at least one resource");
  for (const auto& r : resources) {
    if (!r) throw Error(ErrorCode::InvalidArgument, "null resource handle");
  }
}

std::string_view to_string(DecisionKind kind) {
  switch (kind) {
    case DecisionKind::Conclude: return "conclude";
    case DecisionKind::Continue: return "continue";
    case DecisionKind::Abort: return "abort";
  }
  return "?";
}

std::string_view to_string(VerificationStatus status) {
  switch (status) {
    case VerificationStatus::Consistent: return "consistent";
    case VerificationStatus::Inconsistent: return "inconsistent";
    case VerificationStatus::Unverified: return "unverified";
  }
  return "?";
}

Orientation parse_orientation(std::string_view text, std::string_view question) {
  Orientation o;
  for (const auto& raw : split_lines(text)) {
    const auto line = trim(raw);
    if (auto v = field(line, "UNDERSTANDING")) {
      if (!v->empty()) o.understanding += (o.understanding.empty() ? "" : " ") + *v;
    } else if (auto v = field(line, "ANSWER")) {
      if (!is_none(*v) && !o.answer) o.answer = *v;
    } else if (auto v = field(line, "MISSING")) {
      if (!is_none(*v)) o.missing.push_back(*v);
    } else if (auto v = field(line, "CONTRADICTION")) {
      if (!is_none(*v)) o.contradictions.push_back(*v);
    }
  }
  if (!o.answer && o.missing.empty()) o.missing.emplace_back(question);
  return o;
}

std::string render_evidence(const std::vector<Observation>& evidence, const std::vector<std::size_t>& ids) {
  std::string out;
  for (const auto& o : evidence) {
    if (!o.ok()) continue;
    if (!ids.empty() && std::find(ids.begin(), ids.end(), o.id) == ids.end()) continue;
    if (!out.empty()) out += '\n';
    out += "[E" + std::to_string(o.id) + "] Q: " + o.sub_question + "\nA: " + o.answer->answer_text;
  }
  return out.empty() ? "(none)" : out;
}

OodaReasoner::OodaReasoner(std::shared_ptr<Generator> generator, OodaConfig config)
    : generator_(std::move(generator)), config_(config) {
  if (!generator_) throw Error(ErrorCode::InvalidArgument, "OODA reasoner needs a generator");
  if (config_.max_pending == 0) throw Error(ErrorCode::InvalidArgument, "max_pending must be at least 1");
}

std::vector<std::string> OodaReasoner::decompose_question(std::string_view question, std::string_view instructions) {
  if (trim(question).empty()) throw Error(ErrorCode::InvalidQuestion, "question is empty", Stage::Reason);
  const auto text = generator_->complete(
      stage_messages("ooda_decompose", {{"instructions", std::string(instructions)}, {"question", std::string(question)}}),
      config_.generation);
  static const std::regex marker(R"(^\s*(?:\d+\s*[.):]|[-*])\s*)");
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& raw : split_lines(text)) {
    auto line = trim(std::regex_replace(raw, marker, "", std::regex_constants::format_first_only));
    if (line.empty()) continue;
    if (!seen.insert(normalize_text(line)).second) continue;
    out.push_back(line);
    if (out.size() == config_.max_pending) break;
  }
  if (out.empty()) out.emplace_back(trim(question));
  return out;
}

std::vector<std::size_t> OodaReasoner::observe(EpisodeState& state) {
  const auto pending = std::move(state.pending);
  state.pending.clear();
  const auto resources = state.task.resources;

  // Lookups run concurrently; the generator's in-flight limit bounds them.
  std::vector<std::future<Observation>> futures;
  futures.reserve(pending.size());
  for (const auto& q : pending) {
    futures.push_back(std::async(std::launch::async, [q, resources] {
      Observation o;
      o.sub_question = q;
      for (const auto& r : resources) {
        o.resource = r->name();
        try {
          o.answer = r->query(q);
          o.error.clear();
          return o;
        } catch (const std::exception& e) {
          o.error = e.what();
        }
      }
      return o;
    }));
  }

  std::vector<std::size_t> ids;
  Json records = Json::array();
  for (auto& f : futures) {
    auto o = f.get();
    o.id = state.evidence.size() + 1;
    o.iteration = state.iteration;
    records.push_back(observation_json(o));
    ids.push_back(o.id);
    state.evidence.push_back(std::move(o));
  }
  state.trace.push_back({{"stage", "observe"}, {"iteration", state.iteration}, {"observations", records}});
  return ids;
}

Orientation OodaReasoner::orient(const EpisodeState& state) {
  if (state.evidence.empty()) throw Error(ErrorCode::InvalidState, "orient needs at least one evidence record");
  try {
    const auto text = generator_->complete(stage_messages("ooda_orient", {{"instructions", state.task.instructions},
                                                                          {"question", state.task.question},
                                                                          {"evidence", render_evidence(state.evidence)}}),
                                           config_.generation);
    return parse_orientation(text, state.task.question);
  } catch (const Error& e) {
    throw e.with_stage(Stage::Reason);
  }
}

std::vector<std::string> OodaReasoner::fresh(const EpisodeState& state, const std::vector<std::string>& candidates) const {
  std::vector<std::string> out;
  std::set<std::string> seen = state.asked;
  for (const auto& c : candidates) {
    auto t = trim(c);
    if (t.empty()) continue;
    if (!seen.insert(normalize_text(t)).second) continue;
    out.push_back(t);
  }
  return out;
}

std::vector<std::string> OodaReasoner::retries(const EpisodeState& state) const {
  // A failed lookup is retried once, then treated as dead.
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& o : state.evidence) {
    if (o.ok()) continue;
    const auto n = normalize_text(o.sub_question);
    if (!seen.insert(n).second) continue;
    if (attempts(state, n) == 1 && !answered(state, n)) out.push_back(o.sub_question);
  }
  return out;
}

Decision OodaReasoner::decide(const EpisodeState& state, const Orientation& orientation) const {
  Decision d;
  if (orientation.missing.empty() && orientation.contradictions.empty()) return d;
  if (state.iteration >= state.max_iterations) {
    d.best_effort = true;
    return d;
  }
  auto next = fresh(state, orientation.missing);
  for (auto& r : retries(state)) {
    if (std::none_of(next.begin(), next.end(), [&](const std::string& n) { return normalize_text(n) == normalize_text(r); })) {
      next.push_back(std::move(r));
    }
  }
  if (next.size() > config_.max_pending) next.resize(config_.max_pending);
  if (next.empty()) {
    d.best_effort = true;
    return d;
  }
  d.kind = DecisionKind::Continue;
  d.next = std::move(next);
  return d;
}

void OodaReasoner::act(EpisodeState& state, const Decision& decision, const Orientation& orientation) {
  if (state.conclusion) throw Error(ErrorCode::InvalidState, "episode already concluded", Stage::Reason);
  auto record = [&](std::string action) {
    if (!state.iterations.empty()) state.iterations.back().actions.push_back(action);
  };
  switch (decision.kind) {
    case DecisionKind::Abort:
      throw Error(ErrorCode::InvalidState, "cannot act on an abort decision", Stage::Reason);
    case DecisionKind::Continue: {
      if (decision.next.empty()) throw Error(ErrorCode::InvalidState, "continue needs a sub-question", Stage::Reason);
      state.pending = decision.next;
      for (const auto& q : decision.next) {
        state.asked.insert(normalize_text(q));
        record("queue: " + q);
      }
      state.trace.push_back({{"stage", "act"}, {"iteration", state.iteration}, {"queued", decision.next}});
      return;
    }
    case DecisionKind::Conclude: {
      Conclusion c;
      c.answer_text = orientation.answer.value_or(orientation.understanding);
      if (trim(c.answer_text).empty()) c.answer_text = kNoAnswerText;
      for (const auto& o : state.evidence) {
        if (o.ok()) c.evidence.push_back(o.id);
      }
      c.iterations_used = state.iteration;
      if (decision.best_effort) {
        c.verification = VerificationStatus::Unverified;
      } else {
        c.verification = verify_conclusion(state, c.answer_text, c.evidence);
      }
      record("conclude");
      state.trace.push_back({{"stage", "verify"},
                             {"iteration", state.iteration},
                             {"skipped", decision.best_effort},
                             {"verification", std::string(to_string(c.verification))}});
      state.trace.push_back({{"stage", "conclusion"}, {"conclusion", conclusion_json(c)}});
      state.conclusion = std::move(c);
      return;
    }
  }
}

VerificationStatus OodaReasoner::verify_conclusion(const EpisodeState& state, std::string_view conclusion,
                                                   const std::vector<std::size_t>& evidence) {
  if (trim(conclusion).empty()) throw Error(ErrorCode::InvalidState, "no draft conclusion to verify", Stage::Reason);
  std::string text;
  try {
    text = generator_->complete(stage_messages("ooda_verify", {{"question", state.task.question},
                                                               {"conclusion", std::string(conclusion)},
                                                               {"evidence", render_evidence(state.evidence, evidence)}}),
                                config_.generation);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::GeneratorUnavailable || e.code() == ErrorCode::EmptyGeneration) {
      return VerificationStatus::Unverified;
    }
    throw e.with_stage(Stage::Reason);
  }
  for (const auto& raw : split_lines(text)) {
    if (auto v = field(trim(raw), "VERDICT")) {
      const auto verdict = to_lower_ascii(*v);
      if (verdict.rfind("inconsistent", 0) == 0) return VerificationStatus::Inconsistent;
      if (verdict.rfind("consistent", 0) == 0) return VerificationStatus::Consistent;
    }
  }
  return VerificationStatus::Unverified;
}

EpisodeState OodaReasoner::run(const Task& task, std::size_t max_iterations) {
  if (max_iterations == 0) throw Error(ErrorCode::InvalidArgument, "max_iterations must be at least 1");
  task.validate();
  EpisodeState st;
  st.task = task;
  st.max_iterations = max_iterations;
  st.trace.push_back({{"stage", "task"},
                      {"question", task.question},
                      {"instructions", task.instructions},
                      {"max_iterations", max_iterations},
                      {"max_pending", config_.max_pending},
                      {"prompts",
                       {prompts::get("ooda_decompose").version, prompts::get("ooda_orient").version,
                        prompts::get("ooda_verify").version}},
                      {"generator", generator_->fingerprint()}});

  std::vector<std::string> subs;
  Json decompose{{"stage", "decompose"}};
  try {
    subs = decompose_question(task.question, task.instructions);
  } catch (const Error& e) {
    if (!is_retryable(e.code()) && e.code() != ErrorCode::EmptyGeneration) throw e.with_stage(Stage::Reason);
    // Without a plan the question itself is the only sub-question.
    subs = {trim(task.question)};
    decompose["error"] = e.what();
  }
  decompose["sub_questions"] = subs;
  st.trace.push_back(decompose);
  st.pending = fresh(st, subs);
  for (const auto& q : st.pending) st.asked.insert(normalize_text(q));

  while (!st.conclusion) {
    ++st.iteration;
    OodaIteration it;
    it.index = st.iteration;
    it.observations = observe(st);

    const bool any_ok = std::any_of(st.evidence.begin(), st.evidence.end(), [](const Observation& o) { return o.ok(); });
    if (any_ok) {
      it.orientation = orient(st);
      st.trace.push_back({{"stage", "orient"}, {"iteration", st.iteration}, {"orientation", orientation_json(it.orientation)}});
      it.decision = decide(st, it.orientation);
    } else {
      auto again = retries(st);
      if (again.empty() || st.iteration >= st.max_iterations) {
        it.decision.kind = DecisionKind::Abort;
      } else {
        it.decision.kind = DecisionKind::Continue;
        it.decision.next = std::move(again);
      }
    }
    st.trace.push_back({{"stage", "decide"},
                        {"iteration", st.iteration},
                        {"decision", std::string(to_string(it.decision.kind))},
                        {"next", it.decision.next},
                        {"best_effort", it.decision.best_effort}});
    st.iterations.push_back(it);
    if (it.decision.kind == DecisionKind::Abort) {
      throw Error(ErrorCode::ResourceExhausted,
                  "every lookup failed after " + std::to_string(st.iteration) + " iteration(s)", Stage::Reason);
    }
    act(st, it.decision, it.orientation);
  }
  return st;
}

Conclusion OodaReasoner::solve(const Task& task, std::size_t max_iterations) {
  return *run(task, max_iterations).conclusion;
}

void write_trace(const std::filesystem::path& path, const std::vector<Json>& trace) {
  write_file_atomic(path, to_jsonl(trace));
}

TraceSummary read_trace(const std::filesystem::path& path) {
  TraceSummary s;
  bool have_task = false, have_conclusion = false;
  read_jsonl(path, [&](const Json& r, std::size_t line) {
    const auto stage = require_string(r, "stage", line);
    if (stage == "task") {
      s.question = require_string(r, "question", line);
      s.instructions = r.value("instructions", "");
      s.max_iterations = static_cast<std::size_t>(require_int(r, "max_iterations", line));
      have_task = true;
    } else if (stage == "conclusion") {
      const auto& c = r.at("conclusion");
      s.conclusion.answer_text = require_string(c, "answer_text", line);
      s.conclusion.evidence = c.at("evidence").get<std::vector<std::size_t>>();
      s.conclusion.iterations_used = static_cast<std::size_t>(require_int(c, "iterations_used", line));
      s.conclusion.verification = verification_from_string(require_string(c, "verification", line));
      have_conclusion = true;
    }
  });
  if (!have_task || !have_conclusion) {
    throw Error(ErrorCode::ParseError, "trace " + path.string() + " lacks a task or conclusion record");
  }
  return s;
}

}  // namespace finrag
