#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "finrag/error.hpp"
#include "finrag/evalsuite.hpp"
#include "finrag/prompts.hpp"
#include "test_support.hpp"

using namespace finrag;

namespace {

ScriptRule rule(std::vector<std::string> all, std::string respond) {
  ScriptRule r;
  r.when.contains_all = std::move(all);
  r.respond = std::move(respond);
  return r;
}

std::shared_ptr<ScriptedGenerator> scripted_judge() {
  const std::string rel(prompts::kRelevancyMarker), faith(prompts::kFaithfulnessMarker),
      corr(prompts::kCorrectnessMarker);
  ScriptedBehavior b;
  ScriptRule down;
  down.when.contains_any = {"outage"};
  down.fail = "unavailable";
  b.rules.push_back(down);
  b.rules.push_back(rule({rel, "Response: Zembla"}, "SCORE: 1\nREASON: in line with the context"));
  b.rules.push_back(rule({rel}, "SCORE: 0\nREASON: about something else"));
  b.rules.push_back(rule({faith, "Response: 120 million"}, "SCORE: 1\nREASON: figure present"));
  b.rules.push_back(rule({faith}, "SCORE: 0\nREASON: figure absent"));
  b.rules.push_back(rule({corr, "Generated answer: 120 million"}, "SCORE: 5\nREASON: matches"));
  b.rules.push_back(rule({corr, "Generated answer: Globex"}, "SCORE: 1\nREASON: wrong company"));
  b.rules.push_back(rule({corr, "Generated answer: six"}, "SCORE: 6\nREASON: overflow"));
  b.rules.push_back(rule({corr}, "no score here"));
  return std::make_shared<ScriptedGenerator>(b);
}

MetricRecord rec(std::string id, int category, std::optional<int> human, std::optional<double> pct = {}) {
  MetricRecord r;
  r.question_id = std::move(id);
  r.config_id = "generic-rag";
  r.category = category;
  r.human_correct = human;
  r.correctness_pct = pct;
  if (pct) r.correctness_raw = 1.0 + 4.0 * *pct;
  return r;
}

// 6 easier (4 correct) and 4 harder (1 correct).
std::vector<MetricRecord> ten_questions() {
  return {rec("q01", 0, 1, 1.0),  rec("q02", 0, 1, 0.75), rec("q03", 1, 1, 0.5),  rec("q04", 2, 1, 0.25),
          rec("q05", 1, 0, 0.0),  rec("q06", 2, 0, 0.0),  rec("q07", 3, 1, 1.0),  rec("q08", 4, 0, 0.25),
          rec("q09", 5, 0, 0.5),  rec("q10", 6, 0, 0.0)};
}

}  // namespace

TEST_CASE("categories and bands") {
  CHECK(category_label(0) == "0-RETRIEVE");
  CHECK(category_label(6) == "6-OTHER-ADVANCED");
  CHECK(is_easier(2));
  CHECK_FALSE(is_easier(3));
  CHECK(parse_category(Json("4-CALC-AND-JUDGE")) == 4);
  CHECK(parse_category(Json(1)) == 1);
  try {
    parse_category(Json(7), 12);
    FAIL("expected UnknownCategory");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnknownCategory);
    CHECK(e.line() == 12);
  }
}

TEST_CASE("judge_relevancy") {
  Judge judge(scripted_judge());
  std::vector<std::string> ctx{"The capital of Freedonia is Zembla."};
  auto yes = judge.relevancy("capital of Freedonia?", "Zembla", ctx);
  CHECK(yes.score == 1.0);
  CHECK(yes.justification == "in line with the context");
  CHECK(yes.prompt_version == "judge_relevancy.v1");
  CHECK(judge.relevancy("capital of Freedonia?", "Sylvania exports cheese", ctx).score == 0.0);

  auto gen = scripted_judge();
  Judge counted(gen);
  auto empty = counted.relevancy("q", "  ", ctx);
  CHECK(empty.score == 0.0);
  CHECK(gen->calls() == 0);
  CHECK(counted.relevancy("q", "Zembla", ctx).score == counted.relevancy("q", "Zembla", ctx).score);
}

TEST_CASE("judge_faithfulness") {
  auto gen = scripted_judge();
  Judge judge(gen);
  std::vector<std::string> ctx{"Revenue was 120 million."};
  CHECK(judge.faithfulness("120 million", ctx).score == 1.0);
  CHECK(judge.faithfulness("450 million", ctx).score == 0.0);
  const auto before = gen->calls();
  CHECK(judge.faithfulness("120 million", {}).score == 0.0);
  CHECK(gen->calls() == before);
}

TEST_CASE("judge_correctness") {
  Judge judge(scripted_judge());
  CHECK(judge.correctness("Acme revenue?", "120 million", "120 million").score == 5.0);
  CHECK(judge.correctness("Acme revenue?", "Globex made 3", "120 million").score == 1.0);
  try {
    judge.correctness("Acme revenue?", "six", "120 million");
    FAIL("expected BackendContractViolation");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BackendContractViolation);
  }
  CHECK_THROWS_AS(judge.correctness("Acme revenue?", "something", "120 million"), Error);
  try {
    judge.correctness("q", "outage", "ref");
    FAIL("expected MetricUnavailable");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MetricUnavailable);
  }
  try {
    judge.correctness("q", "a", " ");
    FAIL("expected ReferenceMissing");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ReferenceMissing);
  }
}

TEST_CASE("parse_judge_reply") {
  CHECK(parse_judge_reply("SCORE: 2.83\nREASON: close").score == 2.83);
  CHECK(parse_judge_reply("score:4\nreason: ok").reason == "ok");
  CHECK_THROWS_AS(parse_judge_reply("SCORE: four"), Error);
  CHECK_THROWS_AS(parse_judge_reply("REASON: none"), Error);
}

TEST_CASE("context similarity thresholding") {
  CHECK(similarity_binary(0.79) == 0);
  CHECK(similarity_binary(0.81) == 1);
  CHECK(similarity_binary(0.8) == 1);
  CHECK(similarity_binary(std::nextafter(0.8, 0.0)) == 0);

  HashMockEmbedder emb(256, 1);
  std::vector<std::string> same{"Revenue grew 10%.", "Margins fell."};
  auto s = context_similarity(emb, same, same);
  CHECK(std::fabs(s.raw - 1.0) < 1e-12);
  CHECK(s.binary == 1);
  auto d = context_similarity(emb, {"Sylvania exports cheese"}, {"Acme revenue 2021"});
  CHECK(d.binary == similarity_binary(d.raw));
  try {
    context_similarity(emb, same, {});
    FAIL("expected ReferenceMissing");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ReferenceMissing);
  }
}

TEST_CASE("correctness_to_pct") {
  CHECK(correctness_to_pct(1) == 0.0);
  CHECK(correctness_to_pct(2) == 0.25);
  CHECK(correctness_to_pct(3) == 0.5);
  CHECK(correctness_to_pct(4) == 0.75);
  CHECK(correctness_to_pct(5) == 1.0);
  CHECK(std::fabs(correctness_to_pct(2.83) - 0.4575) < 1e-12);
  CHECK_THROWS_AS(correctness_to_pct(0.99), Error);
  CHECK_THROWS_AS(correctness_to_pct(5.01), Error);
  CHECK_THROWS_AS(correctness_to_pct(std::nan("")), Error);
  double prev = -1;
  for (double s = 1.0; s <= 5.0; s += 0.125) {
    CHECK(correctness_to_pct(s) > prev);
    prev = correctness_to_pct(s);
  }
}

TEST_CASE("aggregate reproduces hand-computed band means") {
  auto records = ten_questions();
  auto row = aggregate(records);
  CHECK_FALSE(row.human_pending);
  CHECK(std::fabs(*row.easier - 4.0 / 6.0) < 1e-12);
  CHECK(std::fabs(*row.harder - 0.25) < 1e-12);
  CHECK(std::fabs(*row.overall - 0.5) < 1e-12);
  CHECK(std::fabs(*row.automated - 4.25 / 10.0) < 1e-12);
  CHECK(format_percent(row.easier) == "67%");
  CHECK(format_percent(row.harder) == "25%");
  CHECK(format_percent(row.overall) == "50%");
  CHECK(format_percent(std::nullopt) == "N/A");
  CHECK(format_percent(0.125) == "13%");

  std::mt19937_64 rng(3);
  for (int i = 0; i < 20; ++i) {
    std::shuffle(records.begin(), records.end(), rng);
    auto again = aggregate(records);
    CHECK(*again.easier == *row.easier);
    CHECK(*again.overall == *row.overall);
    CHECK(*again.automated == *row.automated);
    CHECK(*again.overall >= std::min(*again.easier, *again.harder));
    CHECK(*again.overall <= std::max(*again.easier, *again.harder));
  }
}

TEST_CASE("aggregate edge cases") {
  std::vector<MetricRecord> all_correct{rec("a", 0, 1), rec("b", 5, 1)};
  auto row = aggregate(all_correct);
  CHECK(format_percent(row.easier) == "100%");
  CHECK(format_percent(row.harder) == "100%");

  auto easy_only = aggregate({rec("a", 0, 1), rec("b", 1, 0)});
  CHECK_FALSE(easy_only.harder);
  CHECK(format_percent(easy_only.harder) == "N/A");

  auto pending = aggregate({rec("a", 0, std::nullopt, 0.5)});
  CHECK(pending.human_pending);
  CHECK(*pending.automated == 0.5);

  auto failed = rec("f", 3, std::nullopt);
  failed.failed = true;
  auto with_failure = aggregate({rec("a", 0, std::nullopt, 1.0), failed});
  CHECK(*with_failure.automated == 0.5);

  auto unavailable = rec("u", 3, std::nullopt);
  unavailable.unavailable = {"correctness"};
  CHECK(*aggregate({rec("a", 0, std::nullopt, 1.0), unavailable}).automated == 1.0);
}

TEST_CASE("retrieval means") {
  std::vector<MetricRecord> records(3);
  const double raws[] = {0.9, 0.7, 0.85};
  for (int i = 0; i < 3; ++i) {
    records[i].question_id = "q" + std::to_string(i);
    records[i].relevancy = i != 1;
    records[i].faithfulness = 1;
    records[i].context_similarity_raw = raws[i];
    records[i].context_similarity_binary = similarity_binary(raws[i]);
  }
  auto row = retrieval_means(records);
  CHECK(std::fabs(*row.relevancy - 2.0 / 3.0) < 1e-12);
  CHECK(*row.faithfulness == 1.0);
  CHECK(std::fabs(*row.context_similarity - (0.9 + 0.7 + 0.85) / 3.0) < 1e-12);
  CHECK(std::fabs(*row.context_similarity_binary - 2.0 / 3.0) < 1e-12);
}

TEST_CASE("metric records round-trip") {
  TempDir dir;
  auto records = ten_questions();
  records[0].context_similarity_raw = 0.123456789012345678;
  records[0].trace = "traces/q01.jsonl";
  records[1].failed = true;
  records[1].error = "GeneratorUnavailable [generate]: down";
  save_records(dir / "r.jsonl", records);
  auto loaded = load_records(dir / "r.jsonl");
  REQUIRE(loaded.size() == records.size());
  CHECK(*loaded[0].context_similarity_raw == *records[0].context_similarity_raw);
  CHECK(loaded[0].trace == records[0].trace);
  CHECK(loaded[1].failed);
  save_records(dir / "r2.jsonl", loaded);
  CHECK(read_file(dir / "r.jsonl") == read_file(dir / "r2.jsonl"));
}

TEST_CASE("ingest_human_verdicts") {
  TempDir dir;
  std::vector<std::string> ids;
  for (int i = 0; i < 41; ++i) ids.push_back("fb" + std::to_string(i));
  auto write = [&](const std::string& name, const std::vector<std::string>& rows) {
    std::ofstream out(dir / name);
    for (const auto& r : rows) out << r << "\n";
    return dir / name;
  };
  std::vector<std::string> rows;
  for (int i = 0; i < 41; ++i) {
    rows.push_back(R"({"question_id":"fb)" + std::to_string(i) + R"(","verdict":)" + std::to_string(i % 2) +
                   R"(,"grader_id":"g1"})");
  }
  auto verdicts = ingest_human_verdicts(write("ok.jsonl", rows), ids);
  CHECK(verdicts.size() == 41);
  auto records = ten_questions();
  records[0].question_id = "fb0";
  records[1].question_id = "fb1";
  CHECK(merge_human_verdicts(records, verdicts) == 2);
  CHECK(records[1].human_correct == 1);

  auto expect = [&](const std::vector<std::string>& bad, ErrorCode code, std::size_t line) {
    try {
      ingest_human_verdicts(write("bad.jsonl", bad), ids);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == code);
      CHECK(e.line() == line);
    }
  };
  expect({rows[0], rows[0]}, ErrorCode::DuplicateVerdict, 2);
  expect({rows[0], R"({"question_id":"fb1","verdict":2,"grader_id":"g"})"}, ErrorCode::ParseError, 2);
  expect({R"({"question_id":"fb1","verdict":1})"}, ErrorCode::ParseError, 1);
  expect({R"({"question_id":"fb1","verdict":1,"grader_id":"g","extra":0})"}, ErrorCode::ParseError, 1);
  expect({rows[0], R"({"question_id":"zz","verdict":1,"grader_id":"g"})",
          R"({"question_id":"yy","verdict":0,"grader_id":"g","note":"n"})"},
         ErrorCode::UnknownQuestion, 2);
  try {
    ingest_human_verdicts(write("bad.jsonl", {R"({"question_id":"zz","verdict":1,"grader_id":"g"})",
                                              R"({"question_id":"yy","verdict":0,"grader_id":"g"})"}),
                          ids);
  } catch (const Error& e) {
    CHECK(e.message().find("line 1") != std::string::npos);
    CHECK(e.message().find("line 2") != std::string::npos);
  }
}
