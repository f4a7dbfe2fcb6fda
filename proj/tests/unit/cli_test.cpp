#include <doctest.h>

#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "finrag/evalsuite.hpp"
#include "finrag/util.hpp"
#include "test_support.hpp"

using namespace finrag;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  Result r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

const std::string kTwoHop = "By how much did Acme Corp total revenue change from fiscal 2021 to fiscal 2022?";

// Copy of the demo workspace: corpus, scripted rules, configs, questions.
struct Demo {
  TempDir dir{"finrag-cli"};
  std::string config;

  Demo() {
    std::filesystem::copy(FINRAG_DEMO_DIR, dir.path,
                          std::filesystem::copy_options::recursive | std::filesystem::copy_options::skip_existing);
    std::filesystem::remove_all(dir / "workspace");
    std::filesystem::remove_all(dir / "bench_out");
    config = (dir / "finrag.json").string();
  }

  void ready() {
    REQUIRE(run({"ingest", "-c", config}).code == 0);
    REQUIRE(run({"index", "-c", config, "--created", "2026-01-01T00:00:00Z"}).code == 0);
  }
};

}  // namespace

TEST_CASE("exit codes") {
  CHECK(cli::exit_code_for(ErrorCode::ParseError) == 1);
  CHECK(cli::exit_code_for(ErrorCode::ConfigError) == 1);
  CHECK(cli::exit_code_for(ErrorCode::EmptyIndex) == 2);
  CHECK(cli::exit_code_for(ErrorCode::ResourceExhausted) == 2);
  CHECK(cli::exit_code_for(ErrorCode::GeneratorUnavailable) == 3);
  CHECK(cli::exit_code_for(ErrorCode::EmbedderUnavailable) == 3);
  CHECK(run({}).code == 1);
  CHECK(run({"frobnicate"}).code == 1);
  CHECK(run({"--help"}).code == 0);
}

TEST_CASE("engine config is strict") {
  Demo d;
  auto j = Json::parse(read_file(d.config));
  j["api_key"] = "secret";
  std::ofstream(d.dir / "bad.json") << j.dump();
  auto r = run({"ingest", "-c", (d.dir / "bad.json").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("api_key") != std::string::npos);
  CHECK(run({"ingest", "-c", (d.dir / "missing.json").string()}).code == 1);
}

TEST_CASE("ingest") {
  Demo d;
  auto j = Json::parse(read_file(d.config));
  j["corpus"]["paths"] = Json::array();
  std::ofstream(d.dir / "bare.json") << j.dump();
  const auto bare = (d.dir / "bare.json").string();

  auto r = run({"ingest", "-c", bare, (d.dir / "corpus" / "acme_2021_10k.txt").string(),
                (d.dir / "corpus" / "acme_2022_10k.txt").string()});
  CHECK(r.code == 0);
  CHECK(Json::parse(r.out).at("documents") == 2);

  // Re-running without --force collides with the stored documents.
  r = run({"ingest", "-c", bare, (d.dir / "corpus" / "acme_2021_10k.txt").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("DuplicateDocument") != std::string::npos);

  std::ofstream(d.dir / "empty.txt") << "";
  r = run({"ingest", "-c", bare, "--force", (d.dir / "corpus" / "globex_2022_10k.txt").string(),
           (d.dir / "empty.txt").string()});
  CHECK(r.code == 1);
  CHECK(Json::parse(r.out).at("documents") == 1);
  CHECK(r.err.find("EmptyDocument") != std::string::npos);
}

TEST_CASE("ask") {
  Demo d;
  SUBCASE("missing index") {
    REQUIRE(run({"ingest", "-c", d.config}).code == 0);
    auto r = run({"ask", "-c", d.config, "What was Acme Corp net income in fiscal 2021?"});
    CHECK(r.code == 2);
    CHECK(r.err.find("EmptyIndex") != std::string::npos);
  }
  SUBCASE("answers deterministically") {
    d.ready();
    auto a = run({"ask", "-c", d.config, "What was Acme Corp net income in fiscal 2021?"});
    auto b = run({"ask", "-c", d.config, "What was Acme Corp net income in fiscal 2021?"});
    CHECK(a.code == 0);
    CHECK(a.out == b.out);
    CHECK(a.out.rfind("In fiscal 2021 Acme Corp net income was 9 million dollars.\n", 0) == 0);
    CHECK(a.out.find("3. ") != std::string::npos);
    auto k1 = run({"ask", "-c", d.config, "--k", "1", "What was Acme Corp net income in fiscal 2021?"});
    CHECK(k1.out.find("1. acme_2021_10k#0") != std::string::npos);
    CHECK(k1.out.find("2. ") == std::string::npos);
    CHECK(run({"ask", "-c", d.config, "   "}).code == 1);
  }
}

TEST_CASE("solve") {
  Demo d;
  d.ready();
  const auto trace = (d.dir / "trace.jsonl").string();
  auto r = run({"solve", "-c", d.config, "--trace", trace, kTwoHop});
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("30 million dollars\n", 0) == 0);
  CHECK(r.out.find("iterations: 2") != std::string::npos);
  CHECK(r.out.find("verification: consistent") != std::string::npos);

  auto replay = run({"solve", "-c", d.config, "--replay", trace, "--trace", (d.dir / "again.jsonl").string()});
  CHECK(replay.code == 0);
  CHECK(replay.out.find("replay: identical") != std::string::npos);
  CHECK(read_file(d.dir / "again.jsonl") == read_file(trace));

  auto capped = run({"solve", "-c", d.config, "--max-iterations", "1", kTwoHop});
  CHECK(capped.code == 0);
  CHECK(capped.out.find("verification: unverified") != std::string::npos);
}

TEST_CASE("bench, report and eval") {
  Demo d;
  const auto bench = (d.dir / "bench.json").string();
  auto r = run({"bench", bench, "--created", "2026-01-01T00:00:00Z"});
  REQUIRE(r.code == 0);
  for (const char* id : {"generic-rag", "ft-generator", "ft-retriever", "fully-ft", "generic-rag-ooda"}) {
    CHECK(load_records(d.dir / "bench_out" / "records" / (std::string(id) + ".jsonl")).size() == 5);
  }
  CHECK(r.out.find("Table 1") != std::string::npos);
  CHECK(r.out.find("Table 2") != std::string::npos);

  auto resumed = run({"bench", bench, "--resume", "--created", "2026-01-01T00:00:00Z"});
  CHECK(resumed.code == 0);
  CHECK(resumed.err.find("0 question(s) to run, 5 resumed") != std::string::npos);
  CHECK(resumed.out == r.out);

  auto replay = run({"bench", "--from-manifest", (d.dir / "bench_out" / "manifest.json").string(), "--out",
                     (d.dir / "replay").string()});
  CHECK(replay.code == 0);
  CHECK(read_file(d.dir / "replay" / "records" / "generic-rag-ooda.jsonl") ==
        read_file(d.dir / "bench_out" / "records" / "generic-rag-ooda.jsonl"));

  std::ofstream(d.dir / "verdicts.jsonl") << R"({"question_id":"d1","verdict":1,"grader_id":"g1"})" << "\n"
                                          << R"({"question_id":"d5","verdict":0,"grader_id":"g1"})" << "\n";
  auto report = run({"report", (d.dir / "bench_out").string(), "--human",
                     "generic-rag=" + (d.dir / "verdicts.jsonl").string()});
  CHECK(report.code == 0);
  CHECK(report.out.find("Table 2") != std::string::npos);
  CHECK(read_file(d.dir / "bench_out" / "table2.csv").find("generic-rag,Generic RAG,5,0,1.0,0.0,0.5,") !=
        std::string::npos);
  CHECK(run({"report", (d.dir / "bench_out").string(), "--human", "oops"}).code == 1);

  auto missing = Json::parse(read_file(bench));
  missing["dataset"] = "nope.jsonl";
  std::ofstream(d.dir / "missing.json") << missing.dump();
  CHECK(run({"bench", (d.dir / "missing.json").string()}).code == 1);

  std::ofstream(d.dir / "answers.jsonl")
      << R"({"question_id":"d1","answer":"Revenue was 150 million dollars.","contexts":["Acme Corp reported total revenue of 150 million dollars in fiscal 2022."]})"
      << "\n"
      << R"({"question_id":"d2","answer":"No idea."})" << "\n";
  auto eval = run({"eval", "-c", d.config, "--dataset", (d.dir / "questions.jsonl").string(), "--answers",
                   (d.dir / "answers.jsonl").string(), "--out", (d.dir / "eval.jsonl").string()});
  REQUIRE(eval.code == 0);
  const auto summary = Json::parse(eval.out);
  CHECK(summary.at("questions") == 2);
  CHECK(summary.at("automated_correctness").get<double>() == 0.5);
  CHECK(load_records(d.dir / "eval.jsonl").at(0).context_similarity_raw.has_value());

  std::ofstream(d.dir / "answers.jsonl") << R"({"question_id":"zz","answer":"x"})" << "\n";
  CHECK(run({"eval", "-c", d.config, "--dataset", (d.dir / "questions.jsonl").string(), "--answers",
             (d.dir / "answers.jsonl").string()})
            .code == 1);
}

TEST_CASE("dataprep") {
  Demo d;
  d.ready();
  const auto out = d.dir / "prep";
  auto r = run({"dataprep", "dataset", (d.dir / "questions.jsonl").string(), "--out", out.string()});
  REQUIRE(r.code == 0);
  CHECK(Json::parse(r.out).at("triplets") == 6);
  CHECK(read_file(out / "generator_pairs.jsonl").find("reported total revenue") == std::string::npos);

  auto s = run({"dataprep", "dataset", (d.dir / "questions.jsonl").string(), "--sample", "9", "--out", out.string()});
  CHECK(s.code == 1);
  CHECK(s.err.find("InvalidSample") != std::string::npos);

  // The demo generator has no triplet rule, so every chunk is rejected.
  auto g = run({"dataprep", "generate", "-c", d.config, "--out", (d.dir / "gen").string()});
  CHECK(g.code == 0);
  CHECK(Json::parse(g.out).at("rejected") == 3);
  CHECK(read_jsonl(d.dir / "gen" / "rejections.jsonl").size() == 3);
}
