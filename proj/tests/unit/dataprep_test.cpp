#include <doctest.h>

#include "finrag/dataprep.hpp"
#include "finrag/error.hpp"
#include "finrag/prompts.hpp"
#include "test_support.hpp"

using namespace finrag;

namespace {

std::vector<Chunk> make_chunks(std::size_t n) {
  std::vector<Chunk> out;
  for (std::size_t i = 0; i < n; ++i) {
    Chunk c;
    c.doc_id = "doc" + std::to_string(i);
    c.chunk_id = c.doc_id + "#0";
    c.text = "Passage " + std::to_string(i) + " says revenue grew.";
    out.push_back(c);
  }
  return out;
}

// Three numbered pairs built from the passage number.
ScriptedBehavior three_pairs() {
  ScriptRule r;
  r.when.contains_all = {std::string(prompts::kTripletMarker)};
  r.when.regex = "Passage (\\d+)";
  r.respond = "Q1: What does passage {1} say?\nA1: Revenue grew.\nQ2: Which passage is {1}?\nA2: Number {1}.\n"
              "Q3: Did revenue grow in {1}?\nA3: Yes.";
  ScriptedBehavior b;
  b.rules.push_back(r);
  return b;
}

ScriptRule respond_for(std::string needle, std::string respond) {
  ScriptRule r;
  r.when.contains_all = {std::string(prompts::kTripletMarker), std::move(needle)};
  r.respond = std::move(respond);
  return r;
}

}  // namespace

TEST_CASE("pair parsing is strict") {
  auto pairs = parse_pairs("Q1: a?\nA1: b\n\n  Q2 : c?\nA2:d\n", 3);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[1] == std::pair<std::string, std::string>{"c?", "d"});
  for (const char* bad : {"", "Q1: a?", "A1: b", "Q1: a?\nA1: b\nQ3: c?\nA3: d", "Q1: a?\nQ2: b?\nA1: x",
                          "Here you go:\nQ1: a?\nA1: b", "Q1: a?\nA1:", "Q1: a?\nA1: b\nQ2: c?\nA2: d\nQ3: e?\nA3: f\nQ4: g?\nA4: h"}) {
    CHECK_THROWS_AS(parse_pairs(bad, 3), Error);
  }
}

TEST_CASE("triplet generation") {
  SUBCASE("well-behaved generator yields per_chunk triplets per chunk") {
    ScriptedGenerator gen(three_pairs());
    auto batch = generate_triplets(make_chunks(10), gen, 3);
    CHECK(batch.triplets.size() == 30);
    CHECK(batch.rejections.empty());
    CHECK(gen.calls() == 10);
    CHECK(batch.triplets[0].triplet_id == "doc0#0#1");
    CHECK(batch.triplets[29].source_id == "doc9#0");
    CHECK(batch.triplets[4].query == "Which passage is 1?");
    CHECK(batch.triplets[4].context == "Passage 1 says revenue grew.");
    std::set<std::string> ids;
    for (const auto& t : batch.triplets) ids.insert(t.triplet_id);
    CHECK(ids.size() == 30);
  }
  SUBCASE("malformed output rejects the whole chunk") {
    auto b = three_pairs();
    b.rules.insert(b.rules.begin(), respond_for("Passage 4 ", "Sure! Q1: what?"));
    ScriptedGenerator gen(b);
    auto batch = generate_triplets(make_chunks(10), gen, 3);
    CHECK(batch.triplets.size() == 27);
    REQUIRE(batch.rejections.size() == 1);
    CHECK(batch.rejections[0].source_id == "doc4#0");
  }
  SUBCASE("generator outage gives partial output") {
    auto b = three_pairs();
    ScriptRule down = respond_for("Passage 2 ", "");
    down.fail = "unavailable";
    b.rules.insert(b.rules.begin(), down);
    ScriptedGenerator gen(b);
    auto batch = generate_triplets(make_chunks(5), gen, 3, {}, 2);
    CHECK(batch.triplets.size() == 12);
    REQUIRE(batch.errors.size() == 1);
    CHECK(batch.errors[0].source_id == "doc2#0");
  }
  SUBCASE("per_chunk bounds the pair count") {
    ScriptedGenerator gen(three_pairs());
    auto batch = generate_triplets(make_chunks(2), gen, 2);
    CHECK(batch.triplets.empty());
    CHECK(batch.rejections.size() == 2);
    CHECK_THROWS_AS(generate_triplets(make_chunks(2), gen, 0), Error);
  }
}

TEST_CASE("dataset triplets and sampling") {
  std::vector<BenchmarkQuestion> qs;
  for (int i = 0; i < 141; ++i) {
    qs.push_back({"q" + std::to_string(i), "Question " + std::to_string(i) + "?", "A" + std::to_string(i),
                  {"Context " + std::to_string(i)}, {"doc"}, 0});
  }
  qs[5].reference_contexts.push_back("Second context");
  qs[6].reference_contexts.clear();
  auto batch = triplets_from_dataset(qs);
  CHECK(batch.triplets.size() == 141);
  REQUIRE(batch.rejections.size() == 1);
  CHECK(batch.rejections[0].source_id == "q6");
  CHECK(batch.triplets[0].origin == TripletOrigin::Dataset);

  auto a = sample_subset(batch.triplets, 100, 7);
  auto b = sample_subset(batch.triplets, 100, 7);
  CHECK(a.size() == 100);
  std::set<std::string> ids;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].triplet_id == b[i].triplet_id);
    ids.insert(a[i].triplet_id);
  }
  CHECK(ids.size() == 100);
  CHECK(sample_subset(batch.triplets, 141, 3).size() == 141);
  CHECK_THROWS_AS(sample_subset(batch.triplets, 142, 3), Error);
  auto dup = batch.triplets;
  dup.push_back(dup[0]);
  CHECK_THROWS_AS(sample_subset(dup, 2, 3), Error);
}

TEST_CASE("exports") {
  TempDir dir;
  ScriptedGenerator gen(three_pairs());
  auto triplets = generate_triplets(make_chunks(4), gen, 3).triplets;
  // Context identical to the query must still stay out of the export.
  triplets[0].context = triplets[0].query;
  triplets.push_back({"q9#1", "Dataset question?", "Dataset context.", "Dataset answer.", "q9", TripletOrigin::Dataset});

  CHECK(export_embedder_pairs(triplets, dir / "emb.jsonl") == triplets.size());
  auto pairs = load_embedder_pairs(dir / "emb.jsonl");
  REQUIRE(pairs.size() == triplets.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    CHECK(pairs[i] == EmbedderPair{triplets[i].query, triplets[i].context, triplets[i].source_id, triplets[i].origin});
  }
  CHECK(read_file(dir / "emb.jsonl").find("\"question_id\":\"q9\"") != std::string::npos);

  CHECK(export_generator_pairs(triplets, dir / "gen.jsonl") == triplets.size());
  CHECK(audit_generator_export(dir / "gen.jsonl", triplets) == 0);
  const auto text = read_file(dir / "gen.jsonl");
  CHECK(text.find("Dataset context.") == std::string::npos);
  CHECK(text.find("\"context\"") == std::string::npos);

  auto tampered = triplets;
  tampered.back().answer = "Other";
  CHECK(audit_generator_export(dir / "gen.jsonl", tampered) == 1);

  CHECK(export_embedder_pairs({}, dir / "empty.jsonl") == 0);
  CHECK(read_file(dir / "empty.jsonl").empty());
  CHECK(load_embedder_pairs(dir / "empty.jsonl").empty());

  save_triplets(dir / "t.jsonl", triplets);
  auto back = load_triplets(dir / "t.jsonl");
  REQUIRE(back.size() == triplets.size());
  CHECK(back.back().to_json() == triplets.back().to_json());
}
