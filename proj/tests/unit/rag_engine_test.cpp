#include <doctest.h>

#include <algorithm>

#include "finrag/error.hpp"
#include "finrag/prompts.hpp"
#include "finrag/rag_engine.hpp"

using namespace finrag;

namespace {

ScriptedBehavior extractive() {
  ScriptedBehavior b;
  ScriptRule r;
  r.when.contains_all = {std::string(prompts::kRagMarker)};
  r.builtin = "extractive_reader";
  b.rules.push_back(r);
  b.fallback = "I cannot tell.";
  return b;
}

struct Stack {
  std::shared_ptr<HashMockEmbedder> embedder = std::make_shared<HashMockEmbedder>(512, 1);
  std::shared_ptr<ScriptedGenerator> generator;
  std::shared_ptr<RagEngine> engine;

  Stack(const std::vector<Document>& docs, ScriptedBehavior behavior, RagConfig config = {}) {
    generator = std::make_shared<ScriptedGenerator>(std::move(behavior));
    std::vector<Chunk> chunks;
    for (const auto& d : docs) {
      auto c = split_into_chunks(d, {1024, 0});
      chunks.insert(chunks.end(), c.begin(), c.end());
    }
    auto index = std::make_shared<VectorIndex>(build_index(*embedder, chunks));
    auto table = std::make_shared<ChunkTable>(make_chunk_table(chunks));
    engine = std::make_shared<RagEngine>(embedder, index, table, generator, config);
  }
};

std::vector<RetrievedContext> hits_from(const std::vector<std::string>& texts) {
  std::vector<RetrievedContext> out;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    out.push_back({{"c" + std::to_string(i), 1.0 - 0.1 * static_cast<double>(i), i + 1}, texts[i], {}, {}});
  }
  return out;
}

std::vector<std::string> ids(const std::vector<RetrievedContext>& v) {
  std::vector<std::string> out;
  for (const auto& c : v) out.push_back(c.hit.chunk_id);
  return out;
}

}  // namespace

TEST_CASE("one-pass answer extracts the planted fact") {
  Stack stack({{"freedonia", "The capital of Freedonia is Zembla.", {{"country", "Freedonia"}}},
               {"sylvania", "Sylvania exports cheese and timber.", {}},
               {"acme", "Acme reported revenue of 12 million dollars.", {}}},
              extractive());
  auto answer = stack.engine->answer_one_pass("What is the capital of Freedonia?");
  CHECK(answer.answer_text.find("Zembla") != std::string::npos);
  CHECK(answer.retrieved.front().hit.chunk_id == "freedonia#0");
  CHECK(answer.retrieved.front().tag == "freedonia#0 country=Freedonia");
  CHECK(answer.prompt_version == "rag_answer.v1");
  CHECK(answer.config_id == "generic-rag");
  CHECK(answer.retrieved.size() == 3);
}

TEST_CASE("one-pass makes exactly one embed and one generate call") {
  Stack stack({{"d", "Some text about margins.", {}}}, extractive());
  const auto embeds = stack.embedder->calls();
  const auto gens = stack.generator->calls();
  stack.engine->answer_one_pass("What about margins?");
  CHECK(stack.embedder->calls() - embeds == 1);
  CHECK(stack.generator->calls() - gens == 1);
}

TEST_CASE("one chunk with k=1 yields exactly one hit") {
  RagConfig cfg;
  cfg.k = 1;
  Stack stack({{"d", "Only chunk.", {}}}, extractive(), cfg);
  CHECK(stack.engine->answer_one_pass("anything").retrieved.size() == 1);
}

TEST_CASE("empty question is rejected") {
  Stack stack({{"d", "Only chunk.", {}}}, extractive());
  try {
    stack.engine->answer_one_pass("   ");
    FAIL("expected InvalidQuestion");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidQuestion);
  }
}

TEST_CASE("failures carry stage labels") {
  SUBCASE("generator outage is a Generate failure") {
    ScriptedBehavior b;
    ScriptRule r;
    r.when.contains_all = {"Query:"};
    r.fail = "unavailable";
    b.rules.push_back(r);
    Stack stack({{"d", "text", {}}}, b);
    try {
      stack.engine->answer_one_pass("q?");
      FAIL("expected GeneratorUnavailable");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::GeneratorUnavailable);
      CHECK(e.stage() == Stage::Generate);
    }
  }
  SUBCASE("empty index is a Retrieve failure") {
    auto emb = std::make_shared<HashMockEmbedder>(8, 1);
    RagEngine engine(emb, std::make_shared<VectorIndex>(8, "x"), std::make_shared<ChunkTable>(),
                     std::make_shared<ScriptedGenerator>(extractive()));
    try {
      engine.answer_one_pass("q?");
      FAIL("expected EmptyIndex");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::EmptyIndex);
      CHECK(e.stage() == Stage::Retrieve);
    }
  }
}

TEST_CASE("every prompt context appears in the evidence trail") {
  RagConfig cfg;
  cfg.context_budget_tokens = 12;
  ScriptedBehavior echo;
  ScriptRule r;
  r.when.regex = "([\\s\\S]*)";
  r.when.target = ScriptMatcher::Target::LastUser;
  r.respond = "{1}";
  echo.rules.push_back(r);
  Stack stack({{"a", "alpha beta gamma delta.", {}}, {"b", "epsilon zeta eta theta.", {}},
               {"c", "iota kappa lambda mu.", {}}},
              echo, cfg);
  auto answer = stack.engine->answer_one_pass("alpha");
  CHECK(answer.contexts_in_prompt == 2);  // 5 tokens each against a 12-token budget
  for (std::size_t i = 0; i < answer.contexts_in_prompt; ++i) {
    CHECK(answer.answer_text.find(answer.retrieved[i].text) != std::string::npos);
  }
}

TEST_CASE("augment") {
  SUBCASE("empty spec is identity") {
    auto in = hits_from({"x", "y", "z"});
    CHECK(ids(augment(in, {})) == ids(in));
  }
  SUBCASE("keyword boost is a stable partition") {
    AugmentationSpec spec;
    spec.keywords = {"EBITDA"};
    auto out = augment(hits_from({"revenue only", "adjusted ebitda rose", "costs"}), spec);
    CHECK(ids(out) == std::vector<std::string>{"c1", "c0", "c2"});
    CHECK(out[0].hit.rank == 2);
  }
  SUBCASE("all matching keeps order") {
    AugmentationSpec spec;
    spec.keywords = {"EBITDA"};
    auto in = hits_from({"EBITDA a", "EBITDA b", "EBITDA c"});
    CHECK(ids(augment(in, spec)) == ids(in));
  }
  SUBCASE("always a permutation") {
    AugmentationSpec spec;
    spec.keywords = {"b", "d"};
    auto in = hits_from({"a", "b", "c", "d", "e", "bd"});
    auto out = ids(augment(in, spec));
    auto expected = ids(in);
    std::sort(out.begin(), out.end());
    std::sort(expected.begin(), expected.end());
    CHECK(out == expected);
  }
  SUBCASE("metadata tags") {
    auto in = hits_from({"x"});
    in[0].metadata = {{"company", "Acme"}, {"seq", "0"}};
    CHECK(augment(in, {}).front().tag == "c0 company=Acme");
    AugmentationSpec bare;
    bare.attach_metadata = false;
    CHECK(augment(in, bare).front().tag == "c0");
  }
}
