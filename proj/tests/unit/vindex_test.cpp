#include <doctest.h>

#include <algorithm>
#include <random>

#include "finrag/error.hpp"
#include "finrag/util.hpp"
#include "finrag/vindex.hpp"
#include "test_support.hpp"

using namespace finrag;

namespace {

EmbeddingVector vec(std::vector<double> raw) { return EmbeddingVector::normalized(std::span<const double>(raw)); }

EmbeddingVector random_vec(std::mt19937_64& rng, std::size_t dims) {
  std::normal_distribution<double> g;
  std::vector<double> raw(dims);
  for (auto& x : raw) x = g(rng);
  return vec(raw);
}

std::vector<IndexEntry> random_entries(std::mt19937_64& rng, std::size_t n, std::size_t dims) {
  std::vector<IndexEntry> entries;
  for (std::size_t i = 0; i < n; ++i) {
    // Every tenth entry duplicates an earlier vector to force score ties.
    if (i > 0 && i % 10 == 0) {
      entries.push_back({"c" + std::to_string(rng() % 100000), entries[rng() % i].vector});
    } else {
      entries.push_back({"c" + std::to_string(rng() % 100000), random_vec(rng, dims)});
    }
    // Ids must be unique.
    while (std::count_if(entries.begin(), entries.end() - 1,
                         [&](const IndexEntry& e) { return e.chunk_id == entries.back().chunk_id; }) > 0) {
      entries.back().chunk_id += "x";
    }
  }
  return entries;
}

VectorIndex index_of(const std::vector<IndexEntry>& entries, std::size_t dims) {
  VectorIndex index(dims, "test");
  for (const auto& e : entries) index.add(e.chunk_id, e.vector);
  return index;
}

}  // namespace

TEST_CASE("add_chunk") {
  VectorIndex index(2, "test");
  index.add("a", vec({1, 0}));
  CHECK(index.size() == 1);
  try {
    index.add("a", vec({0, 1}));
    FAIL("expected DuplicateChunk");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DuplicateChunk);
  }
  try {
    index.add("b", vec({0, 1, 0}));
    FAIL("expected DimensionMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DimensionMismatch);
  }
  CHECK(index.size() == 1);

  std::mt19937_64 rng(1);
  VectorIndex big(8, "test");
  for (int i = 0; i < 1000; ++i) big.add("id" + std::to_string(i), random_vec(rng, 8));
  CHECK(big.size() == 1000);
  CHECK(big.ids().size() == 1000);
  CHECK(big.ids()[999] == "id999");
}

TEST_CASE("retrieve_top_k on hand-computed instances") {
  VectorIndex index(2, "test");
  SUBCASE("empty index") {
    try {
      index.retrieve_top_k(vec({1, 0}), 3);
      FAIL("expected EmptyIndex");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::EmptyIndex);
    }
  }
  SUBCASE("single entry") {
    index.add("only", vec({0.2, -0.9}));
    auto hits = index.retrieve_top_k(vec({-1, 0.1}), 10);
    REQUIRE(hits.size() == 1);
    CHECK(hits[0].chunk_id == "only");
    CHECK(hits[0].rank == 1);
  }
  SUBCASE("a, c, b ordering") {
    index.add("a", vec({1, 0}));
    index.add("b", vec({0, 1}));
    index.add("c", vec({0.6, 0.8}));
    auto hits = index.retrieve_top_k(vec({1, 0}), 2);
    REQUIRE(hits.size() == 2);
    CHECK(hits[0].chunk_id == "a");
    CHECK(hits[0].score == doctest::Approx(1.0).epsilon(1e-7));
    CHECK(hits[1].chunk_id == "c");
    CHECK(hits[1].score == doctest::Approx(0.6).epsilon(1e-7));
    CHECK(hits[1].rank == 2);
    CHECK_THROWS_AS(index.retrieve_top_k(vec({1, 0}), 0), Error);
  }
  SUBCASE("k clamps to size") {
    std::mt19937_64 rng(2);
    for (int i = 0; i < 5; ++i) index.add(std::to_string(i), random_vec(rng, 2));
    CHECK(index.retrieve_top_k(vec({1, 1}), 10).size() == 5);
  }
}

TEST_CASE("ties break by chunk_id ascending") {
  VectorIndex index(3, "test");
  auto v = vec({1, 2, 3});
  index.add("zeta", v);
  index.add("alpha", v);
  index.add("mid", v);
  auto hits = index.retrieve_top_k(vec({3, 2, 1}), 3);
  CHECK(hits[0].chunk_id == "alpha");
  CHECK(hits[1].chunk_id == "mid");
  CHECK(hits[2].chunk_id == "zeta");
}

TEST_CASE("top-k agrees exactly with the brute-force oracle") {
  std::mt19937_64 rng(77);
  const std::size_t dims = 64;
  auto entries = random_entries(rng, 1000, dims);
  auto index = index_of(entries, dims);
  for (int q = 0; q < 100; ++q) {
    auto query = random_vec(rng, dims);
    const std::size_t k = 1 + rng() % 20;
    auto oracle = brute_force_rank(entries, query);
    auto hits = index.retrieve_top_k(query, k);
    REQUIRE(hits.size() == k);
    CHECK(std::equal(hits.begin(), hits.end(), oracle.begin()));
  }
}

TEST_CASE("prefix property and insertion-order invariance") {
  std::mt19937_64 rng(8);
  auto entries = random_entries(rng, 60, 6);
  auto index = index_of(entries, 6);
  auto shuffled = entries;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  auto index2 = index_of(shuffled, 6);
  for (int q = 0; q < 20; ++q) {
    auto query = random_vec(rng, 6);
    auto full = index.retrieve_top_k(query, entries.size());
    CHECK(full == index2.retrieve_top_k(query, entries.size()));
    for (std::size_t k = 1; k < entries.size(); ++k) {
      auto a = index.retrieve_top_k(query, k);
      CHECK(std::equal(a.begin(), a.end(), full.begin()));
    }
  }
}

TEST_CASE("parallel and serial scoring kernels are bit-identical") {
  std::mt19937_64 rng(10);
  const std::size_t dims = 32, n = 500;
  std::vector<float> rows;
  std::vector<double> norms;
  for (std::size_t i = 0; i < n; ++i) {
    auto v = random_vec(rng, dims);
    rows.insert(rows.end(), v.values().begin(), v.values().end());
    norms.push_back(std::sqrt(squared_norm(v.values())));
  }
  auto q = random_vec(rng, dims);
  std::vector<double> a(n), b(n);
  kernels::score_rows(rows, norms, dims, q.values(), a);
  kernels::score_rows_serial(rows, norms, dims, q.values(), b);
  CHECK(a == b);
}

TEST_CASE("snapshot round trip is bit-exact") {
  TempDir dir;
  std::mt19937_64 rng(12);
  auto entries = random_entries(rng, 200, 16);
  auto index = index_of(entries, 16);
  index.save(dir / "a.snap", "2026-01-01T00:00:00Z");
  auto loaded = VectorIndex::load(dir / "a.snap");
  CHECK(loaded.size() == index.size());
  CHECK(loaded.fingerprint() == "test");
  loaded.save(dir / "b.snap", "2026-01-01T00:00:00Z");
  CHECK(read_file(dir / "a.snap") == read_file(dir / "b.snap"));
  for (int q = 0; q < 10; ++q) {
    auto query = random_vec(rng, 16);
    CHECK(index.retrieve_top_k(query, 15) == loaded.retrieve_top_k(query, 15));
  }
  auto first_line = split_lines(read_file(dir / "a.snap")).front();
  auto header = Json::parse(first_line);
  CHECK(header.at("dims") == 16);
  CHECK(header.at("count") == 200);
}

TEST_CASE("vector encoding is little-endian float32") {
  std::vector<float> v{1.0f};
  CHECK(encode_vector(v) == "AACAPw==");  // 0x3f800000 little-endian
  CHECK(decode_vector("AACAPw==", 1) == v);
  CHECK_THROWS_AS(decode_vector("AACAPw==", 2), Error);
}
