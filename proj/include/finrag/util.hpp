#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace finrag {

using Json = nlohmann::json;

// 64-bit FNV-1a over the bytes of `data`, with the seed folded into the
// offset basis and a splitmix64 finalizer. Stable across platforms.
std::uint64_t hash64(std::string_view data, std::uint64_t seed = 0);
std::uint64_t splitmix64(std::uint64_t x);
std::string hex64(std::uint64_t value);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

std::string to_lower_ascii(std::string_view text);
std::string trim(std::string_view text);
std::vector<std::string> split_lines(std::string_view text);
bool starts_with_ci(std::string_view text, std::string_view prefix);

// Whitespace-collapsed, lowercased form used to deduplicate questions.
std::string normalize_text(std::string_view text);

// Rounds to `digits` significant decimal digits without libm calls, so the
// result is identical on every IEEE-754 platform.
double round_significant(double value, int digits = 12);

// Integer percent with ties rounded up.
long round_half_up_percent(double fraction);

// Fisher-Yates permutation of [0, n) driven by std::mt19937_64 with
// rejection sampling for unbiased bounded draws. Unlike std::shuffle and
// std::uniform_int_distribution the output does not depend on the standard
// library implementation.
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);
inline constexpr std::string_view kPermutationAlgorithm = "mt19937_64/fisher-yates/rejection";

// Current UTC time as "YYYY-MM-DDTHH:MM:SSZ".
std::string utc_now();

std::string read_file(const std::filesystem::path& path);

// Writes through a sibling temporary and renames on success; the temporary
// is removed if anything fails, so a reader never sees a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

// Line-delimited JSON. `on_record` receives the parsed object and its
// 1-based line number; blank lines are skipped. Malformed JSON raises
// ParseError carrying the line.
void read_jsonl(const std::filesystem::path& path,
                const std::function<void(const Json&, std::size_t line)>& on_record);
std::vector<Json> read_jsonl(const std::filesystem::path& path);
std::string to_jsonl(std::span<const Json> records);

// Field accessors that raise ParseError with the line on a missing or
// mistyped field.
std::string require_string(const Json& obj, const char* key, std::size_t line);
std::int64_t require_int(const Json& obj, const char* key, std::size_t line);

// Rejects any key of `obj` that is not listed. Used for strict config parsing.
void reject_unknown_keys(const Json& obj, std::initializer_list<std::string_view> allowed,
                         std::string_view where);

}  // namespace finrag
