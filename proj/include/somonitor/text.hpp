#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace somonitor::text {

// Lower-case hex SHA-256 of the bytes.
std::string sha256_hex(std::string_view bytes);

// Seeded FNV-1a over the bytes followed by the splitmix64 finalizer.
// Stable across platforms; used for feature hashing.
std::uint64_t hash64(std::string_view bytes, std::uint64_t seed);

// Word tokens by Unicode word boundaries, lower-cased. Punctuation and
// whitespace segments are dropped.
std::vector<std::string> word_tokens(std::string_view utf8);

std::string trim(std::string_view s);
std::string to_lower_ascii(std::string_view s);
// Case-insensitive (full Unicode case folding) substring test.
bool contains_folded(std::string_view haystack, std::string_view needle);
// Truncates to at most max_chars code points without splitting a sequence.
std::string truncate_utf8(std::string_view s, std::size_t max_chars);
std::vector<std::string> split_lines(std::string_view s);

}  // namespace somonitor::text
