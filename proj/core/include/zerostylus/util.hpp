#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace zerostylus {

inline constexpr bool is_space(char c) noexcept {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

/// Number of Unicode code points in a UTF-8 string (continuation bytes skipped).
std::size_t char_length(std::string_view text) noexcept;

std::string_view trim(std::string_view text) noexcept;

/// Shortest decimal representation that round-trips to the same double.
std::string format_number(double value);

/// 64-bit FNV-1a, optionally continued from a previous state.
std::uint64_t fnv1a(std::string_view bytes,
                    std::uint64_t state = 0xcbf29ce484222325ULL) noexcept;

/// Lower-cased word tokens: maximal runs of ASCII alphanumerics and non-ASCII
/// bytes.
std::vector<std::string> word_tokens(std::string_view text);

/// Multiset token-overlap F1 between two texts; 1.0 when both are empty.
double token_f1(std::string_view candidate, std::string_view reference);

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace zerostylus
