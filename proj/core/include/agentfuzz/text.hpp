#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace agentfuzz::text {

std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);
std::vector<std::string_view> split_lines(std::string_view s);
bool starts_with_ci(std::string_view s, std::string_view prefix);
bool contains_ci(std::string_view haystack, std::string_view needle);

/// Replaces every occurrence of `from` with `to`.
std::string replace_all(std::string s, std::string_view from, std::string_view to);
std::size_t count_occurrences(std::string_view s, std::string_view needle);

/// Single-pass {name} substitution; unknown placeholders are kept verbatim.
std::string render(std::string_view tmpl, const std::map<std::string, std::string>& values);

/// FNV-1a, 64 bit. Stable across platforms and runs.
std::uint64_t fnv1a64(std::string_view s);
std::string hex8(std::uint64_t v);

/// Text of the last non-empty <tag>...</tag> block, trimmed; empty when absent.
std::string extract_tag(std::string_view s, std::string_view tag);

/// Keeps at most `cap` bytes; the tail is replaced by a truncation marker.
std::string truncate_with_marker(std::string s, std::size_t cap);
inline constexpr std::string_view kTruncationMarker = "\n...[truncated]";

}  // namespace agentfuzz::text
