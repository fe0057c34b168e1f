#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace gengap {

// Shortest round-trip decimal form; identical input gives identical bytes.
std::string format_double(double v);

std::vector<std::string> split_csv_line(std::string_view line);
double parse_double(std::string_view s);
long long parse_int(std::string_view s);

// 64-bit FNV-1a, rendered as 16 hex digits.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

}  // namespace gengap
