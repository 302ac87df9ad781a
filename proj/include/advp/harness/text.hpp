#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace advp::harness {

std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

/// Shortest round-trip decimal form, locale independent.
std::string format_double(double v);
/// Strict parse of a full string; throws std::invalid_argument.
double parse_double_strict(std::string_view s);

}  // namespace advp::harness
