#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace structcox {

/// Splits one delimited line on commas and trims ASCII whitespace from each field.
std::vector<std::string_view> split_fields(std::string_view line);

/// Locale-independent strict number parsing; throws InputError with `context`.
double parse_double(std::string_view field, std::string_view context);
long long parse_integer(std::string_view field, std::string_view context);

/// Shortest round-trip decimal rendering.
std::string format_double(double value);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

} // namespace structcox
