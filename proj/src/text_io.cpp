#include "structcox/text_io.hpp"

#include <charconv>
#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <sstream>

#include "structcox/error.hpp"

namespace structcox {

namespace {

std::string_view trim(std::string_view s)
{
    const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

} // namespace

std::vector<std::string_view> split_fields(std::string_view line)
{
    std::vector<std::string_view> fields;
    std::size_t pos = 0;
    while (true) {
        const auto comma = line.find(',', pos);
        if (comma == std::string_view::npos) {
            fields.push_back(trim(line.substr(pos)));
            break;
        }
        fields.push_back(trim(line.substr(pos, comma - pos)));
        pos = comma + 1;
    }
    return fields;
}

double parse_double(std::string_view field, std::string_view context)
{
    double value = 0.0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    if (!field.empty() && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (field.empty() || ec != std::errc() || ptr != last) {
        throw InputError(fmt::format("{}: '{}' is not a number", context, field));
    }
    if (!std::isfinite(value)) throw InputError(fmt::format("{}: '{}' is not finite", context, field));
    return value;
}

long long parse_integer(std::string_view field, std::string_view context)
{
    long long value = 0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (field.empty() || ec != std::errc() || ptr != field.data() + field.size()) {
        throw InputError(fmt::format("{}: '{}' is not an integer", context, field));
    }
    return value;
}

std::string format_double(double value)
{
    if (value == 0.0) return "0";
    return fmt::format("{}", value);
}

std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError(fmt::format("cannot open '{}'", path));
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::string& path, std::string_view contents)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError(fmt::format("cannot write '{}'", path));
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw InputError(fmt::format("write to '{}' failed", path));
}

} // namespace structcox
