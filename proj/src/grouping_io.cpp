#include <algorithm>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <set>
#include <unordered_map>

#include "structcox/error.hpp"
#include "structcox/grouping.hpp"
#include "structcox/text_io.hpp"

namespace structcox {
namespace {

using nlohmann::json;

int line_of_offset(std::string_view text, std::size_t offset)
{
    offset = std::min(offset, text.size());
    return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

// Best-effort location of a quoted token; 0 when absent.
int line_of_token(std::string_view text, const std::string& token)
{
    const auto quoted = json(token).dump();
    const auto pos = text.find(quoted);
    return pos == std::string_view::npos ? 0 : line_of_offset(text, pos);
}

[[noreturn]] void fail(std::string_view text, const std::string& token, const std::string& message)
{
    const int line = token.empty() ? 0 : line_of_token(text, token);
    if (line > 0) throw InputError(fmt::format("line {}: {}", line, message));
    throw InputError(message);
}

std::string escape(const std::string& s) { return json(s).dump(); }

} // namespace

GroupingStructure parse_grouping(std::string_view text, std::span<const std::string> default_names)
{
    json doc;
    try {
        doc = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        const auto line = line_of_offset(text, e.byte > 0 ? e.byte - 1 : 0);
        throw InputError(fmt::format("line {}: grouping syntax error: {}", line, e.what()));
    }
    if (!doc.is_object()) throw InputError("line 1: grouping must be an object");

    GroupingStructure s;
    if (doc.contains("variables")) {
        const auto& vars = doc["variables"];
        if (!vars.is_array()) fail(text, "variables", "'variables' must be a list of names");
        std::set<std::string> seen;
        for (const auto& v : vars) {
            if (!v.is_string()) fail(text, "variables", "'variables' must be a list of names");
            const auto name = v.get<std::string>();
            if (!seen.insert(name).second) fail(text, name, fmt::format("variable '{}' listed twice", name));
            s.variables.push_back(name);
        }
        s.p = static_cast<int>(s.variables.size());
        if (doc.contains("p") && !(doc["p"].is_number_integer() && doc["p"].get<long long>() == s.p)) {
            fail(text, "p", "'p' disagrees with the length of 'variables'");
        }
    } else if (doc.contains("p")) {
        if (!doc["p"].is_number_integer() || doc["p"].get<long long>() <= 0) {
            fail(text, "p", "'p' must be a positive integer");
        }
        s.p = static_cast<int>(doc["p"].get<long long>());
    } else if (!default_names.empty()) {
        s.variables.assign(default_names.begin(), default_names.end());
        s.p = static_cast<int>(s.variables.size());
    } else {
        throw InputError("grouping needs 'p' or 'variables'");
    }

    std::unordered_map<std::string, int> lookup;
    for (std::size_t j = 0; j < s.variables.size(); ++j) lookup.emplace(s.variables[j], static_cast<int>(j));
    const auto resolve = [&](const json& m, const std::string& where) -> int {
        if (m.is_number_integer()) {
            const auto k = m.get<long long>();
            if (k < 1 || k > s.p) fail(text, where, fmt::format("{}: index {} out of range 1..{}", where, k, s.p));
            return static_cast<int>(k - 1);
        }
        if (m.is_string()) {
            const auto name = m.get<std::string>();
            const auto it = lookup.find(name);
            if (it == lookup.end()) fail(text, name, fmt::format("{}: unknown covariate '{}'", where, name));
            return it->second;
        }
        fail(text, where, fmt::format("{}: members must be names or 1-based indices", where));
    };

    if (doc.contains("unpenalized")) {
        if (!doc["unpenalized"].is_array()) fail(text, "unpenalized", "'unpenalized' must be a list");
        for (const auto& m : doc["unpenalized"]) s.unpenalized.push_back(resolve(m, "unpenalized"));
        std::sort(s.unpenalized.begin(), s.unpenalized.end());
        if (std::adjacent_find(s.unpenalized.begin(), s.unpenalized.end()) != s.unpenalized.end()) {
            fail(text, "unpenalized", "'unpenalized' repeats a covariate");
        }
    }

    if (!doc.contains("groups") || !doc["groups"].is_array()) fail(text, "groups", "'groups' must be a list");
    std::set<std::string> group_names;
    for (std::size_t k = 0; k < doc["groups"].size(); ++k) {
        const auto& g = doc["groups"][k];
        if (!g.is_object()) fail(text, "groups", fmt::format("group #{} must be an object", k + 1));
        Group group;
        if (g.contains("name")) {
            if (!g["name"].is_string()) fail(text, "name", fmt::format("group #{} name must be a string", k + 1));
            group.name = g["name"].get<std::string>();
        } else {
            group.name = fmt::format("g{}", k + 1);
        }
        const auto where = fmt::format("group '{}'", group.name);
        if (!group_names.insert(group.name).second) {
            fail(text, group.name, fmt::format("duplicate group name '{}'", group.name));
        }
        if (g.contains("weight")) {
            if (!g["weight"].is_number()) fail(text, group.name, where + ": weight must be a number");
            group.weight = g["weight"].get<double>();
        }
        if (!g.contains("members") || !g["members"].is_array()) {
            fail(text, group.name, where + ": 'members' must be a list");
        }
        for (const auto& m : g["members"]) group.members.push_back(resolve(m, where));
        std::sort(group.members.begin(), group.members.end());
        if (std::adjacent_find(group.members.begin(), group.members.end()) != group.members.end()) {
            fail(text, group.name, where + ": repeated member");
        }
        s.groups.push_back(std::move(group));
    }
    require_valid(s);
    return s;
}

GroupingStructure read_grouping(const std::string& path, std::span<const std::string> default_names)
{
    const auto text = read_file(path);
    try {
        return parse_grouping(text, default_names);
    } catch (const InputError& e) {
        throw InputError(fmt::format("{}: {}", path, e.what()));
    }
}

std::string write_grouping(const GroupingStructure& structure)
{
    const bool named = structure.variables.size() == static_cast<std::size_t>(structure.p) && structure.p > 0;
    const auto member = [&](int j) { return named ? escape(structure.variables[j]) : fmt::format("{}", j + 1); };

    std::string out = "{\n";
    if (named) {
        out += "  \"variables\": [";
        for (int j = 0; j < structure.p; ++j) out += (j ? ", " : "") + escape(structure.variables[j]);
        out += "],\n";
    } else {
        out += fmt::format("  \"p\": {},\n", structure.p);
    }
    if (!structure.unpenalized.empty()) {
        auto sorted = structure.unpenalized;
        std::sort(sorted.begin(), sorted.end());
        out += "  \"unpenalized\": [";
        for (std::size_t i = 0; i < sorted.size(); ++i) out += (i ? ", " : "") + member(sorted[i]);
        out += "],\n";
    }
    out += "  \"groups\": [";
    for (std::size_t k = 0; k < structure.groups.size(); ++k) {
        const auto& g = structure.groups[k];
        auto members = g.members;
        std::sort(members.begin(), members.end());
        out += k ? ",\n" : "\n";
        out += fmt::format("    {{\"name\": {}, \"weight\": {:.17g}, \"members\": [", escape(g.name), g.weight);
        for (std::size_t i = 0; i < members.size(); ++i) out += (i ? ", " : "") + member(members[i]);
        out += "]}";
    }
    out += structure.groups.empty() ? "]\n}\n" : "\n  ]\n}\n";
    return out;
}

} // namespace structcox
