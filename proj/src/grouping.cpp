#include "structcox/grouping.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <set>
#include <unordered_map>

#include "structcox/error.hpp"

namespace structcox {

std::vector<Diagnostic> validate(const GroupingStructure& structure)
{
    std::vector<Diagnostic> out;
    const int p = structure.p;
    if (p <= 0) {
        out.push_back({DiagnosticKind::NoCovariates, "structure has no covariates"});
        return out;
    }
    if (!structure.variables.empty() && static_cast<int>(structure.variables.size()) != p) {
        out.push_back({DiagnosticKind::NameCountMismatch,
                       fmt::format("{} variable names for {} covariates", structure.variables.size(), p)});
    }
    if (structure.groups.empty()) out.push_back({DiagnosticKind::NoGroups, "group list is empty"});

    std::vector<char> covered(static_cast<std::size_t>(p), 0);
    std::vector<char> exempt(static_cast<std::size_t>(p), 0);
    for (int j : structure.unpenalized) {
        if (j < 0 || j >= p) {
            out.push_back({DiagnosticKind::IndexOutOfRange, fmt::format("unpenalized index {} out of range", j + 1)});
        } else {
            exempt[j] = 1;
        }
    }
    std::set<std::string> names;
    for (std::size_t k = 0; k < structure.groups.size(); ++k) {
        const auto& g = structure.groups[k];
        const auto label = g.name.empty() ? fmt::format("#{}", k + 1) : fmt::format("'{}'", g.name);
        if (!g.name.empty() && !names.insert(g.name).second) {
            out.push_back({DiagnosticKind::DuplicateGroupName, fmt::format("group {} is defined twice", label)});
        }
        if (g.members.empty()) out.push_back({DiagnosticKind::EmptyGroup, fmt::format("group {} is empty", label)});
        if (!(g.weight > 0.0) || !std::isfinite(g.weight)) {
            out.push_back({DiagnosticKind::NonPositiveWeight,
                           fmt::format("group {} has non-positive weight {}", label, g.weight)});
        }
        std::set<int> seen;
        for (int j : g.members) {
            if (j < 0 || j >= p) {
                out.push_back({DiagnosticKind::IndexOutOfRange,
                               fmt::format("group {} member {} out of range 1..{}", label, j + 1, p)});
                continue;
            }
            if (!seen.insert(j).second) {
                out.push_back({DiagnosticKind::DuplicateMember, fmt::format("group {} repeats member {}", label, j + 1)});
            }
            if (exempt[j]) {
                out.push_back({DiagnosticKind::UnpenalizedInGroup,
                               fmt::format("unpenalized covariate {} appears in group {}", j + 1, label)});
            }
            covered[j] = 1;
        }
    }
    for (int j = 0; j < p; ++j) {
        if (!covered[j] && !exempt[j]) {
            const auto name = structure.variables.size() == static_cast<std::size_t>(p)
                                  ? fmt::format("'{}'", structure.variables[j])
                                  : fmt::format("{}", j + 1);
            out.push_back({DiagnosticKind::UncoveredCovariate, fmt::format("covariate {} is in no group", name)});
        }
    }
    return out;
}

void require_valid(const GroupingStructure& structure)
{
    const auto diagnostics = validate(structure);
    if (diagnostics.empty()) return;
    std::string msg = "invalid grouping structure:";
    for (const auto& d : diagnostics) msg += "\n  " + d.message;
    throw InputError(msg);
}

int interaction_index(int p_main, int a, int b)
{
    if (a > b) std::swap(a, b);
    // Pairs (0,1),(0,2),...,(0,p'-1),(1,2),... follow the mains.
    const int before = a * p_main - a * (a + 1) / 2;
    return p_main + before + (b - a - 1);
}

GroupingStructure build_strong_heredity(int p_main)
{
    if (p_main < 2) throw InputError("strong heredity needs at least two main terms");
    GroupingStructure s;
    s.p = p_main + p_main * (p_main - 1) / 2;
    for (int a = 0; a < p_main; ++a) s.variables.push_back(fmt::format("X{}", a + 1));
    for (int a = 0; a < p_main; ++a) {
        for (int b = a + 1; b < p_main; ++b) s.variables.push_back(fmt::format("X{}X{}", a + 1, b + 1));
    }
    for (int a = 0; a < p_main; ++a) {
        Group g{fmt::format("main{}", a + 1), {a}, 1.0};
        for (int b = 0; b < p_main; ++b) {
            if (b != a) g.members.push_back(interaction_index(p_main, a, b));
        }
        std::sort(g.members.begin(), g.members.end());
        s.groups.push_back(std::move(g));
    }
    for (int j = p_main; j < s.p; ++j) s.groups.push_back({s.variables[j], {j}, 1.0});
    return s;
}

GroupingStructure build_sparse_group(std::span<const std::vector<int>> blocks, double within_weight,
                                     double block_weight_scale)
{
    int p = 0;
    for (const auto& b : blocks) p += static_cast<int>(b.size());
    std::vector<int> seen(static_cast<std::size_t>(p), 0);
    for (const auto& b : blocks) {
        if (b.empty()) throw InputError("blocks must be non-empty");
        for (int j : b) {
            if (j < 0 || j >= p || seen[j]++) throw InputError("blocks do not partition the covariates");
        }
    }
    if (!(within_weight > 0.0) || !(block_weight_scale > 0.0)) throw InputError("weights must be positive");

    GroupingStructure s;
    s.p = p;
    for (int j = 0; j < p; ++j) s.groups.push_back({fmt::format("x{}", j + 1), {j}, within_weight});
    for (std::size_t k = 0; k < blocks.size(); ++k) {
        Group g{fmt::format("block{}", k + 1), blocks[k],
                block_weight_scale * std::sqrt(static_cast<double>(blocks[k].size()))};
        std::sort(g.members.begin(), g.members.end());
        s.groups.push_back(std::move(g));
    }
    return s;
}

SelectionRule SelectionRule::implies(std::vector<int> antecedent, std::vector<int> consequent, std::string family)
{
    if (antecedent.empty() || consequent.empty()) throw InputError("rule operands must be non-empty");
    return {Kind::Implies, std::move(antecedent), std::move(consequent), std::move(family)};
}

SelectionRule SelectionRule::collective(std::vector<int> members, std::string family)
{
    if (members.empty()) throw InputError("rule operands must be non-empty");
    return {Kind::Collective, std::move(members), {}, std::move(family)};
}

std::vector<bool> check_rules(std::span<const int> selected, std::span<const SelectionRule> rules)
{
    std::set<int> chosen(selected.begin(), selected.end());
    const auto any_in = [&](const std::vector<int>& s) {
        return std::any_of(s.begin(), s.end(), [&](int j) { return chosen.count(j) > 0; });
    };
    const auto all_in = [&](const std::vector<int>& s) {
        return std::all_of(s.begin(), s.end(), [&](int j) { return chosen.count(j) > 0; });
    };
    std::vector<bool> out;
    out.reserve(rules.size());
    for (const auto& r : rules) {
        if (r.kind == SelectionRule::Kind::Implies) {
            out.push_back(!any_in(r.lhs) || all_in(r.rhs));
        } else {
            out.push_back(all_in(r.lhs) || !any_in(r.lhs));
        }
    }
    return out;
}

std::vector<SelectionRule> strong_heredity_rules(int p_main, std::string family)
{
    std::vector<SelectionRule> rules;
    for (int a = 0; a < p_main; ++a) {
        for (int b = a + 1; b < p_main; ++b) {
            rules.push_back(SelectionRule::implies({interaction_index(p_main, a, b)}, {a, b}, family));
        }
    }
    return rules;
}

std::vector<int> selection_support(const Vector& beta, double tol)
{
    if (!(tol >= 0.0)) throw InputError("support tolerance must be non-negative");
    std::vector<int> out;
    for (Eigen::Index j = 0; j < beta.size(); ++j) {
        if (std::abs(beta[j]) > tol) out.push_back(static_cast<int>(j));
    }
    return out;
}

GroupingStructure bind_to_names(const GroupingStructure& structure, std::span<const std::string> names)
{
    if (structure.variables.empty()) {
        if (structure.p != static_cast<int>(names.size())) {
            throw InputError(fmt::format("grouping declares {} covariates but the data has {}", structure.p,
                                         names.size()));
        }
        GroupingStructure out = structure;
        out.variables.assign(names.begin(), names.end());
        return out;
    }
    std::unordered_map<std::string, int> lookup;
    for (std::size_t j = 0; j < names.size(); ++j) lookup.emplace(names[j], static_cast<int>(j));
    std::vector<int> remap;
    for (const auto& v : structure.variables) {
        const auto it = lookup.find(v);
        if (it == lookup.end()) throw InputError(fmt::format("grouping references unknown variable '{}'", v));
        remap.push_back(it->second);
    }
    GroupingStructure out;
    out.p = static_cast<int>(names.size());
    out.variables.assign(names.begin(), names.end());
    for (int j : structure.unpenalized) out.unpenalized.push_back(remap.at(static_cast<std::size_t>(j)));
    std::sort(out.unpenalized.begin(), out.unpenalized.end());
    for (const auto& g : structure.groups) {
        Group h{g.name, {}, g.weight};
        for (int j : g.members) h.members.push_back(remap.at(static_cast<std::size_t>(j)));
        std::sort(h.members.begin(), h.members.end());
        out.groups.push_back(std::move(h));
    }
    return out;
}

} // namespace structcox
