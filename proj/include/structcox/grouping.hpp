#pragma once

#include <span>
#include <string>
#include <vector>

#include "structcox/survival.hpp"

namespace structcox {

/// A penalized set of covariates. Members are 0-based, sorted, unique.
struct Group {
    std::string name;
    std::vector<int> members;
    double weight = 1.0;

    bool operator==(const Group&) const = default;
};

/// Ordered, possibly overlapping cover of the penalized covariates.
///
/// `variables` is either empty or holds one name per covariate. Covariates in
/// `unpenalized` appear in no group and are exempt from the cover requirement.
struct GroupingStructure {
    int p = 0;
    std::vector<std::string> variables;
    std::vector<int> unpenalized;
    std::vector<Group> groups;

    int num_groups() const { return static_cast<int>(groups.size()); }
    bool operator==(const GroupingStructure&) const = default;
};

enum class DiagnosticKind {
    NoCovariates,
    NoGroups,
    EmptyGroup,
    IndexOutOfRange,
    DuplicateMember,
    NonPositiveWeight,
    UncoveredCovariate,
    UnpenalizedInGroup,
    DuplicateGroupName,
    NameCountMismatch,
};

struct Diagnostic {
    DiagnosticKind kind;
    std::string message;
};

/// Lists every violated invariant; an empty result means the structure is valid.
std::vector<Diagnostic> validate(const GroupingStructure& structure);

/// Throws InputError carrying all diagnostics when `validate` reports any.
void require_valid(const GroupingStructure& structure);

/// Mains X1..Xp' followed by pairwise interactions in lexicographic order.
/// Group k (k < p') holds main k and every interaction involving it; each
/// interaction also gets a singleton group.
GroupingStructure build_strong_heredity(int p_main);

/// Index of interaction (a, b), a < b, 0-based mains, in the strong heredity layout.
int interaction_index(int p_main, int a, int b);

/// One singleton group per covariate (weight `within_weight`) followed by one
/// group per block (weight `block_weight_scale * sqrt(block size)`).
GroupingStructure build_sparse_group(std::span<const std::vector<int>> blocks, double within_weight,
                                     double block_weight_scale);

/// Support-level selection constraint.
struct SelectionRule {
    enum class Kind { Implies, Collective };
    Kind kind = Kind::Implies;
    /// Implies: antecedent. Collective: the set selected together.
    std::vector<int> lhs;
    /// Implies: consequent. Unused for Collective.
    std::vector<int> rhs;
    /// Free-form family label used when aggregating, e.g. "heredity".
    std::string family;

    static SelectionRule implies(std::vector<int> antecedent, std::vector<int> consequent, std::string family = {});
    static SelectionRule collective(std::vector<int> members, std::string family = {});
};

/// One boolean per rule. `selected` holds 0-based indices in any order.
std::vector<bool> check_rules(std::span<const int> selected, std::span<const SelectionRule> rules);

/// Strong heredity rules for the layout of `build_strong_heredity`.
std::vector<SelectionRule> strong_heredity_rules(int p_main, std::string family = "heredity");

/// {j : |beta_j| > tol}, ascending.
std::vector<int> selection_support(const Vector& beta, double tol = 1e-10);

/// Re-expresses a named structure over another ordering of covariate names.
/// Every structure variable must appear in `names`; covariates of `names`
/// absent from the structure end up uncovered.
GroupingStructure bind_to_names(const GroupingStructure& structure, std::span<const std::string> names);

/// Text form: an object with `p` or `variables`, optional `unpenalized`, and
/// `groups` (each with `name`, optional `weight`, `members` as names or
/// 1-based indices). When the text names neither `p` nor `variables`,
/// `default_names` supplies the covariate names.
GroupingStructure parse_grouping(std::string_view text, std::span<const std::string> default_names = {});
GroupingStructure read_grouping(const std::string& path, std::span<const std::string> default_names = {});

/// Canonical rendering: members ascending, group order preserved, weights with
/// 17 significant digits.
std::string write_grouping(const GroupingStructure& structure);

} // namespace structcox
