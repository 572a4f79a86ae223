#pragma once

#include <span>
#include <vector>

#include "structcox/flow_network.hpp"
#include "structcox/grouping.hpp"
#include "structcox/survival.hpp"

namespace structcox {

/// argmin_g ½‖g − u‖² subject to Σ g ≤ cap, g ≥ 0, for u ≥ 0.
std::vector<double> project_capped(std::span<const double> u_abs, double cap);

/// A set of covariates together with the groups acting on them. Group members
/// outside `variables` are ignored.
struct FlowSubproblem {
    std::vector<int> variables;
    std::vector<int> groups;
};

/// Node 0 is the source, node 1 the sink, then one node per group of `sub`
/// and one per variable of `sub`, in the listed order. Arcs: source to group
/// (capacity scale·ω), group to member (effectively unbounded), member to sink
/// (gamma, indexed like `sub.variables`).
FlowNetwork build_network(const GroupingStructure& structure, const FlowSubproblem& sub, double scale,
                          std::span<const double> gamma);

/// Per-group dual blocks, aligned with `structure.groups[k].members`, and
/// their sum over groups.
struct DualVariables {
    std::vector<std::vector<double>> group_values;
    Vector aggregate;

    /// Dense length-p copy of group k's block.
    Vector group_vector(const GroupingStructure& structure, int k) const;
};

/// Unsigned dual magnitudes of one flow computation.
struct FlowSolution {
    /// Length p; zero outside the subproblem.
    Vector aggregate;
    /// Aligned with `structure.groups[k].members`.
    std::vector<std::vector<double>> group_flows;
    int splits = 0;
};

/// Recursive min-cut decomposition: projection, max-flow update, split along
/// the minimal cut until every sink arc is saturated. `u_abs` has length p.
FlowSolution compute_flow(const GroupingStructure& structure, const FlowSubproblem& sub,
                          std::span<const double> u_abs, double scale);

struct ProxResult {
    Vector beta;
    DualVariables dual;
    int splits = 0;
};

/// Proximal operator of scale · Σ_g ω_g ‖β_g‖∞ for a fixed structure.
class ProxSolver {
public:
    explicit ProxSolver(GroupingStructure structure);

    ProxResult solve(const Vector& u, double scale) const;
    Vector apply(const Vector& u, double scale) const { return solve(u, scale).beta; }

    /// Top-level network over all groups after one projection and max flow.
    FlowNetwork root_network(const Vector& u, double scale) const;

    const GroupingStructure& structure() const { return structure_; }
    /// Connected components of the group overlap graph.
    const std::vector<FlowSubproblem>& components() const { return components_; }

private:
    void check_input(const Vector& u, double scale) const;

    GroupingStructure structure_;
    std::vector<FlowSubproblem> components_;
};

ProxResult prox(const Vector& u, double scale, const GroupingStructure& structure);

} // namespace structcox
