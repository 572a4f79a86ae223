#include "structcox/prox.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <functional>
#include <numeric>

#include "structcox/error.hpp"

namespace structcox {

namespace {

constexpr double kSaturationTol = 1e-10;

struct Piece {
    std::vector<int> vars;
    std::vector<int> groups;
    // Members of each group restricted to `vars`.
    std::vector<std::vector<int>> members;
};

struct BuiltNetwork {
    FlowNetwork network;
    std::vector<int> sink_arcs;
    std::vector<std::vector<int>> member_arcs;
};

Piece restrict_piece(const GroupingStructure& structure, const FlowSubproblem& sub)
{
    const int p = structure.p;
    std::vector<char> inside(static_cast<std::size_t>(p), 0);
    for (int j : sub.variables) {
        if (j < 0 || j >= p) throw InputError(fmt::format("variable index {} out of range", j));
        inside[j] = 1;
    }
    Piece piece;
    piece.vars = sub.variables;
    for (int k : sub.groups) {
        if (k < 0 || k >= structure.num_groups()) throw InputError(fmt::format("group index {} out of range", k));
        std::vector<int> m;
        for (int j : structure.groups[k].members) {
            if (inside[j]) m.push_back(j);
        }
        piece.groups.push_back(k);
        piece.members.push_back(std::move(m));
    }
    return piece;
}

// With `clip`, a source capacity larger than twice what the group's members
// can absorb is lowered to that bound plus one. Such an arc can never
// saturate either way, so flow values and the minimal cut are unchanged, while
// huge weights no longer swamp the flow arithmetic.
BuiltNetwork build_piece(const GroupingStructure& structure, const Piece& piece, double scale,
                         std::span<const double> gamma, std::vector<int>& position, bool clip)
{
    const int num_groups = static_cast<int>(piece.groups.size());
    const int num_vars = static_cast<int>(piece.vars.size());
    BuiltNetwork built{FlowNetwork(2 + num_groups + num_vars, 0, 1), {}, {}};
    for (int i = 0; i < num_vars; ++i) position[piece.vars[i]] = i;
    std::vector<double> source_caps;
    double total = 0.0;
    for (int gi = 0; gi < num_groups; ++gi) {
        double cap = scale * structure.groups[piece.groups[gi]].weight;
        if (clip) {
            double absorb = 0.0;
            for (int j : piece.members[gi]) absorb += gamma[position[j]];
            cap = std::min(cap, 2.0 * absorb + 1.0);
        }
        source_caps.push_back(cap);
        total += cap;
    }
    const double unbounded = total + 1.0;
    for (int gi = 0; gi < num_groups; ++gi) built.network.add_arc(0, 2 + gi, source_caps[gi]);
    built.member_arcs.resize(static_cast<std::size_t>(num_groups));
    for (int gi = 0; gi < num_groups; ++gi) {
        for (int j : piece.members[gi]) {
            built.member_arcs[gi].push_back(built.network.add_arc(2 + gi, 2 + num_groups + position[j], unbounded));
        }
    }
    for (int i = 0; i < num_vars; ++i) {
        built.sink_arcs.push_back(built.network.add_arc(2 + num_groups + i, 1, gamma[i]));
    }
    return built;
}

double piece_capacity(const GroupingStructure& structure, const Piece& piece, double scale)
{
    double cap = 0.0;
    for (int k : piece.groups) cap += scale * structure.groups[k].weight;
    return cap;
}

} // namespace

std::vector<double> project_capped(std::span<const double> u_abs, double cap)
{
    if (!(cap >= 0.0)) throw InputError("projection capacity must be non-negative");
    double sum = 0.0;
    for (double v : u_abs) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw InputError("projection input must be finite and non-negative");
        sum += v;
    }
    std::vector<double> out(u_abs.begin(), u_abs.end());
    if (sum <= cap) return out;
    std::vector<double> sorted(u_abs.begin(), u_abs.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    double prefix = 0.0;
    double tau = 0.0;
    for (std::size_t k = 0; k < sorted.size(); ++k) {
        prefix += sorted[k];
        const double candidate = (prefix - cap) / static_cast<double>(k + 1);
        const bool last = k + 1 == sorted.size();
        if (last || candidate >= sorted[k + 1]) {
            tau = candidate;
            break;
        }
    }
    for (double& v : out) v = std::max(v - tau, 0.0);
    return out;
}

FlowNetwork build_network(const GroupingStructure& structure, const FlowSubproblem& sub, double scale,
                          std::span<const double> gamma)
{
    if (gamma.size() != sub.variables.size()) throw InputError("gamma must match the subproblem variables");
    if (!(scale >= 0.0) || !std::isfinite(scale)) throw InputError("scale must be finite and non-negative");
    const Piece piece = restrict_piece(structure, sub);
    std::vector<int> position(static_cast<std::size_t>(structure.p), -1);
    return build_piece(structure, piece, scale, gamma, position, false).network;
}

Vector DualVariables::group_vector(const GroupingStructure& structure, int k) const
{
    Vector out = Vector::Zero(structure.p);
    const auto& members = structure.groups.at(static_cast<std::size_t>(k)).members;
    for (std::size_t i = 0; i < members.size(); ++i) out[members[i]] = group_values[k][i];
    return out;
}

FlowSolution compute_flow(const GroupingStructure& structure, const FlowSubproblem& sub,
                          std::span<const double> u_abs, double scale)
{
    const int p = structure.p;
    if (static_cast<int>(u_abs.size()) != p) throw InputError("u must have one entry per covariate");
    FlowSolution result;
    result.aggregate = Vector::Zero(p);
    result.group_flows.resize(structure.groups.size());
    for (std::size_t k = 0; k < structure.groups.size(); ++k) {
        result.group_flows[k].assign(structure.groups[k].members.size(), 0.0);
    }

    std::vector<int> position(static_cast<std::size_t>(p), -1);
    // Offset of variable j within each group's member list, filled lazily.
    const auto member_offset = [&](int k, int j) {
        const auto& m = structure.groups[k].members;
        return static_cast<std::size_t>(std::lower_bound(m.begin(), m.end(), j) - m.begin());
    };

    const int split_limit = static_cast<int>(sub.groups.size());
    std::vector<Piece> stack;
    stack.push_back(restrict_piece(structure, sub));
    while (!stack.empty()) {
        Piece piece = std::move(stack.back());
        stack.pop_back();

        // Variables no group reaches keep a zero dual.
        {
            std::vector<char> reached(static_cast<std::size_t>(p), 0);
            for (const auto& m : piece.members) {
                for (int j : m) reached[j] = 1;
            }
            std::erase_if(piece.vars, [&](int j) { return !reached[j]; });
            std::vector<int> keep_groups;
            std::vector<std::vector<int>> keep_members;
            for (std::size_t gi = 0; gi < piece.groups.size(); ++gi) {
                if (piece.members[gi].empty()) continue;
                keep_groups.push_back(piece.groups[gi]);
                keep_members.push_back(std::move(piece.members[gi]));
            }
            piece.groups = std::move(keep_groups);
            piece.members = std::move(keep_members);
        }
        if (piece.vars.empty()) continue;

        std::vector<double> u_piece;
        u_piece.reserve(piece.vars.size());
        for (int j : piece.vars) u_piece.push_back(u_abs[j]);
        const auto gamma = project_capped(u_piece, piece_capacity(structure, piece, scale));
        if (std::all_of(gamma.begin(), gamma.end(), [](double g) { return g == 0.0; })) continue;

        auto built = build_piece(structure, piece, scale, gamma, position, true);
        max_flow(built.network);

        bool saturated = true;
        for (std::size_t i = 0; i < piece.vars.size(); ++i) {
            const double slack = gamma[i] - built.network.flow(built.sink_arcs[i]);
            if (slack > kSaturationTol * std::max(1.0, gamma[i])) {
                saturated = false;
                break;
            }
        }

        bool degenerate = false;
        if (!saturated) {
            const auto side = source_side(built.network, kSaturationTol);
            const int num_groups = static_cast<int>(piece.groups.size());
            Piece upper;
            Piece lower;
            std::vector<char> var_upper(static_cast<std::size_t>(p), 0);
            for (std::size_t i = 0; i < piece.vars.size(); ++i) {
                const int node = 2 + num_groups + static_cast<int>(i);
                if (side[node]) {
                    upper.vars.push_back(piece.vars[i]);
                    var_upper[piece.vars[i]] = 1;
                } else {
                    lower.vars.push_back(piece.vars[i]);
                }
            }
            degenerate = upper.vars.empty() || lower.vars.empty();
            if (!degenerate) {
                for (int gi = 0; gi < num_groups; ++gi) {
                    Piece& target = side[2 + gi] ? upper : lower;
                    const bool want_upper = side[2 + gi] != 0;
                    std::vector<int> m;
                    for (int j : piece.members[gi]) {
                        if ((var_upper[j] != 0) == want_upper) m.push_back(j);
                    }
                    target.groups.push_back(piece.groups[gi]);
                    target.members.push_back(std::move(m));
                }
                if (++result.splits > split_limit) {
                    throw InternalError("flow decomposition exceeded the number of groups");
                }
                stack.push_back(std::move(lower));
                stack.push_back(std::move(upper));
                continue;
            }
        }

        // Leaf: the sink capacities are met, so the aggregate equals gamma.
        std::vector<double> inflow(piece.vars.size(), 0.0);
        for (std::size_t gi = 0; gi < piece.groups.size(); ++gi) {
            for (std::size_t r = 0; r < piece.members[gi].size(); ++r) {
                inflow[position[piece.members[gi][r]]] += built.network.flow(built.member_arcs[gi][r]);
            }
        }
        std::vector<double> factor(piece.vars.size(), 1.0);
        for (std::size_t i = 0; i < piece.vars.size(); ++i) {
            const int j = piece.vars[i];
            if (!degenerate && inflow[i] > 0.0) {
                result.aggregate[j] = gamma[i];
                factor[i] = gamma[i] / inflow[i];
            } else {
                result.aggregate[j] = inflow[i];
            }
        }
        for (std::size_t gi = 0; gi < piece.groups.size(); ++gi) {
            const int k = piece.groups[gi];
            for (std::size_t r = 0; r < piece.members[gi].size(); ++r) {
                const int j = piece.members[gi][r];
                result.group_flows[k][member_offset(k, j)] =
                    built.network.flow(built.member_arcs[gi][r]) * factor[position[j]];
            }
        }
    }
    return result;
}

ProxSolver::ProxSolver(GroupingStructure structure) : structure_(std::move(structure))
{
    require_valid(structure_);
    const int p = structure_.p;
    std::vector<int> parent(static_cast<std::size_t>(p));
    std::iota(parent.begin(), parent.end(), 0);
    const std::function<int(int)> find = [&](int v) {
        while (parent[v] != v) {
            parent[v] = parent[parent[v]];
            v = parent[v];
        }
        return v;
    };
    for (const auto& g : structure_.groups) {
        for (std::size_t i = 1; i < g.members.size(); ++i) {
            parent[find(g.members[i])] = find(g.members[0]);
        }
    }
    std::vector<int> component_of(static_cast<std::size_t>(p), -1);
    std::vector<char> penalized(static_cast<std::size_t>(p), 0);
    for (const auto& g : structure_.groups) {
        for (int j : g.members) penalized[j] = 1;
    }
    for (int j = 0; j < p; ++j) {
        if (!penalized[j]) continue;
        const int root = find(j);
        if (component_of[root] < 0) {
            component_of[root] = static_cast<int>(components_.size());
            components_.emplace_back();
        }
        components_[component_of[root]].variables.push_back(j);
    }
    for (int k = 0; k < structure_.num_groups(); ++k) {
        components_[component_of[find(structure_.groups[k].members.front())]].groups.push_back(k);
    }
}

void ProxSolver::check_input(const Vector& u, double scale) const
{
    if (u.size() != structure_.p) {
        throw InputError(fmt::format("prox input has length {}, expected {}", u.size(), structure_.p));
    }
    if (!u.allFinite()) throw InputError("prox input must be finite");
    if (!(scale >= 0.0) || !std::isfinite(scale)) throw InputError("prox scale must be finite and non-negative");
}

ProxResult ProxSolver::solve(const Vector& u, double scale) const
{
    check_input(u, scale);
    const int p = structure_.p;
    ProxResult out;
    out.beta = u;
    out.dual.aggregate = Vector::Zero(p);
    out.dual.group_values.resize(structure_.groups.size());
    for (std::size_t k = 0; k < structure_.groups.size(); ++k) {
        out.dual.group_values[k].assign(structure_.groups[k].members.size(), 0.0);
    }
    if (scale == 0.0) return out;

    std::vector<double> u_abs(static_cast<std::size_t>(p));
    for (int j = 0; j < p; ++j) u_abs[j] = std::abs(u[j]);
    for (const auto& component : components_) {
        const auto flow = compute_flow(structure_, component, u_abs, scale);
        out.splits += flow.splits;
        for (int j : component.variables) {
            const double sign = u[j] < 0.0 ? -1.0 : 1.0;
            out.beta[j] = sign * (u_abs[j] - flow.aggregate[j]);
            out.dual.aggregate[j] = sign * flow.aggregate[j];
        }
        for (int k : component.groups) {
            const auto& members = structure_.groups[k].members;
            for (std::size_t i = 0; i < members.size(); ++i) {
                const double sign = u[members[i]] < 0.0 ? -1.0 : 1.0;
                out.dual.group_values[k][i] = sign * flow.group_flows[k][i];
            }
        }
    }
    return out;
}

FlowNetwork ProxSolver::root_network(const Vector& u, double scale) const
{
    check_input(u, scale);
    FlowSubproblem all;
    for (const auto& c : components_) all.variables.insert(all.variables.end(), c.variables.begin(), c.variables.end());
    std::sort(all.variables.begin(), all.variables.end());
    all.groups.resize(structure_.groups.size());
    std::iota(all.groups.begin(), all.groups.end(), 0);
    std::vector<double> u_abs;
    for (int j : all.variables) u_abs.push_back(std::abs(u[j]));
    double cap = 0.0;
    for (const auto& g : structure_.groups) cap += scale * g.weight;
    const auto gamma = project_capped(u_abs, cap);
    auto network = build_network(structure_, all, scale, gamma);
    if (cap > 0.0) max_flow(network);
    return network;
}

ProxResult prox(const Vector& u, double scale, const GroupingStructure& structure)
{
    return ProxSolver(structure).solve(u, scale);
}

} // namespace structcox
