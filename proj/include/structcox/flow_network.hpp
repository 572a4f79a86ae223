#pragma once

#include <string>
#include <vector>

namespace structcox {

/// Directed capacitated network with a designated source and sink.
///
/// Each arc is stored with its residual twin; the flow on arc `a` is the
/// residual capacity of the twin, so saturation is represented exactly.
class FlowNetwork {
public:
    FlowNetwork(int num_nodes, int source, int sink);

    /// Adds an arc and returns its index. Capacity must be finite and >= 0.
    int add_arc(int from, int to, double capacity);

    int num_nodes() const { return num_nodes_; }
    int num_arcs() const { return static_cast<int>(from_.size()); }
    int source() const { return source_; }
    int sink() const { return sink_; }

    int arc_from(int a) const { return from_[a]; }
    int arc_to(int a) const { return to_[a]; }
    double capacity(int a) const { return capacity_[a]; }
    double flow(int a) const { return residual_[2 * a + 1]; }
    double residual(int a) const { return residual_[2 * a]; }

    /// Clears all flows.
    void reset_flow();

    /// Edge-list text, one `from to capacity flow` line per arc.
    std::string dump() const;

private:
    friend double max_flow(FlowNetwork& network);
    friend std::vector<char> source_side(const FlowNetwork& network, double rel_tol);

    int num_nodes_;
    int source_;
    int sink_;
    std::vector<int> from_;
    std::vector<int> to_;
    std::vector<double> capacity_;
    // Half-arc 2a is arc a, half-arc 2a+1 its reverse.
    std::vector<double> residual_;
};

/// Highest-label push-relabel with gap and periodic global relabeling.
/// Leaves a maximum flow in `network` and returns its value. Throws
/// InputError when the source has no outgoing arc or the sink no incoming arc.
double max_flow(FlowNetwork& network);

/// Nodes reachable from the source in the residual graph: the source side of
/// a minimum cut. A forward half-arc counts when its residual exceeds
/// `rel_tol * max(1, capacity)`, a reverse one when its flow exceeds `rel_tol`.
std::vector<char> source_side(const FlowNetwork& network, double rel_tol = 1e-10);

} // namespace structcox
