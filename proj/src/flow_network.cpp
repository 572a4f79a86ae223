#include "structcox/flow_network.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fmt/format.h>

#include "structcox/error.hpp"

namespace structcox {

FlowNetwork::FlowNetwork(int num_nodes, int source, int sink)
    : num_nodes_(num_nodes), source_(source), sink_(sink)
{
    if (num_nodes < 2 || source < 0 || sink < 0 || source >= num_nodes || sink >= num_nodes || source == sink) {
        throw InputError("flow network needs distinct source and sink nodes");
    }
}

int FlowNetwork::add_arc(int from, int to, double capacity)
{
    if (from < 0 || to < 0 || from >= num_nodes_ || to >= num_nodes_ || from == to) {
        throw InputError(fmt::format("invalid arc {} -> {}", from, to));
    }
    if (!(capacity >= 0.0) || !std::isfinite(capacity)) {
        throw InputError(fmt::format("arc {} -> {} has invalid capacity {}", from, to, capacity));
    }
    from_.push_back(from);
    to_.push_back(to);
    capacity_.push_back(capacity);
    residual_.push_back(capacity);
    residual_.push_back(0.0);
    return static_cast<int>(from_.size()) - 1;
}

void FlowNetwork::reset_flow()
{
    for (std::size_t a = 0; a < capacity_.size(); ++a) {
        residual_[2 * a] = capacity_[a];
        residual_[2 * a + 1] = 0.0;
    }
}

std::string FlowNetwork::dump() const
{
    std::string out;
    for (int a = 0; a < num_arcs(); ++a) {
        out += fmt::format("{} {} {} {}\n", from_[a], to_[a], capacity_[a], flow(a));
    }
    return out;
}

namespace {

class PushRelabel {
public:
    explicit PushRelabel(FlowNetwork& net, std::vector<double>& residual, const std::vector<int>& from,
                         const std::vector<int>& to)
        : residual_(residual), n_(net.num_nodes()), s_(net.source()), t_(net.sink())
    {
        const int m = static_cast<int>(from.size());
        head_.assign(static_cast<std::size_t>(2 * m), 0);
        start_.assign(static_cast<std::size_t>(n_ + 1), 0);
        for (int a = 0; a < m; ++a) {
            head_[2 * a] = to[a];
            head_[2 * a + 1] = from[a];
            ++start_[from[a] + 1];
            ++start_[to[a] + 1];
        }
        for (int v = 0; v < n_; ++v) start_[v + 1] += start_[v];
        adj_.assign(static_cast<std::size_t>(2 * m), 0);
        std::vector<int> fill(start_.begin(), start_.end() - 1);
        for (int a = 0; a < m; ++a) {
            adj_[fill[from[a]]++] = 2 * a;
            adj_[fill[to[a]]++] = 2 * a + 1;
        }
    }

    double run()
    {
        label_.assign(n_, 0);
        excess_.assign(n_, 0.0);
        current_.assign(start_.begin(), start_.end() - 1);
        label_[s_] = n_;
        for (int i = start_[s_]; i < start_[s_ + 1]; ++i) {
            const int h = adj_[i];
            const double c = residual_[h];
            if (c > 0.0) {
                residual_[h] = 0.0;
                residual_[h ^ 1] += c;
                excess_[head_[h]] += c;
                excess_[s_] -= c;
            }
        }
        global_relabel();
        while (highest_ >= 0) {
            auto& bucket = buckets_[highest_];
            if (bucket.empty()) {
                --highest_;
                continue;
            }
            const int v = bucket.back();
            bucket.pop_back();
            if (label_[v] != highest_ || excess_[v] <= 0.0) continue;
            discharge(v);
            if (relabels_since_global_ >= n_) global_relabel();
        }
        return excess_[t_];
    }

private:
    int max_label() const { return 2 * n_; }

    void activate(int v)
    {
        if (v == s_ || v == t_ || label_[v] >= max_label()) return;
        buckets_[label_[v]].push_back(v);
        highest_ = std::max(highest_, label_[v]);
    }

    void rebuild_buckets()
    {
        buckets_.assign(static_cast<std::size_t>(max_label() + 1), {});
        count_.assign(static_cast<std::size_t>(n_), 0);
        highest_ = -1;
        for (int v = 0; v < n_; ++v) {
            if (label_[v] < n_) ++count_[label_[v]];
            if (excess_[v] > 0.0) activate(v);
        }
    }

    // Exact distances to the sink, then (offset by n) to the source.
    void global_relabel()
    {
        relabels_since_global_ = 0;
        std::vector<int> fresh(n_, max_label());
        std::deque<int> queue;
        const auto bfs = [&](int root, int base) {
            fresh[root] = base;
            queue.push_back(root);
            while (!queue.empty()) {
                const int w = queue.front();
                queue.pop_front();
                for (int i = start_[w]; i < start_[w + 1]; ++i) {
                    const int h = adj_[i];
                    const int u = head_[h];
                    if (fresh[u] == max_label() && u != s_ && u != t_ && residual_[h ^ 1] > 0.0) {
                        fresh[u] = fresh[w] + 1;
                        queue.push_back(u);
                    }
                }
            }
        };
        bfs(t_, 0);
        bfs(s_, n_);
        for (int v = 0; v < n_; ++v) {
            if (v != s_ && v != t_) label_[v] = std::max(label_[v], fresh[v]);
            current_[v] = start_[v];
        }
        rebuild_buckets();
    }

    void discharge(int v)
    {
        while (excess_[v] > 0.0) {
            if (current_[v] == start_[v + 1]) {
                relabel(v);
                if (label_[v] >= max_label()) return;
                continue;
            }
            const int h = adj_[current_[v]];
            const int w = head_[h];
            if (residual_[h] > 0.0 && label_[v] == label_[w] + 1) {
                const bool was_idle = excess_[w] <= 0.0;
                if (excess_[v] >= residual_[h]) {
                    const double delta = residual_[h];
                    residual_[h] = 0.0;
                    residual_[h ^ 1] += delta;
                    excess_[v] -= delta;
                    excess_[w] += delta;
                } else {
                    const double delta = excess_[v];
                    residual_[h] -= delta;
                    residual_[h ^ 1] += delta;
                    excess_[v] = 0.0;
                    excess_[w] += delta;
                }
                if (was_idle && excess_[w] > 0.0) activate(w);
            } else {
                ++current_[v];
            }
        }
    }

    void relabel(int v)
    {
        ++relabels_since_global_;
        const int old = label_[v];
        int best = max_label();
        for (int i = start_[v]; i < start_[v + 1]; ++i) {
            const int h = adj_[i];
            if (residual_[h] > 0.0) best = std::min(best, label_[head_[h]] + 1);
        }
        label_[v] = std::min(best, max_label());
        current_[v] = start_[v];
        if (old < n_) {
            --count_[old];
            if (label_[v] < n_) ++count_[label_[v]];
            if (count_[old] == 0) gap(old);
        }
    }

    // No node is left at label k: everything above it lost its path to the sink.
    void gap(int k)
    {
        for (int u = 0; u < n_; ++u) {
            if (u == s_ || u == t_) continue;
            if (label_[u] > k && label_[u] < n_) {
                --count_[label_[u]];
                label_[u] = n_ + 1;
                current_[u] = start_[u];
            }
        }
        rebuild_buckets();
    }

    std::vector<double>& residual_;
    int n_;
    int s_;
    int t_;
    std::vector<int> head_;
    std::vector<int> start_;
    std::vector<int> adj_;
    std::vector<int> label_;
    std::vector<double> excess_;
    std::vector<int> current_;
    std::vector<int> count_;
    std::vector<std::vector<int>> buckets_;
    int highest_ = -1;
    int relabels_since_global_ = 0;
};

} // namespace

double max_flow(FlowNetwork& network)
{
    bool has_source_arc = false;
    bool has_sink_arc = false;
    for (int a = 0; a < network.num_arcs(); ++a) {
        has_source_arc = has_source_arc || network.from_[a] == network.source_;
        has_sink_arc = has_sink_arc || network.to_[a] == network.sink_;
    }
    if (!has_source_arc) throw InputError("flow network has no arc leaving the source");
    if (!has_sink_arc) throw InputError("flow network has no arc entering the sink");
    network.reset_flow();
    PushRelabel solver(network, network.residual_, network.from_, network.to_);
    return solver.run();
}

std::vector<char> source_side(const FlowNetwork& network, double rel_tol)
{
    const int n = network.num_nodes_;
    std::vector<std::vector<int>> out(static_cast<std::size_t>(n));
    for (int a = 0; a < network.num_arcs(); ++a) {
        out[network.from_[a]].push_back(2 * a);
        out[network.to_[a]].push_back(2 * a + 1);
    }
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    std::vector<int> stack{network.source_};
    seen[network.source_] = 1;
    while (!stack.empty()) {
        const int v = stack.back();
        stack.pop_back();
        for (int h : out[v]) {
            const int a = h / 2;
            const int w = (h % 2 == 0) ? network.to_[a] : network.from_[a];
            // Reverse half-arcs carry flow, not spare capacity.
            const double threshold = h % 2 == 0 ? rel_tol * std::max(1.0, network.capacity_[a]) : rel_tol;
            if (!seen[w] && network.residual_[h] > threshold) {
                seen[w] = 1;
                stack.push_back(w);
            }
        }
    }
    return seen;
}

} // namespace structcox
