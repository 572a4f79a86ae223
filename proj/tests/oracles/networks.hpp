#pragma once

#include <random>
#include <vector>

#include "random_data.hpp"
#include "structcox/flow_network.hpp"

namespace oracle {

// Dense capacity matrix of a network, parallel arcs summed.
inline std::vector<std::vector<double>> dense_capacities(const structcox::FlowNetwork& net)
{
    std::vector<std::vector<double>> cap(net.num_nodes(), std::vector<double>(net.num_nodes(), 0.0));
    for (int a = 0; a < net.num_arcs(); ++a) cap[net.arc_from(a)][net.arc_to(a)] += net.capacity(a);
    return cap;
}

// Source -> group -> covariate -> sink layout with integer capacities.
inline structcox::FlowNetwork random_table_network(std::mt19937_64& rng, int p, int groups)
{
    const auto s = random_structure(rng, p, groups);
    std::uniform_int_distribution<int> cap(0, 20);
    structcox::FlowNetwork net(2 + groups + p, 0, 1);
    double total = 0.0;
    std::vector<double> source_caps;
    for (int g = 0; g < groups; ++g) {
        source_caps.push_back(cap(rng));
        total += source_caps.back();
    }
    for (int g = 0; g < groups; ++g) net.add_arc(0, 2 + g, source_caps[g]);
    for (int g = 0; g < groups; ++g) {
        for (int j : s.groups[g].members) net.add_arc(2 + g, 2 + groups + j, total + 1);
    }
    for (int j = 0; j < p; ++j) net.add_arc(2 + groups + j, 1, cap(rng));
    return net;
}

} // namespace oracle
