#include "balancekit/network.hpp"

#include "balancekit/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <queue>

namespace balancekit {

std::string to_string(Role role) {
    switch (role) {
        case Role::Input:
            return "input";
        case Role::Output:
            return "output";
        case Role::Hidden:
            return "hidden";
        case Role::BiasSource:
            return "bias";
    }
    return "unknown";
}

namespace {

void build_csr(std::size_t n, const std::vector<Edge>& edges, bool by_target,
               std::vector<std::uint32_t>& offsets, std::vector<EdgeIndex>& index) {
    offsets.assign(n + 1, 0);
    for (const Edge& e : edges) ++offsets[(by_target ? e.to : e.from) + 1];
    for (std::size_t i = 0; i < n; ++i) offsets[i + 1] += offsets[i];
    index.resize(edges.size());
    std::vector<std::uint32_t> cursor(offsets.begin(), offsets.end() - 1);
    for (EdgeIndex k = 0; k < edges.size(); ++k) {
        const UnitId row = by_target ? edges[k].to : edges[k].from;
        index[cursor[row]++] = k;
    }
    for (std::size_t i = 0; i < n; ++i) {
        std::sort(index.begin() + offsets[i], index.begin() + offsets[i + 1],
                  [&](EdgeIndex x, EdgeIndex y) {
                      return by_target ? edges[x].from < edges[y].from : edges[x].to < edges[y].to;
                  });
    }
}

// Kahn's algorithm with a min-heap so ties resolve by id.
std::optional<std::vector<UnitId>> kahn_order(const Network& net) {
    const std::size_t n = net.unit_count();
    std::vector<std::size_t> indegree(n, 0);
    for (const Edge& e : net.edges()) ++indegree[e.to];
    std::priority_queue<UnitId, std::vector<UnitId>, std::greater<>> ready;
    for (UnitId u = 0; u < n; ++u) {
        if (indegree[u] == 0) ready.push(u);
    }
    std::vector<UnitId> order;
    order.reserve(n);
    while (!ready.empty()) {
        const UnitId u = ready.top();
        ready.pop();
        order.push_back(u);
        for (EdgeIndex e : net.out_edge_indices(u)) {
            if (--indegree[net.edge(e).to] == 0) ready.push(net.edge(e).to);
        }
    }
    if (order.size() != n) return std::nullopt;
    return order;
}

bool is_source_role(Role r) { return r == Role::Input || r == Role::BiasSource; }

}  // namespace

Network::Network(std::vector<Unit> units, std::vector<Edge> edges, bool recurrent,
                 int unroll_steps)
    : units_(std::move(units)),
      edges_(std::move(edges)),
      recurrent_(recurrent),
      unroll_steps_(unroll_steps) {
    const std::size_t n = units_.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (units_[i].id != i) {
            throw InvalidNetwork(
                fmt::format("unit ids must be dense 0..n-1: position {} holds id {}", i, units_[i].id));
        }
        switch (units_[i].role) {
            case Role::Input:
                inputs_.push_back(units_[i].id);
                break;
            case Role::Output:
                outputs_.push_back(units_[i].id);
                break;
            case Role::BiasSource:
                if (bias_) throw InvalidNetwork("at most one bias unit is allowed");
                bias_ = units_[i].id;
                break;
            case Role::Hidden:
                break;
        }
    }
    for (const Edge& e : edges_) {
        if (e.from >= n || e.to >= n) {
            throw InvalidNetwork(fmt::format("edge {}->{} references an unknown unit", e.from, e.to));
        }
    }
    build_csr(n, edges_, true, in_offsets_, in_index_);
    build_csr(n, edges_, false, out_offsets_, out_index_);
    for (std::size_t u = 0; u < n; ++u) {
        for (std::uint32_t k = out_offsets_[u] + 1; k < out_offsets_[u + 1]; ++k) {
            if (edges_[out_index_[k]].to == edges_[out_index_[k - 1]].to) {
                throw InvalidNetwork(fmt::format("parallel edges {}->{} are not allowed", u,
                                                 edges_[out_index_[k]].to));
            }
        }
    }
    topo_ = kahn_order(*this);
}

const Unit& Network::unit(UnitId id) const {
    if (id >= units_.size()) throw InvalidArgument(fmt::format("unknown unit {}", id));
    return units_[id];
}

std::span<const EdgeIndex> Network::in_edge_indices(UnitId id) const {
    if (id >= units_.size()) throw InvalidArgument(fmt::format("unknown unit {}", id));
    return {in_index_.data() + in_offsets_[id], in_index_.data() + in_offsets_[id + 1]};
}

std::span<const EdgeIndex> Network::out_edge_indices(UnitId id) const {
    if (id >= units_.size()) throw InvalidArgument(fmt::format("unknown unit {}", id));
    return {out_index_.data() + out_offsets_[id], out_index_.data() + out_offsets_[id + 1]};
}

std::optional<EdgeIndex> Network::find_edge(UnitId from, UnitId to) const {
    for (EdgeIndex e : out_edge_indices(from)) {
        if (edges_[e].to == to) return e;
    }
    return std::nullopt;
}

bool Network::is_balanceable(UnitId id) const {
    const Unit& u = unit(id);
    return u.role == Role::Hidden && is_homogeneous(u.activation);
}

std::vector<UnitId> Network::hidden_units() const {
    std::vector<UnitId> out;
    for (const Unit& u : units_) {
        if (u.role == Role::Hidden) out.push_back(u.id);
    }
    return out;
}

std::vector<double> Network::weights() const {
    std::vector<double> w(edges_.size());
    for (std::size_t k = 0; k < edges_.size(); ++k) w[k] = edges_[k].weight;
    return w;
}

void Network::set_weights(std::span<const double> w) {
    if (w.size() != edges_.size()) {
        throw InvalidArgument(
            fmt::format("expected {} weights, got {}", edges_.size(), w.size()));
    }
    for (std::size_t k = 0; k < edges_.size(); ++k) edges_[k].weight = w[k];
}

std::vector<std::string> validate(const Network& net) {
    std::vector<std::string> problems;
    const std::size_t n = net.unit_count();

    if (net.recurrent() && net.unroll_steps() < 1) {
        problems.push_back(fmt::format("unroll_steps must be positive, got {}", net.unroll_steps()));
    }
    for (EdgeIndex k = 0; k < net.edge_count(); ++k) {
        const Edge& e = net.edge(k);
        if (!std::isfinite(e.weight)) {
            problems.push_back(fmt::format("edge {}->{} has a non-finite weight", e.from, e.to));
        }
        if (is_source_role(net.unit(e.to).role)) {
            problems.push_back(fmt::format("edge {}->{} enters {} unit {}", e.from, e.to,
                                           to_string(net.unit(e.to).role), e.to));
        }
    }
    for (UnitId u : net.hidden_units()) {
        const auto nonzero = [&](std::span<const EdgeIndex> idx) {
            return std::any_of(idx.begin(), idx.end(),
                               [&](EdgeIndex e) { return net.weight(e) != 0.0; });
        };
        if (!nonzero(net.in_edge_indices(u))) {
            problems.push_back(fmt::format("hidden unit {} has no nonzero incoming weight", u));
        }
        if (!nonzero(net.out_edge_indices(u))) {
            problems.push_back(fmt::format("hidden unit {} has no nonzero outgoing weight", u));
        }
    }

    if (!net.recurrent()) {
        if (!net.topological_order()) {
            problems.push_back("non-recurrent network contains a directed cycle");
        } else {
            // Forward reachability from sources, backward reachability from outputs.
            std::vector<char> from_source(n, 0), to_output(n, 0);
            for (UnitId u : *net.topological_order()) {
                if (is_source_role(net.unit(u).role)) from_source[u] = 1;
                if (!from_source[u]) continue;
                for (EdgeIndex e : net.out_edge_indices(u)) from_source[net.edge(e).to] = 1;
            }
            const auto& order = *net.topological_order();
            for (auto it = order.rbegin(); it != order.rend(); ++it) {
                if (net.unit(*it).role == Role::Output) to_output[*it] = 1;
                if (!to_output[*it]) continue;
                for (EdgeIndex e : net.in_edge_indices(*it)) to_output[net.edge(e).from] = 1;
            }
            for (UnitId u : net.hidden_units()) {
                if (!from_source[u] || !to_output[u]) {
                    problems.push_back(
                        fmt::format("hidden unit {} lies on no input-to-output path", u));
                }
            }
        }
    }
    return problems;
}

void require_valid(const Network& net) {
    const auto problems = validate(net);
    if (problems.empty()) return;
    std::string msg = "invalid network:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw InvalidNetwork(msg);
}

std::vector<Edge> in_edges(const Network& net, UnitId id) {
    std::vector<Edge> out;
    for (EdgeIndex e : net.in_edge_indices(id)) out.push_back(net.edge(e));
    return out;
}

std::vector<Edge> out_edges(const Network& net, UnitId id) {
    std::vector<Edge> out;
    for (EdgeIndex e : net.out_edge_indices(id)) out.push_back(net.edge(e));
    return out;
}

namespace {

double pre_activation(const Network& net, UnitId u, const std::vector<double>& values) {
    double s = 0.0;
    for (EdgeIndex e : net.in_edge_indices(u)) s += net.weight(e) * values[net.edge(e).from];
    return s;
}

std::vector<double> source_state(const Network& net, std::span<const double> input) {
    if (input.size() != net.input_units().size()) {
        throw InvalidArgument(fmt::format("network expects {} inputs, got {}",
                                          net.input_units().size(), input.size()));
    }
    std::vector<double> values(net.unit_count(), 0.0);
    for (std::size_t k = 0; k < input.size(); ++k) values[net.input_units()[k]] = input[k];
    if (net.bias_unit()) values[*net.bias_unit()] = 1.0;
    return values;
}

}  // namespace

std::vector<double> forward(const Network& net, std::span<const double> input) {
    std::vector<double> values = source_state(net, input);

    if (!net.recurrent()) {
        if (!net.topological_order()) {
            throw InvalidNetwork("non-recurrent network contains a directed cycle");
        }
        for (UnitId u : *net.topological_order()) {
            const Unit& unit = net.unit(u);
            if (is_source_role(unit.role)) continue;
            values[u] = activate(unit.activation, pre_activation(net, u, values));
        }
    } else {
        std::vector<double> next = values;
        for (int step = 0; step < net.unroll_steps(); ++step) {
            for (const Unit& unit : net.units()) {
                if (is_source_role(unit.role)) continue;
                next[unit.id] = activate(unit.activation, pre_activation(net, unit.id, values));
            }
            values.swap(next);
        }
        next = values;
        for (UnitId u : net.output_units()) {
            next[u] = activate(net.unit(u).activation, pre_activation(net, u, values));
        }
        values.swap(next);
    }

    std::vector<double> out;
    out.reserve(net.output_units().size());
    for (UnitId u : net.output_units()) out.push_back(values[u]);
    return out;
}

std::vector<std::vector<UnitId>> hidden_layers(const Network& net) {
    if (!net.topological_order()) {
        throw InvalidNetwork("hidden layers are only defined for acyclic networks");
    }
    std::vector<int> depth(net.unit_count(), 0);
    for (UnitId u : *net.topological_order()) {
        for (EdgeIndex e : net.out_edge_indices(u)) {
            const UnitId v = net.edge(e).to;
            depth[v] = std::max(depth[v], depth[u] + 1);
        }
    }
    std::vector<std::vector<UnitId>> layers;
    for (UnitId u : net.hidden_units()) {
        const auto d = static_cast<std::size_t>(std::max(depth[u], 1));
        if (layers.size() < d) layers.resize(d);
        layers[d - 1].push_back(u);
    }
    std::erase_if(layers, [](const auto& layer) { return layer.empty(); });
    return layers;
}

}  // namespace balancekit
