#pragma once

#include "balancekit/activation.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace balancekit {

using UnitId = std::uint32_t;
using EdgeIndex = std::uint32_t;

enum class Role { Input, Output, Hidden, BiasSource };

std::string to_string(Role role);

struct Unit {
    UnitId id = 0;
    Role role = Role::Hidden;
    ActivationSpec activation = ActivationSpec::identity();

    friend bool operator==(const Unit&, const Unit&) = default;
};

/// Connection from -> to with weight w.
struct Edge {
    UnitId from = 0;
    UnitId to = 0;
    double weight = 0.0;

    friend bool operator==(const Edge&, const Edge&) = default;
};

/// A feedforward or recurrent network of heterogeneous units.
///
/// Topology (units, edge endpoints) is fixed at construction; only weights
/// may change afterwards. Biases are ordinary edges leaving the single
/// BiasSource unit, which is clamped to 1. Input, output and bias units are
/// visible; only hidden units are ever scaled.
///
/// The constructor rejects documents that cannot be indexed at all (ids not
/// dense 0..n-1, dangling endpoints, parallel edges). Everything else is
/// reported by validate().
class Network {
public:
    Network() = default;
    Network(std::vector<Unit> units, std::vector<Edge> edges, bool recurrent = false,
            int unroll_steps = 3);

    std::size_t unit_count() const noexcept { return units_.size(); }
    std::size_t edge_count() const noexcept { return edges_.size(); }

    const std::vector<Unit>& units() const noexcept { return units_; }
    const Unit& unit(UnitId id) const;
    const std::vector<Edge>& edges() const noexcept { return edges_; }
    const Edge& edge(EdgeIndex e) const { return edges_.at(e); }

    double weight(EdgeIndex e) const { return edges_[e].weight; }
    void set_weight(EdgeIndex e, double w) { edges_[e].weight = w; }

    /// Edge indices into / out of a unit, ordered by counterpart id.
    std::span<const EdgeIndex> in_edge_indices(UnitId id) const;
    std::span<const EdgeIndex> out_edge_indices(UnitId id) const;

    std::optional<EdgeIndex> find_edge(UnitId from, UnitId to) const;

    bool recurrent() const noexcept { return recurrent_; }
    int unroll_steps() const noexcept { return unroll_steps_; }

    bool is_visible(UnitId id) const { return unit(id).role != Role::Hidden; }

    /// Hidden with a homogeneous activation: the units scaling applies to.
    bool is_balanceable(UnitId id) const;

    /// Input units in ascending id order (the order forward() consumes).
    const std::vector<UnitId>& input_units() const noexcept { return inputs_; }
    /// Output units in ascending id order (the order forward() returns).
    const std::vector<UnitId>& output_units() const noexcept { return outputs_; }
    std::vector<UnitId> hidden_units() const;
    std::optional<UnitId> bias_unit() const noexcept { return bias_; }

    /// Topological order when the edge graph is acyclic (ties broken by id).
    const std::optional<std::vector<UnitId>>& topological_order() const noexcept { return topo_; }

    std::vector<double> weights() const;
    void set_weights(std::span<const double> w);

    friend bool operator==(const Network& lhs, const Network& rhs) {
        return lhs.units_ == rhs.units_ && lhs.edges_ == rhs.edges_ &&
               lhs.recurrent_ == rhs.recurrent_ && lhs.unroll_steps_ == rhs.unroll_steps_;
    }

private:
    std::vector<Unit> units_;
    std::vector<Edge> edges_;
    bool recurrent_ = false;
    int unroll_steps_ = 3;

    // CSR adjacency, rows ordered by counterpart id.
    std::vector<std::uint32_t> in_offsets_;
    std::vector<EdgeIndex> in_index_;
    std::vector<std::uint32_t> out_offsets_;
    std::vector<EdgeIndex> out_index_;

    std::vector<UnitId> inputs_;
    std::vector<UnitId> outputs_;
    std::optional<UnitId> bias_;
    std::optional<std::vector<UnitId>> topo_;
};

/// Every violated structural invariant, one human-readable line each.
/// Empty iff the network is valid.
std::vector<std::string> validate(const Network& net);

/// Throws InvalidNetwork listing the violations if validate() is non-empty.
void require_valid(const Network& net);

std::vector<Edge> in_edges(const Network& net, UnitId id);
std::vector<Edge> out_edges(const Network& net, UnitId id);

/// Evaluates the network on one input vector (one value per input unit, in
/// ascending id order) and returns the output-unit activations.
///
/// Feedforward nets evaluate units in topological order. Recurrent nets start
/// from a zero state, apply unroll_steps() synchronous updates of every
/// hidden and output unit, then recompute the outputs from the final state.
/// Pre-activations sum incoming edges in ascending source id order.
std::vector<double> forward(const Network& net, std::span<const double> input);

/// Hidden units grouped by longest-path depth from the sources; layer k holds
/// the hidden units whose deepest incoming path has k+1 edges. Requires an
/// acyclic network.
std::vector<std::vector<UnitId>> hidden_layers(const Network& net);

}  // namespace balancekit
