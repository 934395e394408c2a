#pragma once

#include "balancekit/network.hpp"
#include "balancekit/random.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace balancekit {

struct LayeredSpec {
    /// Units per layer, input layer first, output layer last.
    std::vector<std::size_t> sizes;
    /// Activation of hidden unit `index` (0-based within its layer) of hidden
    /// layer `layer` (0-based). Defaults to ReLU.
    std::function<ActivationSpec(std::size_t layer, std::size_t index)> hidden_activation;
    ActivationSpec output_activation = ActivationSpec::identity();
    bool bias = false;
};

/// Fully connected layered network. Unit ids: optional bias unit first, then
/// layers in order. Weights are uniform in [-r, r] with
/// r = sqrt(6 / (fan_in + fan_out)); bias weights start at zero.
Network make_layered_network(const LayeredSpec& spec, Rng& rng);

/// Same topology as make_layered_network, with every weight (bias weights
/// included) drawn by `draw`.
Network make_layered_network(const LayeredSpec& spec, const std::function<double()>& draw);

/// Nonzero weight of magnitude log-uniform in [lo, hi] and random sign.
double random_signed_weight(Rng& rng, double lo = 0.1, double hi = 3.0);

}  // namespace balancekit
