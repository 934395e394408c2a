#include "balancekit/builders.hpp"

#include "balancekit/error.hpp"

#include <cmath>

namespace balancekit {

namespace {

struct Layout {
    std::vector<Unit> units;
    std::vector<std::vector<UnitId>> layers;
    std::optional<UnitId> bias;
};

Layout layout(const LayeredSpec& spec) {
    if (spec.sizes.size() < 2) throw InvalidArgument("a layered network needs at least two layers");
    Layout out;
    UnitId next = 0;
    if (spec.bias) {
        out.units.push_back({next, Role::BiasSource, ActivationSpec::identity()});
        out.bias = next++;
    }
    const std::size_t last = spec.sizes.size() - 1;
    for (std::size_t l = 0; l < spec.sizes.size(); ++l) {
        if (spec.sizes[l] == 0) throw InvalidArgument("layers must be non-empty");
        std::vector<UnitId> layer;
        for (std::size_t k = 0; k < spec.sizes[l]; ++k) {
            Unit u{next, Role::Hidden, ActivationSpec::relu()};
            if (l == 0) {
                u.role = Role::Input;
                u.activation = ActivationSpec::identity();
            } else if (l == last) {
                u.role = Role::Output;
                u.activation = spec.output_activation;
            } else if (spec.hidden_activation) {
                u.activation = spec.hidden_activation(l - 1, k);
            }
            out.units.push_back(u);
            layer.push_back(next++);
        }
        out.layers.push_back(std::move(layer));
    }
    return out;
}

}  // namespace

Network make_layered_network(const LayeredSpec& spec, Rng& rng) {
    Layout lay = layout(spec);
    std::vector<Edge> edges;
    for (std::size_t l = 1; l < lay.layers.size(); ++l) {
        const double fan_in = static_cast<double>(lay.layers[l - 1].size());
        const double fan_out = static_cast<double>(lay.layers[l].size());
        const double r = std::sqrt(6.0 / (fan_in + fan_out));
        for (UnitId to : lay.layers[l]) {
            if (lay.bias) edges.push_back({*lay.bias, to, 0.0});
            for (UnitId from : lay.layers[l - 1]) edges.push_back({from, to, rng.uniform(-r, r)});
        }
    }
    return Network(std::move(lay.units), std::move(edges));
}

Network make_layered_network(const LayeredSpec& spec, const std::function<double()>& draw) {
    Layout lay = layout(spec);
    std::vector<Edge> edges;
    for (std::size_t l = 1; l < lay.layers.size(); ++l) {
        for (UnitId to : lay.layers[l]) {
            if (lay.bias) edges.push_back({*lay.bias, to, draw()});
            for (UnitId from : lay.layers[l - 1]) edges.push_back({from, to, draw()});
        }
    }
    return Network(std::move(lay.units), std::move(edges));
}

double random_signed_weight(Rng& rng, double lo, double hi) {
    const double mag = std::exp(rng.uniform(std::log(lo), std::log(hi)));
    return rng.uniform01() < 0.5 ? -mag : mag;
}

}  // namespace balancekit
