#include "balancekit/approximator.hpp"

#include "balancekit/error.hpp"

#include <fmt/format.h>

#include <cmath>

namespace balancekit {

Approximation construct_universal_approximator(std::span<const std::pair<double, double>> samples,
                                               double epsilon) {
    if (!(epsilon > 0.0)) throw InvalidArgument("epsilon must be > 0");
    if (samples.size() < 2) throw InvalidArgument("need at least two knots (N >= 1)");
    const std::size_t n = samples.size() - 1;
    const double h = 1.0 / static_cast<double>(n);
    for (std::size_t k = 0; k <= n; ++k) {
        const double expected = static_cast<double>(k) * h;
        if (std::fabs(samples[k].first - expected) > 1e-9) {
            throw InvalidArgument(fmt::format(
                "knot {} is at {}, expected {} (knots must be equispaced on [0,1])", k,
                samples[k].first, expected));
        }
        if (!std::isfinite(samples[k].second)) {
            throw InvalidArgument(fmt::format("sample {} is not finite", k));
        }
    }

    Approximation out;
    out.beta0 = samples[0].second;
    out.beta.resize(n);
    double prev_slope = 0.0;
    for (std::size_t k = 1; k <= n; ++k) {
        const double jump = samples[k].second - samples[k - 1].second;
        out.achieved_bound = std::max(out.achieved_bound, std::fabs(jump));
        const double slope = jump / h;
        out.beta[k - 1] = slope - prev_slope;
        prev_slope = slope;
    }
    out.within_epsilon = out.achieved_bound < epsilon;

    // ids: 0 bias, 1 input, hidden units, then the output.
    std::vector<Unit> units{{0, Role::BiasSource, ActivationSpec::identity()},
                            {1, Role::Input, ActivationSpec::identity()}};
    std::vector<Edge> edges;
    std::vector<std::pair<UnitId, double>> hidden;
    for (std::size_t k = 1; k <= n; ++k) {
        if (out.beta[k - 1] == 0.0) continue;
        const auto id = static_cast<UnitId>(units.size());
        units.push_back({id, Role::Hidden, ActivationSpec::relu()});
        edges.push_back({0, id, -static_cast<double>(k - 1) * h});
        edges.push_back({1, id, 1.0});
        hidden.emplace_back(id, out.beta[k - 1]);
    }
    const auto output = static_cast<UnitId>(units.size());
    units.push_back({output, Role::Output, ActivationSpec::identity()});
    edges.push_back({0, output, out.beta0});
    for (const auto& [id, beta] : hidden) edges.push_back({id, output, beta});
    out.net = Network(std::move(units), std::move(edges));
    return out;
}

}  // namespace balancekit
