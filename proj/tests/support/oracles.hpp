#pragma once

// Test-only fixtures and independent reference computations. Nothing here
// calls into the balancing or manifold code paths it is used to check.

#include "balancekit/builders.hpp"
#include "balancekit/network.hpp"
#include "balancekit/random.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

namespace balancekit::testing {

/// inputs -> one hidden unit -> outputs; weights given per side.
inline Network single_neuron(const std::vector<double>& in, const std::vector<double>& out,
                             ActivationSpec hidden = ActivationSpec::relu()) {
    std::vector<Unit> units;
    std::vector<Edge> edges;
    UnitId id = 0;
    for (std::size_t k = 0; k < in.size(); ++k) units.push_back({id++, Role::Input, ActivationSpec::identity()});
    const UnitId h = id++;
    units.push_back({h, Role::Hidden, hidden});
    for (std::size_t k = 0; k < out.size(); ++k) units.push_back({id++, Role::Output, ActivationSpec::identity()});
    for (std::size_t k = 0; k < in.size(); ++k) edges.push_back({static_cast<UnitId>(k), h, in[k]});
    for (std::size_t k = 0; k < out.size(); ++k) {
        edges.push_back({h, static_cast<UnitId>(h + 1 + k), out[k]});
    }
    return Network(std::move(units), std::move(edges));
}

inline constexpr UnitId kSingleHidden(std::size_t n_in) { return static_cast<UnitId>(n_in); }

/// input 0 -> hidden 1 -> ... -> output, weights along the chain.
inline Network chain(const std::vector<double>& weights,
                     ActivationSpec hidden = ActivationSpec::relu()) {
    std::vector<Unit> units;
    std::vector<Edge> edges;
    const std::size_t n = weights.size() + 1;
    for (UnitId u = 0; u < n; ++u) {
        Role r = u == 0 ? Role::Input : (u + 1 == n ? Role::Output : Role::Hidden);
        units.push_back({u, r, r == Role::Hidden ? hidden : ActivationSpec::identity()});
    }
    for (UnitId u = 0; u + 1 < n; ++u) edges.push_back({u, u + 1, weights[u]});
    return Network(std::move(units), std::move(edges));
}

/// Random fully connected layered net with nonzero weights of magnitude in
/// [0.1, 3] and random signs.
inline Network random_layered(Rng& rng, std::vector<std::size_t> sizes,
                              std::function<ActivationSpec(std::size_t, std::size_t)> act = {},
                              bool bias = false) {
    LayeredSpec spec;
    spec.sizes = std::move(sizes);
    spec.hidden_activation = std::move(act);
    spec.bias = bias;
    return make_layered_network(spec, [&] { return random_signed_weight(rng); });
}

inline std::vector<std::size_t> random_sizes(Rng& rng, std::size_t min_layers, std::size_t max_layers,
                                             std::size_t min_width, std::size_t max_width) {
    const std::size_t layers = min_layers + rng.below(max_layers - min_layers + 1);
    std::vector<std::size_t> sizes;
    for (std::size_t l = 0; l < layers; ++l) sizes.push_back(min_width + rng.below(max_width - min_width + 1));
    return sizes;
}

/// Per-unit evaluation written independently of balancekit::forward: a
/// fixed-point sweep that recomputes every unit until nothing changes
/// (acyclic nets only).
inline std::vector<double> reference_forward(const Network& net, std::span<const double> x) {
    const std::size_t n = net.unit_count();
    std::vector<double> v(n, 0.0);
    std::vector<char> done(n, 0);
    std::size_t k = 0;
    for (const Unit& u : net.units()) {
        if (u.role == Role::Input) { v[u.id] = x[k++]; done[u.id] = 1; }
        if (u.role == Role::BiasSource) { v[u.id] = 1.0; done[u.id] = 1; }
    }
    bool progress = true;
    while (progress) {
        progress = false;
        for (const Unit& u : net.units()) {
            if (done[u.id]) continue;
            bool ready = true;
            double s = 0.0;
            // ascending source id, matching the library's summation order
            std::vector<std::pair<UnitId, double>> incoming;
            for (const Edge& e : net.edges()) if (e.to == u.id) incoming.emplace_back(e.from, e.weight);
            std::sort(incoming.begin(), incoming.end());
            for (auto [from, w] : incoming) {
                if (!done[from]) { ready = false; break; }
                s += w * v[from];
            }
            if (!ready) continue;
            const ActivationSpec& a = u.activation;
            switch (a.kind()) {
                case ActivationKind::BiLU: v[u.id] = s < 0 ? a.a() * s : a.b() * s; break;
                case ActivationKind::BiPU: v[u.id] = s >= 0 ? a.C() * std::pow(s, a.c()) : a.D() * std::pow(-s, a.c()); break;
                case ActivationKind::Tanh: v[u.id] = std::tanh(s); break;
                case ActivationKind::Logistic: v[u.id] = 1.0 / (1.0 + std::exp(-s)); break;
            }
            done[u.id] = 1;
            progress = true;
        }
    }
    std::vector<double> out;
    for (const Unit& u : net.units()) if (u.role == Role::Output) out.push_back(v[u.id]);
    return out;
}

/// Grid search on [lo, hi] followed by repeated local refinement, in
/// extended precision; returns the minimiser of f to about `tol`.
inline double grid_minimise(const std::function<long double(long double)>& f, long double lo,
                            long double hi, long double tol = 1e-10L) {
    long double best = lo;
    for (int pass = 0; pass < 60 && hi - lo > tol; ++pass) {
        const int steps = 1000;
        long double best_v = INFINITY;
        for (int k = 0; k <= steps; ++k) {
            const long double x = lo + (hi - lo) * k / steps;
            if (x <= 0) continue;
            const long double v = f(x);
            if (v < best_v) { best_v = v; best = x; }
        }
        const long double h = (hi - lo) / steps;
        lo = std::max(best - h, 1e-300L);
        hi = best + h;
    }
    return static_cast<double>(best);
}

/// Golden-section search for the minimiser of a unimodal function of
/// log(lambda), carried out in extended precision.
inline long double golden_section_log(const std::function<long double(long double)>& f,
                                      long double lo, long double hi, int iterations = 200) {
    const long double inv_phi = (std::sqrt(5.0L) - 1.0L) / 2.0L;
    long double a = lo, b = hi;
    long double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
    long double fc = f(c), fd = f(d);
    for (int k = 0; k < iterations && b - a > 1e-18L; ++k) {
        if (fc < fd) {
            b = d; d = c; fd = fc;
            c = b - inv_phi * (b - a); fc = f(c);
        } else {
            a = c; c = d; fc = fd;
            d = a + inv_phi * (b - a); fd = f(d);
        }
    }
    return (a + b) / 2.0L;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::fabs(a[k] - b[k]));
    return m;
}

inline double max_rel_diff(std::span<const double> a, std::span<const double> b, double floor = 1e-12) {
    double m = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        m = std::max(m, std::fabs(a[k] - b[k]) / std::max({std::fabs(a[k]), std::fabs(b[k]), floor}));
    }
    return m;
}

inline std::vector<double> random_input(Rng& rng, std::size_t n, double scale = 1.0) {
    std::vector<double> x(n);
    for (double& v : x) v = rng.uniform(-scale, scale);
    return x;
}

}  // namespace balancekit::testing
