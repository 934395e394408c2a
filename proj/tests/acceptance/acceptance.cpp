// Acceptance runner: one PASS/FAIL line per criterion, non-zero exit if any
// criterion fails. Every reference value is recomputed here from independent
// code in support/oracles.hpp or from closed forms.

#include "balancekit/approximator.hpp"
#include "balancekit/balancing.hpp"
#include "balancekit/builders.hpp"
#include "balancekit/dataset.hpp"
#include "balancekit/manifold.hpp"
#include "balancekit/training.hpp"
#include "support/oracles.hpp"

#include <fmt/format.h>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

using namespace balancekit;
using namespace balancekit::testing;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    std::string name;
    double time_limit_s;
    std::function<Outcome()> run;
};

double vec_inf_norm(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::fabs(x));
    return m;
}

ActivationSpec random_bilu(Rng& rng) {
    return ActivationSpec::bilu(rng.uniform(-0.5, 0.5), rng.uniform(0.5, 2.0));
}

// 1 -----------------------------------------------------------------------
Outcome function_preservation() {
    Rng rng(1001);
    const std::array<CostSpec, 4> costs{CostSpec::l2(), CostSpec::l1(), CostSpec::lp(1.5),
                                        CostSpec({{1, 0.015}, {2, 1.0}})};
    double worst = 0.0;
    for (int n = 0; n < 100; ++n) {
        const Network net = random_layered(rng, random_sizes(rng, 3, 5, 2, 6),
                                           [&](std::size_t, std::size_t) { return random_bilu(rng); }, true);
        const auto hidden = net.hidden_units();
        std::vector<std::vector<double>> probes, reference;
        for (int k = 0; k < 10; ++k) {
            probes.push_back(random_input(rng, net.input_units().size()));
            reference.push_back(forward(net, probes.back()));
        }
        for (int s = 0; s < 100; ++s) {
            Network cur = net;
            const int ops = 1 + static_cast<int>(rng.below(10));
            for (int k = 0; k < ops; ++k) {
                const UnitId u = hidden[rng.below(hidden.size())];
                if (rng.below(2) == 0) {
                    scale_neuron_in_place(cur, u, std::exp(rng.uniform(std::log(0.01), std::log(100.0))));
                } else {
                    balance_neuron_in_place(cur, u, costs[rng.below(costs.size())]);
                }
            }
            for (std::size_t k = 0; k < probes.size(); ++k) {
                const auto y = forward(cur, probes[k]);
                const double scale = vec_inf_norm(reference[k]);
                const double diff = max_abs_diff(y, reference[k]);
                const double rel = scale > 0 ? diff / scale : (diff == 0 ? 0.0 : INFINITY);
                worst = std::max(worst, rel);
            }
        }
    }
    return {worst <= 1e-9, fmt::format("max relative output change {:.3g} (limit 1e-9)", worst)};
}

// 2 -----------------------------------------------------------------------
Outcome lambda_closed_form() {
    Rng rng(2002);
    const std::array<double, 4> ps{0.5, 1.0, 2.0, 3.0};
    double worst_lambda = 0.0, worst_dr = 0.0;
    for (int k = 0; k < 500; ++k) {
        std::vector<double> in, out;
        const std::size_t ni = 1 + rng.below(5), no = 1 + rng.below(5);
        for (std::size_t j = 0; j < ni; ++j) in.push_back(random_signed_weight(rng));
        for (std::size_t j = 0; j < no; ++j) out.push_back(random_signed_weight(rng));
        const double p = ps[static_cast<std::size_t>(k) % ps.size()];
        const Network net = single_neuron(in, out);
        const UnitId h = kSingleHidden(ni);
        const CostSpec cost = CostSpec::lp(p);

        const auto [bal, rep] = balance_neuron(net, h, cost);
        const auto local = [&](long double log_lambda) {
            const long double lam = std::exp(log_lambda);
            long double s = 0;
            for (double w : in) s += std::pow(std::fabs(w) * lam, static_cast<long double>(p));
            for (double w : out) s += std::pow(std::fabs(w) / lam, static_cast<long double>(p));
            return s;
        };
        const double searched = static_cast<double>(std::exp(golden_section_log(local, -30, 30)));
        worst_lambda = std::max(worst_lambda, std::fabs(rep.lambda_star - searched) / searched);

        double A = 0, B = 0;
        for (double w : in) A += std::pow(std::fabs(w), p);
        for (double w : out) B += std::pow(std::fabs(w), p);
        const double eq8 = std::pow(std::sqrt(A) - std::sqrt(B), 2);
        const double r0 = network_cost(net, cost);
        const double measured = r0 - network_cost(bal, cost);
        worst_dr = std::max({worst_dr, std::fabs(measured - eq8) / std::max(1.0, r0),
                             std::fabs(rep.delta_r - eq8) / std::max(1.0, r0)});
    }
    return {worst_lambda <= 1e-7 && worst_dr <= 1e-10,
            fmt::format("max lambda rel err {:.3g} (limit 1e-7), max delta-R err {:.3g} (limit 1e-10, relative to max(1,R))",
                        worst_lambda, worst_dr)};
}

// 3 -----------------------------------------------------------------------
struct UniquenessStats {
    double worst = 0.0;
    bool all_converged = true;
};

void uniqueness_on(const Network& net, const CostSpec& cost, std::uint64_t seed, UniquenessStats& st) {
    const StopCriteria stop{1e-26, 20'000'000};
    std::vector<Network> results;
    const std::array<Schedule, 5> schedules{Schedule::stochastic(seed, stop), Schedule::stochastic(seed + 7919, stop),
                                            Schedule::sequential({}, stop), Schedule::layer_independent({}, stop),
                                            Schedule::partial_pass(stop)};
    for (const Schedule& s : schedules) {
        auto [out, trace] = run_balancing(net, s, cost);
        st.all_converged = st.all_converged && trace.converged;
        results.push_back(std::move(out));
    }
    results.push_back(solve_convex(net, cost).balanced);
    for (std::size_t a = 0; a < results.size(); ++a) {
        for (std::size_t b = a + 1; b < results.size(); ++b) {
            st.worst = std::max(st.worst, max_abs_diff(results[a].weights(), results[b].weights()));
        }
    }
}

Outcome uniqueness() {
    Rng rng(3003);
    UniquenessStats bilu, bipu;
    const std::array<double, 4> ps{0.5, 1.0, 2.0, 3.0};
    for (int k = 0; k < 20; ++k) {
        const Network net = random_layered(rng, random_sizes(rng, 3, 6, 2, 8),
                                           [&](std::size_t, std::size_t) { return random_bilu(rng); }, k % 2 == 0);
        uniqueness_on(net, CostSpec::lp(ps[static_cast<std::size_t>(k) % 4]), 100 + k, bilu);
    }
    for (int k = 0; k < 20; ++k) {
        const Network net = random_layered(rng, random_sizes(rng, 3, 6, 2, 8), [&](std::size_t, std::size_t) {
            return ActivationSpec::bipu(rng.uniform(0.5, 2), rng.uniform(-1, 1), 1.0 + static_cast<double>(rng.below(3)));
        }, k % 2 == 0);
        uniqueness_on(net, CostSpec::lp(k % 2 ? 2.0 : 1.0), 200 + k, bipu);
    }
    const bool ok = bilu.worst < 1e-6 && bipu.worst < 1e-6 && bilu.all_converged && bipu.all_converged;
    return {ok, fmt::format("BiLU max discrepancy {:.3g}, BiPU max discrepancy {:.3g} (limit 1e-6), all runs converged: {}",
                            bilu.worst, bipu.worst, bilu.all_converged && bipu.all_converged)};
}

// 4 -----------------------------------------------------------------------
Outcome thousand_schedules() {
    Rng rng(4004);
    const Network net = random_layered(rng, {4, 6, 6, 6, 2}, {}, true);
    const CostSpec cost = CostSpec::l2();
    const StopCriteria stop{1e-26, 20'000'000};
    std::vector<std::vector<double>> finals;
    bool decreasing = true, converged = true;
    double frob = 0.0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        auto [out, trace] = run_balancing(net, Schedule::stochastic(seed, stop), cost);
        converged = converged && trace.converged;
        double prev = trace.r_initial;
        for (double r : trace.r_series) {
            decreasing = decreasing && r <= prev;
            prev = r;
        }
        decreasing = decreasing && trace.r_series.back() < trace.r_initial;
        finals.push_back(out.weights());
        frob = frobenius_norm(out);
    }
    double worst = 0.0;
    for (std::size_t a = 0; a < finals.size(); ++a) {
        for (std::size_t b = a + 1; b < finals.size(); ++b) {
            double s = 0.0;
            for (std::size_t e = 0; e < finals[a].size(); ++e) s += (finals[a][e] - finals[b][e]) * (finals[a][e] - finals[b][e]);
            worst = std::max(worst, std::sqrt(s) / frob);
        }
    }
    return {worst < 1e-6 && decreasing && converged,
            fmt::format("max pairwise relative Frobenius distance {:.3g} (limit 1e-6), R decreasing: {}, all converged: {}",
                        worst, decreasing, converged)};
}

// 5 -----------------------------------------------------------------------
Outcome tied_closed_form() {
    Rng rng(5005);
    double worst_m = 0.0, worst_prod = 0.0;
    bool converged = true;
    for (int k = 0; k < 50; ++k) {
        const Network net = random_layered(rng, random_sizes(rng, 3, 6, 1, 6));
        // one weight matrix between each pair of consecutive layers
        const auto layers = hidden_layers(net);
        std::vector<int> depth(net.unit_count(), 0);
        for (std::size_t l = 0; l < layers.size(); ++l) for (UnitId u : layers[l]) depth[u] = static_cast<int>(l) + 1;
        for (UnitId u : net.output_units()) depth[u] = static_cast<int>(layers.size()) + 1;
        std::vector<double> norms(layers.size() + 1, 0.0);
        for (const Edge& e : net.edges()) norms[static_cast<std::size_t>(depth[e.from])] += e.weight * e.weight;

        const auto m = tied_layer_closed_form(norms);
        double prod = 1.0;
        for (double v : m) prod *= v;
        worst_prod = std::max(worst_prod, std::fabs(prod - 1.0));

        auto [out, trace] = run_balancing(net, Schedule::layer_tied({}, {1e-28, 1'000'000}), CostSpec::l2());
        converged = converged && trace.converged;
        for (EdgeIndex e = 0; e < net.edge_count(); ++e) {
            const double measured = out.weight(e) / net.weight(e);
            const double expected = m[static_cast<std::size_t>(depth[net.edge(e).from])];
            worst_m = std::max(worst_m, std::fabs(measured - expected));
        }
    }
    return {worst_m <= 1e-8 && worst_prod <= 1e-12 && converged,
            fmt::format("max |M_measured - M_closed| {:.3g} (limit 1e-8), max |prod M - 1| {:.3g} (limit 1e-12)",
                        worst_m, worst_prod)};
}

// 6 -----------------------------------------------------------------------
Network circles_net(std::uint64_t seed, std::vector<std::size_t> sizes) {
    LayeredSpec spec;
    spec.sizes = std::move(sizes);
    spec.output_activation = ActivationSpec::logistic();
    spec.bias = true;
    Rng rng(seed);
    return make_layered_network(spec, rng);
}

Outcome regularisation_balances() {
    const Dataset data = make_concentric_circles(200, 0.05, 606);
    const Network init = circles_net(6, {2, 16, 16, 1});
    const CostSpec l2 = CostSpec::l2();
    const double initial = network_deficit(init, l2);

    // (a) E + 0.01 L2 until the gradient infinity norm drops below 1e-5
    const auto reg = full_batch_descent(init, data, LossKind::BinaryCrossEntropy, CostSpec::l2(0.01), 0.05,
                                        1e-5, 250'000);
    const double reg_ratio = network_deficit(reg.net, l2) / initial;
    const bool a_ok = reg.converged && reg_ratio < 1e-4;

    // (b) E alone from a balanced start, lr 0.05, 50 epochs
    TrainConfig cfg;
    cfg.learning_rate = 0.05;
    cfg.batch_size = 1;
    cfg.epochs = 50;
    cfg.loss = LossKind::BinaryCrossEntropy;
    cfg.balance_mode = BalanceMode::FullAtStart;
    cfg.balance_tol = 1e-20;
    cfg.seed = 7;
    const auto plain = sgd_train(init, data, data, cfg);
    double peak = 0.0;
    for (const auto& row : plain.metrics) peak = std::max(peak, row.network_deficit);
    const double start_ratio = plain.metrics.front().network_deficit / initial;
    const bool b_ok = !plain.diverged && peak > 1e-2 * initial;

    return {a_ok && b_ok,
            fmt::format("(a) gradient inf-norm {:.3g} after {} iterations (target 1e-5, reached: {}), deficit/initial {:.3g} "
                        "(limit 1e-4); (b) balanced start deficit/initial {:.3g}, peak over 50 epochs {:.3g} (needs > 1e-2)",
                        reg.grad_norm, reg.iterations, reg.converged, reg_ratio, start_ratio, peak / initial)};
}

// 7 -----------------------------------------------------------------------
Outcome second_order_preservation() {
    const Dataset data = make_concentric_circles(200, 0.05, 707);
    const CostSpec l2 = CostSpec::l2();
    const Network start = run_balancing(circles_net(17, {2, 16, 16, 1}), Schedule::partial_pass({1e-28, 10'000'000}), l2).first;
    const auto g = gradients(start, data, {}, LossKind::BinaryCrossEntropy, std::nullopt);
    const auto hidden = start.hidden_units();
    const auto differences = [&](const Network& net) {
        std::vector<double> d;
        for (UnitId u : hidden) {
            double in = 0, out = 0;
            for (EdgeIndex e : net.in_edge_indices(u)) in += net.weight(e) * net.weight(e);
            for (EdgeIndex e : net.out_edge_indices(u)) out += net.weight(e) * net.weight(e);
            d.push_back(in - out);
        }
        return d;
    };
    const auto before = differences(start);
    const std::array<double, 4> etas{1e-2, 5e-3, 2.5e-3, 1.25e-3};
    std::vector<double> lx, ly;
    for (double eta : etas) {
        Network step = start;
        for (EdgeIndex e = 0; e < step.edge_count(); ++e) step.set_weight(e, step.weight(e) - eta * g.grad[e]);
        const auto after = differences(step);
        double change = 0.0;
        for (std::size_t k = 0; k < after.size(); ++k) change += std::fabs(after[k] - before[k]);
        change /= static_cast<double>(after.size());
        lx.push_back(std::log(eta));
        ly.push_back(std::log(change));
    }
    double mx = 0, my = 0;
    for (std::size_t k = 0; k < lx.size(); ++k) { mx += lx[k]; my += ly[k]; }
    mx /= static_cast<double>(lx.size());
    my /= static_cast<double>(ly.size());
    double sxy = 0, sxx = 0;
    for (std::size_t k = 0; k < lx.size(); ++k) { sxy += (lx[k] - mx) * (ly[k] - my); sxx += (lx[k] - mx) * (lx[k] - mx); }
    const double slope = sxy / sxx;
    return {slope >= 1.8 && slope <= 2.2, fmt::format("log-log slope {:.4f} (range [1.8, 2.2])", slope)};
}

// 8 -----------------------------------------------------------------------
Outcome training_benefit() {
    const Dataset train = make_concentric_circles(200, 0.05, 808);
    const Dataset test = make_concentric_circles(400, 0.05, 809);
    TrainConfig cfg;
    cfg.learning_rate = 0.01;
    cfg.batch_size = 1;
    cfg.epochs = 1000;
    cfg.loss = LossKind::BinaryCrossEntropy;
    double acc_none = 0.0, acc_fb = 0.0, worst_ratio = 0.0;
    std::string per_seed;
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
        const Network init = circles_net(seed, {2, 5, 1});
        cfg.seed = seed;
        cfg.balance_mode = BalanceMode::None;
        const double none = sgd_train(init, train, test, cfg).metrics.back().test_accuracy;
        cfg.balance_mode = BalanceMode::FullAtStart;
        const double fb = sgd_train(init, train, test, cfg).metrics.back().test_accuracy;
        acc_none += none;
        acc_fb += fb;
        per_seed += fmt::format("{}{:.3f}/{:.3f}", per_seed.empty() ? "" : ", ", none, fb);
        cfg.balance_mode = BalanceMode::PartialEachEpoch;
        const auto partial = sgd_train(circles_net(seed, {2, 8, 8, 1}), train, test, cfg);
        for (double r : norm_ratios(partial.net)) worst_ratio = std::max(worst_ratio, std::fabs(r - 1.0));
    }
    fmt::print("  per-seed accuracy (none / full at start): {}\n", per_seed);
    acc_none /= 8;
    acc_fb /= 8;
    const bool ok = acc_fb >= acc_none - 0.005 && worst_ratio < 0.05;
    return {ok, fmt::format("mean test accuracy: full balance at start {:.2f}%, none {:.2f}% (balanced arm must be >= none - 0.5 pp; "
                            "direction {}); partial balancing max |ratio - 1| {:.3g} (limit 0.05)",
                            100 * acc_fb, 100 * acc_none, acc_fb > acc_none ? "favours balancing" : "does not favour balancing",
                            worst_ratio)};
}

// 9 -----------------------------------------------------------------------
Outcome gradient_checks() {
    Rng rng(9009);
    const std::array<ActivationSpec, 4> acts{ActivationSpec::relu(), ActivationSpec::leaky_relu(0.1),
                                             ActivationSpec::tanh(), ActivationSpec::logistic()};
    double worst = 0.0;
    for (int k = 0; k < 20; ++k) {
        const auto act = acts[static_cast<std::size_t>(k) % 4];
        const std::size_t outputs = k % 3 == 2 ? 1 : 2;
        LayeredSpec spec;
        spec.sizes = random_sizes(rng, 3, 4, 2, 5);
        spec.sizes.back() = outputs;
        spec.hidden_activation = [&](std::size_t, std::size_t) { return act; };
        spec.bias = true;
        const LossKind loss = k % 3 == 0 ? LossKind::SquaredError : k % 3 == 1 ? LossKind::CrossEntropy : LossKind::BinaryCrossEntropy;
        if (loss == LossKind::BinaryCrossEntropy) spec.output_activation = ActivationSpec::logistic();
        Network net = make_layered_network(spec, [&] { return random_signed_weight(rng, 0.1, 1.5); });
        const CostSpec cost = k % 2 ? CostSpec::l1(0.01) : CostSpec::l2(0.01);

        Dataset data;
        for (int r = 0; r < 6; ++r) {
            data.inputs.push_back(random_input(rng, spec.sizes.front()));
            if (loss == LossKind::SquaredError) data.targets.push_back(random_input(rng, outputs));
            else data.labels.push_back(static_cast<int>(rng.below(outputs == 1 ? 2 : outputs)));
        }
        const auto g = gradients(net, data, {}, loss, cost);
        const double h = 1e-6;
        for (EdgeIndex e = 0; e < net.edge_count(); ++e) {
            const double w = net.weight(e);
            net.set_weight(e, w + h);
            const double up = evaluate_objective(net, data, loss, cost).total();
            net.set_weight(e, w - h);
            const double down = evaluate_objective(net, data, loss, cost).total();
            net.set_weight(e, w);
            const double fd = (up - down) / (2 * h);
            worst = std::max(worst, std::fabs(fd - g.grad[e]) / std::max({std::fabs(fd), std::fabs(g.grad[e]), 1e-4}));
        }
    }
    return {worst <= 1e-5, fmt::format("max relative finite-difference error {:.3g} (limit 1e-5, denominator floor 1e-4)", worst)};
}

// 10 ----------------------------------------------------------------------
Outcome universal_approximator() {
    const int n = 64;
    const auto f = [](double x) { return std::sin(2 * std::numbers::pi * x); };
    std::vector<std::pair<double, double>> samples;
    for (int k = 0; k <= n; ++k) samples.emplace_back(static_cast<double>(k) / n, f(static_cast<double>(k) / n));
    const auto approx = construct_universal_approximator(samples, 2 * std::numbers::pi / n);

    const int grid = 10000;
    std::vector<double> lo(n, INFINITY), hi(n, -INFINITY);
    double worst = 0.0;
    for (int k = 0; k <= grid; ++k) {
        const double x = static_cast<double>(k) / grid;
        const double in[1] = {x};
        worst = std::max(worst, std::fabs(forward(approx.net, in)[0] - f(x)));
        // a grid point on a knot belongs to both neighbouring slices
        const int a = std::min(n - 1, static_cast<int>(std::floor(x * n)));
        const int b = std::max(0, static_cast<int>(std::ceil(x * n)) - 1);
        for (int s : {a, b}) { lo[s] = std::min(lo[s], f(x)); hi[s] = std::max(hi[s], f(x)); }
    }
    double oscillation = 0.0;
    for (int s = 0; s < n; ++s) oscillation = std::max(oscillation, hi[s] - lo[s]);
    return {worst <= oscillation,
            fmt::format("max grid error {:.4g}, max slice oscillation {:.4g} (2 pi / 64 = {:.4g})", worst, oscillation,
                        2 * std::numbers::pi / n)};
}

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {1, "function preservation", 60, function_preservation},
        {2, "optimal lambda closed form vs search", 10, lambda_closed_form},
        {3, "uniqueness across schedules and convex oracle", 300, uniqueness},
        {4, "1000-schedule convergence to one point", 600, thousand_schedules},
        {5, "tied-layer closed form", 60, tied_closed_form},
        {6, "regularised training balances, plain training unbalances", 120, regularisation_balances},
        {7, "deficit change is second order in the step", 60, second_order_preservation},
        {8, "training with balancing", 300, training_benefit},
        {9, "gradient checks", 30, gradient_checks},
        {10, "universal approximator", 5, universal_approximator},
    };
    int failures = 0;
    for (const Criterion& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, fmt::format("exception: {}", e.what())};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = secs < c.time_limit_s;
        const bool pass = o.pass && in_time;
        failures += pass ? 0 : 1;
        fmt::print("{} [{}] {}: {}; {:.1f} s (limit {:.0f} s)\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail,
                   secs, c.time_limit_s);
        std::fflush(stdout);
    }
    fmt::print("{} of {} criteria passed\n", criteria.size() - static_cast<std::size_t>(failures), criteria.size());
    return failures == 0 ? 0 : 1;
}
