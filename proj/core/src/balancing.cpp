#include "balancekit/balancing.hpp"

#include "balancekit/error.hpp"
#include "balancekit/random.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <unordered_set>

namespace balancekit {

namespace {

constexpr double kBracketLo = 1e-8;
constexpr double kBracketHi = 1e8;
constexpr double kBisectionWidth = 1e-14;

// An edge touched by a scaling, and the power of lambda it is multiplied by.
struct Incidence {
    EdgeIndex edge;
    double k;
};

double unit_exponent(const Network& net, UnitId i, const BalanceOptions& options) {
    const Unit& u = net.unit(i);
    if (u.role != Role::Hidden) {
        throw InvalidArgument(fmt::format("unit {} is visible ({}) and cannot be scaled", i,
                                          to_string(u.role)));
    }
    if (auto c = homogeneity_exponent(u.activation)) return *c;
    if (options.allow_nonhomogeneous) return 1.0;
    throw InvalidArgument(
        fmt::format("unit {} has non-homogeneous activation {}", i, to_string(u.activation.kind())));
}

void append_unit_incidences(const Network& net, UnitId i, double c,
                            std::vector<Incidence>& out) {
    for (EdgeIndex e : net.in_edge_indices(i)) {
        out.push_back({e, net.edge(e).from == i ? 1.0 - c : 1.0});
    }
    for (EdgeIndex e : net.out_edge_indices(i)) {
        if (net.edge(e).to != i) out.push_back({e, -c});
    }
}

std::vector<Incidence> unit_incidences(const Network& net, UnitId i, double c) {
    std::vector<Incidence> inc;
    append_unit_incidences(net, i, c, inc);
    return inc;
}

double scaled(double w, double lambda, double k) {
    if (k == 1.0) return w * lambda;
    if (k == -1.0) return w / lambda;
    if (k == 0.0) return w;
    return w * std::pow(lambda, k);
}

// w * g'(w) = sum_t beta_t p_t |w|^p_t
double slope_term(const CostSpec& cost, double w) {
    const double a = std::fabs(w);
    if (a == 0.0) return 0.0;
    double s = 0.0;
    for (const PowerTerm& t : cost.terms()) s += t.beta * t.p * std::pow(a, t.p);
    return s;
}

// d/d(log lambda) of the incident cost, evaluated at scaling factor lambda.
double log_derivative(const Network& net, std::span<const Incidence> inc, const CostSpec& cost,
                      double lambda) {
    double s = 0.0;
    for (const Incidence& x : inc) {
        if (x.k == 0.0) continue;
        s += x.k * slope_term(cost, scaled(net.weight(x.edge), lambda, x.k));
    }
    return s;
}

double incident_cost(const Network& net, std::span<const Incidence> inc, const CostSpec& cost,
                     double lambda) {
    double s = 0.0;
    for (const Incidence& x : inc) s += weight_cost(cost, scaled(net.weight(x.edge), lambda, x.k));
    return s;
}

bool has_cost_side(const Network& net, std::span<const Incidence> inc, bool positive) {
    return std::any_of(inc.begin(), inc.end(), [&](const Incidence& x) {
        return (positive ? x.k > 0.0 : x.k < 0.0) && net.weight(x.edge) != 0.0;
    });
}

bool closed_form_applies(const CostSpec& cost, std::span<const Incidence> inc, double c) {
    if (!cost.single_term()) return false;
    return std::all_of(inc.begin(), inc.end(),
                       [&](const Incidence& x) { return x.k == 1.0 || x.k == -c || x.k == 0.0; });
}

struct Optimum {
    double lambda;
    double delta;  // cost decrease, >= 0
};

Optimum optimise(const Network& net, std::span<const Incidence> inc, const CostSpec& cost,
                 double c, const std::string& what) {
    if (!has_cost_side(net, inc, true) || !has_cost_side(net, inc, false)) {
        throw DegenerateUnit(fmt::format("{} has an all-zero side and cannot be balanced", what));
    }
    if (closed_form_applies(cost, inc, c)) {
        const double p = cost.terms().front().p;
        const double beta = cost.terms().front().beta;
        double in_sum = 0.0, out_sum = 0.0;
        for (const Incidence& x : inc) {
            const double a = std::pow(std::fabs(net.weight(x.edge)), p);
            if (x.k == 1.0) {
                in_sum += a;
            } else if (x.k == -c) {
                out_sum += a;
            }
        }
        const double lambda = std::pow(c * out_sum / in_sum, 1.0 / (p * (c + 1.0)));
        double delta;
        if (c == 1.0) {
            const double d = std::sqrt(in_sum) - std::sqrt(out_sum);
            delta = beta * d * d;
        } else {
            delta = incident_cost(net, inc, cost, 1.0) - incident_cost(net, inc, cost, lambda);
        }
        return {lambda, std::max(delta, 0.0)};
    }

    double lo = std::log(kBracketLo);
    double hi = std::log(kBracketHi);
    if (log_derivative(net, inc, cost, kBracketLo) > 0.0 ||
        log_derivative(net, inc, cost, kBracketHi) < 0.0) {
        throw ConvergenceError(fmt::format("optimal scaling of {} lies outside [{}, {}]", what,
                                           kBracketLo, kBracketHi));
    }
    while (hi - lo > kBisectionWidth) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (log_derivative(net, inc, cost, std::exp(mid)) < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    const double lambda = std::exp(0.5 * (lo + hi));
    const double delta = incident_cost(net, inc, cost, 1.0) - incident_cost(net, inc, cost, lambda);
    return {lambda, std::max(delta, 0.0)};
}

void apply(Network& net, std::span<const Incidence> inc, double lambda) {
    for (const Incidence& x : inc) net.set_weight(x.edge, scaled(net.weight(x.edge), lambda, x.k));
}

double residual(const Network& net, std::span<const Incidence> inc, const CostSpec& cost) {
    const double r = log_derivative(net, inc, cost, 1.0);
    return cost.single_term() ? r / cost.terms().front().p : r;
}

std::vector<Incidence> group_incidences(const Network& net, std::span<const UnitId> units,
                                        const BalanceOptions& options, double& c_out) {
    if (units.empty()) throw InvalidArgument("tied balancing needs at least one unit");
    const std::unordered_set<UnitId> members(units.begin(), units.end());
    if (members.size() != units.size()) throw InvalidArgument("tied group lists a unit twice");
    const double c = unit_exponent(net, units.front(), options);
    std::vector<Incidence> inc;
    for (UnitId u : units) {
        if (unit_exponent(net, u, options) != c) {
            throw InvalidArgument(
                fmt::format("tied group mixes homogeneity exponents ({} at unit {} vs {})",
                            unit_exponent(net, u, options), u, c));
        }
        for (EdgeIndex e : net.out_edge_indices(u)) {
            if (members.contains(net.edge(e).to)) {
                throw InvalidArgument(fmt::format("tied group contains internal edge {}->{}",
                                                  net.edge(e).from, net.edge(e).to));
            }
        }
        append_unit_incidences(net, u, c, inc);
    }
    c_out = c;
    return inc;
}

}  // namespace

void scale_neuron_in_place(Network& net, UnitId i, double lambda, const BalanceOptions& options) {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) {
        throw InvalidArgument(fmt::format("scaling factor must be finite and > 0, got {}", lambda));
    }
    const double c = unit_exponent(net, i, options);
    apply(net, unit_incidences(net, i, c), lambda);
}

Network scale_neuron(const Network& net, UnitId i, double lambda, const BalanceOptions& options) {
    Network out = net;
    scale_neuron_in_place(out, i, lambda, options);
    return out;
}

double optimal_lambda(const Network& net, UnitId i, const CostSpec& cost,
                      const BalanceOptions& options) {
    const double c = unit_exponent(net, i, options);
    return optimise(net, unit_incidences(net, i, c), cost, c, fmt::format("unit {}", i)).lambda;
}

BalanceReport balance_neuron_in_place(Network& net, UnitId i, const CostSpec& cost,
                                      const BalanceOptions& options) {
    const double c = unit_exponent(net, i, options);
    const auto inc = unit_incidences(net, i, c);
    BalanceReport report;
    report.unit = i;
    report.r_before = network_cost(net, cost);
    const Optimum opt = optimise(net, inc, cost, c, fmt::format("unit {}", i));
    apply(net, inc, opt.lambda);
    report.lambda_star = opt.lambda;
    report.delta_r = opt.delta;
    report.r_after = report.r_before - opt.delta;
    return report;
}

std::pair<Network, BalanceReport> balance_neuron(const Network& net, UnitId i,
                                                 const CostSpec& cost,
                                                 const BalanceOptions& options) {
    Network out = net;
    BalanceReport report = balance_neuron_in_place(out, i, cost, options);
    return {std::move(out), report};
}

double balance_residual(const Network& net, UnitId i, const CostSpec& cost,
                        const BalanceOptions& options) {
    const double c = unit_exponent(net, i, options);
    return residual(net, unit_incidences(net, i, c), cost);
}

double neuron_deficit(const Network& net, UnitId i, const CostSpec& cost,
                      const BalanceOptions& options) {
    const double r = balance_residual(net, i, cost, options);
    return r * r;
}

namespace {

bool tracked(const Network& net, UnitId u, const BalanceOptions& options) {
    const Unit& unit = net.unit(u);
    if (unit.role != Role::Hidden) return false;
    if (!is_homogeneous(unit.activation) && !options.allow_nonhomogeneous) return false;
    const double c = unit_exponent(net, u, options);
    const auto inc = unit_incidences(net, u, c);
    return has_cost_side(net, inc, true) && has_cost_side(net, inc, false);
}

}  // namespace

double network_deficit(const Network& net, const CostSpec& cost, const BalanceOptions& options) {
    double s = 0.0;
    for (UnitId u : net.hidden_units()) {
        if (tracked(net, u, options)) s += neuron_deficit(net, u, cost, options);
    }
    return s;
}

BalanceReport balance_subset_tied_in_place(Network& net, std::span<const UnitId> units,
                                           const CostSpec& cost, const BalanceOptions& options) {
    double c = 1.0;
    const auto inc = group_incidences(net, units, options, c);
    BalanceReport report;
    report.unit = units.front();
    report.group_size = units.size();
    report.r_before = network_cost(net, cost);
    const Optimum opt =
        optimise(net, inc, cost, c, fmt::format("tied group starting at unit {}", units.front()));
    apply(net, inc, opt.lambda);
    report.lambda_star = opt.lambda;
    report.delta_r = opt.delta;
    report.r_after = report.r_before - opt.delta;
    return report;
}

std::pair<Network, BalanceReport> balance_subset_tied(const Network& net,
                                                      std::span<const UnitId> units,
                                                      const CostSpec& cost,
                                                      const BalanceOptions& options) {
    Network out = net;
    BalanceReport report = balance_subset_tied_in_place(out, units, cost, options);
    return {std::move(out), report};
}

double subset_deficit(const Network& net, std::span<const UnitId> units, const CostSpec& cost,
                      const BalanceOptions& options) {
    double c = 1.0;
    const double r = residual(net, group_incidences(net, units, options, c), cost);
    return r * r;
}

std::size_t BalanceTrace::productive_steps() const {
    return static_cast<std::size_t>(std::count_if(steps.begin(), steps.end(), [](const auto& s) {
        return !s.skipped && s.delta_r > 0.0;
    }));
}

std::vector<UnitId> input_to_output_order(const Network& net, const BalanceOptions& options) {
    std::vector<UnitId> order;
    const auto& topo = net.topological_order();
    std::vector<UnitId> units = topo ? *topo : net.hidden_units();
    for (UnitId u : units) {
        const Unit& unit = net.unit(u);
        if (unit.role == Role::Hidden &&
            (is_homogeneous(unit.activation) || options.allow_nonhomogeneous)) {
            order.push_back(u);
        }
    }
    return order;
}

Schedule Schedule::stochastic(std::uint64_t seed, StopCriteria stop) {
    Schedule s;
    s.kind = ScheduleKind::Stochastic;
    s.seed = seed;
    s.stop = stop;
    return s;
}

Schedule Schedule::sequential(std::vector<UnitId> order, StopCriteria stop) {
    Schedule s;
    s.kind = ScheduleKind::Sequential;
    s.order = std::move(order);
    s.stop = stop;
    return s;
}

Schedule Schedule::layer_independent(std::vector<std::vector<UnitId>> layers, StopCriteria stop) {
    Schedule s;
    s.kind = ScheduleKind::LayerIndependent;
    s.layers = std::move(layers);
    s.stop = stop;
    return s;
}

Schedule Schedule::layer_tied(std::vector<std::vector<UnitId>> layers, StopCriteria stop) {
    Schedule s;
    s.kind = ScheduleKind::LayerTied;
    s.layers = std::move(layers);
    s.stop = stop;
    return s;
}

Schedule Schedule::partial_pass(StopCriteria stop) {
    Schedule s;
    s.kind = ScheduleKind::PartialPass;
    s.stop = stop;
    return s;
}

namespace {

// Keeps per-unit deficits current as single units are balanced, touching
// only the balanced unit and its neighbours.
class DeficitTracker {
public:
    DeficitTracker(const Network& net, const CostSpec& cost, const BalanceOptions& options)
        : cost_(cost), options_(options), deficit_(net.unit_count(), 0.0),
          tracked_(net.unit_count(), 0) {
        for (UnitId u : net.hidden_units()) {
            if (!tracked(net, u, options)) continue;
            tracked_[u] = 1;
            ids_.push_back(u);
            deficit_[u] = neuron_deficit(net, u, cost, options);
        }
    }

    bool is_tracked(UnitId u) const { return tracked_[u] != 0; }

    void refresh_around(const Network& net, UnitId i) {
        refresh(net, i);
        for (EdgeIndex e : net.in_edge_indices(i)) refresh(net, net.edge(e).from);
        for (EdgeIndex e : net.out_edge_indices(i)) refresh(net, net.edge(e).to);
    }

    double total() const {
        double s = 0.0;
        for (UnitId u : ids_) s += deficit_[u];
        return s;
    }

private:
    void refresh(const Network& net, UnitId u) {
        if (tracked_[u]) deficit_[u] = neuron_deficit(net, u, cost_, options_);
    }

    const CostSpec& cost_;
    const BalanceOptions& options_;
    std::vector<double> deficit_;
    std::vector<char> tracked_;
    std::vector<UnitId> ids_;
};

std::vector<std::vector<UnitId>> balanceable_layers(const Network& net,
                                                    const BalanceOptions& options) {
    auto layers = hidden_layers(net);
    for (auto& layer : layers) {
        std::erase_if(layer, [&](UnitId u) {
            return !is_homogeneous(net.unit(u).activation) && !options.allow_nonhomogeneous;
        });
    }
    std::erase_if(layers, [](const auto& l) { return l.empty(); });
    return layers;
}

// Tied layers whose two sides both carry cost; the others can never move.
std::vector<std::vector<UnitId>> live_groups(const Network& net,
                                             const std::vector<std::vector<UnitId>>& layers,
                                             const BalanceOptions& options) {
    std::vector<std::vector<UnitId>> out;
    for (const auto& layer : layers) {
        double c = 1.0;
        const auto inc = group_incidences(net, layer, options, c);
        if (has_cost_side(net, inc, true) && has_cost_side(net, inc, false)) out.push_back(layer);
    }
    return out;
}

}  // namespace

std::pair<Network, BalanceTrace> partial_balance_pass(const Network& net, const CostSpec& cost,
                                                      std::span<const UnitId> order,
                                                      const BalanceOptions& options) {
    Network w = net;
    BalanceTrace trace;
    DeficitTracker deficits(w, cost, options);
    double r = network_cost(w, cost);
    trace.r_initial = r;
    trace.deficit_initial = deficits.total();
    for (UnitId u : order) {
        BalanceReport rep;
        rep.unit = u;
        rep.r_before = r;
        if (deficits.is_tracked(u)) {
            const double c = unit_exponent(w, u, options);
            const auto inc = unit_incidences(w, u, c);
            const Optimum opt = optimise(w, inc, cost, c, fmt::format("unit {}", u));
            apply(w, inc, opt.lambda);
            rep.lambda_star = opt.lambda;
            rep.delta_r = opt.delta;
            deficits.refresh_around(w, u);
        } else {
            unit_exponent(w, u, options);  // rejects visible / non-homogeneous units
            rep.skipped = true;
        }
        r -= rep.delta_r;
        rep.r_after = r;
        trace.steps.push_back(rep);
        trace.r_series.push_back(r);
        trace.deficit_series.push_back(deficits.total());
    }
    trace.converged = true;
    return {std::move(w), std::move(trace)};
}

std::pair<Network, BalanceTrace> run_balancing(const Network& net, const Schedule& schedule,
                                               const CostSpec& cost,
                                               const BalanceOptions& options) {
    Network w = net;
    BalanceTrace trace;
    double r = network_cost(w, cost);
    trace.r_initial = r;
    const double scale = r > 0.0 ? r * r : 1.0;
    const StopCriteria& stop = schedule.stop;

    if (schedule.kind == ScheduleKind::LayerTied) {
        const auto layers = live_groups(
            w, schedule.layers.empty() ? balanceable_layers(w, options) : schedule.layers,
            options);
        const auto measure = [&] {
            double s = 0.0;
            for (const auto& layer : layers) s += subset_deficit(w, layer, cost, options);
            return s;
        };
        double m = measure();
        trace.deficit_initial = m;
        if (layers.empty() || m / scale < stop.deficit_tol) {
            trace.converged = true;
            return {std::move(w), std::move(trace)};
        }
        for (std::size_t step = 0; step < stop.max_steps; ++step) {
            const auto& layer = layers[step % layers.size()];
            double c = 1.0;
            const auto inc = group_incidences(w, layer, options, c);
            const Optimum opt = optimise(w, inc, cost, c, "tied layer");
            apply(w, inc, opt.lambda);
            BalanceReport rep{layer.front(), layer.size(), opt.lambda, r, r - opt.delta,
                              opt.delta,     false};
            r = rep.r_after;
            m = measure();
            trace.steps.push_back(rep);
            trace.r_series.push_back(r);
            trace.deficit_series.push_back(m);
            if (m / scale < stop.deficit_tol) {
                trace.converged = true;
                break;
            }
        }
        return {std::move(w), std::move(trace)};
    }

    DeficitTracker deficits(w, cost, options);
    double m = deficits.total();
    trace.deficit_initial = m;
    if (m / scale < stop.deficit_tol) {
        trace.converged = true;
        return {std::move(w), std::move(trace)};
    }

    std::vector<UnitId> cycle;
    switch (schedule.kind) {
        case ScheduleKind::Stochastic:
        case ScheduleKind::PartialPass:
            cycle = input_to_output_order(w, options);
            break;
        case ScheduleKind::Sequential:
            if (!schedule.order.empty()) {
                cycle = schedule.order;
            } else {
                for (UnitId u : w.hidden_units()) {
                    if (is_homogeneous(w.unit(u).activation) || options.allow_nonhomogeneous) {
                        cycle.push_back(u);
                    }
                }
            }
            break;
        case ScheduleKind::LayerIndependent:
            for (const auto& layer :
                 schedule.layers.empty() ? balanceable_layers(w, options) : schedule.layers) {
                cycle.insert(cycle.end(), layer.begin(), layer.end());
            }
            break;
        case ScheduleKind::LayerTied:
            break;
    }
    if (cycle.empty()) {
        trace.converged = m == 0.0;
        return {std::move(w), std::move(trace)};
    }

    Rng rng(schedule.seed);
    for (std::size_t step = 0; step < stop.max_steps; ++step) {
        const UnitId u = schedule.kind == ScheduleKind::Stochastic
                             ? cycle[static_cast<std::size_t>(rng.below(cycle.size()))]
                             : cycle[step % cycle.size()];
        BalanceReport rep;
        rep.unit = u;
        rep.r_before = r;
        if (deficits.is_tracked(u)) {
            const double c = unit_exponent(w, u, options);
            const auto inc = unit_incidences(w, u, c);
            const Optimum opt = optimise(w, inc, cost, c, fmt::format("unit {}", u));
            apply(w, inc, opt.lambda);
            rep.lambda_star = opt.lambda;
            rep.delta_r = opt.delta;
            deficits.refresh_around(w, u);
        } else {
            unit_exponent(w, u, options);
            rep.skipped = true;
        }
        r -= rep.delta_r;
        rep.r_after = r;
        m = deficits.total();
        trace.steps.push_back(rep);
        trace.r_series.push_back(r);
        trace.deficit_series.push_back(m);
        if (m / scale < stop.deficit_tol) {
            trace.converged = true;
            break;
        }
    }
    return {std::move(w), std::move(trace)};
}

void write_trace_csv(const BalanceTrace& trace, std::ostream& out) {
    out << "step,unit,lambda_star,delta_r,r_after,deficit_after\n";
    for (std::size_t k = 0; k < trace.steps.size(); ++k) {
        const BalanceReport& s = trace.steps[k];
        out << fmt::format("{},{},{:.17g},{:.17g},{:.17g},{:.17g}\n", k + 1, s.unit, s.lambda_star,
                           s.delta_r, s.r_after, trace.deficit_series[k]);
    }
}

}  // namespace balancekit
