#include "balancekit/manifold.hpp"

#include "balancekit/error.hpp"

#include <Eigen/Dense>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <set>

namespace balancekit {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kConsistencyTol = 1e-9;

bool is_source(const Network& net, UnitId u) {
    const Role r = net.unit(u).role;
    return r == Role::Input || r == Role::BiasSource;
}

// Exponent used when propagating multipliers through unit u. Units whose
// multiplier is pinned contribute nothing, so 1 is as good as any value.
double propagation_exponent(const Network& net, UnitId u) {
    const Unit& unit = net.unit(u);
    if (unit.role != Role::Hidden) return 1.0;
    return homogeneity_exponent(unit.activation).value_or(1.0);
}

bool is_free(const Network& net, UnitId u) { return net.is_balanceable(u); }

// Shortest walk from `start` to the nearest unit satisfying `goal`, moving
// along nonzero edges (backwards when `reverse`) and only through hidden
// intermediate units. Ties resolve by id because adjacency is id-sorted.
template <typename Goal>
std::optional<std::vector<UnitId>> bfs(const Network& net, UnitId start, bool reverse, Goal goal) {
    std::vector<std::optional<UnitId>> parent(net.unit_count());
    std::vector<char> seen(net.unit_count(), 0);
    std::deque<UnitId> queue{start};
    seen[start] = 1;
    while (!queue.empty()) {
        const UnitId u = queue.front();
        queue.pop_front();
        if (u != start && goal(u)) {
            std::vector<UnitId> walk{u};
            for (auto p = parent[u]; p; p = parent[*p]) walk.push_back(*p);
            if (!reverse) std::reverse(walk.begin(), walk.end());
            return walk;
        }
        if (u != start && net.unit(u).role != Role::Hidden) continue;
        const auto idx = reverse ? net.in_edge_indices(u) : net.out_edge_indices(u);
        for (EdgeIndex e : idx) {
            if (net.weight(e) == 0.0) continue;
            const UnitId v = reverse ? net.edge(e).from : net.edge(e).to;
            if (seen[v]) continue;
            seen[v] = 1;
            parent[v] = u;
            queue.push_back(v);
        }
    }
    return std::nullopt;
}

// Tarjan's SCC over nonzero edges; returns component id per unit.
std::vector<int> strongly_connected(const Network& net) {
    const std::size_t n = net.unit_count();
    std::vector<int> index(n, -1), low(n, 0), comp(n, -1);
    std::vector<char> on_stack(n, 0);
    std::vector<UnitId> stack;
    int counter = 0, components = 0;

    struct Frame {
        UnitId u;
        std::size_t next;
    };
    for (UnitId root = 0; root < n; ++root) {
        if (index[root] != -1) continue;
        std::vector<Frame> call{{root, 0}};
        index[root] = low[root] = counter++;
        stack.push_back(root);
        on_stack[root] = 1;
        while (!call.empty()) {
            Frame& f = call.back();
            const auto out = net.out_edge_indices(f.u);
            if (f.next < out.size()) {
                const EdgeIndex e = out[f.next++];
                if (net.weight(e) == 0.0) continue;
                const UnitId v = net.edge(e).to;
                if (index[v] == -1) {
                    index[v] = low[v] = counter++;
                    stack.push_back(v);
                    on_stack[v] = 1;
                    call.push_back({v, 0});
                } else if (on_stack[v]) {
                    low[f.u] = std::min(low[f.u], index[v]);
                }
                continue;
            }
            const UnitId u = f.u;
            if (low[u] == index[u]) {
                UnitId w;
                do {
                    w = stack.back();
                    stack.pop_back();
                    on_stack[w] = 0;
                    comp[w] = components;
                } while (w != u);
                ++components;
            }
            call.pop_back();
            if (!call.empty()) low[call.back().u] = std::min(low[call.back().u], low[u]);
        }
    }
    return comp;
}

std::vector<UnitId> canonical_cycle(std::vector<UnitId> cycle) {
    const auto it = std::min_element(cycle.begin(), cycle.end());
    std::rotate(cycle.begin(), it, cycle.end());
    return cycle;
}

EdgeIndex walk_edge(const Network& net, const Constraint& c, std::size_t k) {
    const UnitId from = c.units[k];
    const UnitId to = c.units[(k + 1) % c.units.size()];
    auto e = net.find_edge(from, to);
    if (!e) throw InvalidArgument(fmt::format("constraint uses missing edge {}->{}", from, to));
    return *e;
}

std::size_t walk_length(const Constraint& c) {
    return c.kind == Constraint::Kind::Path ? c.units.size() - 1 : c.units.size();
}

}  // namespace

std::vector<Constraint> enumerate_constraints(const Network& net) {
    std::vector<Constraint> out;
    std::set<std::vector<UnitId>> seen_paths, seen_cycles;
    std::vector<std::string> unreachable;

    for (UnitId h : net.hidden_units()) {
        auto back = bfs(net, h, true, [&](UnitId u) { return is_source(net, u); });
        auto fwd = bfs(net, h, false, [&](UnitId u) { return net.unit(u).role == Role::Output; });
        if (!back || !fwd) {
            unreachable.push_back(std::to_string(h));
            continue;
        }
        std::vector<UnitId> path = *back;
        path.insert(path.end(), fwd->begin() + 1, fwd->end());
        if (seen_paths.insert(path).second) out.push_back({Constraint::Kind::Path, path});
    }
    if (!unreachable.empty()) {
        std::string ids;
        for (const auto& s : unreachable) ids += (ids.empty() ? "" : ", ") + s;
        throw InvalidNetwork(fmt::format(
            "hidden unit(s) {} lie on no source-to-output path of nonzero weights", ids));
    }

    if (net.recurrent()) {
        const auto comp = strongly_connected(net);
        for (const Edge& e : net.edges()) {
            if (e.weight == 0.0 || comp[e.from] != comp[e.to]) continue;
            std::vector<UnitId> cycle;
            if (e.from == e.to) {
                cycle = {e.from};
            } else {
                // Shortest walk back from e.to to e.from inside the component.
                auto back = bfs(net, e.to, false, [&](UnitId u) { return u == e.from; });
                if (!back) {
                    // The walk may have needed a visible unit; search without the hidden-only rule.
                    std::vector<std::optional<UnitId>> parent(net.unit_count());
                    std::vector<char> seen(net.unit_count(), 0);
                    std::deque<UnitId> q{e.to};
                    seen[e.to] = 1;
                    while (!q.empty() && !seen[e.from]) {
                        const UnitId u = q.front();
                        q.pop_front();
                        for (EdgeIndex x : net.out_edge_indices(u)) {
                            const UnitId v = net.edge(x).to;
                            if (net.weight(x) == 0.0 || seen[v] || comp[v] != comp[e.to]) continue;
                            seen[v] = 1;
                            parent[v] = u;
                            q.push_back(v);
                        }
                    }
                    std::vector<UnitId> walk{e.from};
                    for (auto p = parent[e.from]; p; p = parent[*p]) walk.push_back(*p);
                    std::reverse(walk.begin(), walk.end());
                    back = walk;
                }
                cycle = *back;     // e.to ... e.from
                cycle = canonical_cycle(cycle);
            }
            if (seen_cycles.insert(cycle).second) out.push_back({Constraint::Kind::Cycle, cycle});
        }
    }
    return out;
}

std::vector<double> constraint_coefficients(const Network& net, const Constraint& c) {
    const std::size_t m = walk_length(c);
    // Exponents of the units that re-propagate the value after edge k: units
    // k+1 .. last, where the final unit of a path is pinned and excluded.
    const std::size_t last = c.kind == Constraint::Kind::Path ? c.units.size() - 2 : m - 1;
    std::vector<double> coeff(m, 1.0);
    for (std::size_t k = 0; k < m; ++k) {
        double prod = 1.0;
        for (std::size_t j = k + 1; j <= last && j < c.units.size(); ++j) {
            prod *= propagation_exponent(net, c.units[j]);
        }
        coeff[k] = prod;
    }
    return coeff;
}

double constraint_residual(const Network& net, const Constraint& c,
                           const SelfConsistentConfig& config) {
    const auto coeff = constraint_coefficients(net, c);
    double s = 0.0;
    for (std::size_t k = 0; k < coeff.size(); ++k) {
        s += coeff[k] * config.log_multiplier.at(walk_edge(net, c, k));
    }
    return s;
}

ConsistencyResult is_self_consistent(const SelfConsistentConfig& config, const Network& net) {
    ConsistencyResult result;
    if (config.log_multiplier.size() != net.edge_count()) {
        result.conflict = fmt::format("configuration has {} entries for {} edges",
                                      config.log_multiplier.size(), net.edge_count());
        return result;
    }
    const std::size_t n = net.unit_count();
    std::vector<double> logl(n, kNaN);
    for (UnitId u = 0; u < n; ++u) {
        if (!is_free(net, u)) logl[u] = 0.0;
    }
    const auto close = [](double a, double b) {
        return std::fabs(a - b) <= kConsistencyTol * std::max(1.0, std::fabs(b));
    };
    const auto fail = [&](UnitId u, std::string why) {
        result.conflict_unit = u;
        result.conflict = std::move(why);
        return result;
    };

    std::vector<Constraint> constraints;
    try {
        constraints = enumerate_constraints(net);
    } catch (const InvalidNetwork& e) {
        result.conflict = e.what();
        return result;
    }

    // First pass assigns every unit from the first constraint reaching it;
    // the edge sweep below then checks each relation, so a conflict is
    // reported where two routes meet.
    for (const Constraint& c : constraints) {
        double value = logl[c.units.front()];
        if (std::isnan(value)) continue;
        const std::size_t m = walk_length(c);
        for (std::size_t k = 0; k < m; ++k) {
            const EdgeIndex e = walk_edge(net, c, k);
            const UnitId from = c.units[k];
            const UnitId to = c.units[(k + 1) % c.units.size()];
            const double L = config.log_multiplier[e];
            if (std::isnan(L)) {
                return fail(to, fmt::format("no log-multiplier for edge {}->{}", from, to));
            }
            value = L + propagation_exponent(net, from) * value;
            if (std::isnan(logl[to])) logl[to] = value;
            else value = logl[to];
        }
    }

    for (EdgeIndex e = 0; e < net.edge_count(); ++e) {
        const Edge& edge = net.edge(e);
        if (edge.weight == 0.0) continue;
        const double L = config.log_multiplier[e];
        if (std::isnan(logl[edge.from]) || std::isnan(logl[edge.to])) continue;
        const double expected = logl[edge.to] - propagation_exponent(net, edge.from) * logl[edge.from];
        if (std::isnan(L) || !close(L, expected)) {
            return fail(edge.to, fmt::format("edge {}->{} has log-multiplier {:.12g}, expected {:.12g}",
                                             edge.from, edge.to, L, expected));
        }
    }

    result.consistent = true;
    result.multipliers.lambda.resize(n);
    for (UnitId u = 0; u < n; ++u) {
        result.multipliers.lambda[u] = std::isnan(logl[u]) ? 1.0 : std::exp(logl[u]);
    }
    return result;
}

SelfConsistentConfig project_balancing_run(const Network& final_net, const Network& initial_net) {
    if (final_net.unit_count() != initial_net.unit_count() ||
        final_net.edge_count() != initial_net.edge_count()) {
        throw InvalidArgument("networks do not share a topology");
    }
    SelfConsistentConfig config;
    config.log_multiplier.assign(initial_net.edge_count(), kNaN);
    for (EdgeIndex e = 0; e < initial_net.edge_count(); ++e) {
        const Edge& a = initial_net.edge(e);
        const Edge& b = final_net.edge(e);
        if (a.from != b.from || a.to != b.to) {
            throw InvalidArgument(fmt::format("edge {} differs between networks", e));
        }
        if (a.weight == 0.0) {
            if (b.weight != 0.0) {
                throw InvalidArgument(fmt::format("edge {}->{} went from zero to nonzero", a.from, a.to));
            }
            continue;
        }
        if (b.weight == 0.0 || std::signbit(a.weight) != std::signbit(b.weight)) {
            throw InvalidArgument(fmt::format(
                "edge {}->{} changed sign or vanished ({} -> {})", a.from, a.to, a.weight, b.weight));
        }
        config.log_multiplier[e] = std::log(b.weight / a.weight);
    }
    return config;
}

Network apply_multipliers(const Network& net, const MultiplierAssignment& m) {
    if (m.lambda.size() != net.unit_count()) {
        throw InvalidArgument("multiplier assignment does not match the network");
    }
    Network out = net;
    for (EdgeIndex e = 0; e < net.edge_count(); ++e) {
        const Edge& edge = net.edge(e);
        const double c = propagation_exponent(net, edge.from);
        const double from = m.lambda[edge.from];
        const double scale = c == 1.0 ? m.lambda[edge.to] / from : m.lambda[edge.to] / std::pow(from, c);
        out.set_weight(e, edge.weight * scale);
    }
    return out;
}

ConvexSolution solve_convex(const Network& net, const CostSpec& cost, const ConvexOptions& options) {
    if (!cost.single_term()) {
        throw InvalidArgument("the convex oracle needs a single-term L_p cost");
    }
    const double p = cost.terms().front().p;
    const double beta = cost.terms().front().beta;

    ConvexSolution sol;
    sol.constraints = enumerate_constraints(net);  // also checks identifiability

    const std::size_t n = net.unit_count();
    std::vector<int> var(n, -1);
    int nvar = 0;
    for (UnitId u = 0; u < n; ++u) {
        if (is_free(net, u)) var[u] = nvar++;
    }

    // One objective term per nonzero edge: a_e exp(p * (d_e . l)), with d_e
    // having at most two entries.
    struct Term {
        double a;
        int i = -1;
        double di = 0.0;
        int j = -1;
        double dj = 0.0;
    };
    std::vector<Term> terms;
    for (const Edge& e : net.edges()) {
        if (e.weight == 0.0) continue;
        Term t{beta * std::pow(std::fabs(e.weight), p)};
        const double c = propagation_exponent(net, e.from);
        if (e.from == e.to) {
            if (var[e.to] >= 0) {
                t.i = var[e.to];
                t.di = 1.0 - c;
            }
        } else {
            if (var[e.to] >= 0) {
                t.i = var[e.to];
                t.di = 1.0;
            }
            if (var[e.from] >= 0) {
                t.j = var[e.from];
                t.dj = -c;
            }
        }
        terms.push_back(t);
    }

    Eigen::VectorXd l = Eigen::VectorXd::Zero(nvar);
    const auto objective = [&](const Eigen::VectorXd& x) {
        double s = 0.0;
        for (const Term& t : terms) {
            double z = 0.0;
            if (t.i >= 0) z += t.di * x[t.i];
            if (t.j >= 0) z += t.dj * x[t.j];
            s += t.a * std::exp(p * z);
        }
        return s;
    };

    Eigen::VectorXd grad(nvar);
    Eigen::MatrixXd hess(nvar, nvar);
    const auto derivatives = [&](const Eigen::VectorXd& x) {
        grad.setZero();
        hess.setZero();
        for (const Term& t : terms) {
            double z = 0.0;
            if (t.i >= 0) z += t.di * x[t.i];
            if (t.j >= 0) z += t.dj * x[t.j];
            const double v = t.a * std::exp(p * z);
            const double g = p * v;
            const double h = p * p * v;
            if (t.i >= 0) {
                grad[t.i] += g * t.di;
                hess(t.i, t.i) += h * t.di * t.di;
            }
            if (t.j >= 0) {
                grad[t.j] += g * t.dj;
                hess(t.j, t.j) += h * t.dj * t.dj;
            }
            if (t.i >= 0 && t.j >= 0) {
                hess(t.i, t.j) += h * t.di * t.dj;
                hess(t.j, t.i) += h * t.di * t.dj;
            }
        }
    };

    const auto gradient_norm = [&](const Eigen::VectorXd& x) {
        Eigen::VectorXd g = Eigen::VectorXd::Zero(nvar);
        for (const Term& t : terms) {
            double z = 0.0;
            if (t.i >= 0) z += t.di * x[t.i];
            if (t.j >= 0) z += t.dj * x[t.j];
            const double v = p * t.a * std::exp(p * z);
            if (t.i >= 0) g[t.i] += v * t.di;
            if (t.j >= 0) g[t.j] += v * t.dj;
        }
        return g.lpNorm<Eigen::Infinity>();
    };

    double f = objective(l);
    int it = 0;
    derivatives(l);
    while (nvar > 0 && grad.lpNorm<Eigen::Infinity>() > options.grad_tol) {
        if (it >= options.max_iterations) {
            throw ConvergenceError(fmt::format(
                "Newton solve stopped after {} iterations with gradient norm {:.3g}", it,
                grad.lpNorm<Eigen::Infinity>()));
        }
        ++it;
        const Eigen::VectorXd step = hess.ldlt().solve(-grad);
        const double slope = grad.dot(step);
        // Every term is positive, so f bounds the rounding error of a sum.
        const double noise = 64.0 * std::numeric_limits<double>::epsilon() * f;
        const double gnorm = grad.lpNorm<Eigen::Infinity>();
        const auto acceptable = [&](const Eigen::VectorXd& x, double fx, double t) {
            if (fx <= f + 1e-4 * t * slope) return true;
            // Close to the optimum the decrease drowns in rounding; fall back
            // to requiring a smaller gradient.
            return fx <= f + noise && gradient_norm(x) < gnorm;
        };
        double t = 1.0;
        Eigen::VectorXd next = l + step;
        double fnext = objective(next);
        while (!acceptable(next, fnext, t) && t > 1e-12) {
            t *= 0.5;
            next = l + t * step;
            fnext = objective(next);
        }
        if (t <= 1e-12 || next == l) {
            derivatives(l);
            break;
        }
        l = next;
        f = fnext;
        derivatives(l);
    }
    sol.grad_norm = nvar > 0 ? grad.lpNorm<Eigen::Infinity>() : 0.0;
    if (sol.grad_norm > options.grad_tol) {
        throw ConvergenceError(
            fmt::format("Newton solve stalled with gradient norm {:.3g}", sol.grad_norm));
    }
    sol.iterations = it;
    sol.r_star = f;

    sol.multipliers.lambda.assign(n, 1.0);
    for (UnitId u = 0; u < n; ++u) {
        if (var[u] >= 0) sol.multipliers.lambda[u] = std::exp(l[var[u]]);
    }
    sol.config.log_multiplier.assign(net.edge_count(), kNaN);
    for (EdgeIndex e = 0; e < net.edge_count(); ++e) {
        const Edge& edge = net.edge(e);
        if (edge.weight == 0.0) continue;
        const double lt = var[edge.to] >= 0 ? l[var[edge.to]] : 0.0;
        const double lf = var[edge.from] >= 0 ? l[var[edge.from]] : 0.0;
        sol.config.log_multiplier[e] = lt - propagation_exponent(net, edge.from) * lf;
    }
    sol.balanced = apply_multipliers(net, sol.multipliers);
    for (const Constraint& c : sol.constraints) {
        sol.constraint_residuals.push_back(constraint_residual(net, c, sol.config));
    }
    return sol;
}

nlohmann::json oracle_report(const ConvexSolution& solution) {
    nlohmann::json lambdas = nlohmann::json::object();
    for (std::size_t u = 0; u < solution.multipliers.lambda.size(); ++u) {
        lambdas[std::to_string(u)] = solution.multipliers.lambda[u];
    }
    return {{"r_star", solution.r_star},
            {"lambda_per_unit", std::move(lambdas)},
            {"grad_norm", solution.grad_norm},
            {"iterations", solution.iterations},
            {"constraint_residuals", solution.constraint_residuals}};
}

std::vector<double> tied_layer_closed_form(std::span<const double> layer_norms, double p) {
    if (layer_norms.empty()) throw InvalidArgument("need at least one layer norm");
    if (!(p > 0.0)) throw InvalidArgument("exponent must be > 0");
    double log_mean = 0.0;
    for (double v : layer_norms) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw InvalidArgument(fmt::format("layer norms must be finite and > 0, got {}", v));
        }
        log_mean += std::log(v);
    }
    log_mean /= static_cast<double>(layer_norms.size());
    std::vector<double> m;
    m.reserve(layer_norms.size());
    for (double v : layer_norms) m.push_back(std::exp((log_mean - std::log(v)) / p));
    return m;
}

}  // namespace balancekit
