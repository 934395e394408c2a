#include "balancekit/training.hpp"

#include "balancekit/error.hpp"
#include "balancekit/random.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

namespace balancekit {

namespace {

bool is_source(const Unit& u) { return u.role == Role::Input || u.role == Role::BiasSource; }

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::fabs(z))); }

void check_cost_for_gradients(const std::optional<CostSpec>& cost) {
    if (cost && cost->min_p() < 1.0) {
        throw InvalidArgument("gradient training needs cost exponents p >= 1");
    }
}

double regulariser_derivative(const CostSpec& cost, double w) {
    if (w == 0.0) return 0.0;  // subgradient 0 for the L1 kink
    return cost_derivative(cost, w);
}

// Per-row view of what the loss compares against.
struct Target {
    int label = -1;
    const std::vector<double>* vec = nullptr;
};

Target target_of(const Dataset& data, std::size_t row) {
    Target t;
    if (!data.labels.empty()) t.label = data.labels[row];
    if (!data.targets.empty()) t.vec = &data.targets[row];
    return t;
}

double target_component(const Target& t, std::size_t k, std::size_t n_out) {
    if (t.vec) return (*t.vec)[k];
    if (n_out == 1) return static_cast<double>(t.label);
    return static_cast<int>(k) == t.label ? 1.0 : 0.0;
}

// Loss of one sample and its derivative. `dy` receives dE/d(output value);
// `dz` receives a contribution added directly to dE/d(output pre-activation).
double sample_loss(const Network& net, LossKind loss, std::span<const double> z,
                   std::span<const double> y, const Target& t, std::vector<double>& dy,
                   std::vector<double>& dz) {
    const std::size_t n_out = y.size();
    std::fill(dy.begin(), dy.end(), 0.0);
    std::fill(dz.begin(), dz.end(), 0.0);
    switch (loss) {
        case LossKind::SquaredError: {
            double e = 0.0;
            for (std::size_t k = 0; k < n_out; ++k) {
                const double d = y[k] - target_component(t, k, n_out);
                e += 0.5 * d * d;
                dy[k] = d;
            }
            return e;
        }
        case LossKind::CrossEntropy: {
            if (t.label < 0 || static_cast<std::size_t>(t.label) >= n_out) {
                throw InvalidArgument(fmt::format("label {} out of range for {} outputs", t.label, n_out));
            }
            const double m = *std::max_element(y.begin(), y.end());
            double s = 0.0;
            for (double v : y) s += std::exp(v - m);
            const double log_norm = m + std::log(s);
            for (std::size_t k = 0; k < n_out; ++k) {
                dy[k] = std::exp(y[k] - log_norm) - (static_cast<int>(k) == t.label ? 1.0 : 0.0);
            }
            return log_norm - y[static_cast<std::size_t>(t.label)];
        }
        case LossKind::BinaryCrossEntropy: {
            if (n_out != 1 || net.unit(net.output_units()[0]).activation.kind() != ActivationKind::Logistic) {
                throw InvalidArgument("binary cross-entropy needs a single logistic output unit");
            }
            const double target = target_component(t, 0, 1);
            dz[0] = y[0] - target;
            return softplus(z[0]) - target * z[0];
        }
    }
    return 0.0;
}

// Feedforward evaluation order flattened into contiguous arrays.
struct Plan {
    std::vector<UnitId> order;  // non-source units, topological
    std::vector<const ActivationSpec*> act;
    std::vector<std::size_t> offset;  // into src/edge/w, size order.size() + 1
    std::vector<UnitId> src;
    std::vector<EdgeIndex> edge;
    std::vector<double> w;

    explicit Plan(const Network& net) {
        offset.push_back(0);
        for (UnitId u : *net.topological_order()) {
            const Unit& unit = net.unit(u);
            if (is_source(unit)) continue;
            order.push_back(u);
            act.push_back(&unit.activation);
            for (EdgeIndex e : net.in_edge_indices(u)) {
                src.push_back(net.edge(e).from);
                edge.push_back(e);
                w.push_back(net.weight(e));
            }
            offset.push_back(src.size());
        }
    }
};

// Scratch buffers reused across samples.
struct Workspace {
    std::optional<Plan> plan;
    std::vector<double> values, pre, dvalues, direct;
    std::vector<std::vector<double>> step_values, step_pre, step_dvalues;
    std::vector<double> out_z, out_y, dy, dz;

    explicit Workspace(const Network& net) {
        if (!net.recurrent()) plan.emplace(net);
    }
};

double pre_activation(const Network& net, UnitId u, const std::vector<double>& values) {
    double s = 0.0;
    for (EdgeIndex e : net.in_edge_indices(u)) s += net.weight(e) * values[net.edge(e).from];
    return s;
}

void load_sources(const Network& net, std::span<const double> x, std::vector<double>& values) {
    std::fill(values.begin(), values.end(), 0.0);
    if (x.size() != net.input_units().size()) {
        throw InvalidArgument(fmt::format("network expects {} inputs, got {}",
                                          net.input_units().size(), x.size()));
    }
    for (std::size_t k = 0; k < x.size(); ++k) values[net.input_units()[k]] = x[k];
    if (net.bias_unit()) values[*net.bias_unit()] = 1.0;
}

// Forward pass leaving output pre-activations/values in ws.out_z/out_y.
void forward_record(const Network& net, std::span<const double> x, Workspace& ws) {
    const std::size_t n = net.unit_count();
    const auto& outs = net.output_units();
    ws.out_z.resize(outs.size());
    ws.out_y.resize(outs.size());
    if (ws.plan) {
        const Plan& plan = *ws.plan;
        ws.values.resize(n);
        ws.pre.assign(n, 0.0);
        load_sources(net, x, ws.values);
        for (std::size_t k = 0; k < plan.order.size(); ++k) {
            double z = 0.0;
            for (std::size_t j = plan.offset[k]; j < plan.offset[k + 1]; ++j) z += plan.w[j] * ws.values[plan.src[j]];
            const UnitId u = plan.order[k];
            ws.pre[u] = z;
            ws.values[u] = activate(*plan.act[k], z);
        }
        for (std::size_t k = 0; k < outs.size(); ++k) {
            ws.out_z[k] = ws.pre[outs[k]];
            ws.out_y[k] = ws.values[outs[k]];
        }
        return;
    }
    const auto steps = static_cast<std::size_t>(net.unroll_steps());
    ws.step_values.assign(steps + 1, std::vector<double>(n, 0.0));
    ws.step_pre.assign(steps + 1, std::vector<double>(n, 0.0));
    load_sources(net, x, ws.step_values[0]);
    for (std::size_t s = 1; s <= steps; ++s) {
        ws.step_values[s] = ws.step_values[s - 1];
        for (const Unit& unit : net.units()) {
            if (is_source(unit)) continue;
            ws.step_pre[s][unit.id] = pre_activation(net, unit.id, ws.step_values[s - 1]);
            ws.step_values[s][unit.id] = activate(unit.activation, ws.step_pre[s][unit.id]);
        }
    }
    for (std::size_t k = 0; k < outs.size(); ++k) {
        ws.out_z[k] = pre_activation(net, outs[k], ws.step_values[steps]);
        ws.out_y[k] = activate(net.unit(outs[k]).activation, ws.out_z[k]);
    }
}

// Adds the gradient of one sample's loss to `grad`; returns the loss.
double accumulate(const Network& net, std::span<const double> x, const Target& t, LossKind loss,
                  Workspace& ws, std::vector<double>& grad) {
    forward_record(net, x, ws);
    const auto& outs = net.output_units();
    ws.dy.resize(outs.size());
    ws.dz.resize(outs.size());
    const double e = sample_loss(net, loss, ws.out_z, ws.out_y, t, ws.dy, ws.dz);

    const std::size_t n = net.unit_count();
    if (ws.plan) {
        const Plan& plan = *ws.plan;
        ws.dvalues.assign(n, 0.0);
        ws.direct.assign(n, 0.0);
        for (std::size_t k = 0; k < outs.size(); ++k) {
            ws.dvalues[outs[k]] += ws.dy[k];
            ws.direct[outs[k]] += ws.dz[k];
        }
        for (std::size_t k = plan.order.size(); k-- > 0;) {
            const UnitId u = plan.order[k];
            double dpre = ws.direct[u];
            if (ws.dvalues[u] != 0.0) dpre += ws.dvalues[u] * activate_derivative(*plan.act[k], ws.pre[u]);
            if (dpre == 0.0) continue;
            for (std::size_t j = plan.offset[k]; j < plan.offset[k + 1]; ++j) {
                grad[plan.edge[j]] += dpre * ws.values[plan.src[j]];
                ws.dvalues[plan.src[j]] += plan.w[j] * dpre;
            }
        }
        return e;
    }

    const auto steps = static_cast<std::size_t>(net.unroll_steps());
    ws.step_dvalues.assign(steps + 1, std::vector<double>(n, 0.0));
    for (std::size_t k = 0; k < outs.size(); ++k) {
        const UnitId u = outs[k];
        double dpre = ws.dz[k];
        if (ws.dy[k] != 0.0) dpre += ws.dy[k] * activate_derivative(net.unit(u).activation, ws.out_z[k]);
        for (EdgeIndex ei : net.in_edge_indices(u)) {
            const UnitId from = net.edge(ei).from;
            grad[ei] += dpre * ws.step_values[steps][from];
            ws.step_dvalues[steps][from] += net.weight(ei) * dpre;
        }
    }
    for (std::size_t s = steps; s >= 1; --s) {
        for (const Unit& unit : net.units()) {
            if (is_source(unit)) continue;
            const double dv = ws.step_dvalues[s][unit.id];
            if (dv == 0.0) continue;
            const double dpre = dv * activate_derivative(unit.activation, ws.step_pre[s][unit.id]);
            for (EdgeIndex ei : net.in_edge_indices(unit.id)) {
                const UnitId from = net.edge(ei).from;
                grad[ei] += dpre * ws.step_values[s - 1][from];
                ws.step_dvalues[s - 1][from] += net.weight(ei) * dpre;
            }
        }
    }
    return e;
}

void require_evaluable(const Network& net) {
    if (!net.recurrent() && !net.topological_order()) {
        throw InvalidNetwork("non-recurrent network contains a directed cycle");
    }
}

}  // namespace

GradientResult gradients(const Network& net, const Dataset& data, std::span<const std::size_t> rows,
                         LossKind loss, const std::optional<CostSpec>& cost) {
    check_cost_for_gradients(cost);
    require_evaluable(net);
    GradientResult out;
    out.grad.assign(net.edge_count(), 0.0);
    Workspace ws(net);
    std::size_t count = 0;
    double total = 0.0;
    const auto visit = [&](std::size_t r) {
        total += accumulate(net, data.inputs[r], target_of(data, r), loss, ws, out.grad);
        ++count;
    };
    if (rows.empty()) {
        for (std::size_t r = 0; r < data.size(); ++r) visit(r);
    } else {
        for (std::size_t r : rows) visit(r);
    }
    if (count > 0) {
        const double inv = 1.0 / static_cast<double>(count);
        for (double& g : out.grad) g *= inv;
        out.objective.loss = total * inv;
    }
    if (cost) {
        for (EdgeIndex e = 0; e < net.edge_count(); ++e) {
            out.grad[e] += regulariser_derivative(*cost, net.weight(e));
        }
        out.objective.regulariser = network_cost(net, *cost);
    }
    return out;
}

Objective evaluate_objective(const Network& net, const Dataset& data, LossKind loss,
                             const std::optional<CostSpec>& cost) {
    require_evaluable(net);
    Objective out;
    Workspace ws(net);
    std::vector<double> dy, dz;
    double total = 0.0;
    for (std::size_t r = 0; r < data.size(); ++r) {
        forward_record(net, data.inputs[r], ws);
        dy.resize(ws.out_y.size());
        dz.resize(ws.out_y.size());
        total += sample_loss(net, loss, ws.out_z, ws.out_y, target_of(data, r), dy, dz);
    }
    if (data.size() > 0) out.loss = total / static_cast<double>(data.size());
    if (cost) out.regulariser = network_cost(net, *cost);
    return out;
}

double accuracy(const Network& net, const Dataset& data, LossKind loss) {
    if (!data.labelled() || data.size() == 0) return std::numeric_limits<double>::quiet_NaN();
    require_evaluable(net);
    Workspace ws(net);
    std::size_t correct = 0;
    for (std::size_t r = 0; r < data.size(); ++r) {
        forward_record(net, data.inputs[r], ws);
        int predicted;
        if (ws.out_y.size() == 1) {
            predicted = ws.out_y[0] >= 0.5 ? 1 : 0;
        } else {
            predicted = static_cast<int>(std::max_element(ws.out_y.begin(), ws.out_y.end()) -
                                         ws.out_y.begin());
        }
        (void)loss;
        if (predicted == data.labels[r]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

double frobenius_norm(const Network& net) {
    double s = 0.0;
    for (const Edge& e : net.edges()) s += e.weight * e.weight;
    return std::sqrt(s);
}

std::vector<double> norm_ratios(const Network& net) {
    std::vector<double> out;
    for (UnitId u : net.hidden_units()) {
        if (!net.is_balanceable(u)) continue;
        double in = 0.0, outw = 0.0;
        for (EdgeIndex e : net.in_edge_indices(u)) in += net.weight(e) * net.weight(e);
        for (EdgeIndex e : net.out_edge_indices(u)) outw += net.weight(e) * net.weight(e);
        if (outw > 0.0) out.push_back(std::sqrt(in / outw));
    }
    return out;
}

namespace {

Network balance_fully(const Network& net, const TrainConfig& config) {
    StopCriteria stop;
    stop.deficit_tol = config.balance_tol;
    stop.max_steps = 10'000'000;
    auto [balanced, trace] = run_balancing(net, Schedule::partial_pass(stop), config.balance_cost);
    return balanced;
}

MetricsRow measure(const Network& net, const Dataset& train, const Dataset& test,
                   const TrainConfig& config, int epoch) {
    MetricsRow row;
    row.epoch = epoch;
    row.train_loss = evaluate_objective(net, train, config.loss, std::nullopt).loss;
    row.test_accuracy = accuracy(net, test, config.loss);
    row.network_deficit = network_deficit(net, config.balance_cost);
    row.frobenius_norm = frobenius_norm(net);
    return row;
}

}  // namespace

TrainResult sgd_train(const Network& net, const Dataset& train, const Dataset& test,
                      const TrainConfig& config) {
    if (!(config.learning_rate >= 0.0)) throw InvalidArgument("learning rate must be >= 0");
    if (config.batch_size == 0) throw InvalidArgument("batch size must be >= 1");
    if (config.epochs < 0) throw InvalidArgument("epochs must be >= 0");
    check_cost_for_gradients(config.cost);
    for (const Unit& u : net.units()) {
        if (u.activation.kind() == ActivationKind::BiPU && u.activation.c() < 1.0) {
            throw InvalidArgument(
                fmt::format("unit {} is a BiPU with c < 1, which cannot be gradient-trained", u.id));
        }
    }
    require_valid(net);
    train.check();
    test.check();

    TrainResult result;
    result.net = net;
    if (config.balance_mode == BalanceMode::FullAtStart) result.net = balance_fully(result.net, config);
    result.metrics.push_back(measure(result.net, train, test, config, 0));

    Rng rng(config.seed);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        for (std::size_t k = order.size(); k > 1; --k) std::swap(order[k - 1], order[rng.below(k)]);
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            const std::span<const std::size_t> batch(order.data() + start, end - start);
            const GradientResult g = gradients(result.net, train, batch, config.loss, config.cost);
            if (!std::isfinite(g.objective.loss)) {
                result.diverged = true;
                return result;
            }
            if (config.learning_rate == 0.0) continue;
            for (EdgeIndex e = 0; e < result.net.edge_count(); ++e) {
                result.net.set_weight(e, result.net.weight(e) - config.learning_rate * g.grad[e]);
            }
        }
        if (config.balance_mode == BalanceMode::PartialEachEpoch) {
            const auto order_io = input_to_output_order(result.net);
            result.net = partial_balance_pass(result.net, config.balance_cost, order_io).first;
        } else if (config.balance_mode == BalanceMode::FullEachEpoch) {
            result.net = balance_fully(result.net, config);
        }
        const MetricsRow row = measure(result.net, train, test, config, epoch);
        if (!std::isfinite(row.train_loss) || !std::isfinite(row.frobenius_norm)) {
            result.diverged = true;
            result.metrics.push_back(row);
            return result;
        }
        result.metrics.push_back(row);
    }
    return result;
}

DescentResult full_batch_descent(const Network& net, const Dataset& data, LossKind loss,
                                 const std::optional<CostSpec>& cost, double learning_rate,
                                 double grad_tol, std::size_t max_iterations) {
    DescentResult out{net};
    const std::span<const std::size_t> all;
    for (;;) {
        const GradientResult g = gradients(out.net, data, all, loss, cost);
        double norm = 0.0;
        for (double v : g.grad) norm = std::max(norm, std::fabs(v));
        out.grad_norm = norm;
        if (!std::isfinite(norm)) return out;
        if (norm < grad_tol) {
            out.converged = true;
            return out;
        }
        if (out.iterations >= max_iterations) return out;
        for (EdgeIndex e = 0; e < out.net.edge_count(); ++e) {
            out.net.set_weight(e, out.net.weight(e) - learning_rate * g.grad[e]);
        }
        ++out.iterations;
    }
}

void write_metrics_csv(std::span<const MetricsRow> rows, std::ostream& out) {
    out << "epoch,train_loss,test_accuracy,deficit,frobenius_norm\n";
    for (const MetricsRow& r : rows) {
        out << fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g}\n", r.epoch, r.train_loss,
                           r.test_accuracy, r.network_deficit, r.frobenius_norm);
    }
}

}  // namespace balancekit
