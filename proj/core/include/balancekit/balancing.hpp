#pragma once

#include "balancekit/network.hpp"
#include "balancekit/regularizer.hpp"

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

namespace balancekit {

struct BalanceOptions {
    /// Treat tanh/logistic hidden units as if they had exponent 1. This does
    /// NOT preserve the network function.
    bool allow_nonhomogeneous = false;
};

/// Outcome of one balancing operation. r_before/r_after are whole-network
/// costs; delta_r = r_before - r_after >= 0.
struct BalanceReport {
    UnitId unit = 0;            // first unit of the group for tied balancing
    std::size_t group_size = 1;
    double lambda_star = 1.0;
    double r_before = 0.0;
    double r_after = 0.0;
    double delta_r = 0.0;
    bool skipped = false;       // unit had an all-zero side and was left alone
};

/// Multiply unit i's incoming weights by lambda and its outgoing weights by
/// lambda^-c (c its homogeneity exponent). A self-loop gets lambda^(1-c).
/// Requires i hidden and homogeneous, lambda > 0.
Network scale_neuron(const Network& net, UnitId i, double lambda,
                     const BalanceOptions& options = {});
void scale_neuron_in_place(Network& net, UnitId i, double lambda,
                           const BalanceOptions& options = {});

/// The scaling factor minimising the cost of unit i's incident weights.
///
/// Single-term L_p without BiPU self-loops uses the closed form
/// (c * sum_out|w|^p / sum_in|w|^p)^(1/(p(c+1))); otherwise the root of the
/// consistency equation is bracketed in [1e-8, 1e8] and bisected in log space
/// to relative width 1e-14. Throws DegenerateUnit when either side carries no
/// cost.
double optimal_lambda(const Network& net, UnitId i, const CostSpec& cost,
                      const BalanceOptions& options = {});

std::pair<Network, BalanceReport> balance_neuron(const Network& net, UnitId i,
                                                 const CostSpec& cost,
                                                 const BalanceOptions& options = {});
BalanceReport balance_neuron_in_place(Network& net, UnitId i, const CostSpec& cost,
                                      const BalanceOptions& options = {});

/// Signed balance residual of unit i: sum_in g - c * sum_out g for a
/// single-term cost. For multi-term costs it is sum_in w g'(w) - c * sum_out
/// w g'(w), which vanishes exactly when the unit is balanced.
double balance_residual(const Network& net, UnitId i, const CostSpec& cost,
                        const BalanceOptions& options = {});

/// Squared balance residual; zero iff unit i is balanced.
double neuron_deficit(const Network& net, UnitId i, const CostSpec& cost,
                      const BalanceOptions& options = {});

/// Sum of neuron_deficit over the balanceable hidden units that have cost on
/// both sides (degenerate units cannot be balanced and are left out).
double network_deficit(const Network& net, const CostSpec& cost,
                       const BalanceOptions& options = {});

/// Scale every unit in `units` by one shared factor chosen to minimise the
/// total cost. Units must share their exponent and have no edge between
/// them. Gives aggregate balance, not per-unit balance.
std::pair<Network, BalanceReport> balance_subset_tied(const Network& net,
                                                      std::span<const UnitId> units,
                                                      const CostSpec& cost,
                                                      const BalanceOptions& options = {});
BalanceReport balance_subset_tied_in_place(Network& net, std::span<const UnitId> units,
                                           const CostSpec& cost,
                                           const BalanceOptions& options = {});

/// Squared aggregate residual of a tied group.
double subset_deficit(const Network& net, std::span<const UnitId> units, const CostSpec& cost,
                      const BalanceOptions& options = {});

struct BalanceTrace {
    std::vector<BalanceReport> steps;
    std::vector<double> r_series;        // cost after each step
    std::vector<double> deficit_series;  // convergence measure after each step
    double r_initial = 0.0;
    double deficit_initial = 0.0;
    bool converged = false;

    std::size_t productive_steps() const;
};

/// Balance each unit of `order` once, in order.
std::pair<Network, BalanceTrace> partial_balance_pass(const Network& net, const CostSpec& cost,
                                                      std::span<const UnitId> order,
                                                      const BalanceOptions& options = {});

/// Hidden balanceable units in topological (input-to-output) order.
std::vector<UnitId> input_to_output_order(const Network& net,
                                          const BalanceOptions& options = {});

enum class ScheduleKind { Stochastic, Sequential, LayerIndependent, LayerTied, PartialPass };

struct StopCriteria {
    /// Stop once the convergence measure divided by r_initial^2 drops below
    /// this value.
    double deficit_tol = 1e-8;
    std::size_t max_steps = 1'000'000;
};

/// How run_balancing picks what to balance next.
///
/// Stochastic: one balanceable unit per step, drawn uniformly with
///   replacement by Rng(seed).
/// Sequential: cycles through `order` (default: every balanceable unit by id).
/// LayerIndependent: cycles through `layers`, balancing each unit of a layer
///   on its own (default: hidden_layers()).
/// LayerTied: cycles through `layers`, one shared factor per layer; the
///   convergence measure is the sum of squared per-layer residuals.
/// PartialPass: repeated input-to-output passes.
struct Schedule {
    ScheduleKind kind = ScheduleKind::Stochastic;
    std::uint64_t seed = 0;
    std::vector<UnitId> order;
    std::vector<std::vector<UnitId>> layers;
    StopCriteria stop;

    static Schedule stochastic(std::uint64_t seed, StopCriteria stop = {});
    static Schedule sequential(std::vector<UnitId> order = {}, StopCriteria stop = {});
    static Schedule layer_independent(std::vector<std::vector<UnitId>> layers = {},
                                      StopCriteria stop = {});
    static Schedule layer_tied(std::vector<std::vector<UnitId>> layers = {},
                               StopCriteria stop = {});
    static Schedule partial_pass(StopCriteria stop = {});
};

/// Balance repeatedly according to `schedule` until the normalised
/// convergence measure falls below stop.deficit_tol or stop.max_steps
/// operations have run. Never throws for non-convergence; check
/// trace.converged.
std::pair<Network, BalanceTrace> run_balancing(const Network& net, const Schedule& schedule,
                                               const CostSpec& cost,
                                               const BalanceOptions& options = {});

/// CSV with header step,unit,lambda_star,delta_r,r_after,deficit_after.
void write_trace_csv(const BalanceTrace& trace, std::ostream& out);

}  // namespace balancekit
