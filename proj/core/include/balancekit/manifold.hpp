#pragma once

#include "balancekit/network.hpp"
#include "balancekit/regularizer.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace balancekit {

/// A linear constraint on per-edge log-multipliers: a directed path from a
/// source (input or bias) to an output, or a directed cycle. Units are listed
/// in traversal order; a cycle's last unit connects back to its first.
struct Constraint {
    enum class Kind { Path, Cycle };
    Kind kind = Kind::Path;
    std::vector<UnitId> units;

    friend bool operator==(const Constraint&, const Constraint&) = default;
};

/// Representative constraints: one source-to-output path through every
/// hidden unit, plus (recurrent nets) one directed cycle through every
/// nonzero edge inside a strongly connected component. Edges of zero weight
/// are never used. Throws InvalidNetwork naming any hidden unit that lies on
/// no path of nonzero edges.
std::vector<Constraint> enumerate_constraints(const Network& net);

/// Per-unit multiplier Lambda_i; 1 for visible and non-homogeneous units.
struct MultiplierAssignment {
    std::vector<double> lambda;
};

/// Per-edge log-multiplier L_e = log(Lambda_to / Lambda_from^c_from), indexed
/// like Network::edges(). Zero-weight edges hold NaN (undefined).
struct SelfConsistentConfig {
    std::vector<double> log_multiplier;
};

/// Coefficients of the linear constraint on L along `c`: a path closes when
/// sum_k coeff_k L_k = 0. Entry k corresponds to the k-th edge of the walk
/// and is the product of the exponents of the units the walk visits after
/// that edge (excluding the final unit of a path).
std::vector<double> constraint_coefficients(const Network& net, const Constraint& c);

/// Residual of the constraint for a given configuration.
double constraint_residual(const Network& net, const Constraint& c,
                           const SelfConsistentConfig& config);

struct ConsistencyResult {
    bool consistent = false;
    MultiplierAssignment multipliers;  // filled when consistent
    std::optional<UnitId> conflict_unit;
    std::string conflict;              // empty when consistent
};

/// Propagates log Lambda along the enumerated constraints
/// (log Lambda_next = L_e + c_prev log Lambda_prev) and then checks every
/// nonzero edge. Agreement tolerance is 1e-9 (relative for large values).
ConsistencyResult is_self_consistent(const SelfConsistentConfig& config, const Network& net);

/// L_e = log(w_final / w_initial) for every nonzero initial weight. Throws
/// InvalidArgument on topology mismatch, a sign change, or a weight that
/// became zero.
SelfConsistentConfig project_balancing_run(const Network& final_net, const Network& initial_net);

/// Multiply every edge u->v by Lambda_v / Lambda_u^c_u.
Network apply_multipliers(const Network& net, const MultiplierAssignment& m);

struct ConvexSolution {
    SelfConsistentConfig config;
    MultiplierAssignment multipliers;
    Network balanced;
    double r_star = 0.0;
    double grad_norm = 0.0;  // infinity norm at the returned point
    int iterations = 0;
    std::vector<Constraint> constraints;
    std::vector<double> constraint_residuals;
};

struct ConvexOptions {
    double grad_tol = 1e-10;
    int max_iterations = 200;
};

/// Minimises R(l) = sum_e beta |w_e|^p exp(p (l_to - c_from l_from)) over
/// the log-multipliers l of the balanceable hidden units (everything else is
/// pinned at 0) with damped Newton steps and Armijo backtracking. The cost
/// must be a single L_p term. Throws ConvergenceError if the gradient
/// infinity norm does not reach grad_tol.
ConvexSolution solve_convex(const Network& net, const CostSpec& cost,
                            const ConvexOptions& options = {});

/// {r_star, lambda_per_unit, grad_norm, iterations, constraint_residuals}
nlohmann::json oracle_report(const ConvexSolution& solution);

/// Closed-form tied-layer multipliers for a layered chain of N weight
/// matrices with layer costs n_i = sum |a|^p (squared Frobenius norms for
/// p = 2): M_i = (geomean(n) / n_i)^(1/p). prod M_i = 1 and every scaled
/// layer carries cost geomean(n).
std::vector<double> tied_layer_closed_form(std::span<const double> layer_norms, double p = 2.0);

}  // namespace balancekit
