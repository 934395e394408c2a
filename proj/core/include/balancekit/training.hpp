#pragma once

#include "balancekit/balancing.hpp"
#include "balancekit/dataset.hpp"
#include "balancekit/network.hpp"
#include "balancekit/regularizer.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace balancekit {

enum class LossKind {
    SquaredError,        // 1/2 sum (y - t)^2; labels are one-hot encoded
    CrossEntropy,        // softmax over the output values
    BinaryCrossEntropy,  // single logistic output unit
};

/// Mean loss over `rows` plus the regulariser R(W) when `cost` is given.
struct Objective {
    double loss = 0.0;        // mean data loss E
    double regulariser = 0.0; // R(W)
    double total() const { return loss + regulariser; }
};

struct GradientResult {
    Objective objective;
    std::vector<double> grad;  // d(E + R)/dw, indexed like Network::edges()
};

/// Gradient of the mean loss over `rows` (all rows when empty) plus R.
/// Backpropagates through time for recurrent nets. Subgradients: BiLU at 0
/// uses slope b; an L1 term at w = 0 contributes 0. Throws InvalidArgument
/// for cost exponents below 1.
GradientResult gradients(const Network& net, const Dataset& data, std::span<const std::size_t> rows,
                         LossKind loss, const std::optional<CostSpec>& cost);

/// Objective only, no gradient.
Objective evaluate_objective(const Network& net, const Dataset& data, LossKind loss,
                             const std::optional<CostSpec>& cost);

/// Fraction of correctly classified rows; NaN for unlabelled data.
double accuracy(const Network& net, const Dataset& data, LossKind loss);

enum class BalanceMode { None, FullAtStart, PartialEachEpoch, FullEachEpoch };

struct TrainConfig {
    double learning_rate = 0.01;
    std::size_t batch_size = 1;
    int epochs = 10;
    LossKind loss = LossKind::BinaryCrossEntropy;
    /// Regulariser added to the training objective.
    std::optional<CostSpec> cost;
    BalanceMode balance_mode = BalanceMode::None;
    /// Cost used by balancing and by the reported deficit; may differ from
    /// `cost`.
    CostSpec balance_cost = CostSpec::l2();
    double balance_tol = 1e-10;
    std::uint64_t seed = 0;
};

struct MetricsRow {
    int epoch = 0;
    double train_loss = 0.0;
    double test_accuracy = 0.0;
    double network_deficit = 0.0;
    double frobenius_norm = 0.0;
};

struct TrainResult {
    Network net;
    std::vector<MetricsRow> metrics;  // epoch 0 is the state before training
    bool diverged = false;
};

/// Minibatch SGD. Rows are reshuffled every epoch by Rng(seed). FullAtStart
/// balances to convergence before epoch 0; PartialEachEpoch runs one
/// input-to-output balancing pass after each epoch; FullEachEpoch balances to
/// convergence after each epoch. A non-finite loss stops training with
/// diverged = true and the metrics gathered so far.
TrainResult sgd_train(const Network& net, const Dataset& train, const Dataset& test,
                      const TrainConfig& config);

struct DescentResult {
    Network net;
    double grad_norm = 0.0;   // infinity norm at the final point
    std::size_t iterations = 0;
    bool converged = false;
};

/// Full-batch gradient descent on E + R until the gradient infinity norm is
/// below grad_tol or max_iterations is reached.
DescentResult full_batch_descent(const Network& net, const Dataset& data, LossKind loss,
                                 const std::optional<CostSpec>& cost, double learning_rate,
                                 double grad_tol, std::size_t max_iterations);

/// sqrt of the sum of squared weights.
double frobenius_norm(const Network& net);

/// ||in||_2 / ||out||_2 for every balanceable hidden unit with nonzero out
/// weights, in id order.
std::vector<double> norm_ratios(const Network& net);

/// CSV with header epoch,train_loss,test_accuracy,deficit,frobenius_norm.
void write_metrics_csv(std::span<const MetricsRow> rows, std::ostream& out);

}  // namespace balancekit
