#pragma once

#include "balancekit/network.hpp"

#include <span>
#include <utility>
#include <vector>

namespace balancekit {

struct Approximation {
    /// bias -> input -> hidden ReLUs -> identity output. Hidden unit k (k=1..N)
    /// receives the input with weight 1 and bias -(k-1)/N; hidden units whose
    /// output weight would be zero are omitted.
    Network net;
    double beta0 = 0.0;             // output bias, f(0)
    std::vector<double> beta;       // output weight of hidden unit k, k = 1..N
    double achieved_bound = 0.0;    // max_k |f(k/N) - f((k-1)/N)|
    bool within_epsilon = false;    // achieved_bound < epsilon
};

/// One-hidden-layer ReLU network that linearly interpolates the samples
/// (x_k, f(x_k)) at the knots x_k = k/N, k = 0..N. Knot slopes are folded
/// into the output weights (every hidden slope is 1). Throws InvalidArgument
/// when N < 1 or the knots are not 0, 1/N, ..., 1.
Approximation construct_universal_approximator(std::span<const std::pair<double, double>> samples,
                                               double epsilon);

}  // namespace balancekit
