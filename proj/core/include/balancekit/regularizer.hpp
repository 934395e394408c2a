#pragma once

#include "balancekit/network.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace balancekit {

/// One additive term beta * |w|^p.
struct PowerTerm {
    double p = 2.0;
    double beta = 1.0;

    friend bool operator==(const PowerTerm&, const PowerTerm&) = default;
};

/// Additive weight cost R(W) = sum_w g(w) with g(w) = sum_t beta_t |w|^{p_t}.
///
/// Every g built this way is even, zero at 0 and strictly increasing in |w|,
/// which is what balancing needs.
class CostSpec {
public:
    explicit CostSpec(std::vector<PowerTerm> terms);

    static CostSpec lp(double p, double beta = 1.0) { return CostSpec({{p, beta}}); }
    static CostSpec l1(double beta = 1.0) { return lp(1.0, beta); }
    static CostSpec l2(double beta = 1.0) { return lp(2.0, beta); }

    /// Parses "l2", "l1", "lp:<p>", optionally "<beta>*"-prefixed, joined by
    /// "+": e.g. "0.015*l1+1.0*l2". Throws ParseError naming the bad token,
    /// with the token's character offset as position.
    static CostSpec parse(std::string_view text);

    const std::vector<PowerTerm>& terms() const noexcept { return terms_; }
    bool single_term() const noexcept { return terms_.size() == 1; }
    /// Smallest exponent among the terms.
    double min_p() const noexcept;

    std::string to_string() const;

    friend bool operator==(const CostSpec&, const CostSpec&) = default;

private:
    std::vector<PowerTerm> terms_;
};

double weight_cost(const CostSpec& spec, double w);

/// g'(w). Throws InvalidArgument at w == 0 when some p <= 1 (undefined or,
/// for p == 1, a kink).
double cost_derivative(const CostSpec& spec, double w);

/// Sum of weight_cost over every edge (bias edges included), in edge order.
double network_cost(const Network& net, const CostSpec& spec);

}  // namespace balancekit
