#pragma once

#include <optional>
#include <string>

namespace balancekit {

enum class ActivationKind { BiLU, BiPU, Tanh, Logistic };

/// Nonlinearity of a unit.
///
/// BiLU(a, b): a*x for x < 0, b*x for x >= 0. Identity is BiLU(1, 1), ReLU is
/// BiLU(0, 1), leaky ReLU is BiLU(alpha, 1).
/// BiPU(C, D, c): C*x^c for x >= 0, D*|x|^c for x < 0, with c > 0.
/// Both are homogeneous: f(lambda*x) = lambda^c * f(x) for lambda > 0 (c = 1
/// for BiLU). Tanh and Logistic are not.
class ActivationSpec {
public:
    static ActivationSpec bilu(double a, double b);
    static ActivationSpec bipu(double C, double D, double c);
    static ActivationSpec identity() { return bilu(1.0, 1.0); }
    static ActivationSpec relu() { return bilu(0.0, 1.0); }
    static ActivationSpec leaky_relu(double alpha) { return bilu(alpha, 1.0); }
    static ActivationSpec tanh();
    static ActivationSpec logistic();

    ActivationKind kind() const noexcept { return kind_; }

    // BiLU slopes.
    double a() const noexcept { return p0_; }
    double b() const noexcept { return p1_; }
    // BiPU coefficients and exponent.
    double C() const noexcept { return p0_; }
    double D() const noexcept { return p1_; }
    double c() const noexcept { return p2_; }

    friend bool operator==(const ActivationSpec&, const ActivationSpec&) = default;

private:
    ActivationSpec(ActivationKind kind, double p0, double p1, double p2)
        : kind_(kind), p0_(p0), p1_(p1), p2_(p2) {}

    ActivationKind kind_;
    double p0_;
    double p1_;
    double p2_;
};

double activate(const ActivationSpec& spec, double x);

/// Derivative with respect to the pre-activation. For BiLU the value at
/// exactly 0 is the x >= 0 slope b. Throws for BiPU with c < 1 at x == 0,
/// where the derivative is unbounded.
double activate_derivative(const ActivationSpec& spec, double x);

/// c for homogeneous activations (1 for BiLU), nullopt otherwise.
std::optional<double> homogeneity_exponent(const ActivationSpec& spec);

inline bool is_homogeneous(const ActivationSpec& spec) {
    return spec.kind() == ActivationKind::BiLU || spec.kind() == ActivationKind::BiPU;
}

std::string to_string(ActivationKind kind);

}  // namespace balancekit
