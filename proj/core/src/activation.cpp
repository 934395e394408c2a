#include "balancekit/activation.hpp"

#include "balancekit/error.hpp"

#include <cmath>

namespace balancekit {

ActivationSpec ActivationSpec::bilu(double a, double b) {
    if (!std::isfinite(a) || !std::isfinite(b)) {
        throw InvalidArgument("BiLU slopes must be finite");
    }
    return {ActivationKind::BiLU, a, b, 1.0};
}

ActivationSpec ActivationSpec::bipu(double C, double D, double c) {
    if (!std::isfinite(C) || !std::isfinite(D)) {
        throw InvalidArgument("BiPU coefficients must be finite");
    }
    if (!(c > 0.0) || !std::isfinite(c)) {
        throw InvalidArgument("BiPU exponent must be a finite value > 0");
    }
    return {ActivationKind::BiPU, C, D, c};
}

ActivationSpec ActivationSpec::tanh() { return {ActivationKind::Tanh, 0.0, 0.0, 0.0}; }

ActivationSpec ActivationSpec::logistic() { return {ActivationKind::Logistic, 0.0, 0.0, 0.0}; }

double activate(const ActivationSpec& spec, double x) {
    switch (spec.kind()) {
        case ActivationKind::BiLU:
            return x < 0.0 ? spec.a() * x : spec.b() * x;
        case ActivationKind::BiPU:
            return x >= 0.0 ? spec.C() * std::pow(x, spec.c()) : spec.D() * std::pow(-x, spec.c());
        case ActivationKind::Tanh:
            return std::tanh(x);
        case ActivationKind::Logistic:
            if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
            {
                const double e = std::exp(x);
                return e / (1.0 + e);
            }
    }
    return 0.0;
}

double activate_derivative(const ActivationSpec& spec, double x) {
    switch (spec.kind()) {
        case ActivationKind::BiLU:
            return x < 0.0 ? spec.a() : spec.b();
        case ActivationKind::BiPU: {
            const double c = spec.c();
            if (x == 0.0) {
                if (c < 1.0) throw InvalidArgument("BiPU derivative is unbounded at 0 for c < 1");
                if (c > 1.0) return 0.0;
                return spec.C();
            }
            // d/dx D*(-x)^c = -c*D*(-x)^(c-1)
            return x > 0.0 ? c * spec.C() * std::pow(x, c - 1.0)
                           : -c * spec.D() * std::pow(-x, c - 1.0);
        }
        case ActivationKind::Tanh: {
            const double t = std::tanh(x);
            return 1.0 - t * t;
        }
        case ActivationKind::Logistic: {
            const double s = activate(spec, x);
            return s * (1.0 - s);
        }
    }
    return 0.0;
}

std::optional<double> homogeneity_exponent(const ActivationSpec& spec) {
    switch (spec.kind()) {
        case ActivationKind::BiLU:
            return 1.0;
        case ActivationKind::BiPU:
            return spec.c();
        default:
            return std::nullopt;
    }
}

std::string to_string(ActivationKind kind) {
    switch (kind) {
        case ActivationKind::BiLU:
            return "bilu";
        case ActivationKind::BiPU:
            return "bipu";
        case ActivationKind::Tanh:
            return "tanh";
        case ActivationKind::Logistic:
            return "logistic";
    }
    return "unknown";
}

}  // namespace balancekit
