#include "balancekit/activation.hpp"
#include "balancekit/error.hpp"
#include "balancekit/random.hpp"

#include <doctest.h>

#include <cmath>

using namespace balancekit;

TEST_CASE("BiLU evaluates its two linear branches") {
    CHECK(activate(ActivationSpec::relu(), -3.0) == 0.0);
    CHECK(activate(ActivationSpec::relu(), 2.5) == 2.5);
    CHECK(activate(ActivationSpec::leaky_relu(0.1), -2.0) == doctest::Approx(-0.2));
    CHECK(activate(ActivationSpec::bilu(-1.0, 1.0), -4.0) == 4.0);  // absolute value
}

TEST_CASE("BiPU evaluates power branches") {
    CHECK(activate(ActivationSpec::bipu(1, 0, 2), 3.0) == 9.0);
    CHECK(activate(ActivationSpec::bipu(1, 0, 2), -3.0) == 0.0);
    CHECK(activate(ActivationSpec::bipu(2, -1, 3), -2.0) == -8.0);
    CHECK_THROWS_AS(ActivationSpec::bipu(1, 1, 0.0), InvalidArgument);
    CHECK_THROWS_AS(ActivationSpec::bipu(1, 1, -1.0), InvalidArgument);
}

TEST_CASE("homogeneity exponent per kind") {
    CHECK(homogeneity_exponent(ActivationSpec::relu()) == 1.0);
    CHECK(homogeneity_exponent(ActivationSpec::bipu(1, 1, 3)) == 3.0);
    CHECK_FALSE(homogeneity_exponent(ActivationSpec::tanh()).has_value());
    CHECK_FALSE(homogeneity_exponent(ActivationSpec::logistic()).has_value());
}

TEST_CASE("BiLU is positively homogeneous of degree one") {
    Rng rng(7);
    const auto spec = ActivationSpec::leaky_relu(0.1);
    CHECK(activate(spec, 0.0) == 0.0);
    for (int k = 0; k < 1000; ++k) {
        const double x = rng.uniform(-10, 10);
        const double lambda = std::exp(rng.uniform(std::log(0.01), std::log(100.0)));
        const double lhs = activate(spec, lambda * x);
        const double rhs = lambda * activate(spec, x);
        CHECK(std::fabs(lhs - rhs) <= 1e-12 * std::max(1.0, std::fabs(rhs)));
    }
}

TEST_CASE("BiPU is positively homogeneous of degree c") {
    Rng rng(11);
    for (int k = 0; k < 1000; ++k) {
        const auto spec = ActivationSpec::bipu(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(0.2, 3.0));
        const double x = rng.uniform(-10, 10);
        const double lambda = rng.uniform(0.1, 10);
        const double lhs = activate(spec, lambda * x);
        const double rhs = std::pow(lambda, spec.c()) * activate(spec, x);
        CHECK(std::fabs(lhs - rhs) <= 1e-10 * std::max(1e-300, std::fabs(rhs)) + 1e-300);
    }
}

TEST_CASE("derivatives match central differences away from kinks") {
    Rng rng(3);
    const ActivationSpec specs[] = {ActivationSpec::leaky_relu(0.2), ActivationSpec::bipu(1.5, -0.5, 2.0),
                                    ActivationSpec::tanh(), ActivationSpec::logistic()};
    for (const auto& spec : specs) {
        for (int k = 0; k < 50; ++k) {
            double x = rng.uniform(-3, 3);
            if (std::fabs(x) < 1e-3) x = 0.5;
            const double h = 1e-6;
            const double fd = (activate(spec, x + h) - activate(spec, x - h)) / (2 * h);
            CHECK(activate_derivative(spec, x) == doctest::Approx(fd).epsilon(1e-6));
        }
    }
    CHECK(activate_derivative(ActivationSpec::bilu(0.3, 2.0), 0.0) == 2.0);
    CHECK_THROWS_AS(activate_derivative(ActivationSpec::bipu(1, 1, 0.5), 0.0), InvalidArgument);
}
