#include "catch_amalgamated.hpp"

#include "ccmar/quadrature.hpp"

#include <cmath>

using namespace ccmar;

TEST_CASE("hermite rule reproduces exact gaussian moments") {
    quadrature_rule rule = gauss_hermite(5);
    // Degree-8 polynomial, inside the exactness range of a 5-node rule.
    double m8 = expect_gaussian(rule, 0.0, 1.0, [](double y) { return std::pow(y, 8.0); });
    REQUIRE(std::abs(m8 - 105.0) < 1e-10);
    double m2 = expect_gaussian(rule, 0.0, 1.0, [](double y) { return y * y; });
    REQUIRE(std::abs(m2 - 1.0) < 1e-12);
    double shifted = expect_gaussian(rule, 3.0, 2.0, [](double y) { return y; });
    REQUIRE(std::abs(shifted - 3.0) < 1e-12);
}

TEST_CASE("generalized laguerre rule reproduces gamma moments") {
    quadrature_rule rule = gauss_genlaguerre(30, 2.619);
    double alpha = 3.619, rate = 1.7;
    double m1 = expect_gamma(rule, alpha, rate, [](double x) { return x; });
    REQUIRE(std::abs(m1 - alpha / rate) < 1e-10);
    double m2 = expect_gamma(rule, alpha, rate, [](double x) { return x * x; });
    REQUIRE(std::abs(m2 - alpha * (alpha + 1.0) / (rate * rate)) < 1e-10);
    double total = expect_gamma(rule, alpha, rate, [](double) { return 1.0; });
    REQUIRE(std::abs(total - 1.0) < 1e-12);
}

TEST_CASE("unit-interval rule integrates beta densities to one") {
    quadrature_rule rule = gauss_legendre01(40);
    // Integer shape pairs make the density a polynomial, so the rule is exact.
    for (auto [a, b] : {std::pair{2.0, 4.0}, std::pair{4.0, 2.0}}) {
        double total = 0.0;
        for (int k = 0; k < rule.size(); ++k)
            total += rule.weights[k] * beta_pdf(rule.nodes[k], a, b);
        REQUIRE(std::abs(total - 1.0) < 1e-10);
        double m1 = expect_beta01(rule, a, b, [](double y) { return y; });
        REQUIRE(std::abs(m1 - a / (a + b)) < 1e-10);
    }
    // Fractional shapes put square-root kinks at the endpoints; convergence
    // there is only algebraic, and nothing in the estimators depends on it.
    double total = 0.0;
    for (int k = 0; k < rule.size(); ++k)
        total += rule.weights[k] * beta_pdf(rule.nodes[k], 1.5, 1.5);
    REQUIRE(std::abs(total - 1.0) < 1e-4);
    double m1 = expect_beta01(rule, 1.5, 1.5, [](double y) { return y; });
    REQUIRE(std::abs(m1 - 0.5) < 1e-4);
}

TEST_CASE("node refinement leaves smooth integrals unchanged") {
    quadrature_rule coarse = gauss_genlaguerre(30, 1.5);
    quadrature_rule fine = gauss_genlaguerre(60, 1.5);
    auto f = [](double x) { return std::exp(-0.3 * x) * std::cos(0.5 * x); };
    double a = expect_gamma(coarse, 2.5, 1.2, f);
    double b = expect_gamma(fine, 2.5, 1.2, f);
    REQUIRE(std::abs(a - b) < 1e-10);

    quadrature_rule h20 = gauss_hermite(20);
    quadrature_rule h40 = gauss_hermite(40);
    // The logistic function has poles off the real axis, which caps how fast
    // a 20-node rule can converge; agreement to 1e-8 is the honest scale.
    auto g = [](double y) { return 1.0 / (1.0 + std::exp(-y)); };
    REQUIRE(std::abs(expect_gaussian(h20, 0.3, 1.1, g) - expect_gaussian(h40, 0.3, 1.1, g)) <
            1e-8);
}

TEST_CASE("rules reject nonsensical sizes") {
    REQUIRE_THROWS_AS(gauss_hermite(0), config_error);
    REQUIRE_THROWS_AS(gauss_genlaguerre(-3, 1.0), config_error);
}
