#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "ccmar/error.hpp"

namespace ccmar {

// Fixed-node Gaussian quadrature rules computed by the Golub-Welsch
// procedure: nodes are the eigenvalues of the Jacobi matrix of the
// orthogonal-polynomial recurrence, weights come from the first components
// of the eigenvectors.

enum class rule_kind { gauss_hermite, gauss_legendre01, generalized_gauss_laguerre };

struct quadrature_rule {
    rule_kind kind;
    double alpha_param = 0.0;  // Laguerre weight exponent p in x^p e^(-x)
    std::vector<double> nodes;
    std::vector<double> weights;

    int size() const { return static_cast<int>(nodes.size()); }
};

namespace detail {

inline quadrature_rule golub_welsch(rule_kind kind, double alpha_param,
                                    const Eigen::VectorXd& diag,
                                    const Eigen::VectorXd& subdiag,
                                    double mu0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
    solver.computeFromTridiagonal(diag, subdiag, Eigen::ComputeEigenvectors);
    if (solver.info() != Eigen::Success)
        throw fit_error("quadrature: tridiagonal eigensolve failed");
    quadrature_rule rule;
    rule.kind = kind;
    rule.alpha_param = alpha_param;
    int n = static_cast<int>(diag.size());
    rule.nodes.resize(n);
    rule.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        rule.nodes[i] = solver.eigenvalues()(i);
        double v0 = solver.eigenvectors()(0, i);
        rule.weights[i] = mu0 * v0 * v0;
    }
    return rule;
}

}  // namespace detail

// Weight e^(-x^2) on the real line.
inline quadrature_rule gauss_hermite(int n) {
    if (n < 2) throw config_error("gauss_hermite: need at least 2 nodes");
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd sub(n - 1);
    for (int k = 1; k < n; ++k) sub(k - 1) = std::sqrt(k / 2.0);
    return detail::golub_welsch(rule_kind::gauss_hermite, 0.0, diag, sub,
                                std::sqrt(M_PI));
}

// Weight 1 on (0,1).
inline quadrature_rule gauss_legendre01(int n) {
    if (n < 2) throw config_error("gauss_legendre01: need at least 2 nodes");
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd sub(n - 1);
    for (int k = 1; k < n; ++k) sub(k - 1) = k / std::sqrt(4.0 * k * k - 1.0);
    quadrature_rule rule = detail::golub_welsch(rule_kind::gauss_legendre01, 0.0, diag, sub, 2.0);
    for (int i = 0; i < rule.size(); ++i) {
        rule.nodes[i] = 0.5 * (rule.nodes[i] + 1.0);
        rule.weights[i] *= 0.5;
    }
    return rule;
}

// Weight x^p e^(-x) on (0, inf); p > -1.
inline quadrature_rule gauss_genlaguerre(int n, double p) {
    if (n < 2) throw config_error("gauss_genlaguerre: need at least 2 nodes");
    if (!(p > -1.0)) throw domain_error("gauss_genlaguerre: weight exponent must exceed -1");
    Eigen::VectorXd diag(n);
    Eigen::VectorXd sub(n - 1);
    for (int k = 0; k < n; ++k) diag(k) = 2.0 * k + p + 1.0;
    for (int k = 1; k < n; ++k) sub(k - 1) = std::sqrt(k * (k + p));
    return detail::golub_welsch(rule_kind::generalized_gauss_laguerre, p, diag, sub,
                                std::tgamma(p + 1.0));
}

namespace detail {

inline double weight_total(const quadrature_rule& rule) {
    double s = 0.0;
    for (double w : rule.weights) s += w;
    return s;
}

}  // namespace detail

// E[f(X)] for X ~ Normal(m, s).
template <typename F>
inline double expect_gaussian(const quadrature_rule& rule, double m, double s, F&& f) {
    if (rule.kind != rule_kind::gauss_hermite)
        throw config_error("expect_gaussian: rule/law mismatch (need a Hermite rule)");
    double total = detail::weight_total(rule), acc = 0.0;
    double scale = std::sqrt(2.0) * s;
    for (int i = 0; i < rule.size(); ++i)
        acc += rule.weights[i] * f(m + scale * rule.nodes[i]);
    return acc / total;
}

// E[g(X)] for X ~ Gamma(shape alpha, rate r). The rule must carry weight
// exponent alpha - 1; nodes rescale by 1/r.
template <typename F>
inline double expect_gamma(const quadrature_rule& rule, double alpha, double rate, F&& g) {
    if (rule.kind != rule_kind::generalized_gauss_laguerre)
        throw config_error("expect_gamma: rule/law mismatch (need a generalized Laguerre rule)");
    if (!(alpha > 0.0 && rate > 0.0)) throw domain_error("expect_gamma: parameters must be positive");
    if (std::abs(rule.alpha_param - (alpha - 1.0)) > 1e-9)
        throw config_error("expect_gamma: rule weight exponent does not match alpha - 1");
    double total = detail::weight_total(rule), acc = 0.0;
    for (int i = 0; i < rule.size(); ++i)
        acc += rule.weights[i] * g(rule.nodes[i] / rate);
    return acc / total;
}

inline double beta_log_norm(double a, double b) {
    return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

inline double beta_pdf(double x, double a, double b) {
    if (x <= 0.0 || x >= 1.0) return 0.0;
    return std::exp((a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) - beta_log_norm(a, b));
}

// E[f(X)] for X ~ Beta(a, b), integrated with a unit-interval Legendre rule.
template <typename F>
inline double expect_beta01(const quadrature_rule& rule, double a, double b, F&& f) {
    if (rule.kind != rule_kind::gauss_legendre01)
        throw config_error("expect_beta01: rule/law mismatch (need a Legendre rule on (0,1))");
    if (!(a > 0.0 && b > 0.0)) throw domain_error("expect_beta01: shapes must be positive");
    double acc = 0.0;
    for (int i = 0; i < rule.size(); ++i)
        acc += rule.weights[i] * beta_pdf(rule.nodes[i], a, b) * f(rule.nodes[i]);
    return acc;
}

}  // namespace ccmar
