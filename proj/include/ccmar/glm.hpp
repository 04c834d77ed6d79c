#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ccmar/error.hpp"
#include "ccmar/numeric.hpp"
#include "ccmar/terms.hpp"

namespace ccmar {

enum class glm_family { gaussian_identity, bernoulli_logit, gamma_log };

inline const char* family_name(glm_family f) {
    switch (f) {
        case glm_family::gaussian_identity: return "gaussian-identity";
        case glm_family::bernoulli_logit: return "bernoulli-logit";
        case glm_family::gamma_log: return "gamma-log";
    }
    return "?";
}

struct glm_options {
    int max_iter = 50;
    double rel_tol = 1e-10;
    int max_step_halvings = 10;
    // Re-estimate the gamma shape by profile likelihood instead of the
    // Pearson moment estimator.
    bool gamma_shape_mle = false;
};

struct fitted_glm {
    std::vector<term> terms;
    Eigen::VectorXd coef;
    glm_family family = glm_family::gaussian_identity;
    // gaussian: residual standard deviation; gamma: shape; bernoulli: absent.
    std::optional<double> dispersion;
    bool penalized = false;
    double penalty_lambda = 0.0;
    bool converged = true;
    int n_used = 0;

    double linpred(const probe& p) const { return linear_predictor(terms, coef, p); }

    double mean_response(const probe& p) const {
        double eta = linpred(p);
        switch (family) {
            case glm_family::gaussian_identity: return eta;
            case glm_family::bernoulli_logit: {
                double mu = expit(eta);
                return std::min(1.0 - 1e-12, std::max(1e-12, mu));
            }
            case glm_family::gamma_log: return std::exp(std::min(300.0, std::max(-300.0, eta)));
        }
        throw state_error("fitted_glm: unknown family");
    }
};

inline double glm_predict(const fitted_glm& fit, const coarsened_record& r) {
    return fit.mean_response(make_probe(r));
}

namespace detail {

inline double glm_deviance(glm_family family, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& mu, const Eigen::VectorXd& w) {
    double dev = 0.0;
    for (int i = 0; i < y.size(); ++i) {
        switch (family) {
            case glm_family::gaussian_identity: {
                double r = y(i) - mu(i);
                dev += w(i) * r * r;
                break;
            }
            case glm_family::bernoulli_logit: {
                double m = std::min(1.0 - 1e-12, std::max(1e-12, mu(i)));
                dev += -2.0 * w(i) * (y(i) * std::log(m) + (1.0 - y(i)) * std::log(1.0 - m));
                break;
            }
            case glm_family::gamma_log:
                dev += 2.0 * w(i) * ((y(i) - mu(i)) / mu(i) - std::log(y(i) / mu(i)));
                break;
        }
    }
    return dev;
}

inline Eigen::VectorXd glm_mean_from_eta(glm_family family, const Eigen::VectorXd& eta) {
    Eigen::VectorXd mu(eta.size());
    for (int i = 0; i < eta.size(); ++i) {
        switch (family) {
            case glm_family::gaussian_identity: mu(i) = eta(i); break;
            case glm_family::bernoulli_logit: mu(i) = expit(eta(i)); break;
            case glm_family::gamma_log:
                mu(i) = std::exp(std::min(300.0, std::max(-300.0, eta(i))));
                break;
        }
    }
    return mu;
}

// Profile-likelihood shape update for the gamma family.
inline double gamma_shape_mle(const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                              const Eigen::VectorXd& w, double start) {
    double wsum = w.sum();
    double target = 0.0;  // mean of y/mu - log(y/mu) - 1
    for (int i = 0; i < y.size(); ++i) {
        double r = y(i) / mu(i);
        target += w(i) * (r - std::log(r) - 1.0);
    }
    target /= wsum;
    double a = std::max(1e-3, start);
    for (int it = 0; it < 100; ++it) {
        double f = std::log(a) - digamma(a) - target;
        double df = 1.0 / a - trigamma(a);
        double step = f / df;
        double next = a - step;
        if (next <= 0.0) next = a / 2.0;
        if (std::abs(next - a) < 1e-12 * (1.0 + a)) { a = next; break; }
        a = next;
    }
    return a;
}

}  // namespace detail

// Iteratively reweighted least squares. The design matrix must align with
// the supplied term list (terms are carried into the result so the model
// can be evaluated on records later).
inline fitted_glm fit_glm(glm_family family, const std::vector<term>& terms,
                          const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                          const Eigen::VectorXd* weights = nullptr,
                          const glm_options& opts = {}) {
    const int n = static_cast<int>(x.rows());
    const int p = static_cast<int>(x.cols());
    if (static_cast<std::size_t>(p) != terms.size())
        throw fit_error("fit_glm: design width does not match term list");
    if (y.size() != n) throw fit_error("fit_glm: response length does not match design");
    if (n < p) throw fit_error("fit_glm: fewer rows than coefficients");

    Eigen::VectorXd w = weights ? *weights : Eigen::VectorXd::Ones(n);
    if (w.size() != n) throw fit_error("fit_glm: weight length does not match design");
    for (int i = 0; i < n; ++i) {
        if (w(i) < 0.0) throw domain_error("fit_glm: negative weight");
        if (family == glm_family::bernoulli_logit && y(i) != 0.0 && y(i) != 1.0)
            throw domain_error("fit_glm: bernoulli response must be 0 or 1");
        if (family == glm_family::gamma_log && !(y(i) > 0.0))
            throw domain_error("fit_glm: gamma response must be positive");
    }

    // Rank deficiency is a configuration bug, not something to paper over.
    {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
        if (qr.rank() < p) throw fit_error("fit_glm: rank-deficient design matrix");
    }

    // Initial means in the interior of each family's support.
    Eigen::VectorXd mu(n);
    for (int i = 0; i < n; ++i) {
        switch (family) {
            case glm_family::gaussian_identity: mu(i) = y(i); break;
            case glm_family::bernoulli_logit: mu(i) = (y(i) + 0.5) / 2.0; break;
            case glm_family::gamma_log: mu(i) = std::max(y(i), 1e-8); break;
        }
    }

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd eta(n);
    for (int i = 0; i < n; ++i) {
        switch (family) {
            case glm_family::gaussian_identity: eta(i) = mu(i); break;
            case glm_family::bernoulli_logit: eta(i) = std::log(mu(i) / (1.0 - mu(i))); break;
            case glm_family::gamma_log: eta(i) = std::log(mu(i)); break;
        }
    }

    double dev = detail::glm_deviance(family, y, mu, w);
    bool converged = false;
    bool have_beta = false;

    for (int iter = 0; iter < opts.max_iter; ++iter) {
        Eigen::VectorXd irls_w(n), z(n);
        for (int i = 0; i < n; ++i) {
            switch (family) {
                case glm_family::gaussian_identity:
                    irls_w(i) = w(i);
                    z(i) = y(i);
                    break;
                case glm_family::bernoulli_logit: {
                    double v = std::max(mu(i) * (1.0 - mu(i)), 1e-10);
                    irls_w(i) = w(i) * v;
                    z(i) = eta(i) + (y(i) - mu(i)) / v;
                    break;
                }
                case glm_family::gamma_log:
                    irls_w(i) = w(i);
                    z(i) = eta(i) + (y(i) - mu(i)) / mu(i);
                    break;
            }
        }

        Eigen::MatrixXd xtwx = x.transpose() * irls_w.asDiagonal() * x;
        Eigen::VectorXd xtwz = x.transpose() * (irls_w.asDiagonal() * z);
        Eigen::VectorXd beta_new = xtwx.ldlt().solve(xtwz);

        Eigen::VectorXd eta_new = x * beta_new;
        Eigen::VectorXd mu_new = detail::glm_mean_from_eta(family, eta_new);
        double dev_new = detail::glm_deviance(family, y, mu_new, w);

        // Step halving towards the previous iterate when the deviance
        // deteriorates (useful near separation).
        int halvings = 0;
        while (have_beta && dev_new > dev * (1.0 + 1e-12) && halvings < opts.max_step_halvings) {
            beta_new = 0.5 * (beta_new + beta);
            eta_new = x * beta_new;
            mu_new = detail::glm_mean_from_eta(family, eta_new);
            dev_new = detail::glm_deviance(family, y, mu_new, w);
            ++halvings;
        }

        beta = beta_new;
        eta = eta_new;
        mu = mu_new;
        have_beta = true;

        double rel_change = std::abs(dev_new - dev) / (std::abs(dev_new) + 0.1);
        dev = dev_new;
        if (rel_change < opts.rel_tol) {
            converged = true;
            break;
        }
    }

    // A diverging logistic predictor signals separation: flag, do not throw.
    if (family == glm_family::bernoulli_logit) {
        for (int i = 0; i < n; ++i)
            if (std::abs(eta(i)) > 30.0) { converged = false; break; }
    }

    fitted_glm fit;
    fit.terms = terms;
    fit.coef = beta;
    fit.family = family;
    fit.converged = converged;
    fit.n_used = n;

    if (family == glm_family::gaussian_identity) {
        double rss = 0.0;
        for (int i = 0; i < n; ++i) rss += w(i) * (y(i) - mu(i)) * (y(i) - mu(i));
        fit.dispersion = (n > p) ? std::sqrt(std::max(0.0, rss) / (n - p)) : 0.0;
    } else if (family == glm_family::gamma_log) {
        double pearson = 0.0;
        for (int i = 0; i < n; ++i) {
            double r = (y(i) - mu(i)) / mu(i);
            pearson += w(i) * r * r;
        }
        double alpha_moment = (n > p && pearson > 0.0)
                                  ? (n - p) / pearson
                                  : std::numeric_limits<double>::quiet_NaN();
        fit.dispersion = opts.gamma_shape_mle
                             ? detail::gamma_shape_mle(y, mu, w,
                                                       std::isnan(alpha_moment) ? 1.0 : alpha_moment)
                             : alpha_moment;
    }
    return fit;
}

// Convenience overload: build the design from records.
inline fitted_glm fit_glm(glm_family family, const std::vector<term>& terms,
                          const std::vector<coarsened_record>& records,
                          const Eigen::VectorXd& y, const Eigen::VectorXd* weights = nullptr,
                          const glm_options& opts = {}) {
    return fit_glm(family, terms, build_design(terms, records), y, weights, opts);
}

}  // namespace ccmar
