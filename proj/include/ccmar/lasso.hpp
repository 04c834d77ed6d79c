#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "ccmar/error.hpp"
#include "ccmar/glm.hpp"
#include "ccmar/rng.hpp"

namespace ccmar {

struct lasso_options {
    int n_lambda = 100;
    double lambda_min_ratio = 1e-3;
    double tol = 1e-7;
    int max_sweeps = 2000;
    int max_outer = 25;  // quadratic-approximation refits for logistic
};

namespace detail {

inline double soft_threshold(double z, double g) {
    if (z > g) return z - g;
    if (z < -g) return z + g;
    return 0.0;
}

struct standardized_design {
    Eigen::MatrixXd x;          // centered/scaled slope columns
    Eigen::VectorXd col_mean;
    Eigen::VectorXd col_scale;
    int intercept_col = -1;     // position of the intercept in the original design
    std::vector<int> slope_cols;
};

inline standardized_design standardize(const Eigen::MatrixXd& x0) {
    const int n = static_cast<int>(x0.rows());
    const int p = static_cast<int>(x0.cols());
    standardized_design d;
    for (int j = 0; j < p; ++j) {
        bool constant = true;
        for (int i = 1; i < n && constant; ++i) constant = (x0(i, j) == x0(0, j));
        if (constant) {
            if (d.intercept_col >= 0)
                throw fit_error("fit_lasso_glm: more than one constant column");
            d.intercept_col = j;
        } else {
            d.slope_cols.push_back(j);
        }
    }
    if (d.intercept_col < 0)
        throw fit_error("fit_lasso_glm: design needs an intercept column");
    const int q = static_cast<int>(d.slope_cols.size());
    d.x.resize(n, q);
    d.col_mean.resize(q);
    d.col_scale.resize(q);
    for (int k = 0; k < q; ++k) {
        Eigen::VectorXd col = x0.col(d.slope_cols[k]);
        double m = col.mean();
        double ss = (col.array() - m).square().sum() / n;
        double sd = std::sqrt(ss);
        if (sd <= 0.0) throw fit_error("fit_lasso_glm: zero-variance column after centering");
        d.col_mean(k) = m;
        d.col_scale(k) = sd;
        d.x.col(k) = (col.array() - m) / sd;
    }
    return d;
}

// Weighted coordinate descent for (1/2n) sum w (z - b0 - x b)^2 + lambda |b|_1
// on standardized columns; the intercept is unpenalized.
inline void coordinate_descent(const Eigen::MatrixXd& x, const Eigen::VectorXd& z,
                               const Eigen::VectorXd& w, double lambda, double& b0,
                               Eigen::VectorXd& b, const lasso_options& opts) {
    const int n = static_cast<int>(x.rows());
    const int q = static_cast<int>(x.cols());
    const double wn = w.sum();
    Eigen::VectorXd r = z - Eigen::VectorXd::Constant(n, b0) - x * b;
    for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
        double max_delta = 0.0;
        // intercept update
        double db0 = w.dot(r) / wn;
        b0 += db0;
        r.array() -= db0;
        max_delta = std::max(max_delta, std::abs(db0));
        for (int j = 0; j < q; ++j) {
            double xwx = (w.array() * x.col(j).array().square()).sum() / n;
            if (xwx <= 0.0) continue;
            double rho = (w.array() * x.col(j).array() * r.array()).sum() / n + xwx * b(j);
            double bj = soft_threshold(rho, lambda) / xwx;
            double diff = bj - b(j);
            if (diff != 0.0) {
                r -= diff * x.col(j);
                b(j) = bj;
                max_delta = std::max(max_delta, std::abs(diff));
            }
        }
        if (max_delta < opts.tol) break;
    }
}

struct lasso_path_point {
    double lambda = 0.0;
    double b0 = 0.0;
    Eigen::VectorXd b;
};

inline std::vector<lasso_path_point> solve_path(glm_family family, const Eigen::MatrixXd& xs,
                                                const Eigen::VectorXd& y,
                                                const std::vector<double>& grid,
                                                const lasso_options& opts) {
    const int n = static_cast<int>(xs.rows());
    const int q = static_cast<int>(xs.cols());
    std::vector<lasso_path_point> path;
    path.reserve(grid.size());
    double b0 = 0.0;
    Eigen::VectorXd b = Eigen::VectorXd::Zero(q);
    Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
    if (family == glm_family::bernoulli_logit) b0 = 0.0;
    else b0 = y.mean();

    for (double lambda : grid) {
        if (family == glm_family::gaussian_identity) {
            coordinate_descent(xs, y, ones, lambda, b0, b, opts);
        } else {
            // Outer quadratic approximations around the current iterate.
            for (int outer = 0; outer < opts.max_outer; ++outer) {
                Eigen::VectorXd eta = Eigen::VectorXd::Constant(n, b0) + xs * b;
                Eigen::VectorXd mu(n), w(n), z(n);
                for (int i = 0; i < n; ++i) {
                    mu(i) = expit(eta(i));
                    double v = std::max(mu(i) * (1.0 - mu(i)), 1e-5);
                    w(i) = v;
                    z(i) = eta(i) + (y(i) - mu(i)) / v;
                }
                double b0_prev = b0;
                Eigen::VectorXd b_prev = b;
                coordinate_descent(xs, z, w, lambda, b0, b, opts);
                double delta = std::abs(b0 - b0_prev) + (b - b_prev).cwiseAbs().maxCoeff();
                if (delta < 1e-8) break;
            }
        }
        path.push_back({lambda, b0, b});
    }
    return path;
}

inline double holdout_deviance(glm_family family, const Eigen::MatrixXd& xs,
                               const Eigen::VectorXd& y, const std::vector<int>& rows,
                               const lasso_path_point& pt) {
    double dev = 0.0;
    for (int i : rows) {
        double eta = pt.b0 + xs.row(i).dot(pt.b);
        if (family == glm_family::gaussian_identity) {
            double r = y(i) - eta;
            dev += r * r;
        } else {
            double mu = std::min(1.0 - 1e-12, std::max(1e-12, expit(eta)));
            dev += -2.0 * (y(i) * std::log(mu) + (1.0 - y(i)) * std::log(1.0 - mu));
        }
    }
    return dev;
}

}  // namespace detail

inline std::vector<double> default_lambda_grid([[maybe_unused]] glm_family family,
                                               const Eigen::MatrixXd& xs,
                                               const Eigen::VectorXd& y,
                                               const lasso_options& opts = {}) {
    const int n = static_cast<int>(xs.rows());
    double center = y.mean();
    double lambda_max = 0.0;
    for (int j = 0; j < xs.cols(); ++j) {
        double g = std::abs(xs.col(j).dot(y - Eigen::VectorXd::Constant(n, center))) / n;
        lambda_max = std::max(lambda_max, g);
    }
    if (lambda_max <= 0.0) lambda_max = 1.0;
    std::vector<double> grid(opts.n_lambda);
    double lmin = std::log(lambda_max * opts.lambda_min_ratio);
    double lmax = std::log(lambda_max);
    for (int k = 0; k < opts.n_lambda; ++k) {
        double t = (opts.n_lambda == 1) ? 0.0 : static_cast<double>(k) / (opts.n_lambda - 1);
        grid[k] = std::exp(lmax + t * (lmin - lmax));
    }
    return grid;
}

// L1-penalized GLM on standardized columns, lambda selected by K-fold
// cross-validated deviance (smallest-deviance rule), coefficients reported
// on the original scale. Deterministic given the seed.
inline fitted_glm fit_lasso_glm(glm_family family, const std::vector<term>& terms,
                                const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                const std::vector<double>& lambda_grid, int folds,
                                std::uint64_t seed, const lasso_options& opts = {}) {
    if (family == glm_family::gamma_log)
        throw config_error("fit_lasso_glm: only gaussian and bernoulli families are supported");
    if (lambda_grid.empty()) throw config_error("fit_lasso_glm: empty lambda grid");
    for (std::size_t k = 1; k < lambda_grid.size(); ++k)
        if (!(lambda_grid[k] < lambda_grid[k - 1]))
            throw config_error("fit_lasso_glm: lambda grid must be strictly decreasing");
    if (folds < 2) throw config_error("fit_lasso_glm: need at least 2 folds");
    const int n = static_cast<int>(x.rows());
    if (folds > n) throw config_error("fit_lasso_glm: more folds than rows");
    if (static_cast<std::size_t>(x.cols()) != terms.size())
        throw fit_error("fit_lasso_glm: design width does not match term list");

    detail::standardized_design sd = detail::standardize(x);

    double chosen = lambda_grid.front();
    if (lambda_grid.size() > 1) {
        // Seeded shuffle, balanced folds.
        std::vector<int> order(n);
        std::iota(order.begin(), order.end(), 0);
        rng_stream shuffle = rng_stream::keyed(seed, 0, rng_stage::lasso_folds);
        for (int i = n - 1; i > 0; --i) {
            int j = static_cast<int>(shuffle.next_u64() % static_cast<std::uint64_t>(i + 1));
            std::swap(order[i], order[j]);
        }
        std::vector<std::vector<int>> fold_rows(folds);
        for (int i = 0; i < n; ++i) fold_rows[i % folds].push_back(order[i]);

        std::vector<double> cv_dev(lambda_grid.size(), 0.0);
        for (int f = 0; f < folds; ++f) {
            std::vector<char> holdout(n, 0);
            for (int i : fold_rows[f]) holdout[i] = 1;
            std::vector<int> train_rows;
            train_rows.reserve(n - fold_rows[f].size());
            for (int i = 0; i < n; ++i)
                if (!holdout[i]) train_rows.push_back(i);
            if (train_rows.empty() || fold_rows[f].empty())
                throw config_error("fit_lasso_glm: empty cross-validation fold");
            Eigen::MatrixXd xtr(train_rows.size(), sd.x.cols());
            Eigen::VectorXd ytr(train_rows.size());
            for (std::size_t i = 0; i < train_rows.size(); ++i) {
                xtr.row(i) = sd.x.row(train_rows[i]);
                ytr(i) = y(train_rows[i]);
            }
            auto path = detail::solve_path(family, xtr, ytr, lambda_grid, opts);
            for (std::size_t k = 0; k < path.size(); ++k)
                cv_dev[k] += detail::holdout_deviance(family, sd.x, y, fold_rows[f], path[k]);
        }
        std::size_t best = 0;
        for (std::size_t k = 1; k < cv_dev.size(); ++k)
            if (cv_dev[k] < cv_dev[best]) best = k;
        chosen = lambda_grid[best];
    }

    auto final_path = detail::solve_path(family, sd.x, y, {chosen}, opts);
    const auto& pt = final_path.back();

    // Back to the original scale.
    fitted_glm fit;
    fit.terms = terms;
    fit.family = family;
    fit.penalized = true;
    fit.penalty_lambda = chosen;
    fit.converged = true;
    fit.n_used = n;
    fit.coef = Eigen::VectorXd::Zero(x.cols());
    double intercept = pt.b0;
    for (std::size_t k = 0; k < sd.slope_cols.size(); ++k) {
        double bj = pt.b(k) / sd.col_scale(k);
        fit.coef(sd.slope_cols[k]) = bj;
        intercept -= bj * sd.col_mean(k);
    }
    fit.coef(sd.intercept_col) = intercept;

    if (family == glm_family::gaussian_identity) {
        Eigen::VectorXd res = y - x * fit.coef;
        int df = 1;
        for (int j = 0; j < fit.coef.size(); ++j)
            if (j != sd.intercept_col && fit.coef(j) != 0.0) ++df;
        int denom = std::max(1, n - df);
        fit.dispersion = std::sqrt(res.squaredNorm() / denom);
    }
    return fit;
}

// Convenience overload: derive the lambda grid from the standardized design.
inline fitted_glm fit_lasso_glm(glm_family family, const std::vector<term>& terms,
                                const Eigen::MatrixXd& x, const Eigen::VectorXd& y, int folds,
                                std::uint64_t seed, const lasso_options& opts = {}) {
    detail::standardized_design sd = detail::standardize(x);
    std::vector<double> grid = default_lambda_grid(family, sd.x, y, opts);
    return fit_lasso_glm(family, terms, x, y, grid, folds, seed, opts);
}

// Records overload.
inline fitted_glm fit_lasso_glm(glm_family family, const std::vector<term>& terms,
                                const std::vector<coarsened_record>& records,
                                const Eigen::VectorXd& y, int folds, std::uint64_t seed,
                                const lasso_options& opts = {}) {
    return fit_lasso_glm(family, terms, build_design(terms, records), y, folds, seed, opts);
}

}  // namespace ccmar
