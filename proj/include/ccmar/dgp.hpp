#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "ccmar/coefficients.hpp"
#include "ccmar/error.hpp"
#include "ccmar/estimators.hpp"
#include "ccmar/numeric.hpp"
#include "ccmar/nuisance.hpp"
#include "ccmar/records.hpp"
#include "ccmar/rng.hpp"
#include "ccmar/terms.hpp"

namespace ccmar {

namespace detail {

inline void draw_lc(const lc_params& lc, rng_stream& rng, coarsened_record& r) {
    r.l1 = static_cast<double>(rng.bernoulli(lc.p1));
    r.l2 = rng.truncated_normal(lc.m, lc.s, lc_l2_lower, lc_l2_upper);
    r.l3 = static_cast<double>(rng.bernoulli(lc.p3));
}

}  // namespace detail

// Sequential draw: covariates, treatment, outcome, missingness indicator,
// then the confounders for the selected rows only.
inline std::vector<coarsened_record> gen_sequential(const scenario_coefficients& coef,
                                               const lc_params& lc, int n, rng_stream& rng) {
    if (coef.kind != factorization_kind::sequential)
        throw config_error("gen_sequential: coefficients are for a different generative sequence");
    validate_coefficients(coef);
    if (n < 1) throw config_error("gen_sequential: need a positive sample size");

    std::vector<coarsened_record> out(static_cast<std::size_t>(n));
    probe p;
    for (auto& r : out) {
        detail::draw_lc(lc, rng, r);
        p = probe{};
        p.set(var::l1, r.l1);
        p.set(var::l2, r.l2);
        p.set(var::l3, r.l3);
        r.a = rng.bernoulli(expit(linear_predictor(coef.eta.terms, coef.eta.coef, p)));
        p.set(var::a, static_cast<double>(r.a));
        r.y = rng.normal(linear_predictor(coef.mu.terms, coef.mu.coef, p), coef.sigma_y);
        p.set(var::y, r.y);
        r.s = rng.bernoulli(expit(linear_predictor(coef.pi.terms, coef.pi.coef, p)));
        if (r.s == 1) {
            double lin = linear_predictor(coef.lambda1.terms, coef.lambda1.coef, p);
            double l4 = rng.gamma(coef.alpha, coef.alpha * std::exp(-lin));
            r.l4 = l4;
            if (coef.lambda2) {
                p.set(var::l4, l4);
                r.l5 = static_cast<double>(rng.bernoulli(
                    expit(linear_predictor(coef.lambda2->terms, coef.lambda2->coef, p))));
            }
        }
    }
    return out;
}

// Confounder-first draw: the confounders exist for every row and are merely
// masked when the missingness indicator lands on zero.
inline std::vector<coarsened_record> gen_alt(const scenario_coefficients& coef,
                                             const lc_params& lc, int n, rng_stream& rng) {
    if (coef.kind != factorization_kind::alternative)
        throw config_error("gen_alt: coefficients are for a different generative sequence");
    validate_coefficients(coef);
    if (n < 1) throw config_error("gen_alt: need a positive sample size");

    std::vector<coarsened_record> out(static_cast<std::size_t>(n));
    probe p;
    for (auto& r : out) {
        detail::draw_lc(lc, rng, r);
        p = probe{};
        p.set(var::l1, r.l1);
        p.set(var::l2, r.l2);
        p.set(var::l3, r.l3);
        double lin1 = linear_predictor(coef.lambda1.terms, coef.lambda1.coef, p);
        double l4 = rng.gamma(coef.alpha, coef.alpha * std::exp(-lin1));
        p.set(var::l4, l4);
        double l5 = 0.0;
        if (coef.lambda2) {
            l5 = static_cast<double>(rng.bernoulli(
                expit(linear_predictor(coef.lambda2->terms, coef.lambda2->coef, p))));
            p.set(var::l5, l5);
        }
        r.a = rng.bernoulli(expit(linear_predictor(coef.eta.terms, coef.eta.coef, p)));
        p.set(var::a, static_cast<double>(r.a));
        r.y = rng.normal(linear_predictor(coef.mu.terms, coef.mu.coef, p), coef.sigma_y);
        p.set(var::y, r.y);
        r.s = rng.bernoulli(expit(linear_predictor(coef.pi.terms, coef.pi.coef, p)));
        if (r.s == 1) {
            r.l4 = l4;
            if (coef.lambda2) r.l5 = l5;
        }
    }
    return out;
}

// The fixed beta-outcome design with no always-observed covariates.
inline std::vector<coarsened_record> gen_np(int n, rng_stream& rng) {
    if (n < 1) throw config_error("gen_np: need a positive sample size");
    const scenario_coefficients coef = np_generating_coefficients();

    std::vector<coarsened_record> out(static_cast<std::size_t>(n));
    probe p;
    for (auto& r : out) {
        r.l1 = 0.0;
        r.l2 = 0.0;
        r.l3 = 0.0;
        r.a = rng.bernoulli(0.5);
        r.y = (r.a == 1) ? rng.beta(np_beta_arm1_shape1, np_beta_arm1_shape2)
                         : rng.beta(np_beta_arm0_shape1, np_beta_arm0_shape2);
        p = probe{};
        p.set(var::a, static_cast<double>(r.a));
        p.set(var::y, r.y);
        r.s = rng.bernoulli(expit(linear_predictor(coef.pi.terms, coef.pi.coef, p)));
        if (r.s == 1) {
            double l4 = static_cast<double>(rng.bernoulli(
                expit(linear_predictor(coef.lambda1.terms, coef.lambda1.coef, p))));
            r.l4 = l4;
            p.set(var::l4, l4);
            r.l5 = rng.normal(linear_predictor(coef.lambda2->terms, coef.lambda2->coef, p),
                              coef.lambda2_sigma);
        }
    }
    return out;
}

struct truth_result {
    double value = 0.0;
    double mc_se = 0.0;
    bool analytic = false;
};

// Ground-truth mean difference of the potential outcomes. The beta-outcome
// design has a closed form; the confounder-first sequence averages the
// two potential-outcome regressions over simulated covariate draws (the
// residual noise cancels in the difference); the sequential design runs the
// inverse-weighted estimator with the generating models plugged in, no
// clipping, on large simulated samples.
inline truth_result true_ate(const scenario_coefficients& coef, const lc_params& lc,
                             long nmc, int repeats, std::uint64_t seed,
                             const quadrature_settings& quad = {}) {
    if (coef.kind == factorization_kind::np_beta) {
        double m1 = np_beta_arm1_shape1 / (np_beta_arm1_shape1 + np_beta_arm1_shape2);
        double m0 = np_beta_arm0_shape1 / (np_beta_arm0_shape1 + np_beta_arm0_shape2);
        return {m1 - m0, 0.0, true};
    }
    validate_coefficients(coef);
    if (nmc < 100000) throw config_error("true_ate: need at least 1e5 simulation draws");
    if (repeats < 1) throw config_error("true_ate: need at least one repeat");
    const int chunk = 1000000;

    std::vector<double> estimates;
    estimates.reserve(static_cast<std::size_t>(repeats));
    for (int rep = 0; rep < repeats; ++rep) {
        rng_stream rng = rng_stream::keyed(seed, static_cast<std::uint64_t>(rep),
                                           rng_stage::truth);
        double acc = 0.0;
        if (coef.kind == factorization_kind::alternative) {
            // Counterfactual average: draw the covariates and confounders for
            // every unit, evaluate both potential-outcome regressions, and
            // never touch the treatment, outcome or missingness stages (the
            // residual noise is shared between arms and cancels).
            coarsened_record r;
            probe p;
            for (long i = 0; i < nmc; ++i) {
                detail::draw_lc(lc, rng, r);
                p = probe{};
                p.set(var::l1, r.l1);
                p.set(var::l2, r.l2);
                p.set(var::l3, r.l3);
                double lin1 = linear_predictor(coef.lambda1.terms, coef.lambda1.coef, p);
                p.set(var::l4, rng.gamma(coef.alpha, coef.alpha * std::exp(-lin1)));
                if (coef.lambda2)
                    p.set(var::l5,
                          static_cast<double>(rng.bernoulli(expit(linear_predictor(
                              coef.lambda2->terms, coef.lambda2->coef, p)))));
                p.set(var::a, 1.0);
                double m1 = linear_predictor(coef.mu.terms, coef.mu.coef, p);
                p.set(var::a, 0.0);
                double m0 = linear_predictor(coef.mu.terms, coef.mu.coef, p);
                acc += m1 - m0;
            }
            estimates.push_back(acc / static_cast<double>(nmc));
        } else {
            nuisance_set ns = true_nuisance_set(coef, quad);
            long done = 0;
            while (done < nmc) {
                int take = static_cast<int>(std::min<long>(chunk, nmc - done));
                auto sample = gen_sequential(coef, lc, take, rng);
                acc += (chi_iwor(ns, sample, 1) - chi_iwor(ns, sample, 0)) *
                       static_cast<double>(take);
                done += take;
            }
            estimates.push_back(acc / static_cast<double>(done));
        }
    }
    truth_result out;
    out.value = mean(estimates);
    out.mc_se = (repeats > 1) ? sample_sd(estimates) / std::sqrt(static_cast<double>(repeats))
                              : 0.0;
    return out;
}

}  // namespace ccmar
