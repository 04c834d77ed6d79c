#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ccmar/beta_mle.hpp"
#include "ccmar/coefficients.hpp"
#include "ccmar/error.hpp"
#include "ccmar/glm.hpp"
#include "ccmar/numeric.hpp"
#include "ccmar/quadrature.hpp"
#include "ccmar/records.hpp"
#include "ccmar/rng.hpp"
#include "ccmar/terms.hpp"

namespace ccmar {

// Clamp applied to estimated missingness probabilities before they enter a
// denominator. Can be disabled entirely.
struct clip_policy {
    bool enabled = true;
    double lo = 0.01;
    double hi = 0.99;

    double apply(double p, bool* clipped = nullptr) const {
        if (!enabled) return p;
        if (p < lo) {
            if (clipped) *clipped = true;
            return lo;
        }
        if (p > hi) {
            if (clipped) *clipped = true;
            return hi;
        }
        return p;
    }
};

struct quadrature_settings {
    int y_gauss_nodes = 20;   // outcome integral, gaussian outcome law
    int y_beta_nodes = 40;    // outcome integral, beta outcome law
    int lp_gamma_nodes = 30;  // confounder integral, gamma first confounder
    int lp_gauss_nodes = 20;  // confounder integral, gaussian second confounder
};

// How integrals over the partially missing confounders are evaluated. The
// default is deterministic quadrature; the Monte Carlo fallback draws a
// fixed, seeded sample from the fitted confounder law instead.
struct integration_policy {
    bool monte_carlo = false;
    int mc_draws = 500;
    std::uint64_t mc_seed = 0;
};

enum class outcome_model_kind { gaussian_linear, beta_per_arm };

// Estimation-side description of the five working models. Terms are always
// expressed in the sequential factorization used by the estimators:
// treatment given covariates, outcome given covariates and treatment,
// missingness given covariates, treatment and outcome, and confounder laws
// given everything observed.
struct nuisance_spec {
    std::optional<double> known_treatment_prob;
    std::vector<term> eta_terms;
    outcome_model_kind outcome_kind = outcome_model_kind::gaussian_linear;
    std::vector<term> mu_terms;
    std::vector<term> pi_terms;
    glm_family lambda1_family = glm_family::gamma_log;
    std::vector<term> lambda1_terms;
    std::optional<glm_family> lambda2_family;
    std::vector<term> lambda2_terms;
    bool gamma_shape_mle = false;
};

inline void validate_nuisance_spec(const nuisance_spec& spec) {
    const std::set<var> lc{var::l1, var::l2, var::l3};
    std::set<var> lc_a = lc;
    lc_a.insert(var::a);
    std::set<var> lc_a_y = lc_a;
    lc_a_y.insert(var::y);
    std::set<var> lc_a_y_l4 = lc_a_y;
    lc_a_y_l4.insert(var::l4);

    if (spec.known_treatment_prob) {
        double p = *spec.known_treatment_prob;
        if (!(p > 0.0 && p < 1.0))
            throw config_error("known treatment probability must lie in (0,1)");
    } else {
        if (spec.eta_terms.empty())
            throw config_error("treatment model needs terms or a known probability");
        validate_terms(spec.eta_terms);
        detail::check_conditioning("eta", spec.eta_terms, lc);
    }
    if (spec.outcome_kind == outcome_model_kind::gaussian_linear) {
        if (spec.mu_terms.empty()) throw config_error("outcome model needs terms");
        validate_terms(spec.mu_terms);
        detail::check_conditioning("mu", spec.mu_terms, lc_a);
    }
    if (spec.pi_terms.empty()) throw config_error("missingness model needs terms");
    validate_terms(spec.pi_terms);
    detail::check_conditioning("pi", spec.pi_terms, lc_a_y);

    if (spec.lambda1_family != glm_family::gamma_log &&
        spec.lambda1_family != glm_family::bernoulli_logit)
        throw config_error("first confounder law must be gamma-log or bernoulli-logit");
    if (spec.lambda1_terms.empty()) throw config_error("first confounder model needs terms");
    validate_terms(spec.lambda1_terms);
    detail::check_conditioning("lambda1", spec.lambda1_terms, lc_a_y);

    if (spec.lambda2_family) {
        if (*spec.lambda2_family != glm_family::bernoulli_logit &&
            *spec.lambda2_family != glm_family::gaussian_identity)
            throw config_error("second confounder law must be bernoulli-logit or gaussian");
        if (spec.lambda2_terms.empty())
            throw config_error("second confounder model needs terms");
        validate_terms(spec.lambda2_terms);
        detail::check_conditioning("lambda2", spec.lambda2_terms, lc_a_y_l4);
    } else if (!spec.lambda2_terms.empty()) {
        throw config_error("second confounder terms given without a family");
    }
}

// Correctly specified estimation models derived from generating coefficients.
// Only meaningful when the generative sequence matches the estimation
// factorization; the alternative sequence has no closed-form counterpart, so
// scenarios of that kind must spell their estimation models out.
inline nuisance_spec make_default_nuisance_spec(const scenario_coefficients& coef) {
    nuisance_spec spec;
    switch (coef.kind) {
        case factorization_kind::sequential:
            spec.eta_terms = coef.eta.terms;
            spec.outcome_kind = outcome_model_kind::gaussian_linear;
            spec.mu_terms = coef.mu.terms;
            spec.pi_terms = coef.pi.terms;
            spec.lambda1_family = glm_family::gamma_log;
            spec.lambda1_terms = coef.lambda1.terms;
            if (coef.lambda2) {
                spec.lambda2_family = glm_family::bernoulli_logit;
                spec.lambda2_terms = coef.lambda2->terms;
            }
            break;
        case factorization_kind::np_beta:
            spec.known_treatment_prob = 0.5;
            spec.outcome_kind = outcome_model_kind::beta_per_arm;
            spec.pi_terms = coef.pi.terms;
            spec.lambda1_family = glm_family::bernoulli_logit;
            spec.lambda1_terms = coef.lambda1.terms;
            if (coef.lambda2) {
                spec.lambda2_family = glm_family::gaussian_identity;
                spec.lambda2_terms = coef.lambda2->terms;
            }
            break;
        case factorization_kind::alternative:
            throw config_error(
                "the alternative generative sequence has no default estimation models; "
                "specify them explicitly");
    }
    validate_nuisance_spec(spec);
    return spec;
}

inline constexpr double gamma_floor = 1e-12;

// Fitted working models plus the precomputed quadrature plans the
// estimators evaluate against. Immutable once built, safe to share across
// threads.
struct nuisance_set {
    nuisance_spec spec;
    clip_policy pi_clip;
    integration_policy integration;
    quadrature_settings quad;

    std::optional<double> known_treatment_prob;
    std::optional<fitted_glm> eta;
    std::optional<fitted_glm> mu;
    std::optional<beta_law> mu_arm0, mu_arm1;
    fitted_glm pi;
    fitted_glm lambda1;
    std::optional<fitted_glm> lambda2;

    std::vector<double> y_gauss_nodes, y_gauss_wnorm;
    std::vector<double> y_beta_nodes;
    std::array<std::vector<double>, 2> y_beta_wnorm;
    std::vector<double> lp_gamma_nodes, lp_gamma_wnorm;
    std::vector<double> lp_gauss_nodes, lp_gauss_wnorm;
    double lambda1_lgamma_shape = 0.0;

    bool fitted = false;
    bool all_converged = true;
};

namespace detail {

inline std::vector<double> normalized(const std::vector<double>& w) {
    double total = 0.0;
    for (double x : w) total += x;
    if (!(total > 0.0)) throw state_error("quadrature weights do not sum to a positive value");
    std::vector<double> out(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) out[i] = w[i] / total;
    return out;
}

inline void build_quadrature_plans(nuisance_set& ns) {
    if (ns.spec.outcome_kind == outcome_model_kind::gaussian_linear) {
        quadrature_rule r = gauss_hermite(ns.quad.y_gauss_nodes);
        ns.y_gauss_nodes = r.nodes;
        ns.y_gauss_wnorm = normalized(r.weights);
    } else {
        quadrature_rule r = gauss_legendre01(ns.quad.y_beta_nodes);
        ns.y_beta_nodes = r.nodes;
        const beta_law* laws[2] = {&*ns.mu_arm0, &*ns.mu_arm1};
        for (int a = 0; a < 2; ++a) {
            std::vector<double> w(r.nodes.size());
            for (std::size_t k = 0; k < r.nodes.size(); ++k)
                w[k] = r.weights[k] * beta_pdf(r.nodes[k], laws[a]->shape1, laws[a]->shape2);
            ns.y_beta_wnorm[a] = normalized(w);
        }
    }
    if (ns.lambda1.family == glm_family::gamma_log) {
        double alpha = ns.lambda1.dispersion.value();
        if (!(alpha > 0.0)) throw fit_error("gamma confounder law needs a positive shape");
        quadrature_rule r = gauss_genlaguerre(ns.quad.lp_gamma_nodes, alpha - 1.0);
        ns.lp_gamma_nodes = r.nodes;
        ns.lp_gamma_wnorm = normalized(r.weights);
        ns.lambda1_lgamma_shape = std::lgamma(alpha);
    }
    if (ns.lambda2 && ns.lambda2->family == glm_family::gaussian_identity) {
        quadrature_rule r = gauss_hermite(ns.quad.lp_gauss_nodes);
        ns.lp_gauss_nodes = r.nodes;
        ns.lp_gauss_wnorm = normalized(r.weights);
    }
}

}  // namespace detail

// Fit every working model on the supplied sample. Confounder laws are fit on
// complete rows only; everything else uses all rows.
inline nuisance_set fit_nuisance_set(const std::vector<coarsened_record>& records,
                                     const nuisance_spec& spec,
                                     const quadrature_settings& quad = {},
                                     const clip_policy& clip = {},
                                     const integration_policy& integration = {},
                                     glm_options glm_opts = {}) {
    validate_nuisance_spec(spec);
    if (records.empty()) throw fit_error("fit_nuisance_set: no records");
    if (integration.mc_draws < 1)
        throw config_error("monte carlo integration needs at least one draw");

    int complete_by_arm[2] = {0, 0};
    for (const auto& r : records)
        if (r.s == 1) ++complete_by_arm[r.a == 1 ? 1 : 0];
    if (complete_by_arm[0] == 0 || complete_by_arm[1] == 0)
        throw fit_error("fit_nuisance_set: need at least one complete case in each arm");

    nuisance_set ns;
    ns.spec = spec;
    ns.pi_clip = clip;
    ns.integration = integration;
    ns.quad = quad;
    glm_opts.gamma_shape_mle = spec.gamma_shape_mle;

    const int n = static_cast<int>(records.size());
    Eigen::VectorXd resp(n);

    if (spec.known_treatment_prob) {
        ns.known_treatment_prob = spec.known_treatment_prob;
    } else {
        for (int i = 0; i < n; ++i) resp(i) = static_cast<double>(records[i].a);
        ns.eta = fit_glm(glm_family::bernoulli_logit, spec.eta_terms, records, resp, nullptr,
                         glm_opts);
        ns.all_converged = ns.all_converged && ns.eta->converged;
    }

    if (spec.outcome_kind == outcome_model_kind::gaussian_linear) {
        for (int i = 0; i < n; ++i) resp(i) = records[i].y;
        ns.mu = fit_glm(glm_family::gaussian_identity, spec.mu_terms, records, resp, nullptr,
                        glm_opts);
        ns.all_converged = ns.all_converged && ns.mu->converged;
        if (!(ns.mu->dispersion.value_or(0.0) > 0.0))
            throw fit_error("fit_nuisance_set: outcome residual sd is not positive");
    } else {
        std::vector<double> y0, y1;
        for (const auto& r : records) (r.a == 1 ? y1 : y0).push_back(r.y);
        ns.mu_arm0 = fit_beta_mle(y0);
        ns.mu_arm1 = fit_beta_mle(y1);
        ns.all_converged = ns.all_converged && ns.mu_arm0->converged && ns.mu_arm1->converged;
    }

    for (int i = 0; i < n; ++i) resp(i) = static_cast<double>(records[i].s);
    ns.pi = fit_glm(glm_family::bernoulli_logit, spec.pi_terms, records, resp, nullptr, glm_opts);
    ns.all_converged = ns.all_converged && ns.pi.converged;

    std::vector<coarsened_record> complete;
    complete.reserve(records.size());
    for (const auto& r : records)
        if (r.s == 1) complete.push_back(r);

    Eigen::VectorXd l4resp(static_cast<long>(complete.size()));
    for (std::size_t i = 0; i < complete.size(); ++i) {
        if (!complete[i].l4)
            throw missing_data_error("first confounder missing on a complete row");
        l4resp(static_cast<long>(i)) = *complete[i].l4;
    }
    ns.lambda1 = fit_glm(spec.lambda1_family, spec.lambda1_terms, complete, l4resp, nullptr,
                         glm_opts);
    ns.all_converged = ns.all_converged && ns.lambda1.converged;

    if (spec.lambda2_family) {
        Eigen::VectorXd l5resp(static_cast<long>(complete.size()));
        for (std::size_t i = 0; i < complete.size(); ++i) {
            if (!complete[i].l5)
                throw missing_data_error("second confounder missing on a complete row");
            l5resp(static_cast<long>(i)) = *complete[i].l5;
        }
        ns.lambda2 = fit_glm(*spec.lambda2_family, spec.lambda2_terms, complete, l5resp, nullptr,
                             glm_opts);
        ns.all_converged = ns.all_converged && ns.lambda2->converged;
        if (ns.lambda2->family == glm_family::gaussian_identity &&
            !(ns.lambda2->dispersion.value_or(0.0) > 0.0))
            throw fit_error("fit_nuisance_set: second confounder residual sd is not positive");
    }

    detail::build_quadrature_plans(ns);
    ns.fitted = true;
    return ns;
}

// Evaluation-ready models taken straight from generating coefficients, with
// clipping off by default. Only defined for sequences whose generating
// models coincide with the estimation factorization.
inline nuisance_set true_nuisance_set(const scenario_coefficients& coef,
                                      const quadrature_settings& quad = {},
                                      const clip_policy& clip = {false, 0.01, 0.99},
                                      const integration_policy& integration = {}) {
    validate_coefficients(coef);
    nuisance_set ns;
    ns.pi_clip = clip;
    ns.integration = integration;
    ns.quad = quad;

    auto as_glm = [](const linear_model_spec& m, glm_family fam,
                     std::optional<double> dispersion) {
        fitted_glm f;
        f.terms = m.terms;
        f.coef = m.coef;
        f.family = fam;
        f.dispersion = dispersion;
        return f;
    };

    switch (coef.kind) {
        case factorization_kind::sequential: {
            ns.spec.eta_terms = coef.eta.terms;
            ns.spec.outcome_kind = outcome_model_kind::gaussian_linear;
            ns.spec.mu_terms = coef.mu.terms;
            ns.spec.pi_terms = coef.pi.terms;
            ns.spec.lambda1_family = glm_family::gamma_log;
            ns.spec.lambda1_terms = coef.lambda1.terms;
            ns.eta = as_glm(coef.eta, glm_family::bernoulli_logit, std::nullopt);
            ns.mu = as_glm(coef.mu, glm_family::gaussian_identity, coef.sigma_y);
            ns.pi = as_glm(coef.pi, glm_family::bernoulli_logit, std::nullopt);
            ns.lambda1 = as_glm(coef.lambda1, glm_family::gamma_log, coef.alpha);
            if (coef.lambda2) {
                ns.spec.lambda2_family = glm_family::bernoulli_logit;
                ns.spec.lambda2_terms = coef.lambda2->terms;
                ns.lambda2 = as_glm(*coef.lambda2, glm_family::bernoulli_logit, std::nullopt);
            }
            break;
        }
        case factorization_kind::np_beta: {
            ns.spec.known_treatment_prob = 0.5;
            ns.spec.outcome_kind = outcome_model_kind::beta_per_arm;
            ns.spec.pi_terms = coef.pi.terms;
            ns.spec.lambda1_family = glm_family::bernoulli_logit;
            ns.spec.lambda1_terms = coef.lambda1.terms;
            ns.known_treatment_prob = 0.5;
            ns.mu_arm0 = beta_law{np_beta_arm0_shape1, np_beta_arm0_shape2, true};
            ns.mu_arm1 = beta_law{np_beta_arm1_shape1, np_beta_arm1_shape2, true};
            ns.pi = as_glm(coef.pi, glm_family::bernoulli_logit, std::nullopt);
            ns.lambda1 = as_glm(coef.lambda1, glm_family::bernoulli_logit, std::nullopt);
            if (coef.lambda2) {
                ns.spec.lambda2_family = glm_family::gaussian_identity;
                ns.spec.lambda2_terms = coef.lambda2->terms;
                ns.lambda2 =
                    as_glm(*coef.lambda2, glm_family::gaussian_identity, coef.lambda2_sigma);
            }
            break;
        }
        case factorization_kind::alternative:
            throw config_error(
                "true working models are not available in closed form for the alternative "
                "generative sequence");
    }
    detail::build_quadrature_plans(ns);
    ns.fitted = true;
    return ns;
}

// Evaluation point for the always-observed covariates.
struct lc_point {
    double l1 = 0.0, l2 = 0.0, l3 = 0.0;
};

// Evaluation point for the partially missing confounders.
struct lp_point {
    double l4 = 0.0;
    std::optional<double> l5;
};

struct bg_value {
    double beta = 0.0;
    double gamma = 0.0;

    double ratio() const { return beta / gamma; }
};

namespace detail {

struct lp_node {
    double l4 = 0.0;
    double l5 = 0.0;
    bool has_l5 = false;
    double w = 0.0;
};

}  // namespace detail

// Per-record evaluation engine. Construction caches everything that depends
// only on the always-observed covariates; the per-arm outcome plans and the
// outcome-model linear predictors of the confounder laws are reused across
// every integral evaluated for the record.
class functional_evaluator {
  public:
    functional_evaluator(const nuisance_set& ns, double l1, double l2, double l3)
        : ns_(ns) {
        if (!ns.fitted) throw state_error("nuisance set has not been fitted");
        base_.set(var::l1, l1);
        base_.set(var::l2, l2);
        base_.set(var::l3, l3);
        scratch_ = base_;

        double p1;
        if (ns.known_treatment_prob) {
            p1 = *ns.known_treatment_prob;
        } else {
            p1 = expit(ns.eta->linpred(base_));
        }
        eta_[0] = 1.0 - p1;
        eta_[1] = p1;

        for (int a = 0; a < 2; ++a) {
            arm_ctx& c = arm_[a];
            probe p = base_;
            p.set(var::a, static_cast<double>(a));
            if (ns.spec.outcome_kind == outcome_model_kind::gaussian_linear) {
                double m = ns.mu->linpred(p);
                double s = ns.mu->dispersion.value();
                c.y_nodes.resize(ns.y_gauss_nodes.size());
                const double scale = std::sqrt(2.0) * s;
                for (std::size_t k = 0; k < ns.y_gauss_nodes.size(); ++k)
                    c.y_nodes[k] = m + scale * ns.y_gauss_nodes[k];
                c.y_w = &ns.y_gauss_wnorm;
            } else {
                c.y_nodes = ns.y_beta_nodes;
                c.y_w = &ns.y_beta_wnorm[a];
            }
            c.q1 = decompose_in(var::y, ns.lambda1.terms, ns.lambda1.coef, p);
        }
        if (ns.lambda1.family == glm_family::gamma_log) {
            alpha_ = ns.lambda1.dispersion.value();
            lgam_alpha_ = ns.lambda1_lgamma_shape;
            alpha_log_alpha_ = alpha_ * std::log(alpha_);
        }
    }

    double eta_prob(int a) const { return eta_[a == 1 ? 1 : 0]; }

    double pi_prob(int a, double y, bool* clipped = nullptr) const {
        scratch_.set(var::a, static_cast<double>(a));
        scratch_.set(var::y, y);
        double p = expit(ns_.pi.linpred(scratch_));
        return ns_.pi_clip.apply(p, clipped);
    }

    // Numerator and normalizer of the conditional outcome-mean functional at
    // a fixed confounder value: the outcome integral of y (resp. 1) against
    // the confounder law treated as a function of the outcome.
    bg_value beta_gamma(int a, const lp_point& lp) const {
        const arm_ctx& c = arm_[a == 1 ? 1 : 0];
        free_var_poly q2;
        bool has_l2model = false;
        if (lp.l5.has_value()) {
            if (!ns_.lambda2)
                throw schema_error("second confounder value given but no second confounder law");
            scratch_.set(var::a, static_cast<double>(a));
            scratch_.set(var::l4, lp.l4);
            q2 = decompose_in(var::y, ns_.lambda2->terms, ns_.lambda2->coef, scratch_);
            has_l2model = true;
        } else if (ns_.lambda2) {
            throw schema_error("second confounder law present but no value supplied");
        }

        bg_value out;
        const std::vector<double>& w = *c.y_w;
        if (ns_.lambda1.family == glm_family::gamma_log) {
            const double pref = alpha_log_alpha_ - lgam_alpha_ + (alpha_ - 1.0) * std::log(lp.l4);
            for (std::size_t k = 0; k < c.y_nodes.size(); ++k) {
                const double y = c.y_nodes[k];
                const double t = c.q1.at(y);
                const double lam1 = std::exp(pref - alpha_ * t - alpha_ * std::exp(-t) * lp.l4);
                double lam = lam1;
                if (has_l2model) lam *= lambda2_density(q2, y, *lp.l5);
                const double ww = w[k] * lam;
                out.gamma += ww;
                out.beta += ww * y;
            }
        } else {
            const bool l4_on = lp.l4 > 0.5;
            for (std::size_t k = 0; k < c.y_nodes.size(); ++k) {
                const double y = c.y_nodes[k];
                const double p = expit(c.q1.at(y));
                double lam = l4_on ? p : 1.0 - p;
                if (has_l2model) lam *= lambda2_density(q2, y, *lp.l5);
                const double ww = w[k] * lam;
                out.gamma += ww;
                out.beta += ww * y;
            }
        }
        if (out.gamma < gamma_floor) out.gamma = gamma_floor;
        return out;
    }

    double tau(const lp_point& lp) const {
        return eta_[0] * beta_gamma(0, lp).gamma + eta_[1] * beta_gamma(1, lp).gamma;
    }

    // Projection of the conditional outcome mean for target arm a onto the
    // observed data: the confounder integral of beta/gamma against the
    // confounder law at the observed treatment and outcome.
    double b_a1(int a_obs, double y_obs, int a) const {
        make_lp_plan(a_obs, y_obs);
        double acc = 0.0;
        for (const auto& node : plan_buf_) {
            lp_point lp{node.l4, node.has_l5 ? std::optional<double>(node.l5) : std::nullopt};
            acc += node.w * beta_gamma(a, lp).ratio();
        }
        return acc;
    }

    // Companion projection of the weighted outcome residual, integrated
    // against the confounder law at the target arm and the observed outcome.
    double b_a2(double y_obs, int a) const {
        make_lp_plan(a, y_obs);
        double acc = 0.0;
        for (const auto& node : plan_buf_) {
            lp_point lp{node.l4, node.has_l5 ? std::optional<double>(node.l5) : std::nullopt};
            bg_value g0 = beta_gamma(0, lp);
            bg_value g1 = beta_gamma(1, lp);
            const bg_value& ga = (a == 1) ? g1 : g0;
            double tau_here = eta_[0] * g0.gamma + eta_[1] * g1.gamma;
            acc += node.w * (tau_here / ga.gamma) * (y_obs - ga.ratio());
        }
        return acc;
    }

    // All influence-function ingredients for one record in a single pass,
    // sharing the two confounder-law plans across target arms.
    struct record_eval {
        double b1[2] = {0.0, 0.0};
        double b2[2] = {0.0, 0.0};
        double xi_obs[2] = {0.0, 0.0};
        double gamma_obs[2] = {gamma_floor, gamma_floor};
        double tau_obs = 0.0;
        double eta[2] = {0.5, 0.5};
        double pi = 1.0;
        bool clipped = false;
    };

    record_eval evaluate(const coarsened_record& r) const {
        record_eval out;
        out.eta[0] = eta_[0];
        out.eta[1] = eta_[1];
        const int a_obs = r.a == 1 ? 1 : 0;

        for (int cond = 0; cond < 2; ++cond) {
            make_lp_plan(cond, r.y);
            double b2acc = 0.0;
            double b1acc[2] = {0.0, 0.0};
            for (const auto& node : plan_buf_) {
                lp_point lp{node.l4,
                            node.has_l5 ? std::optional<double>(node.l5) : std::nullopt};
                bg_value g0 = beta_gamma(0, lp);
                bg_value g1 = beta_gamma(1, lp);
                const bg_value& gc = (cond == 1) ? g1 : g0;
                double tau_here = eta_[0] * g0.gamma + eta_[1] * g1.gamma;
                b2acc += node.w * (tau_here / gc.gamma) * (r.y - gc.ratio());
                if (cond == a_obs) {
                    b1acc[0] += node.w * g0.ratio();
                    b1acc[1] += node.w * g1.ratio();
                }
            }
            out.b2[cond] = b2acc;
            if (cond == a_obs) {
                out.b1[0] = b1acc[0];
                out.b1[1] = b1acc[1];
            }
        }

        if (r.s == 1) {
            out.pi = pi_prob(r.a, r.y, &out.clipped);
            lp_point lp{r.l4.value(), r.l5};
            bg_value g0 = beta_gamma(0, lp);
            bg_value g1 = beta_gamma(1, lp);
            out.xi_obs[0] = g0.ratio();
            out.xi_obs[1] = g1.ratio();
            out.gamma_obs[0] = g0.gamma;
            out.gamma_obs[1] = g1.gamma;
            out.tau_obs = eta_[0] * g0.gamma + eta_[1] * g1.gamma;
        }
        return out;
    }

    // Outcome-law expectation of an arbitrary function at this covariate
    // point and arm.
    template <class F>
    double expect_y(int a, F&& f) const {
        const arm_ctx& c = arm_[a == 1 ? 1 : 0];
        const std::vector<double>& w = *c.y_w;
        double acc = 0.0;
        for (std::size_t k = 0; k < c.y_nodes.size(); ++k) acc += w[k] * f(c.y_nodes[k]);
        return acc;
    }

  private:
    struct arm_ctx {
        std::vector<double> y_nodes;
        const std::vector<double>* y_w = nullptr;
        free_var_poly q1;
    };

    double lambda2_density(const free_var_poly& q2, double y, double l5) const {
        if (ns_.lambda2->family == glm_family::bernoulli_logit) {
            double p = expit(q2.at(y));
            return l5 > 0.5 ? p : 1.0 - p;
        }
        double s = ns_.lambda2->dispersion.value();
        double z = (l5 - q2.at(y)) / s;
        return std::exp(-0.5 * z * z) / (s * 2.5066282746310005024);
    }

    // Discretize the confounder law at a conditioning arm and outcome into
    // weighted nodes, either by quadrature or by a seeded Monte Carlo draw.
    void make_lp_plan(int a_cond, double y_cond) const {
        plan_buf_.clear();
        scratch_.set(var::a, static_cast<double>(a_cond));
        scratch_.set(var::y, y_cond);

        if (ns_.integration.monte_carlo) {
            make_lp_plan_mc(a_cond, y_cond);
            return;
        }

        struct l4_node {
            double v, w;
        };
        std::array<l4_node, 2> two_point;
        const l4_node* l4_begin;
        std::size_t l4_count;
        std::vector<l4_node> cont;
        if (ns_.lambda1.family == glm_family::gamma_log) {
            double lin = ns_.lambda1.linpred(scratch_);
            double rate = alpha_ * std::exp(-lin);
            cont.resize(ns_.lp_gamma_nodes.size());
            for (std::size_t k = 0; k < cont.size(); ++k)
                cont[k] = {ns_.lp_gamma_nodes[k] / rate, ns_.lp_gamma_wnorm[k]};
            l4_begin = cont.data();
            l4_count = cont.size();
        } else {
            double p1 = expit(ns_.lambda1.linpred(scratch_));
            two_point[0] = {0.0, 1.0 - p1};
            two_point[1] = {1.0, p1};
            l4_begin = two_point.data();
            l4_count = 2;
        }

        if (!ns_.lambda2) {
            for (std::size_t i = 0; i < l4_count; ++i)
                plan_buf_.push_back({l4_begin[i].v, 0.0, false, l4_begin[i].w});
            return;
        }
        for (std::size_t i = 0; i < l4_count; ++i) {
            scratch_.set(var::l4, l4_begin[i].v);
            double lin2 = ns_.lambda2->linpred(scratch_);
            if (ns_.lambda2->family == glm_family::bernoulli_logit) {
                double p2 = expit(lin2);
                plan_buf_.push_back({l4_begin[i].v, 0.0, true, l4_begin[i].w * (1.0 - p2)});
                plan_buf_.push_back({l4_begin[i].v, 1.0, true, l4_begin[i].w * p2});
            } else {
                double s2 = ns_.lambda2->dispersion.value();
                const double scale = std::sqrt(2.0) * s2;
                for (std::size_t j = 0; j < ns_.lp_gauss_nodes.size(); ++j)
                    plan_buf_.push_back({l4_begin[i].v, lin2 + scale * ns_.lp_gauss_nodes[j],
                                         true, l4_begin[i].w * ns_.lp_gauss_wnorm[j]});
            }
        }
    }

    void make_lp_plan_mc(int a_cond, double y_cond) const {
        std::uint64_t h = ns_.integration.mc_seed;
        auto fold = [&h](double x) {
            std::uint64_t bits;
            __builtin_memcpy(&bits, &x, sizeof bits);
            h = mix64(h ^ bits);
        };
        fold(base_.get(var::l1));
        fold(base_.get(var::l2));
        fold(base_.get(var::l3));
        fold(static_cast<double>(a_cond));
        fold(y_cond);
        rng_stream rng = rng_stream::keyed(h, 0, rng_stage::mc_nodes);

        const double w = 1.0 / static_cast<double>(ns_.integration.mc_draws);
        const bool gamma1 = ns_.lambda1.family == glm_family::gamma_log;
        double lin1 = ns_.lambda1.linpred(scratch_);
        double p1 = 0.0, rate = 0.0;
        if (gamma1)
            rate = alpha_ * std::exp(-lin1);
        else
            p1 = expit(lin1);
        for (int d = 0; d < ns_.integration.mc_draws; ++d) {
            double l4 = gamma1 ? rng.gamma(alpha_, rate) : (rng.u01() < p1 ? 1.0 : 0.0);
            if (!ns_.lambda2) {
                plan_buf_.push_back({l4, 0.0, false, w});
                continue;
            }
            scratch_.set(var::l4, l4);
            double lin2 = ns_.lambda2->linpred(scratch_);
            double l5;
            if (ns_.lambda2->family == glm_family::bernoulli_logit)
                l5 = rng.u01() < expit(lin2) ? 1.0 : 0.0;
            else
                l5 = rng.normal(lin2, ns_.lambda2->dispersion.value());
            plan_buf_.push_back({l4, l5, true, w});
        }
    }

    const nuisance_set& ns_;
    probe base_;
    mutable probe scratch_;
    arm_ctx arm_[2];
    double eta_[2] = {0.5, 0.5};
    double alpha_ = 0.0, lgam_alpha_ = 0.0, alpha_log_alpha_ = 0.0;
    mutable std::vector<detail::lp_node> plan_buf_;
};

inline double eta_prob(const nuisance_set& ns, const lc_point& lc, int a) {
    return functional_evaluator(ns, lc.l1, lc.l2, lc.l3).eta_prob(a);
}

inline double pi_prob(const nuisance_set& ns, const lc_point& lc, int a, double y,
                      bool* clipped = nullptr) {
    return functional_evaluator(ns, lc.l1, lc.l2, lc.l3).pi_prob(a, y, clipped);
}

inline bg_value beta_gamma(const nuisance_set& ns, const lc_point& lc, int a,
                           const lp_point& lp) {
    return functional_evaluator(ns, lc.l1, lc.l2, lc.l3).beta_gamma(a, lp);
}

inline double tau(const nuisance_set& ns, const lc_point& lc, const lp_point& lp) {
    return functional_evaluator(ns, lc.l1, lc.l2, lc.l3).tau(lp);
}

inline double b_a1(const nuisance_set& ns, const lc_point& lc, int a_obs, double y_obs, int a) {
    return functional_evaluator(ns, lc.l1, lc.l2, lc.l3).b_a1(a_obs, y_obs, a);
}

inline double b_a2(const nuisance_set& ns, const lc_point& lc, double y_obs, int a) {
    return functional_evaluator(ns, lc.l1, lc.l2, lc.l3).b_a2(y_obs, a);
}

// Outcome-law expectation of f at a covariate point and arm.
template <class F>
inline double expect_outcome(const nuisance_set& ns, const lc_point& lc, int a, F&& f) {
    return functional_evaluator(ns, lc.l1, lc.l2, lc.l3).expect_y(a, std::forward<F>(f));
}

}  // namespace ccmar
