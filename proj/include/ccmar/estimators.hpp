#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ccmar/coefficients.hpp"
#include "ccmar/error.hpp"
#include "ccmar/glm.hpp"
#include "ccmar/lasso.hpp"
#include "ccmar/nuisance.hpp"
#include "ccmar/records.hpp"
#include "ccmar/rng.hpp"
#include "ccmar/terms.hpp"

namespace ccmar {

struct estimate_flags {
    bool nonconverged = false;
    bool clipped = false;
    bool failed = false;
};

struct estimate_record {
    std::string estimator;
    double chi1 = std::numeric_limits<double>::quiet_NaN();
    double chi0 = std::numeric_limits<double>::quiet_NaN();
    double ate = std::numeric_limits<double>::quiet_NaN();
    estimate_flags flags;
};

// ---------------------------------------------------------------------------
// Estimator identifiers
// ---------------------------------------------------------------------------

enum class adjustment_kind { outcome_regression, ipw };
enum class fit_variant { plain, pairwise_lasso };
enum class imputation_variant { none, true_dgp, simple, pairwise_lasso };

inline const char* adjustment_name(adjustment_kind a) {
    return a == adjustment_kind::outcome_regression ? "or" : "ipw";
}
inline const char* fit_variant_name(fit_variant v) {
    return v == fit_variant::plain ? "plain" : "pairwise-lasso";
}
inline const char* imputation_name(imputation_variant v) {
    switch (v) {
        case imputation_variant::none: return "none";
        case imputation_variant::true_dgp: return "true-dgp";
        case imputation_variant::simple: return "simple";
        case imputation_variant::pairwise_lasso: return "pairwise-lasso";
    }
    return "?";
}

struct estimator_id {
    enum class kind_t { ccmar_if, ccmar_iwor, comparator } kind = kind_t::ccmar_if;
    adjustment_kind adj = adjustment_kind::outcome_regression;
    fit_variant fit = fit_variant::plain;
    imputation_variant imp = imputation_variant::none;

    std::string name() const {
        switch (kind) {
            case kind_t::ccmar_if: return "ccmar-if";
            case kind_t::ccmar_iwor: return "ccmar-iwor";
            case kind_t::comparator:
                return std::string(adjustment_name(adj)) + "-" + fit_variant_name(fit) +
                       "-imp-" + imputation_name(imp);
        }
        return "?";
    }

    bool operator==(const estimator_id& o) const {
        if (kind != o.kind) return false;
        if (kind != kind_t::comparator) return true;
        return adj == o.adj && fit == o.fit && imp == o.imp;
    }
};

inline std::vector<estimator_id> all_estimator_ids() {
    std::vector<estimator_id> ids;
    ids.push_back({estimator_id::kind_t::ccmar_if, {}, {}, {}});
    ids.push_back({estimator_id::kind_t::ccmar_iwor, {}, {}, {}});
    for (adjustment_kind adj : {adjustment_kind::outcome_regression, adjustment_kind::ipw})
        for (fit_variant fv : {fit_variant::plain, fit_variant::pairwise_lasso})
            for (imputation_variant iv :
                 {imputation_variant::none, imputation_variant::true_dgp,
                  imputation_variant::simple, imputation_variant::pairwise_lasso})
                ids.push_back({estimator_id::kind_t::comparator, adj, fv, iv});
    return ids;
}

inline estimator_id parse_estimator_id(const std::string& s) {
    for (const auto& id : all_estimator_ids())
        if (id.name() == s) return id;
    throw config_error("unknown estimator id '" + s + "'");
}

// ---------------------------------------------------------------------------
// Influence-function and inverse-weighted estimators
// ---------------------------------------------------------------------------

namespace detail {

struct ccmar_contrib {
    double if1 = 0.0, if0 = 0.0;
    double iwor1 = 0.0, iwor0 = 0.0;
    bool clipped = false;
};

inline ccmar_contrib ccmar_record_contrib(const functional_evaluator& ev,
                                          const coarsened_record& r) {
    auto e = ev.evaluate(r);
    ccmar_contrib c;
    c.clipped = e.clipped;
    for (int a = 0; a < 2; ++a) {
        const double ind = (r.a == a) ? 1.0 / e.eta[a] : 0.0;
        double t = e.b1[a] + ind * e.b2[a];
        double iwor = 0.0;
        if (r.s == 1) {
            const double xi = e.xi_obs[a];
            const double corr =
                xi - e.b1[a] +
                ind * ((e.tau_obs / e.gamma_obs[a]) * (r.y - xi) - e.b2[a]);
            t += corr / e.pi;
            iwor = xi / e.pi;
        }
        if (a == 1) {
            c.if1 = t;
            c.iwor1 = iwor;
        } else {
            c.if0 = t;
            c.iwor0 = iwor;
        }
    }
    return c;
}

}  // namespace detail

// Inverse-weighted outcome-mean estimator for one arm: complete rows
// contribute beta/gamma at their observed confounders over the missingness
// probability, incomplete rows contribute zero, and the average runs over
// the full sample.
inline double chi_iwor(const nuisance_set& ns, const std::vector<coarsened_record>& records,
                       int a) {
    if (records.empty()) throw domain_error("chi_iwor: no records");
    double acc = 0.0;
    for (const auto& r : records) {
        if (r.s != 1) continue;
        functional_evaluator ev(ns, r.l1, r.l2, r.l3);
        lp_point lp{r.l4.value(), r.l5};
        double xi = ev.beta_gamma(a, lp).ratio();
        acc += xi / ev.pi_prob(r.a, r.y);
    }
    return acc / static_cast<double>(records.size());
}

// Influence-function estimator for one arm.
inline double chi_if(const nuisance_set& ns, const std::vector<coarsened_record>& records,
                     int a) {
    if (records.empty()) throw domain_error("chi_if: no records");
    double acc = 0.0;
    for (const auto& r : records) {
        functional_evaluator ev(ns, r.l1, r.l2, r.l3);
        auto c = detail::ccmar_record_contrib(ev, r);
        acc += (a == 1) ? c.if1 : c.if0;
    }
    return acc / static_cast<double>(records.size());
}

// Everything needed to fit a nuisance set inside a replicate.
struct nuisance_fit_context {
    nuisance_spec spec;
    quadrature_settings quad;
    clip_policy clip;
    integration_policy integration;
    glm_options glm_opts;
};

struct ccmar_estimates {
    double if1 = 0.0, if0 = 0.0;
    double iwor1 = 0.0, iwor0 = 0.0;
    estimate_flags flags;
};

struct crossfit_options {
    int folds = 2;
    std::uint64_t seed = 0;
    // When non-empty, explicit fold assignment per record (values in
    // [0, folds)); otherwise folds are derived from record content so the
    // assignment is invariant to row order.
    std::vector<int> fold_override;
};

namespace detail {

inline std::vector<int> assign_folds(const std::vector<coarsened_record>& records,
                                     const crossfit_options& cf) {
    const int n = static_cast<int>(records.size());
    if (!cf.fold_override.empty()) {
        if (static_cast<int>(cf.fold_override.size()) != n)
            throw config_error("fold override length does not match record count");
        for (int f : cf.fold_override)
            if (f < 0 || f >= cf.folds) throw config_error("fold override value out of range");
        return cf.fold_override;
    }
    std::vector<int> fold(n);
    const std::uint64_t salt = mix64(cf.seed ^ 0xA24BAED4963EE407ull);
    for (int i = 0; i < n; ++i) {
        std::uint64_t h = record_hash(records[i], salt);
        fold[i] = static_cast<int>(
            (static_cast<unsigned __int128>(h) * static_cast<unsigned>(cf.folds)) >> 64);
    }
    return fold;
}

}  // namespace detail

// Both estimators with optional sample splitting. With folds >= 2 each
// fold is evaluated under models fitted on its complement and the final
// estimate is the unweighted mean of the fold means; folds == 1 fits and
// evaluates on the full sample.
inline ccmar_estimates crossfit_ate(const std::vector<coarsened_record>& records,
                                    const nuisance_fit_context& ctx,
                                    const crossfit_options& cf = {}) {
    if (cf.folds < 1) throw config_error("crossfit_ate: need at least one fold");
    if (records.empty()) throw domain_error("crossfit_ate: no records");

    ccmar_estimates out;
    if (cf.folds == 1) {
        nuisance_set ns = fit_nuisance_set(records, ctx.spec, ctx.quad, ctx.clip,
                                           ctx.integration, ctx.glm_opts);
        out.flags.nonconverged = !ns.all_converged;
        double if1 = 0.0, if0 = 0.0, iwor1 = 0.0, iwor0 = 0.0;
        for (const auto& r : records) {
            functional_evaluator ev(ns, r.l1, r.l2, r.l3);
            auto c = detail::ccmar_record_contrib(ev, r);
            if1 += c.if1;
            if0 += c.if0;
            iwor1 += c.iwor1;
            iwor0 += c.iwor0;
            out.flags.clipped = out.flags.clipped || c.clipped;
        }
        const double n = static_cast<double>(records.size());
        out.if1 = if1 / n;
        out.if0 = if0 / n;
        out.iwor1 = iwor1 / n;
        out.iwor0 = iwor0 / n;
        return out;
    }

    std::vector<int> fold = detail::assign_folds(records, cf);
    double if1 = 0.0, if0 = 0.0, iwor1 = 0.0, iwor0 = 0.0;
    int used_folds = 0;
    for (int f = 0; f < cf.folds; ++f) {
        std::vector<coarsened_record> train, eval;
        for (std::size_t i = 0; i < records.size(); ++i)
            (fold[i] == f ? eval : train).push_back(records[i]);
        if (eval.empty()) continue;
        if (train.empty()) throw fit_error("crossfit_ate: a fold holds every record");
        nuisance_set ns = fit_nuisance_set(train, ctx.spec, ctx.quad, ctx.clip,
                                           ctx.integration, ctx.glm_opts);
        out.flags.nonconverged = out.flags.nonconverged || !ns.all_converged;
        double f_if1 = 0.0, f_if0 = 0.0, f_iwor1 = 0.0, f_iwor0 = 0.0;
        for (const auto& r : eval) {
            functional_evaluator ev(ns, r.l1, r.l2, r.l3);
            auto c = detail::ccmar_record_contrib(ev, r);
            f_if1 += c.if1;
            f_if0 += c.if0;
            f_iwor1 += c.iwor1;
            f_iwor0 += c.iwor0;
            out.flags.clipped = out.flags.clipped || c.clipped;
        }
        const double m = static_cast<double>(eval.size());
        if1 += f_if1 / m;
        if0 += f_if0 / m;
        iwor1 += f_iwor1 / m;
        iwor0 += f_iwor0 / m;
        ++used_folds;
    }
    if (used_folds == 0) throw fit_error("crossfit_ate: every fold is empty");
    out.if1 = if1 / used_folds;
    out.if0 = if0 / used_folds;
    out.iwor1 = iwor1 / used_folds;
    out.iwor0 = iwor0 / used_folds;
    return out;
}

// ---------------------------------------------------------------------------
// Imputation
// ---------------------------------------------------------------------------

namespace detail {

inline bool column_is_binary(const std::vector<double>& v) {
    for (double x : v)
        if (x != 0.0 && x != 1.0) return false;
    return true;
}

inline std::vector<var> observed_predictors(bool with_l4) {
    std::vector<var> vars{var::l1, var::l2, var::l3, var::a, var::y};
    if (with_l4) vars.insert(vars.begin() + 3, var::l4);
    return vars;
}

struct imputation_model {
    fitted_glm fit;
    bool binary = false;    // draw bernoulli instead of a continuous value
    bool positive = false;  // clamp continuous draws away from zero
};

// One confounder model fitted on complete rows.
inline imputation_model fit_imputation_model(
    const std::vector<coarsened_record>& complete, var target, imputation_variant variant,
    const scenario_coefficients& coef, std::uint64_t lasso_seed, const lasso_options& lopts,
    const glm_options& gopts) {
    std::vector<double> values;
    values.reserve(complete.size());
    for (const auto& r : complete) {
        const std::optional<double>& v = (target == var::l4) ? r.l4 : r.l5;
        if (!v) throw missing_data_error("confounder missing on a complete row");
        values.push_back(*v);
    }
    Eigen::VectorXd y = Eigen::Map<Eigen::VectorXd>(values.data(),
                                                    static_cast<long>(values.size()));
    const bool binary = column_is_binary(values);
    imputation_model out;
    out.binary = binary;

    if (variant == imputation_variant::true_dgp) {
        // Refit the generating family and terms; only coefficients (and any
        // shape or scale) come from the sample.
        const linear_model_spec& gen =
            (target == var::l4) ? coef.lambda1 : coef.lambda2.value();
        glm_family fam;
        if (target == var::l4)
            fam = (coef.kind == factorization_kind::np_beta) ? glm_family::bernoulli_logit
                                                             : glm_family::gamma_log;
        else
            fam = (coef.kind == factorization_kind::np_beta) ? glm_family::gaussian_identity
                                                             : glm_family::bernoulli_logit;
        out.fit = fit_glm(fam, gen.terms, complete, y, nullptr, gopts);
        out.positive = (fam == glm_family::gamma_log);
        out.binary = (fam == glm_family::bernoulli_logit);
        return out;
    }

    std::vector<var> preds = observed_predictors(target == var::l5);
    if (variant == imputation_variant::simple) {
        std::vector<term> terms = main_effect_terms(preds);
        glm_family fam = binary ? glm_family::bernoulli_logit : glm_family::gaussian_identity;
        out.fit = fit_glm(fam, terms, complete, y, nullptr, gopts);
        out.positive = !binary && (target == var::l4);
        return out;
    }

    // pairwise-lasso
    std::vector<term> terms = pairwise_terms(preds);
    glm_family fam = binary ? glm_family::bernoulli_logit : glm_family::gaussian_identity;
    out.fit = fit_lasso_glm(fam, terms, complete, y, 5, lasso_seed, lopts);
    out.positive = !binary && (target == var::l4);
    return out;
}

inline double draw_from_model(const imputation_model& m, const probe& p, rng_stream& rng) {
    if (m.binary) {
        double prob = expit(m.fit.linpred(p));
        return rng.u01() < prob ? 1.0 : 0.0;
    }
    switch (m.fit.family) {
        case glm_family::gamma_log: {
            double shape = m.fit.dispersion.value();
            double mean = std::exp(m.fit.linpred(p));
            return rng.gamma(shape, shape / mean);
        }
        case glm_family::gaussian_identity: {
            double draw = rng.normal(m.fit.linpred(p), m.fit.dispersion.value());
            if (m.positive && draw < 1e-6) draw = 1e-6;
            return draw;
        }
        default:
            throw state_error("imputation model has an unexpected family");
    }
}

}  // namespace detail

// Fill the missing confounders of incomplete rows with draws from models
// fitted on the complete rows, producing m completed copies of the sample.
// Complete rows pass through untouched; every completed row reports s == 1.
inline std::vector<std::vector<coarsened_record>> impute(
    const std::vector<coarsened_record>& records, imputation_variant variant,
    const scenario_coefficients& coef, int m, std::uint64_t seed,
    const lasso_options& lopts = {}, const glm_options& gopts = {}) {
    if (variant == imputation_variant::none)
        throw config_error("impute: the none variant draws nothing");
    if (m < 1) throw config_error("impute: need at least one completed copy");

    std::vector<coarsened_record> complete;
    bool has_l5 = false;
    for (const auto& r : records) {
        if (r.s == 1) {
            complete.push_back(r);
            has_l5 = has_l5 || r.l5.has_value();
        }
    }
    if (complete.empty()) throw fit_error("impute: no complete rows to fit on");

    const std::uint64_t variant_salt =
        mix64(seed ^ mix64(static_cast<std::uint64_t>(variant) + 0x9E3779B97F4A7C15ull));
    detail::imputation_model l4_model = detail::fit_imputation_model(
        complete, var::l4, variant, coef, stream_seed(variant_salt, 0, rng_stage::lasso_folds),
        lopts, gopts);
    std::optional<detail::imputation_model> l5_model;
    if (has_l5)
        l5_model = detail::fit_imputation_model(
            complete, var::l5, variant, coef,
            stream_seed(variant_salt, 1, rng_stage::lasso_folds), lopts, gopts);

    std::vector<std::vector<coarsened_record>> out;
    out.reserve(m);
    for (int copy = 0; copy < m; ++copy) {
        rng_stream rng = rng_stream::keyed(variant_salt, static_cast<std::uint64_t>(copy),
                                           rng_stage::impute);
        std::vector<coarsened_record> filled = records;
        for (auto& r : filled) {
            if (r.s == 1) continue;
            probe p = make_probe(r);
            p.coarsened = false;
            double l4 = detail::draw_from_model(l4_model, p, rng);
            r.l4 = l4;
            if (l5_model) {
                p.set(var::l4, l4);
                r.l5 = detail::draw_from_model(*l5_model, p, rng);
            }
            r.s = 1;
        }
        out.push_back(std::move(filled));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Comparator pipelines
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<var> adjustment_vars(const std::vector<coarsened_record>& records) {
    bool has_l5 = false;
    for (const auto& r : records)
        if (r.l5) {
            has_l5 = true;
            break;
        }
    std::vector<var> vars{var::l1, var::l2, var::l3, var::l4};
    if (has_l5) vars.push_back(var::l5);
    return vars;
}

}  // namespace detail

struct arm_means {
    double chi1 = 0.0;
    double chi0 = 0.0;

    double ate() const { return chi1 - chi0; }
};

// Outcome-regression estimate on one completed sample: fit the outcome on
// treatment plus adjusters, then standardize the two potential-outcome
// predictions over the rows in `standardize_over`.
inline arm_means ate_outcome_regression(const std::vector<coarsened_record>& fit_rows,
                                        const std::vector<coarsened_record>& standardize_over,
                                        fit_variant fv, std::uint64_t lasso_seed,
                                        const lasso_options& lopts = {},
                                        const glm_options& gopts = {}) {
    if (fit_rows.empty() || standardize_over.empty())
        throw domain_error("ate_outcome_regression: empty sample");
    std::vector<var> adj = detail::adjustment_vars(fit_rows);
    std::vector<var> all = adj;
    all.push_back(var::a);

    Eigen::VectorXd y(static_cast<long>(fit_rows.size()));
    for (std::size_t i = 0; i < fit_rows.size(); ++i) y(static_cast<long>(i)) = fit_rows[i].y;

    fitted_glm fit;
    if (fv == fit_variant::plain) {
        fit = fit_glm(glm_family::gaussian_identity, main_effect_terms(all), fit_rows, y,
                      nullptr, gopts);
    } else {
        fit = fit_lasso_glm(glm_family::gaussian_identity, pairwise_terms(all), fit_rows, y, 5,
                            lasso_seed, lopts);
    }

    arm_means out;
    for (const auto& r : standardize_over) {
        probe p = make_probe(r);
        p.coarsened = false;
        p.set(var::a, 1.0);
        out.chi1 += fit.linpred(p);
        p.set(var::a, 0.0);
        out.chi0 += fit.linpred(p);
    }
    const double n = static_cast<double>(standardize_over.size());
    out.chi1 /= n;
    out.chi0 /= n;
    return out;
}

// Ratio-form inverse-probability-weighted arm means with a propensity fit on
// treatment given the adjusters.
inline arm_means ate_ipw(const std::vector<coarsened_record>& records, fit_variant fv,
                         std::uint64_t lasso_seed, const clip_policy& clip = {},
                         const lasso_options& lopts = {}, const glm_options& gopts = {}) {
    if (records.empty()) throw domain_error("ate_ipw: empty sample");
    std::vector<var> adj = detail::adjustment_vars(records);

    Eigen::VectorXd a(static_cast<long>(records.size()));
    for (std::size_t i = 0; i < records.size(); ++i)
        a(static_cast<long>(i)) = static_cast<double>(records[i].a);

    fitted_glm fit;
    if (fv == fit_variant::plain) {
        fit = fit_glm(glm_family::bernoulli_logit, main_effect_terms(adj), records, a, nullptr,
                      gopts);
    } else {
        fit = fit_lasso_glm(glm_family::bernoulli_logit, pairwise_terms(adj), records, a, 5,
                            lasso_seed, lopts);
    }

    double num1 = 0.0, den1 = 0.0, num0 = 0.0, den0 = 0.0;
    for (const auto& r : records) {
        probe p = make_probe(r);
        p.coarsened = false;
        double e = clip.apply(expit(fit.linpred(p)));
        if (r.a == 1) {
            num1 += r.y / e;
            den1 += 1.0 / e;
        } else {
            num0 += r.y / (1.0 - e);
            den0 += 1.0 / (1.0 - e);
        }
    }
    if (den1 <= 0.0 || den0 <= 0.0) throw fit_error("ate_ipw: an arm received no weight");
    arm_means out;
    out.chi1 = num1 / den1;
    out.chi0 = num0 / den0;
    return out;
}

// Complete-case analysis: restrict to fully observed rows, then adjust.
inline arm_means complete_case_ate(const std::vector<coarsened_record>& records,
                                   adjustment_kind adj, fit_variant fv,
                                   std::uint64_t lasso_seed, const clip_policy& clip = {},
                                   const lasso_options& lopts = {},
                                   const glm_options& gopts = {}) {
    std::vector<coarsened_record> complete;
    for (const auto& r : records)
        if (r.s == 1) complete.push_back(r);
    if (complete.empty()) throw fit_error("complete_case_ate: no complete rows");
    if (adj == adjustment_kind::outcome_regression)
        return ate_outcome_regression(complete, complete, fv, lasso_seed, lopts, gopts);
    return ate_ipw(complete, fv, lasso_seed, clip, lopts, gopts);
}

// ---------------------------------------------------------------------------
// Suite runner
// ---------------------------------------------------------------------------

struct suite_context {
    nuisance_spec nspec;
    scenario_coefficients coef;
    quadrature_settings quad;
    clip_policy clip;
    integration_policy integration;
    glm_options glm_opts;
    lasso_options lasso_opts;
    int crossfit_folds = 2;
    int imputations = 1;
    std::uint64_t seed = 0;
};

namespace detail {

inline std::uint64_t id_salt(std::uint64_t seed, const estimator_id& id) {
    std::uint64_t h = mix64(seed ^ 0x6C62272E07BB0142ull);
    for (char ch : id.name()) h = mix64(h ^ static_cast<unsigned char>(ch));
    return h;
}

}  // namespace detail

// Evaluate a list of estimators on one sample. The two likelihood-based
// estimators share a single (cross)fit; comparators sharing an imputation
// variant share the completed copies. Identical ids therefore produce
// identical rows. An estimator that throws yields a failed row instead of
// aborting the rest of the suite.
inline std::vector<estimate_record> run_estimator_suite(
    const std::vector<coarsened_record>& records, const std::vector<estimator_id>& suite,
    const suite_context& ctx) {
    std::vector<estimate_record> out(suite.size());

    bool want_ccmar = false;
    for (const auto& id : suite)
        want_ccmar = want_ccmar || id.kind != estimator_id::kind_t::comparator;

    ccmar_estimates shared;
    bool ccmar_ok = false;
    std::string ccmar_error_text;
    if (want_ccmar) {
        try {
            nuisance_fit_context fc{ctx.nspec, ctx.quad, ctx.clip, ctx.integration,
                                    ctx.glm_opts};
            crossfit_options cf;
            cf.folds = ctx.crossfit_folds;
            cf.seed = stream_seed(ctx.seed, 0, rng_stage::crossfit);
            shared = crossfit_ate(records, fc, cf);
            ccmar_ok = true;
        } catch (const std::exception& e) {
            ccmar_error_text = e.what();
        }
    }

    std::map<int, std::vector<std::vector<coarsened_record>>> completed_by_variant;
    auto completed_for = [&](imputation_variant v)
        -> const std::vector<std::vector<coarsened_record>>& {
        auto it = completed_by_variant.find(static_cast<int>(v));
        if (it == completed_by_variant.end()) {
            auto copies = impute(records, v, ctx.coef, ctx.imputations,
                                 stream_seed(ctx.seed, 0, rng_stage::impute), ctx.lasso_opts,
                                 ctx.glm_opts);
            it = completed_by_variant.emplace(static_cast<int>(v), std::move(copies)).first;
        }
        return it->second;
    };

    for (std::size_t k = 0; k < suite.size(); ++k) {
        const estimator_id& id = suite[k];
        estimate_record& rec = out[k];
        rec.estimator = id.name();
        try {
            if (id.kind == estimator_id::kind_t::ccmar_if ||
                id.kind == estimator_id::kind_t::ccmar_iwor) {
                if (!ccmar_ok) throw fit_error(ccmar_error_text);
                rec.flags = shared.flags;
                if (id.kind == estimator_id::kind_t::ccmar_if) {
                    rec.chi1 = shared.if1;
                    rec.chi0 = shared.if0;
                } else {
                    rec.chi1 = shared.iwor1;
                    rec.chi0 = shared.iwor0;
                }
                rec.ate = rec.chi1 - rec.chi0;
                continue;
            }

            const std::uint64_t salt = detail::id_salt(ctx.seed, id);
            if (id.imp == imputation_variant::none) {
                arm_means m = complete_case_ate(records, id.adj, id.fit, salt, ctx.clip,
                                                ctx.lasso_opts, ctx.glm_opts);
                rec.chi1 = m.chi1;
                rec.chi0 = m.chi0;
                rec.ate = m.ate();
                continue;
            }

            const auto& copies = completed_for(id.imp);
            double chi1 = 0.0, chi0 = 0.0;
            for (std::size_t c = 0; c < copies.size(); ++c) {
                const std::uint64_t copy_salt = mix64(salt ^ (0x2545F4914F6CDD1Dull + c));
                arm_means m;
                if (id.adj == adjustment_kind::outcome_regression)
                    m = ate_outcome_regression(copies[c], copies[c], id.fit, copy_salt,
                                               ctx.lasso_opts, ctx.glm_opts);
                else
                    m = ate_ipw(copies[c], id.fit, copy_salt, ctx.clip, ctx.lasso_opts,
                                ctx.glm_opts);
                chi1 += m.chi1;
                chi0 += m.chi0;
            }
            rec.chi1 = chi1 / static_cast<double>(copies.size());
            rec.chi0 = chi0 / static_cast<double>(copies.size());
            rec.ate = rec.chi1 - rec.chi0;
        } catch (const std::exception&) {
            rec.flags.failed = true;
            rec.chi1 = std::numeric_limits<double>::quiet_NaN();
            rec.chi0 = std::numeric_limits<double>::quiet_NaN();
            rec.ate = std::numeric_limits<double>::quiet_NaN();
        }
    }
    return out;
}

}  // namespace ccmar
