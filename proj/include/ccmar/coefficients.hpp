#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ccmar/error.hpp"
#include "ccmar/terms.hpp"

namespace ccmar {

// Which generative sequence produced the data.
//  sequential:       A | L_c, then Y | L_c,A, then S | L_c,A,Y, then L_p | L_c,A,Y,S=1
//  alternative: L_p | L_c first, then A | L_c,L_p, Y | L_c,L_p,A, S | L_c,A,Y
//  np_beta:     the fixed beta-outcome design with an empty L_c
enum class factorization_kind { sequential, alternative, np_beta };

inline const char* factorization_name(factorization_kind k) {
    switch (k) {
        case factorization_kind::sequential: return "sequential";
        case factorization_kind::alternative: return "alternative";
        case factorization_kind::np_beta: return "np-beta";
    }
    return "?";
}

inline factorization_kind parse_factorization(const std::string& s) {
    if (s == "sequential") return factorization_kind::sequential;
    if (s == "alternative") return factorization_kind::alternative;
    if (s == "np-beta") return factorization_kind::np_beta;
    throw config_error("unknown factorization kind '" + s + "'");
}

struct linear_model_spec {
    std::vector<term> terms;
    Eigen::VectorXd coef;
};

// Generating models for one scenario. Under the sequential kind the slots mean
// (treatment, outcome, missingness, first confounder, second confounder)
// conditioned as listed above; under the alternative kind eta and mu also
// condition on the confounders and the lambda models condition only on
// covariates generated before them.
struct scenario_coefficients {
    factorization_kind kind = factorization_kind::sequential;
    linear_model_spec eta;
    linear_model_spec mu;
    linear_model_spec pi;
    linear_model_spec lambda1;
    std::optional<linear_model_spec> lambda2;
    double sigma_y = 0.0;       // outcome residual sd (gaussian outcome)
    double alpha = 0.0;         // gamma shape of the first confounder law
    double lambda2_sigma = 0.0; // residual sd when the second confounder is gaussian
};

// Synthetic always-observed covariate generator: l1 ~ Bernoulli(p1),
// l2 ~ Normal(m, s) truncated to [-10, 40], l3 ~ Bernoulli(p3).
struct lc_params {
    double p1 = 0.5;
    double m = 15.0;
    double s = 8.0;
    double p3 = 0.1;
};

inline constexpr double lc_l2_lower = -10.0;
inline constexpr double lc_l2_upper = 40.0;

namespace detail {

inline void check_conditioning(const std::string& model, const std::vector<term>& terms,
                               const std::set<var>& allowed) {
    for (const auto& t : terms) {
        if (t.kind == term::kind_t::intercept) continue;
        std::vector<var> used{t.v1};
        if (t.kind == term::kind_t::interaction) used.push_back(t.v2);
        for (var v : used)
            if (!allowed.count(v))
                throw config_error("model '" + model + "' may not condition on " + var_name(v));
    }
}

inline void check_model(const std::string& name, const linear_model_spec& m,
                        const std::set<var>& allowed) {
    validate_terms(m.terms);
    if (static_cast<std::size_t>(m.coef.size()) != m.terms.size())
        throw config_error("model '" + name + "': coefficient count does not match term count");
    check_conditioning(name, m.terms, allowed);
}

}  // namespace detail

// Enforce each model's legal conditioning set for the given factorization.
inline void validate_coefficients(const scenario_coefficients& c) {
    const std::set<var> lc{var::l1, var::l2, var::l3};
    std::set<var> lc_a = lc;
    lc_a.insert(var::a);
    std::set<var> lc_a_y = lc_a;
    lc_a_y.insert(var::y);
    std::set<var> lc_lp{var::l1, var::l2, var::l3, var::l4, var::l5};
    std::set<var> lc_lp_a = lc_lp;
    lc_lp_a.insert(var::a);

    switch (c.kind) {
        case factorization_kind::sequential: {
            detail::check_model("eta", c.eta, lc);
            detail::check_model("mu", c.mu, lc_a);
            detail::check_model("pi", c.pi, lc_a_y);
            detail::check_model("lambda1", c.lambda1, lc_a_y);
            if (c.lambda2) {
                std::set<var> s = lc_a_y;
                s.insert(var::l4);
                detail::check_model("lambda2", *c.lambda2, s);
            }
            if (!(c.sigma_y > 0.0)) throw config_error("sequential factorization needs sigma_y > 0");
            if (!(c.alpha > 0.0)) throw config_error("sequential factorization needs alpha > 0");
            break;
        }
        case factorization_kind::alternative: {
            detail::check_model("lambda1", c.lambda1, lc);
            if (c.lambda2) {
                std::set<var> s = lc;
                s.insert(var::l4);
                detail::check_model("lambda2", *c.lambda2, s);
            }
            detail::check_model("eta", c.eta, lc_lp);
            detail::check_model("mu", c.mu, lc_lp_a);
            detail::check_model("pi", c.pi, lc_a_y);
            if (!(c.sigma_y > 0.0)) throw config_error("alternative factorization needs sigma_y > 0");
            if (!(c.alpha > 0.0)) throw config_error("alternative factorization needs alpha > 0");
            break;
        }
        case factorization_kind::np_beta: {
            const std::set<var> ay{var::a, var::y};
            detail::check_model("pi", c.pi, ay);
            detail::check_model("lambda1", c.lambda1, ay);
            if (c.lambda2) {
                std::set<var> s = ay;
                s.insert(var::l4);
                detail::check_model("lambda2", *c.lambda2, s);
            }
            if (!(c.lambda2_sigma > 0.0))
                throw config_error("np-beta factorization needs lambda2_sigma > 0");
            break;
        }
    }
}

namespace detail {

inline linear_model_spec model_from(std::vector<term> terms, std::vector<double> coef) {
    linear_model_spec m;
    m.terms = std::move(terms);
    m.coef = Eigen::Map<Eigen::VectorXd>(coef.data(), static_cast<long>(coef.size()));
    return m;
}

}  // namespace detail

// The fixed beta-outcome design: A ~ Bernoulli(0.5); Y | A=0 ~ Beta(2,4) and
// Y | A=1 ~ Beta(4,2); S, L4 (binary) and L5 (gaussian) follow the logistic
// and linear models below. Carried as data so the same structures drive
// generation, truth computation and correctly specified estimation.
inline scenario_coefficients np_generating_coefficients() {
    using detail::model_from;
    scenario_coefficients c;
    c.kind = factorization_kind::np_beta;
    c.pi = model_from({term::intercept(), term::main(var::a), term::main(var::y),
                       term::interaction(var::a, var::y)},
                      {-0.35, 0.5, 0.18, 0.05});
    c.lambda1 = model_from({term::intercept(), term::main(var::a), term::main(var::y),
                            term::interaction(var::a, var::y)},
                           {-0.6, 0.5, 0.25, 0.1});
    c.lambda2 = model_from({term::intercept(), term::main(var::a), term::main(var::y),
                            term::interaction(var::l4, var::y)},
                           {0.0, 1.0, 1.0, 2.5});
    c.lambda2_sigma = 1.25;
    return c;
}

inline constexpr double np_beta_arm0_shape1 = 2.0;
inline constexpr double np_beta_arm0_shape2 = 4.0;
inline constexpr double np_beta_arm1_shape1 = 4.0;
inline constexpr double np_beta_arm1_shape2 = 2.0;

}  // namespace ccmar
