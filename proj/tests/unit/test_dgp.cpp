#include "catch_amalgamated.hpp"

#include "ccmar/dgp.hpp"
#include "ccmar/glm.hpp"

#include <cmath>

using namespace ccmar;

TEST_CASE("closed-form design reproduces its marginal outcome moments") {
    rng_stream rng(1001);
    auto rows = gen_np(400000, rng);
    double y1 = 0.0, y0 = 0.0, a1 = 0.0;
    int n1 = 0, n0 = 0;
    for (const auto& r : rows) {
        if (r.a == 1) {
            y1 += r.y;
            ++n1;
        } else {
            y0 += r.y;
            ++n0;
        }
        a1 += r.a;
    }
    REQUIRE(std::abs(a1 / rows.size() - 0.5) < 0.005);
    REQUIRE(std::abs(y1 / n1 - 2.0 / 3.0) < 0.002);   // Beta(4,2) mean
    REQUIRE(std::abs(y0 / n0 - 1.0 / 3.0) < 0.002);   // Beta(2,4) mean
}

TEST_CASE("closed-form design missingness and covariate models refit to truth") {
    rng_stream rng(1002);
    auto rows = gen_np(400000, rng);
    std::vector<term> terms{term::intercept(), term::main(var::a), term::main(var::y),
                            term::interaction(var::a, var::y)};

    Eigen::VectorXd s(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) s(i) = rows[i].s;
    fitted_glm pi_fit = fit_glm(glm_family::bernoulli_logit, terms, rows, s);
    REQUIRE(std::abs(pi_fit.coef(0) + 0.35) < 0.03);
    REQUIRE(std::abs(pi_fit.coef(1) - 0.50) < 0.05);
    REQUIRE(std::abs(pi_fit.coef(2) - 0.18) < 0.07);
    REQUIRE(std::abs(pi_fit.coef(3) - 0.05) < 0.11);

    std::vector<coarsened_record> complete;
    for (const auto& r : rows)
        if (r.s == 1) complete.push_back(r);
    Eigen::VectorXd l4(complete.size()), l5(complete.size());
    for (std::size_t i = 0; i < complete.size(); ++i) {
        l4(i) = *complete[i].l4;
        l5(i) = *complete[i].l5;
    }
    fitted_glm l4_fit = fit_glm(glm_family::bernoulli_logit, terms, complete, l4);
    REQUIRE(std::abs(l4_fit.coef(0) + 0.6) < 0.03);
    REQUIRE(std::abs(l4_fit.coef(1) - 0.5) < 0.05);

    std::vector<term> l5_terms{term::intercept(), term::main(var::a), term::main(var::y),
                               term::interaction(var::l4, var::y)};
    fitted_glm l5_fit = fit_glm(glm_family::gaussian_identity, l5_terms, complete, l5);
    REQUIRE(std::abs(l5_fit.coef(1) - 1.0) < 0.02);
    REQUIRE(std::abs(l5_fit.coef(3) - 2.5) < 0.03);
    REQUIRE(std::abs(*l5_fit.dispersion - 1.25) < 0.01);
}

TEST_CASE("sequentially factorized samples refit to the generating coefficients") {
    scenario_coefficients coef;
    coef.kind = factorization_kind::sequential;
    coef.eta = detail::model_from({term::intercept(), term::main(var::l1), term::main(var::l2)},
                                  {-0.6, 0.3, -0.05});
    coef.mu = detail::model_from(
        {term::intercept(), term::main(var::l1), term::main(var::a)}, {-0.2, 0.05, 0.4});
    coef.pi = detail::model_from({term::intercept(), term::main(var::a), term::main(var::y)},
                                 {1.5, 0.8, 0.6});
    coef.lambda1 = detail::model_from(
        {term::intercept(), term::main(var::a), term::main(var::y)}, {0.9, 0.3, -0.7});
    coef.sigma_y = 0.2;
    coef.alpha = 3.0;
    validate_coefficients(coef);

    lc_params lc{0.5, 12.0, 5.0, 0.1};
    rng_stream rng(99);
    auto rows = gen_sequential(coef, lc, 300000, rng);

    Eigen::VectorXd a(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) a(i) = rows[i].a;
    fitted_glm eta_fit = fit_glm(glm_family::bernoulli_logit, coef.eta.terms, rows, a);
    REQUIRE(std::abs(eta_fit.coef(0) + 0.6) < 0.05);
    REQUIRE(std::abs(eta_fit.coef(1) - 0.3) < 0.03);
    REQUIRE(std::abs(eta_fit.coef(2) + 0.05) < 0.01);

    Eigen::VectorXd y(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) y(i) = rows[i].y;
    fitted_glm mu_fit = fit_glm(glm_family::gaussian_identity, coef.mu.terms, rows, y);
    REQUIRE(std::abs(mu_fit.coef(0) + 0.2) < 0.01);
    REQUIRE(std::abs(mu_fit.coef(2) - 0.4) < 0.01);
    REQUIRE(std::abs(*mu_fit.dispersion - 0.2) < 0.005);

    std::vector<coarsened_record> complete;
    for (const auto& r : rows)
        if (r.s == 1) complete.push_back(r);
    REQUIRE(!complete.empty());
    Eigen::VectorXd l4(complete.size());
    for (std::size_t i = 0; i < complete.size(); ++i) l4(i) = *complete[i].l4;
    fitted_glm lam_fit = fit_glm(glm_family::gamma_log, coef.lambda1.terms, complete, l4);
    REQUIRE(std::abs(lam_fit.coef(0) - 0.9) < 0.05);
    REQUIRE(std::abs(lam_fit.coef(2) + 0.7) < 0.1);
    REQUIRE(std::abs(*lam_fit.dispersion - 3.0) < 0.15);
}

TEST_CASE("a huge selection intercept makes every row complete") {
    scenario_coefficients coef;
    coef.kind = factorization_kind::sequential;
    coef.eta = detail::model_from({term::intercept()}, {0.0});
    coef.mu = detail::model_from({term::intercept(), term::main(var::a)}, {0.0, 0.5});
    coef.pi = detail::model_from({term::intercept()}, {20.0});
    coef.lambda1 = detail::model_from({term::intercept()}, {0.5});
    coef.sigma_y = 1.0;
    coef.alpha = 2.0;
    lc_params lc;
    rng_stream rng(3);
    auto rows = gen_sequential(coef, lc, 5000, rng);
    for (const auto& r : rows) {
        REQUIRE(r.s == 1);
        REQUIRE(r.l4.has_value());
    }
}

TEST_CASE("covariate-first factorization masks covariates only on incomplete rows") {
    scenario_coefficients coef;
    coef.kind = factorization_kind::alternative;
    coef.lambda1 = detail::model_from({term::intercept(), term::main(var::l1)}, {0.9, 0.27});
    coef.lambda2 = detail::model_from({term::intercept()}, {-1.386});
    coef.eta = detail::model_from({term::intercept(), term::main(var::l4)}, {-0.6, -0.03});
    coef.mu = detail::model_from(
        {term::intercept(), term::main(var::l5), term::main(var::a)}, {-0.2, 0.2, 0.05});
    coef.pi = detail::model_from({term::intercept(), term::main(var::a)}, {1.0, 0.5});
    coef.sigma_y = 0.11;
    coef.alpha = 3.6;
    validate_coefficients(coef);

    lc_params lc{0.5, 12.0, 5.0, 0.1};
    rng_stream rng(17);
    auto rows = gen_alt(coef, lc, 50000, rng);
    int complete = 0, l5_ones = 0;
    for (const auto& r : rows) {
        REQUIRE(r.l4.has_value() == (r.s == 1));
        REQUIRE(r.l5.has_value() == (r.s == 1));
        if (r.s == 1) {
            ++complete;
            l5_ones += static_cast<int>(*r.l5);
        }
    }
    REQUIRE(complete > 25000);
    // Intercept-only covariate model: P(L5 = 1) = expit(-1.386) = 0.2.
    REQUIRE(std::abs(l5_ones / static_cast<double>(complete) - 0.2) < 0.01);
}

TEST_CASE("generation is bit-identical for equal seeds") {
    rng_stream a = rng_stream::keyed(5, 0, rng_stage::generate);
    rng_stream b = rng_stream::keyed(5, 0, rng_stage::generate);
    auto r1 = gen_np(2000, a);
    auto r2 = gen_np(2000, b);
    REQUIRE(r1.size() == r2.size());
    for (std::size_t i = 0; i < r1.size(); ++i) {
        REQUIRE(r1[i].y == r2[i].y);
        REQUIRE(r1[i].a == r2[i].a);
        REQUIRE(r1[i].s == r2[i].s);
        REQUIRE(r1[i].l4.has_value() == r2[i].l4.has_value());
        if (r1[i].l4) REQUIRE(*r1[i].l4 == *r2[i].l4);
    }
}

TEST_CASE("reference value is exact for the closed-form design") {
    truth_result t = true_ate(np_generating_coefficients(), lc_params{}, 100000, 1, 9);
    REQUIRE(t.analytic);
    REQUIRE(t.value == 1.0 / 3.0);
    REQUIRE(t.mc_se == 0.0);
}

TEST_CASE("monte-carlo reference value rejects tiny sample requests") {
    scenario_coefficients coef;
    coef.kind = factorization_kind::sequential;
    coef.eta = detail::model_from({term::intercept()}, {0.0});
    coef.mu = detail::model_from({term::intercept(), term::main(var::a)}, {0.0, 0.5});
    coef.pi = detail::model_from({term::intercept()}, {1.5});
    coef.lambda1 = detail::model_from({term::intercept()}, {0.5});
    coef.sigma_y = 1.0;
    coef.alpha = 2.0;
    REQUIRE_THROWS_AS(true_ate(coef, lc_params{}, 5000, 2, 1), config_error);
    REQUIRE_THROWS_AS(true_ate(coef, lc_params{}, 200000, 0, 1), config_error);
}
