#include "catch_amalgamated.hpp"

#include "ccmar/terms.hpp"

#include <cmath>

using namespace ccmar;

static coarsened_record make_row(double l1, double l2, double l3, int a, double y) {
    coarsened_record r;
    r.l1 = l1;
    r.l2 = l2;
    r.l3 = l3;
    r.a = a;
    r.y = y;
    r.s = 1;
    r.l4 = 2.0;
    r.l5 = 1.0;
    return r;
}

TEST_CASE("term names parse back to themselves") {
    for (const char* s : {"intercept", "L1", "L4", "A", "Y", "L2^2", "L1:L3", "A:Y", "Y:L4"}) {
        term t = parse_term(s);
        REQUIRE(term_name(t) == s);
    }
    REQUIRE_THROWS_AS(parse_term("L6"), config_error);
    REQUIRE_THROWS_AS(parse_term("L1^3"), config_error);
    REQUIRE_THROWS_AS(parse_term(""), config_error);
}

TEST_CASE("design matrix columns evaluate the term grammar") {
    std::vector<term> terms{term::intercept(),
                            term::main(var::l2),
                            term::square(var::l2),
                            term::interaction(var::l1, var::l3),
                            term::interaction(var::a, var::y),
                            term::main(var::l4)};
    std::vector<coarsened_record> rows{make_row(1.0, 5.0, 0.0, 1, 0.4),
                                       make_row(0.0, -2.0, 1.0, 0, 0.9)};
    Eigen::MatrixXd x = build_design(terms, rows);
    REQUIRE(x.rows() == 2);
    REQUIRE(x.cols() == 6);
    REQUIRE(x(0, 0) == 1.0);
    REQUIRE(x(0, 1) == 5.0);
    REQUIRE(x(0, 2) == 25.0);
    REQUIRE(x(0, 3) == 0.0);
    REQUIRE(x(0, 4) == 0.4);
    REQUIRE(x(0, 5) == 2.0);
    REQUIRE(x(1, 2) == 4.0);
    REQUIRE(x(1, 3) == 0.0);
    REQUIRE(x(1, 4) == 0.0);
}

TEST_CASE("missing covariates on incomplete rows are reported as missing data") {
    coarsened_record r = make_row(1.0, 2.0, 3.0, 1, 0.5);
    r.s = 0;
    r.l4.reset();
    r.l5.reset();
    probe p = make_probe(r);
    REQUIRE_THROWS_AS(probe_value(p, var::l4), missing_data_error);
    REQUIRE(probe_value(p, var::l1) == 1.0);
}

TEST_CASE("term lists are validated before use") {
    std::vector<term> two_intercepts{term::intercept(), term::intercept()};
    REQUIRE_THROWS_AS(validate_terms(two_intercepts), config_error);
    // A product of a variable with itself is refused at construction.
    REQUIRE_THROWS_AS(term::interaction(var::l1, var::l1), config_error);
}

TEST_CASE("single-variable decomposition matches direct evaluation") {
    std::vector<term> terms{term::intercept(),       term::main(var::y),
                            term::main(var::l2),     term::square(var::l2),
                            term::interaction(var::a, var::y),
                            term::interaction(var::y, var::l1)};
    Eigen::VectorXd coef(6);
    coef << 0.3, -0.7, 0.11, 0.002, 1.4, -0.25;

    coarsened_record r = make_row(0.8, -1.5, 0.0, 1, 0.0);
    probe base = make_probe(r);
    free_var_poly poly = decompose_in(var::y, terms, coef, base);
    for (double y : {-2.0, 0.0, 0.37, 5.1}) {
        probe p = base;
        p.set(var::y, y);
        REQUIRE(std::abs(poly.at(y) - linear_predictor(terms, coef, p)) < 1e-13);
    }

    // The square term makes the predictor quadratic in its own variable.
    free_var_poly in_l2 = decompose_in(var::l2, terms, coef, base);
    REQUIRE(in_l2.c2 == 0.002);
    for (double v : {-3.0, 0.5, 2.0}) {
        probe p = base;
        p.set(var::l2, v);
        REQUIRE(std::abs(in_l2.at(v) - linear_predictor(terms, coef, p)) < 1e-13);
    }
}

TEST_CASE("pairwise expansion enumerates every distinct product once") {
    std::vector<var> vars{var::l1, var::l2, var::a};
    std::vector<term> terms = pairwise_terms(vars);
    // intercept + 3 mains + 3 products
    REQUIRE(terms.size() == 7);
    validate_terms(terms);
    int interactions = 0;
    for (const auto& t : terms)
        if (t.kind == term::kind_t::interaction) ++interactions;
    REQUIRE(interactions == 3);
}
