#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ccmar/error.hpp"
#include "ccmar/records.hpp"

namespace ccmar {

// Symbolic covariates usable inside model terms.
enum class var : int { l1 = 0, l2, l3, l4, l5, a, y };

inline constexpr int var_count = 7;

inline const char* var_name(var v) {
    switch (v) {
        case var::l1: return "L1";
        case var::l2: return "L2";
        case var::l3: return "L3";
        case var::l4: return "L4";
        case var::l5: return "L5";
        case var::a: return "A";
        case var::y: return "Y";
    }
    throw schema_error("var_name: unknown variable id");
}

inline var parse_var(const std::string& s) {
    for (int i = 0; i < var_count; ++i) {
        var v = static_cast<var>(i);
        if (s == var_name(v)) return v;
    }
    throw config_error("unknown variable name '" + s + "'");
}

// A single design column: 1, x, x^2 or a pairwise product.
struct term {
    enum class kind_t { intercept, main, square, interaction };
    kind_t kind = kind_t::intercept;
    var v1 = var::l1;
    var v2 = var::l1;

    static term intercept() { return term{kind_t::intercept, var::l1, var::l1}; }
    static term main(var v) { return term{kind_t::main, v, v}; }
    static term square(var v) { return term{kind_t::square, v, v}; }
    static term interaction(var a, var b) {
        if (a == b) throw config_error("interaction terms need two distinct variables");
        return term{kind_t::interaction, a, b};
    }

    bool operator==(const term& o) const {
        return kind == o.kind && v1 == o.v1 && v2 == o.v2;
    }
};

inline std::string term_name(const term& t) {
    switch (t.kind) {
        case term::kind_t::intercept: return "intercept";
        case term::kind_t::main: return var_name(t.v1);
        case term::kind_t::square: return std::string(var_name(t.v1)) + "^2";
        case term::kind_t::interaction:
            return std::string(var_name(t.v1)) + ":" + var_name(t.v2);
    }
    throw schema_error("term_name: unknown term kind");
}

// Grammar: "intercept" | VAR | VAR^2 | VAR:VAR.
inline term parse_term(const std::string& s) {
    if (s == "intercept" || s == "(Intercept)") return term::intercept();
    auto colon = s.find(':');
    if (colon != std::string::npos) {
        var a = parse_var(s.substr(0, colon));
        var b = parse_var(s.substr(colon + 1));
        return term::interaction(a, b);
    }
    auto caret = s.find('^');
    if (caret != std::string::npos) {
        if (s.substr(caret) != "^2")
            throw config_error("only squares are supported, got '" + s + "'");
        return term::square(parse_var(s.substr(0, caret)));
    }
    return term::main(parse_var(s));
}

// Evaluation context: variable values plus a presence mask. Rows with
// unobserved confounders keep the corresponding slots unset.
struct probe {
    std::array<double, var_count> value{};
    std::uint8_t present = 0;

    void set(var v, double x) {
        value[static_cast<int>(v)] = x;
        present |= static_cast<std::uint8_t>(1u << static_cast<int>(v));
    }
    bool has(var v) const {
        return (present >> static_cast<int>(v)) & 1u;
    }
    double get(var v) const { return value[static_cast<int>(v)]; }
    // True when the slot for a partially missing confounder is empty on an
    // incomplete row (as opposed to a variable absent from the schema).
    bool coarsened = false;
};

inline probe make_probe(const coarsened_record& r) {
    probe p;
    p.set(var::l1, r.l1);
    p.set(var::l2, r.l2);
    p.set(var::l3, r.l3);
    p.set(var::a, static_cast<double>(r.a));
    p.set(var::y, r.y);
    if (r.l4) p.set(var::l4, *r.l4);
    if (r.l5) p.set(var::l5, *r.l5);
    p.coarsened = (r.s == 0);
    return p;
}

inline double probe_value(const probe& p, var v) {
    if (!p.has(v)) {
        if (p.coarsened && (v == var::l4 || v == var::l5))
            throw missing_data_error(std::string("variable ") + var_name(v) +
                                     " is unobserved on an incomplete row");
        throw schema_error(std::string("variable ") + var_name(v) +
                           " is not present in the record schema");
    }
    return p.get(v);
}

inline double term_value(const term& t, const probe& p) {
    switch (t.kind) {
        case term::kind_t::intercept: return 1.0;
        case term::kind_t::main: return probe_value(p, t.v1);
        case term::kind_t::square: {
            double x = probe_value(p, t.v1);
            return x * x;
        }
        case term::kind_t::interaction:
            return probe_value(p, t.v1) * probe_value(p, t.v2);
    }
    throw schema_error("term_value: unknown term kind");
}

inline void validate_terms(const std::vector<term>& terms) {
    int intercepts = 0;
    for (const auto& t : terms) {
        if (t.kind == term::kind_t::intercept) ++intercepts;
        if (t.kind == term::kind_t::interaction && t.v1 == t.v2)
            throw config_error("interaction terms need two distinct variables");
    }
    if (intercepts > 1) throw config_error("term list contains more than one intercept");
}

// n x p design matrix; column j is term j evaluated on record i.
inline Eigen::MatrixXd build_design(const std::vector<term>& terms,
                                    const std::vector<coarsened_record>& records) {
    validate_terms(terms);
    Eigen::MatrixXd x(records.size(), terms.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        probe p = make_probe(records[i]);
        for (std::size_t j = 0; j < terms.size(); ++j) x(i, j) = term_value(terms[j], p);
    }
    return x;
}

inline double linear_predictor(const std::vector<term>& terms, const Eigen::VectorXd& coef,
                               const probe& p) {
    if (static_cast<std::size_t>(coef.size()) != terms.size())
        throw state_error("linear_predictor: coefficient/term length mismatch");
    double acc = 0.0;
    for (std::size_t j = 0; j < terms.size(); ++j) acc += coef(j) * term_value(terms[j], p);
    return acc;
}

// Linear predictor viewed as a polynomial in one free variable, all other
// variables fixed by the base probe. Exact for the full term grammar, since
// the only possible powers of the free variable are 0, 1 and 2.
struct free_var_poly {
    double c0 = 0.0, c1 = 0.0, c2 = 0.0;
    double at(double x) const { return c0 + (c1 + c2 * x) * x; }
};

inline free_var_poly decompose_in(var free, const std::vector<term>& terms,
                                  const Eigen::VectorXd& coef, const probe& base) {
    if (static_cast<std::size_t>(coef.size()) != terms.size())
        throw state_error("decompose_in: coefficient/term length mismatch");
    free_var_poly poly;
    for (std::size_t j = 0; j < terms.size(); ++j) {
        const term& t = terms[j];
        double b = coef(j);
        switch (t.kind) {
            case term::kind_t::intercept:
                poly.c0 += b;
                break;
            case term::kind_t::main:
                if (t.v1 == free) poly.c1 += b;
                else poly.c0 += b * probe_value(base, t.v1);
                break;
            case term::kind_t::square:
                if (t.v1 == free) poly.c2 += b;
                else {
                    double x = probe_value(base, t.v1);
                    poly.c0 += b * x * x;
                }
                break;
            case term::kind_t::interaction:
                if (t.v1 == free) poly.c1 += b * probe_value(base, t.v2);
                else if (t.v2 == free) poly.c1 += b * probe_value(base, t.v1);
                else poly.c0 += b * probe_value(base, t.v1) * probe_value(base, t.v2);
                break;
        }
    }
    return poly;
}

// intercept + mains.
inline std::vector<term> main_effect_terms(const std::vector<var>& vars) {
    std::vector<term> terms{term::intercept()};
    for (var v : vars) terms.push_back(term::main(v));
    return terms;
}

// intercept + mains + all distinct pairwise products.
inline std::vector<term> pairwise_terms(const std::vector<var>& vars) {
    std::vector<term> terms = main_effect_terms(vars);
    for (std::size_t i = 0; i < vars.size(); ++i)
        for (std::size_t j = i + 1; j < vars.size(); ++j)
            terms.push_back(term::interaction(vars[i], vars[j]));
    return terms;
}

inline bool terms_reference(const std::vector<term>& terms, var v) {
    for (const auto& t : terms) {
        if (t.kind == term::kind_t::intercept) continue;
        if (t.v1 == v) return true;
        if (t.kind == term::kind_t::interaction && t.v2 == v) return true;
    }
    return false;
}

}  // namespace ccmar
