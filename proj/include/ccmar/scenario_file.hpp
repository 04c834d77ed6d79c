#pragma once

#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ccmar/coefficients.hpp"
#include "ccmar/error.hpp"
#include "ccmar/harness.hpp"
#include "ccmar/report.hpp"
#include "ccmar/terms.hpp"

namespace ccmar {

namespace detail {

struct config_value {
    enum class kind_t { number, text, boolean, text_array } kind = kind_t::number;
    double num = 0.0;
    std::string raw;  // source text of a number, kept for exact integer parsing
    std::string text;
    bool flag = false;
    std::vector<std::string> array;
    int line = 0;
};

struct config_section {
    std::string name;
    int line = 0;
    std::vector<std::pair<std::string, config_value>> entries;
};

struct config_document {
    std::vector<config_section> sections;

    config_section* find(const std::string& name) {
        for (auto& s : sections)
            if (s.name == name) return &s;
        return nullptr;
    }
};

[[noreturn]] inline void parse_fail(int line, const std::string& what) {
    throw config_error("scenario file line " + std::to_string(line) + ": " + what);
}

inline std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

inline bool is_bare_key_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
}

// Strip a trailing comment, respecting double-quoted strings.
inline std::string strip_comment(const std::string& line) {
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (c == '"') in_string = !in_string;
        else if (c == '#' && !in_string) return line.substr(0, i);
    }
    return line;
}

inline config_value parse_value(const std::string& raw, int line) {
    config_value v;
    v.line = line;
    std::string s = trim(raw);
    if (s.empty()) parse_fail(line, "missing value");
    if (s == "true" || s == "false") {
        v.kind = config_value::kind_t::boolean;
        v.flag = (s == "true");
        return v;
    }
    if (s.front() == '"') {
        if (s.size() < 2 || s.back() != '"')
            parse_fail(line, "unterminated string");
        v.kind = config_value::kind_t::text;
        v.text = s.substr(1, s.size() - 2);
        if (v.text.find('"') != std::string::npos)
            parse_fail(line, "embedded quotes are not supported");
        return v;
    }
    if (s.front() == '[') {
        if (s.back() != ']') parse_fail(line, "unterminated array");
        v.kind = config_value::kind_t::text_array;
        std::string body = trim(s.substr(1, s.size() - 2));
        while (!body.empty()) {
            if (body.front() != '"') parse_fail(line, "arrays may hold strings only");
            std::size_t close = body.find('"', 1);
            if (close == std::string::npos) parse_fail(line, "unterminated string in array");
            v.array.push_back(body.substr(1, close - 1));
            body = trim(body.substr(close + 1));
            if (!body.empty()) {
                if (body.front() != ',') parse_fail(line, "array items must be comma separated");
                body = trim(body.substr(1));
            }
        }
        return v;
    }
    char* end = nullptr;
    v.num = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0')
        parse_fail(line, "cannot parse value '" + s + "'");
    v.kind = config_value::kind_t::number;
    v.raw = s;
    return v;
}

inline config_document parse_config_text(const std::string& text) {
    config_document doc;
    config_section* current = nullptr;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string body = trim(strip_comment(line));
        if (body.empty()) continue;
        if (body.front() == '[') {
            if (body.back() != ']') parse_fail(lineno, "unterminated section header");
            std::string name = trim(body.substr(1, body.size() - 2));
            if (name.empty()) parse_fail(lineno, "empty section name");
            for (char c : name)
                if (!is_bare_key_char(c) && c != '.')
                    parse_fail(lineno, "bad character in section name");
            if (doc.find(name)) parse_fail(lineno, "duplicate section [" + name + "]");
            doc.sections.push_back({name, lineno, {}});
            current = &doc.sections.back();
            continue;
        }
        std::string key;
        std::size_t pos = 0;
        if (body.front() == '"') {
            std::size_t close = body.find('"', 1);
            if (close == std::string::npos) parse_fail(lineno, "unterminated quoted key");
            key = body.substr(1, close - 1);
            pos = close + 1;
        } else {
            while (pos < body.size() && is_bare_key_char(body[pos])) ++pos;
            key = body.substr(0, pos);
        }
        if (key.empty()) parse_fail(lineno, "missing key");
        std::string rest = trim(body.substr(pos));
        if (rest.empty() || rest.front() != '=')
            parse_fail(lineno, "expected '=' after key '" + key + "'");
        if (!current) parse_fail(lineno, "key outside any section");
        std::string value_text = trim(rest.substr(1));
        if (!value_text.empty() && value_text.front() == '[') {
            // Arrays may continue over several lines until the closing bracket.
            while (value_text.back() != ']' && std::getline(in, line)) {
                ++lineno;
                if (!line.empty() && line.back() == '\r') line.pop_back();
                std::string more = trim(strip_comment(line));
                if (more.empty()) continue;
                value_text += " " + more;
            }
        }
        for (const auto& kv : current->entries)
            if (kv.first == key)
                parse_fail(lineno, "duplicate key '" + key + "' in [" + current->name + "]");
        current->entries.emplace_back(key, parse_value(value_text, lineno));
    }
    return doc;
}

// JSON documents share the interpretation path: top-level objects become
// sections (nested one level for grouped models), scalars become values.
inline config_value json_to_value(const nlohmann::ordered_json& j) {
    config_value v;
    if (j.is_number()) {
        v.kind = config_value::kind_t::number;
        v.num = j.get<double>();
        if (j.is_number_unsigned())
            v.raw = std::to_string(j.get<std::uint64_t>());
        else if (j.is_number_integer())
            v.raw = std::to_string(j.get<std::int64_t>());
        else
            v.raw = j.dump();
        return v;
    }
    if (j.is_string()) {
        v.kind = config_value::kind_t::text;
        v.text = j.get<std::string>();
        return v;
    }
    if (j.is_boolean()) {
        v.kind = config_value::kind_t::boolean;
        v.flag = j.get<bool>();
        return v;
    }
    if (j.is_array()) {
        v.kind = config_value::kind_t::text_array;
        for (const auto& item : j) {
            if (!item.is_string())
                throw config_error("scenario json: arrays may hold strings only");
            v.array.push_back(item.get<std::string>());
        }
        return v;
    }
    throw config_error("scenario json: unsupported value type");
}

inline config_document parse_config_json(const std::string& text) {
    nlohmann::ordered_json root;
    try {
        root = nlohmann::ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("scenario json: ") + e.what());
    }
    if (!root.is_object()) throw config_error("scenario json: top level must be an object");
    config_document doc;
    for (const auto& [skey, sval] : root.items()) {
        if (!sval.is_object())
            throw config_error("scenario json: section '" + skey + "' must be an object");
        bool nested = false;
        for (const auto& [k, v] : sval.items()) {
            (void)k;
            if (v.is_object()) nested = true;
        }
        if (nested) {
            for (const auto& [mkey, mval] : sval.items()) {
                if (!mval.is_object())
                    throw config_error("scenario json: '" + skey + "." + mkey +
                                       "' must be an object");
                config_section sec;
                sec.name = skey + "." + mkey;
                for (const auto& [k, v] : mval.items())
                    sec.entries.emplace_back(k, json_to_value(v));
                doc.sections.push_back(std::move(sec));
            }
        } else {
            config_section sec;
            sec.name = skey;
            for (const auto& [k, v] : sval.items())
                sec.entries.emplace_back(k, json_to_value(v));
            doc.sections.push_back(std::move(sec));
        }
    }
    return doc;
}

// Typed accessors over one section with unknown-key detection.
class section_reader {
  public:
    section_reader(config_section* sec, std::string name)
        : sec_(sec), name_(std::move(name)) {}

    bool present() const { return sec_ != nullptr; }

    const config_value* find(const std::string& key) {
        if (!sec_) return nullptr;
        for (auto& kv : sec_->entries)
            if (kv.first == key) {
                used_.push_back(key);
                return &kv.second;
            }
        return nullptr;
    }

    double number(const std::string& key) {
        const config_value* v = require(key);
        if (v->kind != config_value::kind_t::number)
            parse_fail(v->line, "[" + name_ + "] " + key + " must be a number");
        return v->num;
    }

    std::optional<double> number_opt(const std::string& key) {
        const config_value* v = find(key);
        if (!v) return std::nullopt;
        if (v->kind != config_value::kind_t::number)
            parse_fail(v->line, "[" + name_ + "] " + key + " must be a number");
        return v->num;
    }

    long integer(const std::string& key) {
        double x = number(key);
        long n = static_cast<long>(x);
        if (static_cast<double>(n) != x)
            throw config_error("[" + name_ + "] " + key + " must be an integer");
        return n;
    }

    std::optional<long> integer_opt(const std::string& key) {
        auto x = number_opt(key);
        if (!x) return std::nullopt;
        long n = static_cast<long>(*x);
        if (static_cast<double>(n) != *x)
            throw config_error("[" + name_ + "] " + key + " must be an integer");
        return n;
    }

    std::uint64_t seed(const std::string& key) {
        const config_value* v = require(key);
        if (v->kind != config_value::kind_t::number || v->raw.empty())
            parse_fail(v->line, "[" + name_ + "] " + key + " must be an integer seed");
        char* end = nullptr;
        std::uint64_t s = std::strtoull(v->raw.c_str(), &end, 10);
        if (end == v->raw.c_str() || *end != '\0')
            parse_fail(v->line, "[" + name_ + "] " + key + " must be a nonnegative integer");
        return s;
    }

    std::string text(const std::string& key) {
        const config_value* v = require(key);
        if (v->kind != config_value::kind_t::text)
            parse_fail(v->line, "[" + name_ + "] " + key + " must be a string");
        return v->text;
    }

    std::optional<std::string> text_opt(const std::string& key) {
        const config_value* v = find(key);
        if (!v) return std::nullopt;
        if (v->kind != config_value::kind_t::text)
            parse_fail(v->line, "[" + name_ + "] " + key + " must be a string");
        return v->text;
    }

    std::vector<std::string> text_array(const std::string& key) {
        const config_value* v = require(key);
        if (v->kind != config_value::kind_t::text_array)
            parse_fail(v->line, "[" + name_ + "] " + key + " must be an array of strings");
        return v->array;
    }

    // Every remaining key interpreted as a term/value pair, in file order.
    linear_model_spec as_model() {
        if (!sec_) throw config_error("missing [" + name_ + "] section");
        linear_model_spec m;
        std::vector<double> coefs;
        for (auto& kv : sec_->entries) {
            if (kv.second.kind != config_value::kind_t::number)
                parse_fail(kv.second.line, "[" + name_ + "] " + kv.first + " must be a number");
            m.terms.push_back(parse_term(kv.first));
            coefs.push_back(kv.second.num);
            used_.push_back(kv.first);
        }
        if (m.terms.empty()) throw config_error("[" + name_ + "] has no terms");
        m.coef = Eigen::Map<Eigen::VectorXd>(coefs.data(), static_cast<long>(coefs.size()));
        return m;
    }

    void finish() {
        if (!sec_) return;
        for (const auto& kv : sec_->entries) {
            bool seen = false;
            for (const auto& u : used_)
                if (u == kv.first) seen = true;
            if (!seen)
                parse_fail(kv.second.line,
                           "unknown key '" + kv.first + "' in [" + name_ + "]");
        }
    }

  private:
    const config_value* require(const std::string& key) {
        const config_value* v = find(key);
        if (!v) throw config_error("[" + name_ + "] is missing required key '" + key + "'");
        return v;
    }

    config_section* sec_;
    std::string name_;
    std::vector<std::string> used_;
};

inline std::vector<term> terms_from_names(const std::vector<std::string>& names,
                                          const std::string& where) {
    if (names.empty()) throw config_error("[" + where + "] terms must not be empty");
    std::vector<term> out;
    out.reserve(names.size());
    for (const auto& n : names) out.push_back(parse_term(n));
    return out;
}

inline nuisance_spec read_nuisance_sections(config_document& doc,
                                            const scenario_coefficients& coef) {
    nuisance_spec spec;
    section_reader eta(doc.find("nuisance.eta"), "nuisance.eta");
    section_reader mu(doc.find("nuisance.mu"), "nuisance.mu");
    section_reader pi(doc.find("nuisance.pi"), "nuisance.pi");
    section_reader l1(doc.find("nuisance.lambda1"), "nuisance.lambda1");
    section_reader l2(doc.find("nuisance.lambda2"), "nuisance.lambda2");

    if (auto known = eta.number_opt("known")) {
        spec.known_treatment_prob = *known;
    } else if (const config_value* v = eta.find("terms")) {
        if (v->kind != config_value::kind_t::text_array)
            parse_fail(v->line, "[nuisance.eta] terms must be an array of strings");
        spec.eta_terms = terms_from_names(v->array, "nuisance.eta");
    } else {
        throw config_error("[nuisance.eta] needs either 'known' or 'terms'");
    }
    eta.finish();

    std::string mu_kind = mu.text_opt("kind").value_or("gaussian");
    if (mu_kind == "gaussian") {
        spec.outcome_kind = outcome_model_kind::gaussian_linear;
        spec.mu_terms = terms_from_names(mu.text_array("terms"), "nuisance.mu");
    } else if (mu_kind == "beta-per-arm") {
        spec.outcome_kind = outcome_model_kind::beta_per_arm;
    } else {
        throw config_error("[nuisance.mu] kind must be 'gaussian' or 'beta-per-arm'");
    }
    mu.finish();

    spec.pi_terms = terms_from_names(pi.text_array("terms"), "nuisance.pi");
    pi.finish();

    std::string fam1 = l1.text_opt("family").value_or("gamma-log");
    if (fam1 == "gamma-log") spec.lambda1_family = glm_family::gamma_log;
    else if (fam1 == "bernoulli-logit") spec.lambda1_family = glm_family::bernoulli_logit;
    else throw config_error("[nuisance.lambda1] family must be 'gamma-log' or 'bernoulli-logit'");
    spec.lambda1_terms = terms_from_names(l1.text_array("terms"), "nuisance.lambda1");
    if (auto shape = l1.text_opt("shape")) {
        if (*shape == "mle") spec.gamma_shape_mle = true;
        else if (*shape == "moment") spec.gamma_shape_mle = false;
        else throw config_error("[nuisance.lambda1] shape must be 'moment' or 'mle'");
    }
    l1.finish();

    bool wants_l2 = coef.lambda2.has_value();
    if (l2.present() != wants_l2)
        throw config_error(wants_l2
                               ? "[nuisance.lambda2] is required when the design has a second "
                                 "partially missing covariate"
                               : "[nuisance.lambda2] given but the design has no second "
                                 "partially missing covariate");
    if (l2.present()) {
        std::string fam2 = l2.text_opt("family").value_or("bernoulli-logit");
        if (fam2 == "bernoulli-logit") spec.lambda2_family = glm_family::bernoulli_logit;
        else if (fam2 == "gaussian") spec.lambda2_family = glm_family::gaussian_identity;
        else throw config_error("[nuisance.lambda2] family must be 'bernoulli-logit' or 'gaussian'");
        spec.lambda2_terms = terms_from_names(l2.text_array("terms"), "nuisance.lambda2");
        l2.finish();
    }
    return spec;
}

}  // namespace detail

inline scenario_config parse_scenario_document(detail::config_document doc) {
    using detail::section_reader;
    scenario_config cfg;

    section_reader meta(doc.find("meta"), "meta");
    if (!meta.present()) throw config_error("scenario file needs a [meta] section");
    cfg.name = meta.text("name");
    if (cfg.name.empty()) throw config_error("[meta] name must not be empty");
    meta.finish();

    section_reader fact(doc.find("factorization"), "factorization");
    if (!fact.present()) throw config_error("scenario file needs a [factorization] section");
    cfg.coef.kind = parse_factorization(fact.text("kind"));

    bool parametric = cfg.coef.kind != factorization_kind::np_beta;
    if (parametric) {
        cfg.coef.sigma_y = fact.number("sigma_y");
        cfg.coef.alpha = fact.number_opt("alpha").value_or(0.0);
    }
    fact.finish();

    const char* model_sections[] = {"coefficients.eta", "coefficients.mu", "coefficients.pi",
                                    "coefficients.lambda1", "coefficients.lambda2"};
    if (!parametric) {
        for (const char* s : model_sections)
            if (doc.find(s))
                throw config_error(std::string("[") + s +
                                   "] is not allowed for the np-beta design");
        if (doc.find("lc"))
            throw config_error("[lc] is not allowed for the np-beta design");
        cfg.coef = np_generating_coefficients();
    } else {
        section_reader eta(doc.find("coefficients.eta"), "coefficients.eta");
        section_reader mu(doc.find("coefficients.mu"), "coefficients.mu");
        section_reader pi(doc.find("coefficients.pi"), "coefficients.pi");
        section_reader l1(doc.find("coefficients.lambda1"), "coefficients.lambda1");
        cfg.coef.eta = eta.as_model();
        cfg.coef.mu = mu.as_model();
        cfg.coef.pi = pi.as_model();
        cfg.coef.lambda1 = l1.as_model();
        eta.finish();
        mu.finish();
        pi.finish();
        l1.finish();
        if (detail::config_section* s2 = doc.find("coefficients.lambda2")) {
            section_reader l2(s2, "coefficients.lambda2");
            cfg.coef.lambda2 = l2.as_model();
            l2.finish();
        }
        section_reader lc(doc.find("lc"), "lc");
        if (lc.present()) {
            cfg.lc.p1 = lc.number_opt("p1").value_or(cfg.lc.p1);
            cfg.lc.m = lc.number_opt("m").value_or(cfg.lc.m);
            cfg.lc.s = lc.number_opt("s").value_or(cfg.lc.s);
            cfg.lc.p3 = lc.number_opt("p3").value_or(cfg.lc.p3);
            lc.finish();
        }
    }
    validate_coefficients(cfg.coef);

    bool any_nuisance = doc.find("nuisance.eta") || doc.find("nuisance.mu") ||
                        doc.find("nuisance.pi") || doc.find("nuisance.lambda1") ||
                        doc.find("nuisance.lambda2");
    if (any_nuisance)
        cfg.nuisance_override = detail::read_nuisance_sections(doc, cfg.coef);
    else if (cfg.coef.kind == factorization_kind::alternative)
        throw config_error("the alternative factorization needs explicit [nuisance.*] sections");

    section_reader run(doc.find("run"), "run");
    if (!run.present()) throw config_error("scenario file needs a [run] section");
    cfg.run.n = run.integer("n");
    cfg.run.replicates = run.integer("replicates");
    cfg.run.master_seed = run.seed("seed");
    cfg.run.workers = static_cast<int>(run.integer_opt("workers").value_or(1));
    if (auto clip = run.text_opt("clip")) {
        if (*clip != "off")
            throw config_error("[run] clip accepts only the string 'off'");
        cfg.run.clip.enabled = false;
    }
    cfg.run.clip.lo = run.number_opt("clip_lo").value_or(cfg.run.clip.lo);
    cfg.run.clip.hi = run.number_opt("clip_hi").value_or(cfg.run.clip.hi);
    if (auto folds = run.integer_opt("crossfit_folds"))
        cfg.run.crossfit_folds = static_cast<int>(*folds);
    if (auto m = run.integer_opt("imputations"))
        cfg.run.imputations = static_cast<int>(*m);
    if (auto yn = run.integer_opt("y_nodes")) {
        cfg.run.quad.y_gauss_nodes = static_cast<int>(*yn);
        cfg.run.quad.y_beta_nodes = static_cast<int>(*yn);
    }
    if (auto ln = run.integer_opt("lp_nodes")) {
        cfg.run.quad.lp_gamma_nodes = static_cast<int>(*ln);
        cfg.run.quad.lp_gauss_nodes = static_cast<int>(*ln);
    }
    if (auto mc = run.find("integrate_mc")) {
        if (mc->kind != detail::config_value::kind_t::boolean)
            detail::parse_fail(mc->line, "[run] integrate_mc must be true or false");
        cfg.run.integration.monte_carlo = mc->flag;
    }
    if (auto draws = run.integer_opt("mc_draws"))
        cfg.run.integration.mc_draws = static_cast<int>(*draws);
    if (auto method = run.text_opt("truth")) {
        if (*method == "analytic") cfg.run.truth.method = truth_spec::method_t::analytic;
        else if (*method == "monte-carlo") cfg.run.truth.method = truth_spec::method_t::monte_carlo;
        else throw config_error("[run] truth must be 'analytic' or 'monte-carlo'");
    } else if (!parametric) {
        cfg.run.truth.method = truth_spec::method_t::analytic;
    }
    if (auto nmc = run.integer_opt("truth_nmc")) cfg.run.truth.nmc = *nmc;
    if (auto reps = run.integer_opt("truth_repeats"))
        cfg.run.truth.repeats = static_cast<int>(*reps);
    if (auto d = run.integer_opt("bias_decimals"))
        cfg.run.bias_decimals = static_cast<int>(*d);
    cfg.run.fence_multiplier = run.number_opt("fence").value_or(cfg.run.fence_multiplier);
    run.finish();

    section_reader suite(doc.find("suite"), "suite");
    if (!suite.present()) throw config_error("scenario file needs a [suite] section");
    for (const auto& name : suite.text_array("estimators"))
        cfg.suite.push_back(parse_estimator_id(name));
    suite.finish();

    for (const auto& sec : doc.sections) {
        static const char* known[] = {
            "meta",          "factorization",        "lc",
            "run",           "suite",                "coefficients.eta",
            "coefficients.mu", "coefficients.pi",    "coefficients.lambda1",
            "coefficients.lambda2", "nuisance.eta",  "nuisance.mu",
            "nuisance.pi",   "nuisance.lambda1",     "nuisance.lambda2"};
        bool ok = false;
        for (const char* k : known)
            if (sec.name == k) ok = true;
        if (!ok) detail::parse_fail(sec.line, "unknown section [" + sec.name + "]");
    }

    validate_scenario_config(cfg);
    return cfg;
}

inline scenario_config parse_scenario_text(const std::string& text, bool json = false) {
    return parse_scenario_document(json ? detail::parse_config_json(text)
                                        : detail::parse_config_text(text));
}

inline scenario_config load_scenario_file(const std::string& path) {
    std::string text = read_text_file(path);
    bool json = path.size() > 5 && path.compare(path.size() - 5, 5, ".json") == 0;
    try {
        return parse_scenario_text(text, json);
    } catch (const config_error& e) {
        throw config_error(path + ": " + e.what());
    }
}

namespace detail {

inline bool needs_quoted_key(const std::string& key) {
    if (key.empty()) return true;
    for (char c : key)
        if (!is_bare_key_char(c)) return true;
    return false;
}

inline void emit_key(std::string& out, const std::string& key) {
    if (needs_quoted_key(key)) {
        out += '"';
        out += key;
        out += '"';
    } else {
        out += key;
    }
}

inline void emit_model(std::string& out, const char* section, const linear_model_spec& m) {
    out += std::string("[") + section + "]\n";
    for (std::size_t i = 0; i < m.terms.size(); ++i) {
        emit_key(out, term_name(m.terms[i]));
        out += " = " + fmt_g17(m.coef[static_cast<long>(i)]) + "\n";
    }
    out += "\n";
}

inline void emit_terms(std::string& out, const std::vector<term>& terms) {
    out += "terms = [";
    for (std::size_t i = 0; i < terms.size(); ++i) {
        if (i) out += ", ";
        out += '"' + term_name(terms[i]) + '"';
    }
    out += "]\n";
}

}  // namespace detail

// Canonical text form: fixed section order, numbers at full precision. The
// output parses back to an identical configuration.
inline std::string serialize_scenario(const scenario_config& cfg) {
    using detail::fmt_g17;
    std::string out;
    out += "[meta]\n";
    out += "name = \"" + cfg.name + "\"\n\n";

    out += "[factorization]\n";
    out += std::string("kind = \"") + factorization_name(cfg.coef.kind) + "\"\n";
    bool parametric = cfg.coef.kind != factorization_kind::np_beta;
    if (parametric) {
        out += "sigma_y = " + fmt_g17(cfg.coef.sigma_y) + "\n";
        if (cfg.coef.alpha > 0) out += "alpha = " + fmt_g17(cfg.coef.alpha) + "\n";
    }
    out += "\n";

    if (parametric) {
        detail::emit_model(out, "coefficients.eta", cfg.coef.eta);
        detail::emit_model(out, "coefficients.mu", cfg.coef.mu);
        detail::emit_model(out, "coefficients.pi", cfg.coef.pi);
        detail::emit_model(out, "coefficients.lambda1", cfg.coef.lambda1);
        if (cfg.coef.lambda2)
            detail::emit_model(out, "coefficients.lambda2", *cfg.coef.lambda2);
        out += "[lc]\n";
        out += "p1 = " + fmt_g17(cfg.lc.p1) + "\n";
        out += "m = " + fmt_g17(cfg.lc.m) + "\n";
        out += "s = " + fmt_g17(cfg.lc.s) + "\n";
        out += "p3 = " + fmt_g17(cfg.lc.p3) + "\n\n";
    }

    if (cfg.nuisance_override) {
        const nuisance_spec& sp = *cfg.nuisance_override;
        out += "[nuisance.eta]\n";
        if (sp.known_treatment_prob)
            out += "known = " + fmt_g17(*sp.known_treatment_prob) + "\n";
        else
            detail::emit_terms(out, sp.eta_terms);
        out += "\n[nuisance.mu]\n";
        if (sp.outcome_kind == outcome_model_kind::beta_per_arm) {
            out += "kind = \"beta-per-arm\"\n";
        } else {
            out += "kind = \"gaussian\"\n";
            detail::emit_terms(out, sp.mu_terms);
        }
        out += "\n[nuisance.pi]\n";
        detail::emit_terms(out, sp.pi_terms);
        out += "\n[nuisance.lambda1]\n";
        out += std::string("family = \"") +
               (sp.lambda1_family == glm_family::gamma_log ? "gamma-log" : "bernoulli-logit") +
               "\"\n";
        detail::emit_terms(out, sp.lambda1_terms);
        if (sp.gamma_shape_mle) out += "shape = \"mle\"\n";
        if (sp.lambda2_family) {
            out += "\n[nuisance.lambda2]\n";
            out += std::string("family = \"") +
                   (*sp.lambda2_family == glm_family::gaussian_identity ? "gaussian"
                                                                        : "bernoulli-logit") +
                   "\"\n";
            detail::emit_terms(out, sp.lambda2_terms);
        }
        out += "\n";
    }

    out += "[run]\n";
    out += "n = " + std::to_string(cfg.run.n) + "\n";
    out += "replicates = " + std::to_string(cfg.run.replicates) + "\n";
    out += "seed = " + std::to_string(cfg.run.master_seed) + "\n";
    out += "workers = " + std::to_string(cfg.run.workers) + "\n";
    if (!cfg.run.clip.enabled) {
        out += "clip = \"off\"\n";
    } else {
        out += "clip_lo = " + fmt_g17(cfg.run.clip.lo) + "\n";
        out += "clip_hi = " + fmt_g17(cfg.run.clip.hi) + "\n";
    }
    out += "crossfit_folds = " + std::to_string(cfg.run.crossfit_folds) + "\n";
    out += "imputations = " + std::to_string(cfg.run.imputations) + "\n";
    if (cfg.run.quad.y_gauss_nodes == cfg.run.quad.y_beta_nodes)
        out += "y_nodes = " + std::to_string(cfg.run.quad.y_gauss_nodes) + "\n";
    if (cfg.run.quad.lp_gamma_nodes == cfg.run.quad.lp_gauss_nodes)
        out += "lp_nodes = " + std::to_string(cfg.run.quad.lp_gamma_nodes) + "\n";
    if (cfg.run.integration.monte_carlo) {
        out += "integrate_mc = true\n";
        out += "mc_draws = " + std::to_string(cfg.run.integration.mc_draws) + "\n";
    }
    out += std::string("truth = \"") +
           (cfg.run.truth.method == truth_spec::method_t::analytic ? "analytic" : "monte-carlo") +
           "\"\n";
    if (cfg.run.truth.method == truth_spec::method_t::monte_carlo) {
        out += "truth_nmc = " + std::to_string(cfg.run.truth.nmc) + "\n";
        out += "truth_repeats = " + std::to_string(cfg.run.truth.repeats) + "\n";
    }
    out += "bias_decimals = " + std::to_string(cfg.run.bias_decimals) + "\n";
    out += "fence = " + fmt_g17(cfg.run.fence_multiplier) + "\n\n";

    out += "[suite]\n";
    out += "estimators = [";
    for (std::size_t i = 0; i < cfg.suite.size(); ++i) {
        if (i) out += ", ";
        out += '"' + cfg.suite[i].name() + '"';
    }
    out += "]\n";
    return out;
}

}  // namespace ccmar
