#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ccmar/error.hpp"
#include "ccmar/harness.hpp"
#include "ccmar/numeric.hpp"
#include "ccmar/version.hpp"

namespace ccmar {

namespace detail {

inline std::string fmt_g17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline std::string fmt_fixed(double x, int decimals) {
    if (!std::isfinite(x)) return std::isnan(x) ? "nan" : (x > 0 ? "inf" : "-inf");
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, x);
    return buf;
}

}  // namespace detail

inline constexpr const char* results_csv_header =
    "replicate,estimator,chi1,chi0,ate,nonconverged,clipped";

inline std::string format_results_csv(const std::vector<replicate_row>& rows) {
    std::string out(results_csv_header);
    out.push_back('\n');
    for (const auto& row : rows) {
        out += std::to_string(row.replicate);
        out.push_back(',');
        out += row.est.estimator;
        out.push_back(',');
        out += detail::fmt_g17(row.est.chi1);
        out.push_back(',');
        out += detail::fmt_g17(row.est.chi0);
        out.push_back(',');
        out += detail::fmt_g17(row.est.ate);
        out.push_back(',');
        out.push_back(row.est.flags.nonconverged ? '1' : '0');
        out.push_back(',');
        out.push_back(row.est.flags.clipped ? '1' : '0');
        out.push_back('\n');
    }
    return out;
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw config_error("cannot open '" + path + "' for writing");
    out << content;
    if (!out) throw config_error("failed writing '" + path + "'");
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::vector<replicate_row> parse_results_csv(const std::string& text) {
    std::vector<replicate_row> rows;
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw config_error("results table is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != results_csv_header)
        throw config_error("results table has an unexpected header: " + line);
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        for (;;) {
            std::size_t comma = line.find(',', start);
            if (comma == std::string::npos) {
                fields.push_back(line.substr(start));
                break;
            }
            fields.push_back(line.substr(start, comma - start));
            start = comma + 1;
        }
        if (fields.size() != 7)
            throw config_error("results row " + std::to_string(lineno) +
                               " has the wrong field count");
        replicate_row row;
        row.replicate = std::atoi(fields[0].c_str());
        row.est.estimator = fields[1];
        row.est.chi1 = std::strtod(fields[2].c_str(), nullptr);
        row.est.chi0 = std::strtod(fields[3].c_str(), nullptr);
        row.est.ate = std::strtod(fields[4].c_str(), nullptr);
        row.est.flags.nonconverged = fields[5] == "1";
        row.est.flags.clipped = fields[6] == "1";
        // A replicate that produced no estimate serializes as nan; restore
        // the failure marker so downstream tallies see it.
        row.est.flags.failed = std::isnan(row.est.ate);
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::vector<replicate_row> read_results_csv(const std::string& path) {
    return parse_results_csv(read_text_file(path));
}

enum class table_format { csv, markdown };

inline table_format parse_table_format(const std::string& s) {
    if (s == "csv") return table_format::csv;
    if (s == "markdown") return table_format::markdown;
    throw config_error("unknown table format '" + s + "'");
}

// Render the metrics table. Bias columns honour the configured number of
// decimals; spread columns use three.
inline std::string emit_table(const std::vector<metrics_row>& metrics, table_format format,
                              int bias_decimals = 1) {
    std::string out;
    if (format == table_format::csv) {
        out = "estimator,pct_bias,pct_m_bias,se,relative_uncertainty,dropped\n";
        for (const auto& m : metrics) {
            out += m.estimator;
            out.push_back(',');
            out += detail::fmt_fixed(m.pct_bias, bias_decimals);
            out.push_back(',');
            out += detail::fmt_fixed(m.pct_m_bias, bias_decimals);
            out.push_back(',');
            out += detail::fmt_fixed(m.se, 3);
            out.push_back(',');
            out += detail::fmt_fixed(m.relative_uncertainty, 3);
            out.push_back(',');
            out += std::to_string(m.dropped);
            out.push_back('\n');
        }
        return out;
    }
    out = "| Estimator | % Bias | % M-Bias | SE | Relative Uncertainty | Dropped |\n";
    out += "| --- | ---: | ---: | ---: | ---: | ---: |\n";
    for (const auto& m : metrics) {
        out += "| " + m.estimator;
        out += " | " + detail::fmt_fixed(m.pct_bias, bias_decimals);
        out += " | " + detail::fmt_fixed(m.pct_m_bias, bias_decimals);
        out += " | " + detail::fmt_fixed(m.se, 3);
        out += " | " + detail::fmt_fixed(m.relative_uncertainty, 3);
        out += " | " + std::to_string(m.dropped) + " |\n";
    }
    return out;
}

struct histogram_data {
    double lo = 0.0;
    double hi = 0.0;
    double bin_width = 0.0;
    std::vector<long> counts;
    int kept = 0;
    int dropped = 0;
};

// Equal-width bins over the fence-kept estimates of one estimator. With
// bins < 1 the bin count follows the Freedman-Diaconis rule with a floor of
// eight; a degenerate sample collapses to a single bin.
inline histogram_data emit_histogram_data(const std::vector<replicate_row>& rows,
                                          const std::string& estimator, int bins = 0,
                                          double fence = 10.0) {
    std::vector<double> values;
    for (const auto& row : rows)
        if (row.est.estimator == estimator) values.push_back(row.est.ate);
    if (values.empty())
        throw config_error("no rows for estimator '" + estimator + "'");
    detail::fence_split split = detail::apply_fence(values, fence);
    if (split.kept.empty())
        throw domain_error("estimator '" + estimator + "' kept no replicates");

    histogram_data h;
    h.kept = static_cast<int>(split.kept.size());
    h.dropped = split.dropped_nonfinite + split.dropped_fence;
    double lo = split.kept.front(), hi = split.kept.front();
    for (double v : split.kept) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    h.lo = lo;
    h.hi = hi;
    if (lo == hi) {
        h.counts.assign(1, static_cast<long>(h.kept));
        h.bin_width = 0.0;
        return h;
    }
    int nbins = bins;
    if (nbins < 1) {
        double iqr = quantile(split.kept, 0.75) - quantile(split.kept, 0.25);
        double width = 2.0 * iqr * std::pow(static_cast<double>(h.kept), -1.0 / 3.0);
        if (width > 0.0)
            nbins = static_cast<int>(std::ceil((hi - lo) / width));
        nbins = std::max(nbins, 8);
    }
    h.counts.assign(static_cast<std::size_t>(nbins), 0);
    h.bin_width = (hi - lo) / nbins;
    for (double v : split.kept) {
        int idx = static_cast<int>((v - lo) / h.bin_width);
        if (idx >= nbins) idx = nbins - 1;
        if (idx < 0) idx = 0;
        ++h.counts[static_cast<std::size_t>(idx)];
    }
    return h;
}

inline std::string format_histogram_csv(const histogram_data& h) {
    std::string out = "bin_lo,bin_hi,count\n";
    if (h.bin_width == 0.0) {
        out += detail::fmt_g17(h.lo) + "," + detail::fmt_g17(h.hi) + "," +
               std::to_string(h.counts.empty() ? 0L : h.counts[0]) + "\n";
        return out;
    }
    for (std::size_t k = 0; k < h.counts.size(); ++k) {
        double lo = h.lo + h.bin_width * static_cast<double>(k);
        double hi = (k + 1 == h.counts.size())
                        ? h.hi
                        : h.lo + h.bin_width * static_cast<double>(k + 1);
        out += detail::fmt_g17(lo) + "," + detail::fmt_g17(hi) + "," +
               std::to_string(h.counts[k]) + "\n";
    }
    return out;
}

// Reproducibility sidecar for a scenario run. Deliberately carries no
// timestamps so identical runs produce identical bytes.
inline nlohmann::ordered_json build_meta_json(const scenario_config& cfg,
                                              const scenario_result& result) {
    nlohmann::ordered_json meta;
    meta["version"] = version();
    meta["scenario"] = cfg.name;
    meta["kind"] = factorization_name(cfg.coef.kind);
    meta["n"] = cfg.run.n;
    meta["replicates"] = cfg.run.replicates;
    meta["master_seed"] = cfg.run.master_seed;
    meta["workers"] = cfg.run.workers;
    meta["crossfit_folds"] = cfg.run.crossfit_folds;
    meta["imputations"] = cfg.run.imputations;
    if (cfg.run.clip.enabled) {
        meta["clip"] = {{"lo", cfg.run.clip.lo}, {"hi", cfg.run.clip.hi}};
    } else {
        meta["clip"] = "off";
    }
    meta["quadrature"] = {{"y_gauss_nodes", cfg.run.quad.y_gauss_nodes},
                          {"y_beta_nodes", cfg.run.quad.y_beta_nodes},
                          {"lp_gamma_nodes", cfg.run.quad.lp_gamma_nodes},
                          {"lp_gauss_nodes", cfg.run.quad.lp_gauss_nodes}};
    meta["truth"] = {{"method", result.truth.analytic ? "analytic" : "monte-carlo"},
                     {"value", result.truth.value},
                     {"mc_se", result.truth.mc_se}};
    meta["estimators"] = result.suite_names;
    meta["failed_replicates"] = result.failed_replicates;

    nlohmann::ordered_json flags = nlohmann::ordered_json::object();
    for (const auto& [name, counts] : flag_report(result.rows, cfg.run.fence_multiplier)) {
        flags[name] = {{"nonconverged", counts.nonconverged},
                       {"clipped", counts.clipped},
                       {"failed", counts.failed},
                       {"fence_dropped", counts.fence_dropped}};
    }
    meta["flags"] = flags;
    return meta;
}

}  // namespace ccmar
