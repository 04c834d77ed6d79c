#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "ccmar/coefficients.hpp"
#include "ccmar/dgp.hpp"
#include "ccmar/error.hpp"
#include "ccmar/estimators.hpp"
#include "ccmar/numeric.hpp"
#include "ccmar/nuisance.hpp"
#include "ccmar/rng.hpp"

namespace ccmar {

struct truth_spec {
    enum class method_t { analytic, monte_carlo } method = method_t::monte_carlo;
    long nmc = 2000000;
    int repeats = 5;
};

struct run_settings {
    int n = 1000;
    int replicates = 100;
    std::uint64_t master_seed = 1;
    int workers = 1;
    clip_policy clip;
    int crossfit_folds = 1;
    int imputations = 1;
    quadrature_settings quad;
    integration_policy integration;
    lasso_options lasso;
    glm_options glm_opts;
    int bias_decimals = 1;
    double fence_multiplier = 10.0;
    truth_spec truth;
};

struct scenario_config {
    std::string name;
    scenario_coefficients coef;
    lc_params lc;
    // Explicit estimation models; when absent they are derived from the
    // generating coefficients.
    std::optional<nuisance_spec> nuisance_override;
    std::vector<estimator_id> suite;
    run_settings run;
};

inline nuisance_spec resolve_nuisance_spec(const scenario_config& cfg) {
    if (cfg.nuisance_override) {
        validate_nuisance_spec(*cfg.nuisance_override);
        return *cfg.nuisance_override;
    }
    return make_default_nuisance_spec(cfg.coef);
}

inline void validate_scenario_config(const scenario_config& cfg) {
    validate_coefficients(cfg.coef);
    resolve_nuisance_spec(cfg);
    if (cfg.suite.empty()) throw config_error("scenario needs at least one estimator");
    if (cfg.run.n < 2) throw config_error("scenario needs a sample size of at least 2");
    if (cfg.run.replicates < 1) throw config_error("scenario needs at least one replicate");
    if (cfg.run.workers < 1) throw config_error("scenario needs at least one worker");
    if (cfg.run.crossfit_folds < 1)
        throw config_error("scenario needs at least one crossfit fold");
    if (cfg.run.imputations < 1) throw config_error("scenario needs at least one imputation");
    if (cfg.run.fence_multiplier <= 0.0)
        throw config_error("the outlier fence multiplier must be positive");
    if (cfg.run.truth.method == truth_spec::method_t::monte_carlo) {
        if (cfg.coef.kind == factorization_kind::np_beta)
            throw config_error("the np-beta design has an analytic truth; use it");
    } else if (cfg.coef.kind != factorization_kind::np_beta) {
        throw config_error("only the np-beta design has an analytic truth");
    }
    if (cfg.coef.kind != factorization_kind::np_beta) {
        if (!(cfg.lc.p1 > 0.0 && cfg.lc.p1 < 1.0 && cfg.lc.p3 > 0.0 && cfg.lc.p3 < 1.0))
            throw config_error("covariate generator probabilities must lie in (0,1)");
        if (!(cfg.lc.s > 0.0))
            throw config_error("covariate generator needs a positive spread");
    }
}

struct replicate_row {
    int replicate = 0;
    estimate_record est;
};

struct scenario_result {
    std::vector<replicate_row> rows;  // ordered by replicate, then suite position
    truth_result truth;
    int failed_replicates = 0;
    int replicates = 0;
    std::vector<std::string> suite_names;
};

using progress_sink = std::function<void(const std::string&)>;

namespace detail {

inline std::vector<coarsened_record> generate_sample(const scenario_config& cfg,
                                                     rng_stream& rng) {
    switch (cfg.coef.kind) {
        case factorization_kind::sequential: return gen_sequential(cfg.coef, cfg.lc, cfg.run.n, rng);
        case factorization_kind::alternative: return gen_alt(cfg.coef, cfg.lc, cfg.run.n, rng);
        case factorization_kind::np_beta: return gen_np(cfg.run.n, rng);
    }
    throw state_error("generate_sample: unknown generative sequence");
}

}  // namespace detail

// Run every replicate of a scenario, fanning out over worker threads. Each
// replicate draws its sample and estimator randomness from streams keyed by
// (master seed, replicate index), so results are identical for any worker
// count and adding replicates never changes earlier rows. A replicate that
// throws produces failed rows for the whole suite instead of aborting.
inline scenario_result run_scenario(const scenario_config& cfg,
                                    const progress_sink& progress = {}) {
    validate_scenario_config(cfg);
    const nuisance_spec nspec = resolve_nuisance_spec(cfg);

    scenario_result result;
    result.replicates = cfg.run.replicates;
    for (const auto& id : cfg.suite) result.suite_names.push_back(id.name());

    if (cfg.run.truth.method == truth_spec::method_t::analytic) {
        result.truth = true_ate(cfg.coef, cfg.lc, 100000, 1, cfg.run.master_seed, cfg.run.quad);
    } else {
        result.truth = true_ate(cfg.coef, cfg.lc, cfg.run.truth.nmc, cfg.run.truth.repeats,
                                cfg.run.master_seed, cfg.run.quad);
    }
    if (progress) {
        char line[160];
        std::snprintf(line, sizeof line, "truth %.8f (mc se %.2g)", result.truth.value,
                      result.truth.mc_se);
        progress(line);
    }

    const int reps = cfg.run.replicates;
    const std::size_t width = cfg.suite.size();
    result.rows.resize(static_cast<std::size_t>(reps) * width);

    std::atomic<int> next{0};
    std::atomic<int> done{0};
    std::atomic<int> failed{0};
    std::mutex progress_mutex;

    auto run_one = [&](int rep) {
        std::vector<estimate_record> rows;
        try {
            rng_stream gen = rng_stream::keyed(cfg.run.master_seed,
                                               static_cast<std::uint64_t>(rep),
                                               rng_stage::generate);
            auto sample = detail::generate_sample(cfg, gen);
            suite_context ctx;
            ctx.nspec = nspec;
            ctx.coef = cfg.coef;
            ctx.quad = cfg.run.quad;
            ctx.clip = cfg.run.clip;
            ctx.integration = cfg.run.integration;
            ctx.glm_opts = cfg.run.glm_opts;
            ctx.lasso_opts = cfg.run.lasso;
            ctx.crossfit_folds = cfg.run.crossfit_folds;
            ctx.imputations = cfg.run.imputations;
            ctx.seed = stream_seed(cfg.run.master_seed, static_cast<std::uint64_t>(rep),
                                   rng_stage::estimate);
            rows = run_estimator_suite(sample, cfg.suite, ctx);
        } catch (const std::exception&) {
            rows.assign(width, estimate_record{});
            for (std::size_t k = 0; k < width; ++k) {
                rows[k].estimator = cfg.suite[k].name();
                rows[k].flags.failed = true;
            }
        }
        bool all_failed = true;
        for (const auto& r : rows) all_failed = all_failed && r.flags.failed;
        if (all_failed) failed.fetch_add(1);
        for (std::size_t k = 0; k < width; ++k)
            result.rows[static_cast<std::size_t>(rep) * width + k] = {rep, rows[k]};
        int finished = done.fetch_add(1) + 1;
        if (progress && (finished % 25 == 0 || finished == reps)) {
            std::lock_guard<std::mutex> hold(progress_mutex);
            char line[96];
            std::snprintf(line, sizeof line, "replicate %d/%d", finished, reps);
            progress(line);
        }
    };

    const int workers = std::min(cfg.run.workers, reps);
    if (workers <= 1) {
        for (int rep = 0; rep < reps; ++rep) run_one(rep);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (;;) {
                    int rep = next.fetch_add(1);
                    if (rep >= reps) return;
                    run_one(rep);
                }
            });
        for (auto& t : pool) t.join();
    }

    result.failed_replicates = failed.load();
    return result;
}

// ---------------------------------------------------------------------------
// Replicate summaries
// ---------------------------------------------------------------------------

struct metrics_row {
    std::string estimator;
    double pct_bias = 0.0;
    double pct_m_bias = 0.0;
    double se = 0.0;
    double relative_uncertainty = 1.0;
    int dropped = 0;
    // Extra diagnostics, not part of the metrics table.
    double mean = 0.0;
    double median_value = 0.0;
    double skewness = 0.0;
    double absolute_bias = 0.0;
    int kept = 0;
};

namespace detail {

struct fence_split {
    std::vector<double> kept;
    int dropped_nonfinite = 0;
    int dropped_fence = 0;
};

// Keep finite values within fence * IQR of the median. A zero IQR keeps
// exact ties with the median only, which collapses correctly for degenerate
// distributions.
inline fence_split apply_fence(const std::vector<double>& values, double fence) {
    fence_split out;
    std::vector<double> finite;
    finite.reserve(values.size());
    for (double v : values) {
        if (std::isfinite(v)) finite.push_back(v);
        else ++out.dropped_nonfinite;
    }
    if (finite.empty()) return out;
    double med = median(finite);
    double iqr = quantile(finite, 0.75) - quantile(finite, 0.25);
    double width = fence * iqr;
    for (double v : finite) {
        if (std::abs(v - med) <= width) out.kept.push_back(v);
        else ++out.dropped_fence;
    }
    return out;
}

inline double bias_against(double estimate, double truth) {
    if (std::abs(truth) < 1e-8) return estimate - truth;
    return 100.0 * (estimate - truth) / truth;
}

}  // namespace detail

// Per-estimator replicate summaries. Estimators appear in first-seen order;
// the reference estimator anchors the relative-uncertainty column.
inline std::vector<metrics_row> summarize(const std::vector<replicate_row>& rows, double truth,
                                          const std::string& reference = "ccmar-if",
                                          double fence = 10.0) {
    std::vector<std::string> order;
    std::map<std::string, std::vector<double>> values;
    for (const auto& row : rows) {
        auto it = values.find(row.est.estimator);
        if (it == values.end()) {
            order.push_back(row.est.estimator);
            it = values.emplace(row.est.estimator, std::vector<double>{}).first;
        }
        it->second.push_back(row.est.ate);
    }
    if (!values.count(reference))
        throw config_error("summarize: reference estimator '" + reference +
                           "' is not in the results");

    std::vector<metrics_row> out;
    out.reserve(order.size());
    double se_ref = std::numeric_limits<double>::quiet_NaN();
    for (const auto& name : order) {
        detail::fence_split split = detail::apply_fence(values[name], fence);
        if (split.kept.empty())
            throw domain_error("summarize: estimator '" + name + "' kept no replicates");
        metrics_row m;
        m.estimator = name;
        m.kept = static_cast<int>(split.kept.size());
        m.dropped = split.dropped_nonfinite + split.dropped_fence;
        m.mean = mean(split.kept);
        m.median_value = median(split.kept);
        m.skewness = sample_skewness(split.kept);
        m.se = sample_sd(split.kept);
        m.pct_bias = detail::bias_against(m.mean, truth);
        m.pct_m_bias = detail::bias_against(m.median_value, truth);
        m.absolute_bias = m.mean - truth;
        if (name == reference) se_ref = m.se;
        out.push_back(std::move(m));
    }
    for (auto& m : out) {
        if (m.estimator == reference) m.relative_uncertainty = 1.0;
        else m.relative_uncertainty = m.se / se_ref;
    }
    return out;
}

struct flag_counts {
    int nonconverged = 0;
    int clipped = 0;
    int failed = 0;
    int fence_dropped = 0;
};

// Tally quality flags per estimator, including how many replicates the
// outlier fence would discard.
inline std::map<std::string, flag_counts> flag_report(const std::vector<replicate_row>& rows,
                                                      double fence = 10.0) {
    std::map<std::string, flag_counts> out;
    std::map<std::string, std::vector<double>> values;
    for (const auto& row : rows) {
        flag_counts& c = out[row.est.estimator];
        if (row.est.flags.nonconverged) ++c.nonconverged;
        if (row.est.flags.clipped) ++c.clipped;
        if (row.est.flags.failed) ++c.failed;
        values[row.est.estimator].push_back(row.est.ate);
    }
    for (auto& [name, vals] : values)
        out[name].fence_dropped = detail::apply_fence(vals, fence).dropped_fence;
    return out;
}

}  // namespace ccmar
