// Command line front end: run replicate studies, evaluate reference values,
// and render tables or histograms from a previous run's output directory.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ccmar/ccmar.hpp"

namespace {

constexpr int exit_ok = 0;
constexpr int exit_failure = 1;
constexpr int exit_config = 2;
constexpr int exit_all_failed = 3;

struct run_overrides {
    std::string scenario;
    std::string out;
    int reps = -1;
    int n = -1;
    long long seed = -1;
    int workers = -1;
    int crossfit_folds = -1;
    int imputations = -1;
};

int resolve_workers(int cli_value, int config_value) {
    if (cli_value > 0) return cli_value;
    if (const char* env = std::getenv("CCMAR_WORKERS")) {
        char* end = nullptr;
        long w = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || w < 1)
            throw ccmar::config_error("CCMAR_WORKERS must be a positive integer");
        return static_cast<int>(w);
    }
    return config_value;
}

ccmar::scenario_config load_with_overrides(const run_overrides& ov) {
    ccmar::scenario_config cfg = ccmar::load_scenario_file(ov.scenario);
    if (ov.reps > 0) cfg.run.replicates = ov.reps;
    if (ov.n > 0) cfg.run.n = ov.n;
    if (ov.seed >= 0) cfg.run.master_seed = static_cast<std::uint64_t>(ov.seed);
    if (ov.crossfit_folds > 0) cfg.run.crossfit_folds = ov.crossfit_folds;
    if (ov.imputations > 0) cfg.run.imputations = ov.imputations;
    cfg.run.workers = resolve_workers(ov.workers, cfg.run.workers);
    ccmar::validate_scenario_config(cfg);
    return cfg;
}

std::string pick_reference(const std::vector<std::string>& names) {
    for (const auto& n : names)
        if (n == "ccmar-if") return n;
    return names.front();
}

int cmd_run(const run_overrides& ov) {
    ccmar::scenario_config cfg = load_with_overrides(ov);
    std::filesystem::create_directories(ov.out);

    ccmar::scenario_result result = ccmar::run_scenario(cfg, [](const std::string& line) {
        std::fprintf(stderr, "%s\n", line.c_str());
    });

    namespace fs = std::filesystem;
    ccmar::write_text_file((fs::path(ov.out) / "results.csv").string(),
                           ccmar::format_results_csv(result.rows));
    ccmar::write_text_file((fs::path(ov.out) / "meta.json").string(),
                           ccmar::build_meta_json(cfg, result).dump(2) + "\n");

    if (result.failed_replicates == result.replicates) {
        std::fprintf(stderr, "all %d replicates failed; no metrics written\n",
                     result.replicates);
        return exit_all_failed;
    }

    std::string reference = pick_reference(result.suite_names);
    std::vector<ccmar::metrics_row> metrics = ccmar::summarize(
        result.rows, result.truth.value, reference, cfg.run.fence_multiplier);
    ccmar::write_text_file(
        (fs::path(ov.out) / "metrics.csv").string(),
        ccmar::emit_table(metrics, ccmar::table_format::csv, cfg.run.bias_decimals));
    std::string markdown =
        ccmar::emit_table(metrics, ccmar::table_format::markdown, cfg.run.bias_decimals);
    ccmar::write_text_file((fs::path(ov.out) / "metrics.md").string(), markdown);

    std::printf("%s", markdown.c_str());
    if (result.failed_replicates > 0)
        std::fprintf(stderr, "%d of %d replicates failed\n", result.failed_replicates,
                     result.replicates);
    return exit_ok;
}

int cmd_truth(const std::string& scenario, long long nmc, int repeats) {
    ccmar::scenario_config cfg = ccmar::load_scenario_file(scenario);
    if (nmc > 0) cfg.run.truth.nmc = nmc;
    if (repeats > 0) cfg.run.truth.repeats = repeats;

    ccmar::truth_result truth;
    if (cfg.run.truth.method == ccmar::truth_spec::method_t::analytic)
        truth = ccmar::true_ate(cfg.coef, cfg.lc, 100000, 1, cfg.run.master_seed, cfg.run.quad);
    else
        truth = ccmar::true_ate(cfg.coef, cfg.lc, cfg.run.truth.nmc, cfg.run.truth.repeats,
                                cfg.run.master_seed, cfg.run.quad);
    std::printf("ate_truth=%.10g mc_se=%.3g method=%s\n", truth.value, truth.mc_se,
                truth.analytic ? "analytic" : "monte-carlo");
    return exit_ok;
}

double truth_from_meta(const std::string& dir) {
    namespace fs = std::filesystem;
    std::string text = ccmar::read_text_file((fs::path(dir) / "meta.json").string());
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(text);
        return meta.at("truth").at("value").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ccmar::config_error(dir + "/meta.json: " + e.what());
    }
}

int cmd_table(const std::string& dir, const std::string& format_name, int decimals) {
    namespace fs = std::filesystem;
    ccmar::table_format format = ccmar::parse_table_format(format_name);
    std::vector<ccmar::replicate_row> rows =
        ccmar::read_results_csv((fs::path(dir) / "results.csv").string());
    if (rows.empty()) throw ccmar::config_error(dir + "/results.csv has no rows");
    double truth = truth_from_meta(dir);

    std::vector<std::string> names;
    for (const auto& r : rows) {
        bool seen = false;
        for (const auto& n : names)
            if (n == r.est.estimator) seen = true;
        if (!seen) names.push_back(r.est.estimator);
    }
    std::vector<ccmar::metrics_row> metrics =
        ccmar::summarize(rows, truth, pick_reference(names));
    std::printf("%s", ccmar::emit_table(metrics, format, decimals).c_str());
    return exit_ok;
}

int cmd_hist(const std::string& dir, const std::string& estimator, int bins) {
    namespace fs = std::filesystem;
    std::vector<ccmar::replicate_row> rows =
        ccmar::read_results_csv((fs::path(dir) / "results.csv").string());
    ccmar::histogram_data hist = ccmar::emit_histogram_data(rows, estimator, bins);
    std::printf("%s", ccmar::format_histogram_csv(hist).c_str());
    std::fprintf(stderr, "%d values in %zu bins (%d dropped)\n", hist.kept,
                 hist.counts.size(), hist.dropped);
    return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Replicate studies for average treatment effect estimators under "
                 "partially missing confounders"};
    app.set_version_flag("--version", ccmar::version());
    app.require_subcommand(1);

    run_overrides ov;
    CLI::App* run = app.add_subcommand("run", "Run a replicate study and write its outputs");
    run->add_option("scenario,--scenario", ov.scenario, "Scenario file (.toml or .json)")
        ->required();
    run->add_option("--out", ov.out, "Output directory")->required();
    run->add_option("--reps,--replicates", ov.reps, "Override replicate count");
    run->add_option("--n", ov.n, "Override sample size");
    run->add_option("--seed", ov.seed, "Override master seed");
    run->add_option("--workers", ov.workers,
                    "Worker threads (overrides CCMAR_WORKERS and the scenario file)");
    run->add_option("--crossfit-folds", ov.crossfit_folds, "Override cross-fitting folds");
    run->add_option("--imputations", ov.imputations, "Override imputation copies");

    std::string truth_scenario;
    long long truth_nmc = -1;
    int truth_repeats = -1;
    CLI::App* truth = app.add_subcommand("truth", "Evaluate the reference treatment effect");
    truth->add_option("scenario,--scenario", truth_scenario, "Scenario file (.toml or .json)")
        ->required();
    truth->add_option("--nmc", truth_nmc, "Override monte-carlo sample size");
    truth->add_option("--repeats", truth_repeats, "Override monte-carlo repeat count");

    std::string table_dir, table_fmt = "markdown";
    int table_decimals = 1;
    CLI::App* table = app.add_subcommand("table", "Summarize a run directory as a table");
    table->add_option("--in", table_dir, "Run output directory")->required();
    table->add_option("--format", table_fmt, "Output format: markdown or csv");
    table->add_option("--decimals", table_decimals, "Decimal places for bias columns");

    std::string hist_dir, hist_estimator;
    int hist_bins = 0;
    CLI::App* hist = app.add_subcommand("hist", "Histogram of replicate estimates");
    hist->add_option("--in", hist_dir, "Run output directory")->required();
    hist->add_option("--estimator", hist_estimator, "Estimator id to plot")->required();
    hist->add_option("--bins", hist_bins, "Bin count (0 picks automatically)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? exit_ok : exit_config;
    }

    try {
        if (run->parsed()) return cmd_run(ov);
        if (truth->parsed()) return cmd_truth(truth_scenario, truth_nmc, truth_repeats);
        if (table->parsed()) return cmd_table(table_dir, table_fmt, table_decimals);
        if (hist->parsed()) return cmd_hist(hist_dir, hist_estimator, hist_bins);
    } catch (const ccmar::config_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_config;
    } catch (const ccmar::schema_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_config;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_failure;
    }
    return exit_config;
}
