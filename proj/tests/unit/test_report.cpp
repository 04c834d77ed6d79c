#include "catch_amalgamated.hpp"

#include "ccmar/report.hpp"
#include "ccmar/scenario_file.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

using namespace ccmar;

namespace {

replicate_row make_row(int rep, const std::string& est, double ate, bool failed = false) {
    replicate_row row;
    row.replicate = rep;
    row.est.estimator = est;
    if (failed) {
        row.est.flags.failed = true;
    } else {
        row.est.chi1 = ate + 0.125;
        row.est.chi0 = 0.125;
        row.est.ate = ate;
    }
    return row;
}

}  // namespace

TEST_CASE("the results table survives a round trip, including failures") {
    std::vector<replicate_row> rows;
    rows.push_back(make_row(0, "ccmar-if", 0.2537890625));
    rows.push_back(make_row(0, "ccmar-iwor", 1.0 / 3.0));
    rows.push_back(make_row(1, "ccmar-if", -0.75, true));
    rows[0].est.flags.clipped = true;
    rows[1].est.flags.nonconverged = true;

    std::string text = format_results_csv(rows);
    REQUIRE(text.rfind("replicate,estimator,chi1,chi0,ate,nonconverged,clipped", 0) == 0);

    std::vector<replicate_row> back = parse_results_csv(text);
    REQUIRE(back.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        REQUIRE(back[i].replicate == rows[i].replicate);
        REQUIRE(back[i].est.estimator == rows[i].est.estimator);
        if (rows[i].est.flags.failed) {
            REQUIRE(std::isnan(back[i].est.ate));
            REQUIRE(back[i].est.flags.failed);
        } else {
            REQUIRE(back[i].est.ate == rows[i].est.ate);
            REQUIRE(back[i].est.chi1 == rows[i].est.chi1);
            REQUIRE(back[i].est.chi0 == rows[i].est.chi0);
        }
        REQUIRE(back[i].est.flags.clipped == rows[i].est.flags.clipped);
        REQUIRE(back[i].est.flags.nonconverged == rows[i].est.flags.nonconverged);
    }

    REQUIRE_THROWS_AS(parse_results_csv("not,a,results,table\n"), config_error);
}

TEST_CASE("the metrics table renders exact columns") {
    std::vector<replicate_row> rows{make_row(0, "ccmar-if", 1.1), make_row(1, "ccmar-if", 0.9),
                                    make_row(2, "ccmar-if", 1.0)};
    std::vector<metrics_row> metrics = summarize(rows, 1.0);
    std::string csv = emit_table(metrics, table_format::csv, 1);
    REQUIRE(csv ==
            "estimator,pct_bias,pct_m_bias,se,relative_uncertainty,dropped\n"
            "ccmar-if,0.0,0.0,0.100,1.000,0\n");

    std::string md = emit_table(metrics, table_format::markdown, 2);
    REQUIRE(md.find("| ccmar-if ") != std::string::npos);
    REQUIRE(md.find("| 0.00 ") != std::string::npos);
    REQUIRE(md.find("| Estimator ") != std::string::npos);

    REQUIRE_THROWS_AS(parse_table_format("tsv"), config_error);
    REQUIRE(parse_table_format("markdown") == table_format::markdown);
}

TEST_CASE("histogram bins tile the range and conserve the replicate count") {
    std::vector<replicate_row> rows;
    for (int i = 0; i < 101; ++i)
        rows.push_back(make_row(i, "ccmar-if", 0.01 * i + 0.001 * (i % 7)));
    histogram_data h = emit_histogram_data(rows, "ccmar-if", 12);
    REQUIRE(h.counts.size() == 12);
    long total = 0;
    for (long c : h.counts) total += c;
    REQUIRE(total == h.kept);
    REQUIRE(h.kept + h.dropped == 101);

    std::string csv = format_histogram_csv(h);
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start < csv.size()) {
        std::size_t end = csv.find('\n', start);
        lines.push_back(csv.substr(start, end - start));
        start = end + 1;
    }
    REQUIRE(lines.size() == 13);
    std::string prev_hi;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        std::size_t c1 = lines[i].find(',');
        std::size_t c2 = lines[i].find(',', c1 + 1);
        std::string lo = lines[i].substr(0, c1);
        if (i > 1) REQUIRE(lo == prev_hi);
        prev_hi = lines[i].substr(c1 + 1, c2 - c1 - 1);
    }

    REQUIRE_THROWS_AS(emit_histogram_data(rows, "missing", 12), config_error);
}

TEST_CASE("identical estimates collapse to a single histogram bin") {
    std::vector<replicate_row> rows;
    for (int i = 0; i < 20; ++i) rows.push_back(make_row(i, "ccmar-if", 0.25));
    histogram_data h = emit_histogram_data(rows, "ccmar-if", 10);
    REQUIRE(h.bin_width == 0.0);
    REQUIRE(h.counts.size() == 1);
    REQUIRE(h.counts[0] == 20);
    std::string csv = format_histogram_csv(h);
    REQUIRE(csv.find(",20\n") != std::string::npos);
}

TEST_CASE("run metadata carries the reproducibility fields and no clock") {
    scenario_config cfg;
    cfg.name = "np-meta";
    cfg.coef = np_generating_coefficients();
    cfg.suite = {parse_estimator_id("ccmar-if")};
    cfg.run.n = 300;
    cfg.run.replicates = 2;
    cfg.run.master_seed = 12345;
    cfg.run.truth.method = truth_spec::method_t::analytic;

    scenario_result res = run_scenario(cfg);
    nlohmann::ordered_json meta = build_meta_json(cfg, res);
    REQUIRE(meta["scenario"] == "np-meta");
    REQUIRE(meta["n"] == 300);
    REQUIRE(meta["replicates"] == 2);
    REQUIRE(meta["master_seed"] == 12345);
    REQUIRE(meta.contains("truth"));
    REQUIRE(std::abs(meta["truth"]["value"].get<double>() - 1.0 / 3.0) < 1e-12);
    REQUIRE(meta["estimators"].size() == 1);
    std::string dumped = meta.dump();
    REQUIRE(dumped.find("time") == std::string::npos);
    REQUIRE(dumped.find("date") == std::string::npos);

    // The same metadata serializes identically on a repeated run.
    scenario_result res2 = run_scenario(cfg);
    REQUIRE(build_meta_json(cfg, res2).dump() == dumped);
}
