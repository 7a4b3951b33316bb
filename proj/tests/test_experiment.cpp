#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "flowsde/experiment.hpp"
#include "flowsde/version.hpp"

using namespace flowsde;

namespace {

ExperimentConfig tiny_config() {
    ExperimentConfig config;
    config.num_steps = 10;
    config.trials = 2;
    config.trajectories_per_trial = 64;
    config.seed = 7;
    return config;
}

}  // namespace

TEST_CASE("config round trip through JSON") {
    SUBCASE("defaults") {
        const ExperimentConfig config;
        CHECK(parse_config(serialize_config(config)) == config);
    }
    SUBCASE("mixture endpoint, custom powers, explicit t_start") {
        ExperimentConfig config;
        GaussianMixtureEndpoint mix;
        mix.components.push_back({0.25, gaussian_1d(-2.0, 0.4)});
        mix.components.push_back({0.75, gaussian_1d(1.0, 0.6)});
        config.p0 = mix;
        config.family = SdeFamily::CustomPower;
        config.custom_power_t = 2;
        config.custom_power_one_minus_t = -1;
        config.t_start = 0.75;
        config.alpha = 2.25;
        config.seed = 0xdeadbeef;
        config.kl_direction = KlDirection::TruthFromEstimate;
        config.noise_on_final_step = false;
        config.record_stride = 3;
        CHECK(parse_config(serialize_config(config)) == config);
    }
    SUBCASE("multi-dimensional means") {
        ExperimentConfig config;
        config.p0 = GaussianEndpoint{{-1.0, 2.0}, 0.3};
        config.p1 = GaussianEndpoint{{0.0, 0.0}, 1.0};
        CHECK(parse_config(serialize_config(config)) == config);
    }
}

TEST_CASE("config validation failures carry the field name") {
    auto expect_error = [](const std::string& json_text, const std::string& fragment) {
        try {
            parse_config(json_text);
            FAIL_CHECK("expected ConfigError for ", json_text);
        } catch (const ConfigError& err) {
            INFO("message: ", err.what());
            CHECK(std::string(err.what()).find(fragment) != std::string::npos);
        }
    };
    expect_error(R"({"bogus": 1})", "bogus");
    expect_error(R"({"endpoints": {"p2": {}}})", "p2");
    expect_error(R"({"endpoints": {"p0": {"type": "gaussian", "mean": 0, "variance": -1}}})",
                 "variance");
    expect_error(R"({"endpoints": {"p0": {"type": "mixture", "components": [
                     {"weight": 0.5, "mean": 0, "variance": 1}]}}})",
                 "p0");
    expect_error(R"({"family": "stochastic"})", "family");
    expect_error(R"({"trials": 1})", "trials");
    expect_error(R"({"num_steps": 0})", "num_steps");
    expect_error(R"({"t_start": 1.5})", "t_start");
    expect_error(R"({"alpha": -0.5})", "alpha");
    expect_error(R"({"output": {"format": "parquet"}})", "format");
    expect_error(R"({"seed": -4})", "seed");
    expect_error("not json", "JSON");
}

TEST_CASE("worker threads honor the environment cap") {
    ExperimentConfig config;
    config.threads = 16;
    setenv("FLOWSDE_MAX_THREADS", "3", 1);
    CHECK(resolve_threads(config) == 3);
    CHECK(resolve_threads(config, 2) == 2);
    unsetenv("FLOWSDE_MAX_THREADS");
    CHECK(resolve_threads(config) == 16);
    CHECK(resolve_threads(config, 5) == 5);
}

TEST_CASE("csv schema is pinned") {
    MarginalReport report;
    report.rows.push_back({1.0, 0.1, 0.01, 0.001, 0.9, -0.05, 0.002, 0.3});
    report.rows.push_back({0.0, -1.0, 0.0, 0.0, 0.3, 0.0, 0.0, 0.0});
    const std::string csv = report_csv_string(report);
    CHECK(csv.rfind("t,mean_est,mean_err,mean_std,var_est,var_err,var_std,kl\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}

TEST_CASE("floats are serialized with 17 significant digits") {
    CHECK(format_double(1.0 / 3.0) == "0.33333333333333331");
    CHECK(format_double(0.3) == "0.29999999999999999");
    CHECK(format_double(1.0) == "1");
    // value survives a text round trip exactly
    const double value = -0.76923076923076927;
    CHECK(std::stod(format_double(value)) == value);
}

TEST_CASE("experiment runs are deterministic across thread counts") {
    const ExperimentConfig config = tiny_config();
    const MarginalReport serial = run_experiment(config, 1);
    const MarginalReport threaded = run_experiment(config, 8);
    CHECK(report_csv_string(serial) == report_csv_string(threaded));
    const MarginalReport again = run_experiment(config, 1);
    CHECK(report_csv_string(serial) == report_csv_string(again));
}

TEST_CASE("experiment seed changes the report") {
    ExperimentConfig config = tiny_config();
    const std::string baseline = report_csv_string(run_experiment(config, 1));
    config.seed = 8;
    CHECK(report_csv_string(run_experiment(config, 1)) != baseline);
}

TEST_CASE("report rows descend in time and match the stride") {
    ExperimentConfig config = tiny_config();
    config.num_steps = 40;
    config.record_stride = 10;
    const MarginalReport report = run_experiment(config, 1);
    REQUIRE(report.rows.size() == 5);
    for (std::size_t i = 0; i + 1 < report.rows.size(); ++i) {
        CHECK(report.rows[i].t > report.rows[i + 1].t);
    }
    CHECK(report.rows.back().t == 0.0);
    CHECK(report.meta.family == "nonsingular");
    CHECK(report.meta.num_steps == 40);
}

TEST_CASE("mixture config runs end to end") {
    ExperimentConfig config = tiny_config();
    GaussianMixtureEndpoint mix;
    mix.components.push_back({0.5, gaussian_1d(-1.5, 0.4)});
    mix.components.push_back({0.5, gaussian_1d(1.5, 0.4)});
    config.p0 = mix;
    config.trajectories_per_trial = 2000;
    config.num_steps = 50;
    const MarginalReport report = run_experiment(config, 2);
    // mixture mean is 0 by symmetry; estimate should land near it
    CHECK(std::abs(report.row_at(0.0).mean_est) < 0.2);
    CHECK(report.row_at(0.0).var_est > 1.0);  // bimodal spread, not component width
}

TEST_CASE("metadata sidecar carries config, version, and seed") {
    const ExperimentConfig config = tiny_config();
    const MarginalReport report = run_experiment(config, 1);
    const std::string text = metadata_json_string(config, report);
    const auto root = nlohmann::json::parse(text);
    CHECK(root.at("library_version") == kVersion);
    CHECK(root.at("seed") == config.seed);
    CHECK(root.at("diverged") == false);
    // full config round-trips from the sidecar alone
    CHECK(parse_config(root.at("config").dump()) == config);
}

TEST_CASE("sweep summaries") {
    MarginalReport a, b;
    a.rows.push_back({0.0, 0, 0, 0, 0, 0, 0, 0.25});
    b.rows.push_back({0.0, 0, 0, 0, 0, -0.01, 0.002, 0.125});
    const std::string alpha_summary = sweep_alpha_summary_csv({{0.0, a}, {1.0, b}});
    CHECK(alpha_summary == "alpha,kl_t0\n0,0.25\n1,0.125\n");
    const std::string steps_summary =
        sweep_steps_summary_csv({{50, "deterministic", b}});
    CHECK(steps_summary ==
          "num_steps,family,var_err_t0,var_std_t0\n50,deterministic,-0.01,0.002\n");
}

TEST_CASE("gnuplot script references the data file") {
    const std::string script = gnuplot_script_for("runs/report.csv");
    CHECK(script.find("runs/report.csv") != std::string::npos);
    CHECK(script.find("plot") != std::string::npos);
}

TEST_CASE("pole configs surface as domain errors") {
    ExperimentConfig config = tiny_config();
    config.family = SdeFamily::Singular;
    config.alpha = std::sqrt(2.0);
    config.t_start = 1.0;
    CHECK_THROWS_AS(run_experiment(config, 1), std::domain_error);
    config.t_start.reset();  // family default 1 - 1e-3
    CHECK_NOTHROW(run_experiment(config, 1));
}

TEST_CASE("divergence is reported in the metadata") {
    ExperimentConfig config = tiny_config();
    config.divergence_bound = 1e-3;  // prior draws already exceed this
    const MarginalReport report = run_experiment(config, 1);
    CHECK(report.meta.diverged);
}
