#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "flowsde/experiment.hpp"
#include "flowsde/rng.hpp"
#include "flowsde/verify.hpp"
#include "flowsde/version.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitDivergence = 2;
constexpr int kExitVerifyFailure = 3;

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw flowsde::ConfigError("cannot open output file: " + path);
    }
    out << text;
}

void emit_report(const flowsde::ExperimentConfig& config, const flowsde::MarginalReport& report,
                 const std::string& csv_path, bool gnuplot) {
    write_text_file(csv_path, flowsde::report_csv_string(report));
    write_text_file(csv_path + ".meta.json", flowsde::metadata_json_string(config, report));
    if (gnuplot) {
        write_text_file(csv_path + ".gnuplot", flowsde::gnuplot_script_for(csv_path));
    }
}

std::string trim_csv_suffix(const std::string& path) {
    if (path.size() > 4 && path.substr(path.size() - 4) == ".csv") {
        return path.substr(0, path.size() - 4);
    }
    return path;
}

int cmd_simulate(const std::string& config_path, const std::string& output_override,
                 bool gnuplot, int threads) {
    flowsde::ExperimentConfig config = flowsde::load_config_file(config_path);
    if (!output_override.empty()) {
        config.output_path = output_override;
    }
    const flowsde::MarginalReport report = flowsde::run_experiment(config, threads);
    emit_report(config, report, config.output_path, gnuplot);
    if (report.meta.diverged) {
        std::cerr << "warning: run flagged as diverged (bound "
                  << flowsde::format_double(config.divergence_bound) << ")\n";
        return kExitDivergence;
    }
    std::cout << "wrote " << config.output_path << "\n";
    return kExitOk;
}

int cmd_sweep_alpha(const std::string& config_path, const std::vector<double>& alphas,
                    std::string prefix, bool decorrelate, bool gnuplot, int threads) {
    if (alphas.empty()) {
        throw CLI::ValidationError("--alphas", "needs at least one value");
    }
    const flowsde::ExperimentConfig base = flowsde::load_config_file(config_path);
    if (prefix.empty()) {
        prefix = trim_csv_suffix(base.output_path) + "_";
    }
    std::vector<std::pair<double, flowsde::MarginalReport>> runs;
    bool diverged = false;
    for (std::size_t i = 0; i < alphas.size(); ++i) {
        flowsde::ExperimentConfig config = base;
        config.alpha = alphas[i];
        if (decorrelate) {
            config.seed = flowsde::rng::fold(base.seed, i + 1);
        }
        char tag[32];
        std::snprintf(tag, sizeof(tag), "%g", alphas[i]);
        config.output_path = prefix + "alpha_" + tag + ".csv";
        const flowsde::MarginalReport report = flowsde::run_experiment(config, threads);
        emit_report(config, report, config.output_path, gnuplot);
        diverged = diverged || report.meta.diverged;
        runs.emplace_back(alphas[i], report);
    }
    const std::string summary_path = prefix + "alpha_summary.csv";
    write_text_file(summary_path, flowsde::sweep_alpha_summary_csv(runs));
    std::cout << "wrote " << summary_path << "\n";
    return diverged ? kExitDivergence : kExitOk;
}

int cmd_sweep_steps(const std::string& config_path, const std::vector<int>& steps,
                    std::vector<std::string> families, std::string prefix, bool decorrelate,
                    bool gnuplot, int threads) {
    if (steps.empty()) {
        throw CLI::ValidationError("--steps", "needs at least one value");
    }
    const flowsde::ExperimentConfig base = flowsde::load_config_file(config_path);
    if (families.empty()) {
        families.push_back(flowsde::family_name(base.family));
    }
    if (prefix.empty()) {
        prefix = trim_csv_suffix(base.output_path) + "_";
    }
    std::vector<std::tuple<int, std::string, flowsde::MarginalReport>> runs;
    bool diverged = false;
    std::size_t index = 0;
    for (const std::string& family : families) {
        for (int n : steps) {
            flowsde::ExperimentConfig config = base;
            config.family = flowsde::family_from_name(family);
            config.num_steps = n;
            config.t_start.reset();  // per-family default start
            if (decorrelate) {
                config.seed = flowsde::rng::fold(base.seed, ++index);
            }
            config.output_path = prefix + "steps_" + std::to_string(n) + "_" + family + ".csv";
            const flowsde::MarginalReport report = flowsde::run_experiment(config, threads);
            emit_report(config, report, config.output_path, gnuplot);
            diverged = diverged || report.meta.diverged;
            runs.emplace_back(n, family, report);
        }
    }
    const std::string summary_path = prefix + "steps_summary.csv";
    write_text_file(summary_path, flowsde::sweep_steps_summary_csv(runs));
    std::cout << "wrote " << summary_path << "\n";
    return diverged ? kExitDivergence : kExitOk;
}

int cmd_verify(bool list_only, double perturb_alpha) {
    if (list_only) {
        for (const auto& name : flowsde::verify_check_names()) {
            std::cout << name << "\n";
        }
        return kExitOk;
    }
    flowsde::VerifyOptions options;
    options.inject_alpha_perturbation = perturb_alpha;
    bool all_passed = true;
    for (const auto& result : flowsde::run_verify_checks(options)) {
        std::printf("[%s] %-42s tol %-9.3g max dev %.3g\n", result.passed ? "PASS" : "FAIL",
                    result.name.c_str(), result.tolerance, result.max_deviation);
        all_passed = all_passed && result.passed;
    }
    std::cout << (all_passed ? "verify: all checks passed\n" : "verify: FAILURES\n");
    return all_passed ? kExitOk : kExitVerifyFailure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stochastic samplers for deterministic flow models"};
    app.set_version_flag("--version", flowsde::kVersion);
    app.require_subcommand(1);

    std::string config_path;
    std::string output_override;
    std::string prefix;
    std::vector<double> alphas;
    std::vector<int> steps;
    std::vector<std::string> families;
    bool gnuplot = false;
    bool decorrelate = false;
    bool list_only = false;
    double perturb_alpha = 0.0;
    int threads = 0;

    auto* simulate = app.add_subcommand("simulate", "Run one experiment, write CSV + metadata");
    simulate->add_option("-c,--config", config_path, "JSON experiment config")->required();
    simulate->add_option("-o,--output", output_override, "Override output CSV path");
    simulate->add_flag("--gnuplot-script", gnuplot, "Also emit a gnuplot script");
    simulate->add_option("--threads", threads, "Worker threads (0 = auto)");

    auto* sweep_alpha = app.add_subcommand("sweep-alpha", "Repeat the experiment across alphas");
    sweep_alpha->add_option("-c,--config", config_path, "JSON experiment config")->required();
    sweep_alpha->add_option("-a,--alphas", alphas, "Diffusion scales to sweep")
        ->required()
        ->delimiter(',');
    sweep_alpha->add_option("-p,--output-prefix", prefix, "Prefix for per-point outputs");
    sweep_alpha->add_flag("--decorrelate-seeds", decorrelate,
                          "Fresh seed per point instead of paired runs");
    sweep_alpha->add_flag("--gnuplot-script", gnuplot, "Also emit gnuplot scripts");
    sweep_alpha->add_option("--threads", threads, "Worker threads (0 = auto)");

    auto* sweep_steps = app.add_subcommand("sweep-steps", "Repeat the experiment across step counts");
    sweep_steps->add_option("-c,--config", config_path, "JSON experiment config")->required();
    sweep_steps->add_option("-s,--steps", steps, "Step counts to sweep")->required()->delimiter(',');
    sweep_steps->add_option("-f,--families", families, "Families to sweep (default: config's)")
        ->delimiter(',');
    sweep_steps->add_option("-p,--output-prefix", prefix, "Prefix for per-point outputs");
    sweep_steps->add_flag("--decorrelate-seeds", decorrelate,
                          "Fresh seed per point instead of paired runs");
    sweep_steps->add_flag("--gnuplot-script", gnuplot, "Also emit gnuplot scripts");
    sweep_steps->add_option("--threads", threads, "Worker threads (0 = auto)");

    auto* verify = app.add_subcommand("verify", "Run the exact-identity and consistency checks");
    verify->add_flag("--list", list_only, "List check names without running");
    verify->add_option("--inject-alpha-perturbation", perturb_alpha,
                       "Offset the singular-identity alpha (sensitivity smoke test)");

    app.add_subcommand("print-config", "Print the full default config as JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        return app.exit(err) == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (simulate->parsed()) {
            return cmd_simulate(config_path, output_override, gnuplot, threads);
        }
        if (sweep_alpha->parsed()) {
            return cmd_sweep_alpha(config_path, alphas, prefix, decorrelate, gnuplot, threads);
        }
        if (sweep_steps->parsed()) {
            return cmd_sweep_steps(config_path, steps, families, prefix, decorrelate, gnuplot,
                                   threads);
        }
        if (verify->parsed()) {
            return cmd_verify(list_only, perturb_alpha);
        }
        // print-config
        std::cout << flowsde::serialize_config(flowsde::ExperimentConfig{});
        return kExitOk;
    } catch (const flowsde::ConfigError& err) {
        std::cerr << "config error: " << err.what() << "\n";
        return kExitValidation;
    } catch (const std::domain_error& err) {
        std::cerr << "domain error: " << err.what() << "\n";
        return kExitValidation;
    } catch (const std::invalid_argument& err) {
        std::cerr << "invalid argument: " << err.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitValidation;
    }
}
