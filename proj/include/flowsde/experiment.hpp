#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "flowsde/flow.hpp"
#include "flowsde/sde_family.hpp"
#include "flowsde/stats.hpp"

namespace flowsde {

// Raised on malformed or out-of-domain configuration; the message names the
// offending field.
class ConfigError : public std::runtime_error {
  public:
    explicit ConfigError(const std::string& message) : std::runtime_error(message) {}
};

// =============================================================================
// Experiment configuration
// =============================================================================

using EndpointP0 = std::variant<GaussianEndpoint, GaussianMixtureEndpoint>;

struct ExperimentConfig {
    EndpointP0 p0 = gaussian_1d(-1.0, 0.3);  // variance, not std (configurable here)
    GaussianEndpoint p1 = gaussian_1d(0.0, 1.0);
    SdeFamily family = SdeFamily::NonSingular;
    double alpha = 1.0;
    int custom_power_t = 1;             // used when family = custompower
    int custom_power_one_minus_t = 0;
    int num_steps = 100;
    std::optional<double> t_start;      // absent -> per-family default
    int trials = 10;
    int trajectories_per_trial = 10000;
    std::uint64_t seed = 42;
    KlDirection kl_direction = KlDirection::EstimateFromTruth;
    std::string output_path = "report.csv";
    std::string output_format = "csv";
    int record_stride = 0;              // 0 -> auto (about 100 recorded times)
    int threads = 0;                    // 0 -> hardware, capped by FLOWSDE_MAX_THREADS
    bool noise_on_final_step = true;
    double divergence_bound = 1e6;

    bool operator==(const ExperimentConfig&) const = default;
};

// Strict JSON round trip: unknown keys are rejected, all numeric fields are
// domain-checked, parse(serialize(c)) == c.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config_file(const std::string& path);
std::string serialize_config(const ExperimentConfig& config);

// Worker-thread resolution: config value, else hardware concurrency, capped
// by the FLOWSDE_MAX_THREADS environment variable. Override wins when > 0.
int resolve_threads(const ExperimentConfig& config, int override_threads = 0);
int effective_record_stride(const ExperimentConfig& config);
double effective_t_start(const ExperimentConfig& config);

// =============================================================================
// Running experiments
// =============================================================================

FlowField field_from_config(const ExperimentConfig& config);
DiffusionSchedule schedule_from_config(const ExperimentConfig& config);
AnalyticMarginal truth_from_config(const ExperimentConfig& config);

// The full protocol: `trials` independent ensembles (per-trial derived seeds),
// reduced to one report. Throws std::domain_error if a coefficient pole is
// hit (e.g. Singular started at t = 1).
MarginalReport run_experiment(const ExperimentConfig& config, int override_threads = 0);

// =============================================================================
// Emission
// =============================================================================

// Header pinned to: t,mean_est,mean_err,mean_std,var_est,var_err,var_std,kl
// one row per recorded time, t descending, 17 significant digits.
void write_report_csv(const MarginalReport& report, std::ostream& out);
std::string report_csv_string(const MarginalReport& report);

// Sidecar carrying the full config, library version, and run flags; the
// experiment is reproducible from this file alone.
std::string metadata_json_string(const ExperimentConfig& config, const MarginalReport& report);

// Gnuplot script plotting the error columns of one report CSV.
std::string gnuplot_script_for(const std::string& csv_path);

// Summary emission for sweeps.
std::string sweep_alpha_summary_csv(const std::vector<std::pair<double, MarginalReport>>& runs);
std::string sweep_steps_summary_csv(
    const std::vector<std::tuple<int, std::string, MarginalReport>>& runs);

// Format a double with 17 significant digits (the CSV float convention).
std::string format_double(double value);

}  // namespace flowsde
