#include "flowsde/experiment.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "flowsde/integrator.hpp"
#include "flowsde/rng.hpp"
#include "flowsde/version.hpp"

namespace flowsde {

using json = nlohmann::json;

namespace {

void reject_unknown_keys(const json& object, std::initializer_list<const char*> allowed,
                         const std::string& where) {
    for (const auto& item : object.items()) {
        bool known = false;
        for (const char* key : allowed) {
            if (item.key() == key) {
                known = true;
                break;
            }
        }
        if (!known) {
            throw ConfigError("unknown key '" + item.key() + "' in " + where);
        }
    }
}

std::vector<double> parse_mean(const json& value, const std::string& where) {
    if (value.is_number()) {
        return {value.get<double>()};
    }
    if (value.is_array() && !value.empty()) {
        std::vector<double> mean;
        for (const auto& entry : value) {
            if (!entry.is_number()) {
                throw ConfigError(where + ".mean entries must be numbers");
            }
            mean.push_back(entry.get<double>());
        }
        return mean;
    }
    throw ConfigError(where + ".mean must be a number or a non-empty array");
}

json mean_to_json(const std::vector<double>& mean) {
    if (mean.size() == 1) {
        return mean[0];
    }
    return json(mean);
}

GaussianEndpoint parse_gaussian(const json& object, const std::string& where) {
    reject_unknown_keys(object, {"type", "mean", "variance"}, where);
    if (object.contains("type") && object.at("type") != "gaussian") {
        throw ConfigError(where + ".type must be 'gaussian'");
    }
    if (!object.contains("mean") || !object.contains("variance")) {
        throw ConfigError(where + " needs 'mean' and 'variance'");
    }
    GaussianEndpoint endpoint;
    endpoint.mean = parse_mean(object.at("mean"), where);
    endpoint.variance = object.at("variance").get<double>();
    if (!(endpoint.variance > 0.0)) {
        throw ConfigError(where + ".variance must be > 0");
    }
    return endpoint;
}

EndpointP0 parse_p0(const json& object) {
    if (!object.is_object()) {
        throw ConfigError("endpoints.p0 must be an object");
    }
    const std::string type = object.value("type", "gaussian");
    if (type == "gaussian") {
        return parse_gaussian(object, "endpoints.p0");
    }
    if (type != "mixture") {
        throw ConfigError("endpoints.p0.type must be 'gaussian' or 'mixture'");
    }
    reject_unknown_keys(object, {"type", "components"}, "endpoints.p0");
    if (!object.contains("components") || !object.at("components").is_array()) {
        throw ConfigError("endpoints.p0 mixture needs a 'components' array");
    }
    GaussianMixtureEndpoint mixture;
    std::size_t index = 0;
    for (const auto& comp : object.at("components")) {
        const std::string where = "endpoints.p0.components[" + std::to_string(index++) + "]";
        reject_unknown_keys(comp, {"weight", "mean", "variance"}, where);
        if (!comp.contains("weight")) {
            throw ConfigError(where + " needs 'weight'");
        }
        MixtureComponent mc;
        mc.weight = comp.at("weight").get<double>();
        mc.endpoint.mean = parse_mean(comp.at("mean"), where);
        mc.endpoint.variance = comp.at("variance").get<double>();
        mixture.components.push_back(std::move(mc));
    }
    try {
        mixture.validate();
    } catch (const std::invalid_argument& err) {
        throw ConfigError(std::string("endpoints.p0: ") + err.what());
    }
    return mixture;
}

json p0_to_json(const EndpointP0& p0) {
    json object;
    if (const auto* gaussian = std::get_if<GaussianEndpoint>(&p0)) {
        object["type"] = "gaussian";
        object["mean"] = mean_to_json(gaussian->mean);
        object["variance"] = gaussian->variance;
        return object;
    }
    const auto& mixture = std::get<GaussianMixtureEndpoint>(p0);
    object["type"] = "mixture";
    json components = json::array();
    for (const auto& comp : mixture.components) {
        json entry;
        entry["weight"] = comp.weight;
        entry["mean"] = mean_to_json(comp.endpoint.mean);
        entry["variance"] = comp.endpoint.variance;
        components.push_back(entry);
    }
    object["components"] = components;
    return object;
}

template <typename T>
T get_checked(const json& object, const char* key, const char* kind) {
    try {
        return object.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("field '") + key + "' must be a " + kind);
    }
}

void validate_config(const ExperimentConfig& config) {
    if (!(config.alpha >= 0.0)) {
        throw ConfigError("alpha must be >= 0");
    }
    if (config.num_steps < 1) {
        throw ConfigError("num_steps must be >= 1");
    }
    if (config.trials < 2) {
        throw ConfigError("trials must be >= 2");
    }
    if (config.trajectories_per_trial < 2) {
        throw ConfigError("trajectories_per_trial must be >= 2");
    }
    if (config.t_start && (!(*config.t_start > 0.0) || *config.t_start > 1.0)) {
        throw ConfigError("t_start must lie in (0, 1]");
    }
    if (config.record_stride < 0) {
        throw ConfigError("record_stride must be >= 0");
    }
    if (config.threads < 0) {
        throw ConfigError("threads must be >= 0");
    }
    if (!(config.divergence_bound > 0.0)) {
        throw ConfigError("divergence_bound must be > 0");
    }
    if (config.custom_power_t < 0) {
        throw ConfigError("custom_power.n must be >= 0");
    }
    if (config.output_format != "csv") {
        throw ConfigError("output.format must be 'csv'");
    }
    const std::size_t d0 = std::holds_alternative<GaussianEndpoint>(config.p0)
                               ? std::get<GaussianEndpoint>(config.p0).dimension()
                               : std::get<GaussianMixtureEndpoint>(config.p0).dimension();
    if (d0 != config.p1.dimension()) {
        throw ConfigError("p0 and p1 disagree on dimension");
    }
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& err) {
        throw ConfigError(std::string("invalid JSON: ") + err.what());
    }
    if (!root.is_object()) {
        throw ConfigError("config must be a JSON object");
    }
    reject_unknown_keys(root,
                        {"endpoints", "family", "alpha", "custom_power", "num_steps", "t_start",
                         "trials", "trajectories_per_trial", "seed", "kl_direction", "output",
                         "record_stride", "threads", "noise_on_final_step", "divergence_bound"},
                        "config");

    ExperimentConfig config;
    if (root.contains("endpoints")) {
        const json& endpoints = root.at("endpoints");
        reject_unknown_keys(endpoints, {"p0", "p1"}, "endpoints");
        if (endpoints.contains("p0")) {
            config.p0 = parse_p0(endpoints.at("p0"));
        }
        if (endpoints.contains("p1")) {
            config.p1 = parse_gaussian(endpoints.at("p1"), "endpoints.p1");
        }
    }
    if (root.contains("family")) {
        try {
            config.family = family_from_name(get_checked<std::string>(root, "family", "string"));
        } catch (const std::invalid_argument& err) {
            throw ConfigError(err.what());
        }
    }
    if (root.contains("alpha")) {
        config.alpha = get_checked<double>(root, "alpha", "number");
    }
    if (root.contains("custom_power")) {
        const json& power = root.at("custom_power");
        reject_unknown_keys(power, {"n", "m"}, "custom_power");
        config.custom_power_t = get_checked<int>(power, "n", "integer");
        config.custom_power_one_minus_t = get_checked<int>(power, "m", "integer");
    }
    if (root.contains("num_steps")) {
        config.num_steps = get_checked<int>(root, "num_steps", "integer");
    }
    if (root.contains("t_start") && !root.at("t_start").is_null()) {
        config.t_start = get_checked<double>(root, "t_start", "number");
    }
    if (root.contains("trials")) {
        config.trials = get_checked<int>(root, "trials", "integer");
    }
    if (root.contains("trajectories_per_trial")) {
        config.trajectories_per_trial = get_checked<int>(root, "trajectories_per_trial", "integer");
    }
    if (root.contains("seed")) {
        if (!root.at("seed").is_number_unsigned()) {
            throw ConfigError("field 'seed' must be a nonnegative integer");
        }
        config.seed = root.at("seed").get<std::uint64_t>();
    }
    if (root.contains("kl_direction")) {
        try {
            config.kl_direction =
                kl_direction_from_name(get_checked<std::string>(root, "kl_direction", "string"));
        } catch (const std::invalid_argument& err) {
            throw ConfigError(err.what());
        }
    }
    if (root.contains("output")) {
        const json& output = root.at("output");
        reject_unknown_keys(output, {"path", "format"}, "output");
        if (output.contains("path")) {
            config.output_path = get_checked<std::string>(output, "path", "string");
        }
        if (output.contains("format")) {
            config.output_format = get_checked<std::string>(output, "format", "string");
        }
    }
    if (root.contains("record_stride")) {
        config.record_stride = get_checked<int>(root, "record_stride", "integer");
    }
    if (root.contains("threads")) {
        config.threads = get_checked<int>(root, "threads", "integer");
    }
    if (root.contains("noise_on_final_step")) {
        config.noise_on_final_step = get_checked<bool>(root, "noise_on_final_step", "boolean");
    }
    if (root.contains("divergence_bound")) {
        config.divergence_bound = get_checked<double>(root, "divergence_bound", "number");
    }
    validate_config(config);
    return config;
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file: " + path);
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config(buffer.str());
}

std::string serialize_config(const ExperimentConfig& config) {
    json root;
    root["endpoints"]["p0"] = p0_to_json(config.p0);
    root["endpoints"]["p1"] = {{"mean", mean_to_json(config.p1.mean)},
                               {"variance", config.p1.variance}};
    root["family"] = family_name(config.family);
    root["alpha"] = config.alpha;
    root["custom_power"] = {{"n", config.custom_power_t}, {"m", config.custom_power_one_minus_t}};
    root["num_steps"] = config.num_steps;
    root["t_start"] = config.t_start ? json(*config.t_start) : json(nullptr);
    root["trials"] = config.trials;
    root["trajectories_per_trial"] = config.trajectories_per_trial;
    root["seed"] = config.seed;
    root["kl_direction"] = kl_direction_name(config.kl_direction);
    root["output"] = {{"path", config.output_path}, {"format", config.output_format}};
    root["record_stride"] = config.record_stride;
    root["threads"] = config.threads;
    root["noise_on_final_step"] = config.noise_on_final_step;
    root["divergence_bound"] = config.divergence_bound;
    return root.dump(2) + "\n";
}

int resolve_threads(const ExperimentConfig& config, int override_threads) {
    int threads = override_threads > 0 ? override_threads : config.threads;
    if (threads <= 0) {
        threads = static_cast<int>(std::thread::hardware_concurrency());
        if (threads <= 0) {
            threads = 1;
        }
    }
    if (const char* cap_text = std::getenv("FLOWSDE_MAX_THREADS")) {
        const int cap = std::atoi(cap_text);
        if (cap > 0 && threads > cap) {
            threads = cap;
        }
    }
    return threads;
}

int effective_record_stride(const ExperimentConfig& config) {
    if (config.record_stride > 0) {
        return config.record_stride;
    }
    return std::max(1, config.num_steps / 100);
}

double effective_t_start(const ExperimentConfig& config) {
    return config.t_start ? *config.t_start : default_t_start(config.family);
}

FlowField field_from_config(const ExperimentConfig& config) {
    const Schedule schedule = linear_schedule();
    if (const auto* gaussian = std::get_if<GaussianEndpoint>(&config.p0)) {
        return make_two_gaussian_field(*gaussian, config.p1, schedule);
    }
    return make_mixture_field(std::get<GaussianMixtureEndpoint>(config.p0), config.p1, schedule);
}

DiffusionSchedule schedule_from_config(const ExperimentConfig& config) {
    return DiffusionSchedule::make(config.family, config.alpha, config.custom_power_t,
                                   config.custom_power_one_minus_t);
}

AnalyticMarginal truth_from_config(const ExperimentConfig& config) {
    if (const auto* gaussian = std::get_if<GaussianEndpoint>(&config.p0)) {
        return analytic_marginal(*gaussian, config.p1);
    }
    return analytic_marginal_mixture(std::get<GaussianMixtureEndpoint>(config.p0), config.p1);
}

MarginalReport run_experiment(const ExperimentConfig& config, int override_threads) {
    validate_config(config);
    const FlowField field = field_from_config(config);
    const DiffusionSchedule schedule = schedule_from_config(config);
    const TimeGrid grid = TimeGrid::uniform(effective_t_start(config), config.num_steps);

    SimulateOptions options;
    options.record_stride = effective_record_stride(config);
    options.divergence_bound = config.divergence_bound;
    options.noise_on_final_step = config.noise_on_final_step;
    options.num_threads = resolve_threads(config, override_threads);

    std::vector<TrajectoryEnsemble> ensembles;
    ensembles.reserve(static_cast<std::size_t>(config.trials));
    for (int trial = 0; trial < config.trials; ++trial) {
        const RngSpec trial_rng{rng::trial_seed(config.seed, static_cast<std::uint64_t>(trial))};
        ensembles.push_back(simulate_reverse(
            field, schedule, grid, static_cast<std::size_t>(config.trajectories_per_trial),
            trial_rng, options));
    }

    MarginalReport report =
        estimate_marginals(ensembles, truth_from_config(config), config.kl_direction);
    report.meta.num_steps = config.num_steps;
    report.meta.family = family_name(config.family);
    report.meta.alpha = config.family == SdeFamily::Deterministic ? 0.0 : config.alpha;
    report.meta.seed = config.seed;
    return report;
}

std::string format_double(double value) {
    char buffer[64];
    std::snprintf(buffer, sizeof(buffer), "%.17g", value);
    return buffer;
}

void write_report_csv(const MarginalReport& report, std::ostream& out) {
    out << "t,mean_est,mean_err,mean_std,var_est,var_err,var_std,kl\n";
    for (const auto& row : report.rows) {
        out << format_double(row.t) << ',' << format_double(row.mean_est) << ','
            << format_double(row.mean_err) << ',' << format_double(row.mean_std) << ','
            << format_double(row.var_est) << ',' << format_double(row.var_err) << ','
            << format_double(row.var_std) << ',' << format_double(row.kl) << '\n';
    }
}

std::string report_csv_string(const MarginalReport& report) {
    std::ostringstream out;
    write_report_csv(report, out);
    return out.str();
}

std::string metadata_json_string(const ExperimentConfig& config, const MarginalReport& report) {
    json root;
    root["config"] = json::parse(serialize_config(config));
    root["library_version"] = kVersion;
    root["seed"] = config.seed;
    root["family"] = report.meta.family;
    root["alpha"] = report.meta.alpha;
    root["kl_direction"] = kl_direction_name(report.meta.kl_direction);
    root["diverged"] = report.meta.diverged;
    root["recorded_times"] = report.rows.size();
    return root.dump(2) + "\n";
}

std::string gnuplot_script_for(const std::string& csv_path) {
    std::ostringstream out;
    out << "set datafile separator ','\n"
        << "set key autotitle columnhead\n"
        << "set xlabel 't'\n"
        << "set xrange [*:*] reverse\n"
        << "set terminal pngcairo size 1200,400\n"
        << "set output '" << csv_path << ".png'\n"
        << "set multiplot layout 1,3\n"
        << "set title 'mean error'\n"
        << "plot '" << csv_path << "' using 1:3:4 with yerrorlines title 'mean_err'\n"
        << "set title 'variance error'\n"
        << "plot '" << csv_path << "' using 1:6:7 with yerrorlines title 'var_err'\n"
        << "set title 'KL to truth'\n"
        << "plot '" << csv_path << "' using 1:8 with lines title 'kl'\n"
        << "unset multiplot\n";
    return out.str();
}

std::string sweep_alpha_summary_csv(const std::vector<std::pair<double, MarginalReport>>& runs) {
    std::ostringstream out;
    out << "alpha,kl_t0\n";
    for (const auto& [alpha, report] : runs) {
        out << format_double(alpha) << ',' << format_double(report.row_at(0.0).kl) << '\n';
    }
    return out.str();
}

std::string sweep_steps_summary_csv(
    const std::vector<std::tuple<int, std::string, MarginalReport>>& runs) {
    std::ostringstream out;
    out << "num_steps,family,var_err_t0,var_std_t0\n";
    for (const auto& [steps, family, report] : runs) {
        const MarginalRow& row = report.row_at(0.0);
        out << steps << ',' << family << ',' << format_double(row.var_err) << ','
            << format_double(row.var_std) << '\n';
    }
    return out.str();
}

}  // namespace flowsde
