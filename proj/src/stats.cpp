#include "flowsde/stats.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace flowsde {

std::vector<double> AnalyticMarginal::mean_of_t(double t) const {
    std::vector<double> mu(mean0.size());
    for (std::size_t j = 0; j < mu.size(); ++j) {
        mu[j] = (1.0 - t) * mean0[j] + t * mean1[j];
    }
    return mu;
}

double AnalyticMarginal::variance_of_t(double t) const {
    return (1.0 - t) * (1.0 - t) * var0 + t * t * var1;
}

double AnalyticMarginal::pooled_mean_of_t(double t) const {
    double sum = 0.0;
    for (std::size_t j = 0; j < mean0.size(); ++j) {
        sum += (1.0 - t) * mean0[j] + t * mean1[j];
    }
    return sum / static_cast<double>(mean0.size());
}

AnalyticMarginal analytic_marginal(const GaussianEndpoint& p0, const GaussianEndpoint& p1) {
    if (p0.dimension() != p1.dimension()) {
        throw std::invalid_argument("endpoints disagree on dimension");
    }
    AnalyticMarginal m;
    m.mean0 = p0.mean;
    m.mean1 = p1.mean;
    m.var0 = p0.variance;
    m.var1 = p1.variance;
    return m;
}

AnalyticMarginal analytic_marginal_mixture(const GaussianMixtureEndpoint& p0,
                                           const GaussianEndpoint& p1) {
    p0.validate();
    const std::size_t d = p0.dimension();
    AnalyticMarginal m;
    m.mean0.assign(d, 0.0);
    m.mean1 = p1.mean;
    m.var1 = p1.variance;
    for (const auto& c : p0.components) {
        for (std::size_t j = 0; j < d; ++j) {
            m.mean0[j] += c.weight * c.endpoint.mean[j];
        }
    }
    // Exact second moment of the mixture, pooled across dimensions.
    double var_sum = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        double second = 0.0;
        for (const auto& c : p0.components) {
            const double mu = c.endpoint.mean[j];
            second += c.weight * (c.endpoint.variance + mu * mu);
        }
        var_sum += second - m.mean0[j] * m.mean0[j];
    }
    m.var0 = var_sum / static_cast<double>(d);
    return m;
}

std::pair<double, double> analytic_marginal_at(const GaussianEndpoint& p0,
                                               const GaussianEndpoint& p1, double t) {
    const AnalyticMarginal m = analytic_marginal(p0, p1);
    return {m.mean_of_t(t)[0], m.variance_of_t(t)};
}

const char* kl_direction_name(KlDirection direction) {
    return direction == KlDirection::EstimateFromTruth ? "estimate_from_truth"
                                                       : "truth_from_estimate";
}

KlDirection kl_direction_from_name(const std::string& name) {
    if (name == "estimate_from_truth") return KlDirection::EstimateFromTruth;
    if (name == "truth_from_estimate") return KlDirection::TruthFromEstimate;
    throw std::invalid_argument("unknown kl direction: " + name);
}

double gaussian_kl(double m1, double v1, double m2, double v2) {
    if (!(v1 > 0.0) || !(v2 > 0.0)) {
        throw std::domain_error("gaussian_kl needs positive variances");
    }
    const double dm = m2 - m1;
    return 0.5 * (v1 / v2 + dm * dm / v2 - 1.0 + std::log(v2 / v1));
}

const MarginalRow& MarginalReport::row_at(double t) const {
    if (rows.empty()) {
        throw std::out_of_range("empty report");
    }
    const MarginalRow* best = &rows.front();
    for (const auto& row : rows) {
        if (std::abs(row.t - t) < std::abs(best->t - t)) {
            best = &row;
        }
    }
    return *best;
}

namespace {

void check_trials(const std::vector<TrajectoryEnsemble>& trials) {
    if (trials.size() < 2) {
        throw std::invalid_argument("estimate_marginals needs >= 2 trials");
    }
    const auto& first = trials.front();
    for (const auto& trial : trials) {
        if (trial.recorded_times != first.recorded_times) {
            throw std::invalid_argument("trials recorded on mismatched grids");
        }
        if (trial.num_trajectories < 2) {
            throw std::invalid_argument("each trial needs >= 2 trajectories");
        }
        if (trial.dimension != first.dimension) {
            throw std::invalid_argument("trials disagree on dimension");
        }
    }
}

// Per-trial sample mean and unbiased variance over the selected dimensions,
// averaged across those dimensions. dim < 0 selects all (the pooled report).
void trial_estimate(const TrajectoryEnsemble& trial, std::size_t time_index, int dim,
                    double& mean_out, double& var_out) {
    const std::size_t d = trial.dimension;
    const std::size_t n = trial.num_trajectories;
    const auto& row = trial.states[time_index];
    const std::size_t j_begin = dim < 0 ? 0 : static_cast<std::size_t>(dim);
    const std::size_t j_end = dim < 0 ? d : static_cast<std::size_t>(dim) + 1;
    double mean_sum = 0.0;
    double var_sum = 0.0;
    for (std::size_t j = j_begin; j < j_end; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            s += row[i * d + j];
        }
        const double mean = s / static_cast<double>(n);
        double sq = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = row[i * d + j] - mean;
            sq += r * r;
        }
        mean_sum += mean;
        var_sum += sq / static_cast<double>(n - 1);
    }
    const double width = static_cast<double>(j_end - j_begin);
    mean_out = mean_sum / width;
    var_out = var_sum / width;
}

MarginalReport reduce(const std::vector<TrajectoryEnsemble>& trials,
                      const AnalyticMarginal& truth, KlDirection direction, int dim) {
    const auto& times = trials.front().recorded_times;
    const double n_trials = static_cast<double>(trials.size());

    MarginalReport report;
    report.meta.trials = static_cast<int>(trials.size());
    report.meta.trajectories_per_trial = static_cast<int>(trials.front().num_trajectories);
    report.meta.kl_direction = direction;
    for (const auto& trial : trials) {
        report.meta.diverged = report.meta.diverged || trial.diverged;
    }

    report.rows.resize(times.size());
    std::vector<double> means(trials.size());
    std::vector<double> vars(trials.size());
    for (std::size_t k = 0; k < times.size(); ++k) {
        const double t = times[k];
        for (std::size_t trial = 0; trial < trials.size(); ++trial) {
            trial_estimate(trials[trial], k, dim, means[trial], vars[trial]);
        }
        double mean_est = 0.0, var_est = 0.0;
        for (std::size_t trial = 0; trial < trials.size(); ++trial) {
            mean_est += means[trial];
            var_est += vars[trial];
        }
        mean_est /= n_trials;
        var_est /= n_trials;
        double mean_sq = 0.0, var_sq = 0.0;
        for (std::size_t trial = 0; trial < trials.size(); ++trial) {
            mean_sq += (means[trial] - mean_est) * (means[trial] - mean_est);
            var_sq += (vars[trial] - var_est) * (vars[trial] - var_est);
        }

        const double truth_mean =
            dim < 0 ? truth.pooled_mean_of_t(t) : truth.mean_of_t(t)[static_cast<std::size_t>(dim)];
        const double truth_var = truth.variance_of_t(t);

        MarginalRow& row = report.rows[k];
        row.t = t;
        row.mean_est = mean_est;
        row.mean_err = mean_est - truth_mean;
        row.mean_std = std::sqrt(mean_sq / (n_trials - 1.0));
        row.var_est = var_est;
        row.var_err = var_est - truth_var;
        row.var_std = std::sqrt(var_sq / (n_trials - 1.0));
        if (var_est > 0.0 && std::isfinite(mean_est)) {
            row.kl = direction == KlDirection::EstimateFromTruth
                         ? gaussian_kl(mean_est, var_est, truth_mean, truth_var)
                         : gaussian_kl(truth_mean, truth_var, mean_est, var_est);
        } else {
            row.kl = std::numeric_limits<double>::infinity();
        }
    }
    return report;
}

}  // namespace

MarginalReport estimate_marginals(const std::vector<TrajectoryEnsemble>& trials,
                                  const AnalyticMarginal& truth, KlDirection direction) {
    check_trials(trials);
    return reduce(trials, truth, direction, -1);
}

std::vector<MarginalReport> estimate_marginals_per_dimension(
    const std::vector<TrajectoryEnsemble>& trials, const AnalyticMarginal& truth,
    KlDirection direction) {
    check_trials(trials);
    std::vector<MarginalReport> reports;
    const std::size_t d = trials.front().dimension;
    reports.reserve(d);
    for (std::size_t j = 0; j < d; ++j) {
        reports.push_back(reduce(trials, truth, direction, static_cast<int>(j)));
    }
    return reports;
}

}  // namespace flowsde
