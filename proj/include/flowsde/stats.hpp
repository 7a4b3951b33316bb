#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flowsde/flow.hpp"
#include "flowsde/integrator.hpp"

namespace flowsde {

// =============================================================================
// Analytic marginals of the Gaussian flow
// =============================================================================

// mu_t = (1-t) mu0 + t mu1, sigma_t^2 = (1-t)^2 sigma0^2 + t^2 sigma1^2.
// For mixture p0 the curve tracks the exact first and second moments of the
// mixture (per-dimension variances pooled isotropically).
struct AnalyticMarginal {
    std::vector<double> mean0, mean1;
    double var0 = 0.0, var1 = 0.0;

    std::vector<double> mean_of_t(double t) const;
    double variance_of_t(double t) const;
    // Pooled scalar mean (average across dimensions; identical for d = 1).
    double pooled_mean_of_t(double t) const;
};

AnalyticMarginal analytic_marginal(const GaussianEndpoint& p0, const GaussianEndpoint& p1);
AnalyticMarginal analytic_marginal_mixture(const GaussianMixtureEndpoint& p0,
                                           const GaussianEndpoint& p1);
// (mu_t, sigma_t^2) at one time for 1-d endpoints.
std::pair<double, double> analytic_marginal_at(const GaussianEndpoint& p0,
                                               const GaussianEndpoint& p1, double t);

// =============================================================================
// Marginal estimation reports
// =============================================================================

// KL between moment-matched Gaussians; which argument is the estimate.
enum class KlDirection { EstimateFromTruth, TruthFromEstimate };

const char* kl_direction_name(KlDirection direction);
KlDirection kl_direction_from_name(const std::string& name);

// KL(N(m1, v1) || N(m2, v2)) = 0.5 [v1/v2 + (m2 - m1)^2 / v2 - 1 + ln(v2/v1)].
// Throws std::domain_error on nonpositive variance.
double gaussian_kl(double m1, double v1, double m2, double v2);

struct MarginalRow {
    double t = 0.0;
    double mean_est = 0.0, mean_err = 0.0, mean_std = 0.0;
    double var_est = 0.0, var_err = 0.0, var_std = 0.0;
    double kl = 0.0;
};

struct ReportMeta {
    int trials = 0;
    int trajectories_per_trial = 0;
    int num_steps = 0;
    std::string family;
    double alpha = 0.0;
    std::uint64_t seed = 0;
    KlDirection kl_direction = KlDirection::EstimateFromTruth;
    bool diverged = false;
};

struct MarginalReport {
    std::vector<MarginalRow> rows;  // t descending, one per recorded time
    ReportMeta meta;

    // Row at the time closest to t (exact hit in normal use).
    const MarginalRow& row_at(double t) const;
};

// Per-trial sample mean / unbiased sample variance at each recorded time,
// aggregated as the mean of per-trial estimates; errors are estimate - truth
// and the std columns are the raw cross-trial standard deviations.
// Needs >= 2 trials, >= 2 trajectories per trial, and identical grids.
MarginalReport estimate_marginals(const std::vector<TrajectoryEnsemble>& trials,
                                  const AnalyticMarginal& truth,
                                  KlDirection direction = KlDirection::EstimateFromTruth);

// Same reduction kept per dimension (d > 1); entry j is dimension j's report.
std::vector<MarginalReport> estimate_marginals_per_dimension(
    const std::vector<TrajectoryEnsemble>& trials, const AnalyticMarginal& truth,
    KlDirection direction = KlDirection::EstimateFromTruth);

}  // namespace flowsde
