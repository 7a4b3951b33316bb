#include "flowsde/verify.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>

#include "flowsde/flow.hpp"
#include "flowsde/rng.hpp"
#include "flowsde/sde_family.hpp"

namespace flowsde {

namespace {

double mixed_deviation(double a, double b) {
    const double scale = std::max({1.0, std::abs(a), std::abs(b)});
    return std::abs(a - b) / scale;
}

double vec_deviation(std::span<const double> a, std::span<const double> b) {
    double worst = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        worst = std::max(worst, mixed_deviation(a[j], b[j]));
    }
    return worst;
}

struct Sampler {
    std::uint64_t seed;
    std::uint64_t counter = 0;

    double uniform(double lo, double hi) {
        const double u = rng::to_unit_open(rng::mix64(rng::key4(seed, 0xabcdU, ++counter, 0)));
        return lo + (hi - lo) * u;
    }
    double normal(double mean, double sigma) {
        return mean + sigma * rng::standard_normal(seed, 0xdcbaU, ++counter, 0);
    }
};

const GaussianEndpoint kToyP0 = gaussian_1d(-1.0, 0.3);
const GaussianEndpoint kToyP1 = gaussian_1d(0.0, 1.0);

GaussianMixtureEndpoint test_mixture() {
    GaussianMixtureEndpoint mix;
    mix.components.push_back({0.3, gaussian_1d(-1.0, 0.3)});
    mix.components.push_back({0.7, gaussian_1d(2.0, 0.5)});
    return mix;
}

using CheckFn = std::function<double(const VerifyOptions&)>;

struct CheckSpec {
    const char* name;
    double tolerance;
    CheckFn deviation;
};

// The affine singular SDE == the Singular family member at alpha = sqrt(2) sigma1.
double check_singular_identity(const VerifyOptions& options) {
    const FlowField field = make_two_gaussian_field(kToyP0, kToyP1, linear_schedule());
    const double alpha = std::sqrt(2.0) + options.inject_alpha_perturbation;
    const DiffusionSchedule singular = DiffusionSchedule::singular(alpha);
    Sampler sampler{options.seed};
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const double t = sampler.uniform(1e-4, 1.0 - 1e-4);
        const double x[1] = {sampler.normal(0.0, 2.0)};
        const SdeCoefficients direct = singular_sde_coefficients(1.0, x, t);
        const SdeCoefficients member = flow_sde_coefficients(field, singular, x, t);
        worst = std::max(worst, vec_deviation(direct.drift, member.drift));
        worst = std::max(worst, mixed_deviation(direct.diffusion, member.diffusion));
    }
    return worst;
}

double check_gamma_one_identity(const VerifyOptions& options) {
    Sampler sampler{options.seed + 1};
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const double f[1] = {sampler.normal(0.0, 3.0)};
        const double g = std::abs(sampler.normal(0.0, 2.0));
        const double score[1] = {sampler.normal(0.0, 3.0)};
        const SdeCoefficients out = scaled_noise_coefficients(f, g, 1.0, score);
        worst = std::max(worst, mixed_deviation(out.drift[0], f[0]));
        worst = std::max(worst, mixed_deviation(out.diffusion, g));
    }
    return worst;
}

// gamma = 0 must reproduce the probability-flow drift f - g^2/2 * score.
double check_gamma_zero_probability_flow(const VerifyOptions& options) {
    Sampler sampler{options.seed + 2};
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const double f[1] = {sampler.normal(0.0, 3.0)};
        const double g = std::abs(sampler.normal(0.0, 2.0));
        const double score[1] = {sampler.normal(0.0, 3.0)};
        const SdeCoefficients out = scaled_noise_coefficients(f, g, 0.0, score);
        worst = std::max(worst, mixed_deviation(out.drift[0], f[0] - 0.5 * g * g * score[0]));
        worst = std::max(worst, mixed_deviation(out.diffusion, 0.0));
    }
    return worst;
}

double check_transform_reduces_to_noise_scaling(const VerifyOptions& options) {
    Sampler sampler{options.seed + 3};
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const double f[1] = {sampler.normal(0.0, 3.0)};
        const double g = std::abs(sampler.normal(0.0, 2.0));
        const double gamma = std::abs(sampler.normal(0.0, 1.0));
        const double score[1] = {sampler.normal(0.0, 3.0)};
        const SdeCoefficients general = marginal_preserving_transform(f, g, 0.0, gamma, score);
        const SdeCoefficients special = scaled_noise_coefficients(f, g, gamma, score);
        worst = std::max(worst, vec_deviation(general.drift, special.drift));
        worst = std::max(worst, mixed_deviation(general.diffusion, special.diffusion));
    }
    return worst;
}

double check_transform_reduces_to_flow_sde(const VerifyOptions& options) {
    const FlowField field = make_two_gaussian_field(kToyP0, kToyP1, linear_schedule());
    const DiffusionSchedule schedules[] = {
        DiffusionSchedule::constant(0.8),
        DiffusionSchedule::non_singular(1.0),
        DiffusionSchedule::zero_ends(1.2),
        DiffusionSchedule::singular(0.5),
    };
    Sampler sampler{options.seed + 4};
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const DiffusionSchedule& schedule = schedules[i % 4];
        const double t = sampler.uniform(1e-3, 1.0 - 1e-3);
        const double x[1] = {sampler.normal(0.0, 2.0)};
        const double gamma = std::abs(sampler.normal(0.0, 1.0));
        std::vector<double> v(1), score(1);
        field.velocity(x, t, v);
        score_from_velocity_into(field, x, t, score);
        const SdeCoefficients general =
            marginal_preserving_transform(v, 0.0, diffusion_magnitude(schedule, t), gamma, score);
        const SdeCoefficients special = flow_sde_coefficients(field, schedule, x, t);
        worst = std::max(worst, vec_deviation(general.drift, special.drift));
        worst = std::max(worst, mixed_deviation(general.diffusion, special.diffusion));
    }
    return worst;
}

double check_score_matches_gaussian(const VerifyOptions& options) {
    const FlowField field = make_two_gaussian_field(kToyP0, kToyP1, linear_schedule());
    Sampler sampler{options.seed + 5};
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const double t = sampler.uniform(1e-6, 1.0);
        const double x[1] = {sampler.normal(0.0, 2.0)};
        const std::vector<double> imputed = score_from_velocity(field, x, t);
        const std::vector<double> analytic =
            analytic_score_gaussian(kToyP0, kToyP1, field.schedule, x, t);
        worst = std::max(worst, vec_deviation(imputed, analytic));
    }
    return worst;
}

// Score imputation stays valid for non-Gaussian p0.
double check_score_matches_mixture(const VerifyOptions& options) {
    const GaussianMixtureEndpoint mix = test_mixture();
    const FlowField field = make_mixture_field(mix, kToyP1, linear_schedule());
    Sampler sampler{options.seed + 6};
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const double t = sampler.uniform(1e-6, 1.0);
        const double x[1] = {sampler.normal(0.5, 2.0)};
        const std::vector<double> imputed = score_from_velocity(field, x, t);
        const std::vector<double> analytic =
            analytic_score_mixture(mix, kToyP1, field.schedule, x, t);
        worst = std::max(worst, vec_deviation(imputed, analytic));
    }
    return worst;
}

double check_fused_product(const VerifyOptions& options) {
    const FlowField field = make_two_gaussian_field(kToyP0, kToyP1, linear_schedule());
    Sampler sampler{options.seed + 7};
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const double t = sampler.uniform(1e-6, 1.0);
        const double x[1] = {sampler.normal(0.0, 2.0)};
        const std::vector<double> fused = fused_score_product(field, 1, 0, 1.0, x, t);
        const std::vector<double> score = score_from_velocity(field, x, t);
        worst = std::max(worst, mixed_deviation(fused[0], t * score[0]));
    }
    // Finite exactly at the boundary the plain score rejects.
    const double x0[1] = {0.4};
    const std::vector<double> at_zero = fused_score_product(field, 1, 0, 1.0, x0, 0.0);
    if (!std::isfinite(at_zero[0])) {
        worst = std::max(worst, 1.0);
    }
    return worst;
}

// Generic time reversal agrees with the fused flow-family reverse drift.
double check_reverse_time_agreement(const VerifyOptions& options) {
    const FlowField field = make_two_gaussian_field(kToyP0, kToyP1, linear_schedule());
    const DiffusionSchedule schedules[] = {
        DiffusionSchedule::constant(1.0),
        DiffusionSchedule::non_singular(1.0),
        DiffusionSchedule::zero_ends(0.7),
        DiffusionSchedule::singular(std::sqrt(2.0)),
    };
    Sampler sampler{options.seed + 8};
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const DiffusionSchedule& schedule = schedules[i % 4];
        const double t = sampler.uniform(1e-3, 1.0 - 1e-3);
        const double x[1] = {sampler.normal(0.0, 2.0)};
        const std::vector<double> score = score_from_velocity(field, x, t);
        const SdeCoefficients generic =
            reverse_time_coefficients(flow_sde_coefficients(field, schedule, x, t), score);
        const SdeCoefficients fused = reverse_flow_sde_coefficients(field, schedule, x, t);
        worst = std::max(worst, vec_deviation(generic.drift, fused.drift));
        worst = std::max(worst, mixed_deviation(generic.diffusion, fused.diffusion));
    }
    return worst;
}

double check_table1_diffusion_domains(const VerifyOptions&) {
    double worst = 0.0;
    const DiffusionSchedule rows[] = {
        DiffusionSchedule::deterministic(),  DiffusionSchedule::constant(1.3),
        DiffusionSchedule::non_singular(0.9), DiffusionSchedule::zero_ends(1.1),
        DiffusionSchedule::singular(1.0),
    };
    for (const auto& row : rows) {
        for (int k = 0; k <= 200; ++k) {
            const double t = static_cast<double>(k) / 200.0;
            if (row.family == SdeFamily::Singular && t >= 1.0) {
                continue;
            }
            const double g = diffusion_magnitude(row, t);
            if (!(g >= 0.0) || !std::isfinite(g)) {
                worst = std::max(worst, 1.0);
            }
        }
    }
    worst = std::max(worst, std::abs(diffusion_magnitude(DiffusionSchedule::zero_ends(2.0), 0.0)));
    worst = std::max(worst, std::abs(diffusion_magnitude(DiffusionSchedule::zero_ends(2.0), 1.0)));
    bool threw = false;
    try {
        diffusion_magnitude(DiffusionSchedule::singular(1.0), 1.0);
    } catch (const std::domain_error&) {
        threw = true;
    }
    if (!threw) {
        worst = std::max(worst, 1.0);
    }
    return worst;
}

const CheckSpec kChecks[] = {
    {"affine-sde-equals-singular-family-member", 1e-11, check_singular_identity},
    {"gamma-one-recovers-the-base-sde", 1e-14, check_gamma_one_identity},
    {"gamma-zero-gives-probability-flow-drift", 1e-14, check_gamma_zero_probability_flow},
    {"general-transform-reduces-to-noise-scaling", 1e-14, check_transform_reduces_to_noise_scaling},
    {"general-transform-reduces-to-flow-sde", 1e-12, check_transform_reduces_to_flow_sde},
    {"imputed-score-matches-gaussian", 1e-10, check_score_matches_gaussian},
    {"imputed-score-matches-mixture", 1e-8, check_score_matches_mixture},
    {"fused-product-equals-t-times-score", 1e-12, check_fused_product},
    {"reverse-drift-two-route-agreement", 1e-12, check_reverse_time_agreement},
    {"diffusion-schedules-nonnegative-domains", 0.0, check_table1_diffusion_domains},
};

}  // namespace

std::vector<std::string> verify_check_names() {
    std::vector<std::string> names;
    for (const auto& check : kChecks) {
        names.emplace_back(check.name);
    }
    return names;
}

std::vector<CheckResult> run_verify_checks(const VerifyOptions& options) {
    std::vector<CheckResult> results;
    for (const auto& check : kChecks) {
        CheckResult result;
        result.name = check.name;
        result.tolerance = check.tolerance;
        result.max_deviation = check.deviation(options);
        result.passed = result.max_deviation <= check.tolerance;
        results.push_back(std::move(result));
    }
    return results;
}

}  // namespace flowsde
