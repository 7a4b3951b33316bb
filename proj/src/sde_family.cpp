#include "flowsde/sde_family.hpp"

#include <cmath>
#include <stdexcept>

namespace flowsde {

namespace {

// Integer power by repeated multiplication; exponent is small in practice.
double ipow(double base, int exponent) {
    if (exponent < 0) {
        return 1.0 / ipow(base, -exponent);
    }
    double result = 1.0;
    while (exponent-- > 0) {
        result *= base;
    }
    return result;
}

void require_scale(double alpha) {
    if (!(alpha >= 0.0)) {
        throw std::invalid_argument("diffusion scale alpha must be >= 0");
    }
}

}  // namespace

const char* family_name(SdeFamily family) {
    switch (family) {
        case SdeFamily::Deterministic: return "deterministic";
        case SdeFamily::Constant: return "constant";
        case SdeFamily::Singular: return "singular";
        case SdeFamily::NonSingular: return "nonsingular";
        case SdeFamily::ZeroEnds: return "zeroends";
        case SdeFamily::CustomPower: return "custompower";
    }
    return "unknown";
}

SdeFamily family_from_name(const std::string& name) {
    if (name == "deterministic") return SdeFamily::Deterministic;
    if (name == "constant") return SdeFamily::Constant;
    if (name == "singular") return SdeFamily::Singular;
    if (name == "nonsingular") return SdeFamily::NonSingular;
    if (name == "zeroends") return SdeFamily::ZeroEnds;
    if (name == "custompower") return SdeFamily::CustomPower;
    throw std::invalid_argument("unknown SDE family: " + name);
}

DiffusionSchedule DiffusionSchedule::deterministic() {
    return DiffusionSchedule{SdeFamily::Deterministic, 0.0, 0, 0};
}

DiffusionSchedule DiffusionSchedule::constant(double alpha) {
    require_scale(alpha);
    return DiffusionSchedule{SdeFamily::Constant, alpha, 0, 0};
}

DiffusionSchedule DiffusionSchedule::singular(double alpha) {
    require_scale(alpha);
    return DiffusionSchedule{SdeFamily::Singular, alpha, 1, -1};
}

DiffusionSchedule DiffusionSchedule::non_singular(double alpha) {
    require_scale(alpha);
    return DiffusionSchedule{SdeFamily::NonSingular, alpha, 1, 0};
}

DiffusionSchedule DiffusionSchedule::zero_ends(double alpha) {
    require_scale(alpha);
    return DiffusionSchedule{SdeFamily::ZeroEnds, alpha, 1, 1};
}

DiffusionSchedule DiffusionSchedule::custom_power(int n, int m, double alpha) {
    require_scale(alpha);
    if (n < 0) {
        throw std::invalid_argument("custom power requires n >= 0");
    }
    return DiffusionSchedule{SdeFamily::CustomPower, alpha, n, m};
}

DiffusionSchedule DiffusionSchedule::make(SdeFamily family, double alpha, int n, int m) {
    switch (family) {
        case SdeFamily::Deterministic: return deterministic();
        case SdeFamily::Constant: return constant(alpha);
        case SdeFamily::Singular: return singular(alpha);
        case SdeFamily::NonSingular: return non_singular(alpha);
        case SdeFamily::ZeroEnds: return zero_ends(alpha);
        case SdeFamily::CustomPower: return custom_power(n, m, alpha);
    }
    throw std::invalid_argument("unknown SDE family");
}

double diffusion_magnitude(const DiffusionSchedule& schedule, double t) {
    if (schedule.family == SdeFamily::Deterministic || schedule.alpha_scale == 0.0) {
        return 0.0;
    }
    const int n = schedule.power_t;
    const int m = schedule.power_one_minus_t;
    if (m < 0 && t >= 1.0) {
        throw std::domain_error("diffusion_magnitude has a pole at t = 1 for this schedule");
    }
    // alpha * t^(n/2) * (1-t)^(m/2), computed as sqrt of the integer powers
    const double squared = ipow(t, n) * ipow(1.0 - t, m);
    return schedule.alpha_scale * std::sqrt(squared);
}

void fused_score_product_into(const FlowField& field, int n, int m, double scale2,
                              std::span<const double> x, double t, std::span<double> out) {
    if (n < 0) {
        throw std::invalid_argument("fused_score_product requires n >= 0");
    }
    if (n == 0 && t <= 0.0) {
        throw std::domain_error("fused_score_product with n = 0 is singular at t = 0");
    }
    if (m < 0 && t >= 1.0) {
        throw std::domain_error("fused_score_product has a pole at t = 1 for m < 0");
    }
    if (!field.schedule.linear) {
        throw std::invalid_argument("fused_score_product requires the linear schedule");
    }
    field.velocity(x, t, out);
    const double factor = scale2 * ipow(t, n - 1) * ipow(1.0 - t, m);
    const double s1 = field.endpoint_p1.variance;
    for (std::size_t j = 0; j < out.size(); ++j) {
        out[j] = factor * (-(1.0 - t) * out[j] + field.endpoint_p1.mean[j] - x[j]) / s1;
    }
}

std::vector<double> fused_score_product(const FlowField& field, int n, int m, double scale2,
                                        std::span<const double> x, double t) {
    std::vector<double> out(x.size());
    fused_score_product_into(field, n, m, scale2, x, t, out);
    return out;
}

SdeCoefficients flow_sde_coefficients(const FlowField& field, const DiffusionSchedule& schedule,
                                      std::span<const double> x, double t) {
    SdeCoefficients coeff;
    coeff.time_direction = TimeDirection::Forward;
    coeff.drift.resize(field.dimension);
    if (schedule.family == SdeFamily::Deterministic || schedule.alpha_scale == 0.0) {
        field.velocity(x, t, coeff.drift);
        coeff.diffusion = 0.0;
        return coeff;
    }
    const double scale2 = schedule.alpha_scale * schedule.alpha_scale;
    std::vector<double> product(field.dimension);
    fused_score_product_into(field, schedule.power_t, schedule.power_one_minus_t, scale2, x, t,
                             product);
    field.velocity(x, t, coeff.drift);
    for (std::size_t j = 0; j < coeff.drift.size(); ++j) {
        coeff.drift[j] += 0.5 * product[j];
    }
    coeff.diffusion = diffusion_magnitude(schedule, t);
    return coeff;
}

SdeCoefficients marginal_preserving_transform(std::span<const double> f, double g,
                                              double added_diffusion, double gamma,
                                              std::span<const double> score) {
    if (!(gamma >= 0.0)) {
        throw std::invalid_argument("gamma must be >= 0");
    }
    if (f.size() != score.size()) {
        throw std::invalid_argument("drift/score dimension mismatch");
    }
    SdeCoefficients coeff;
    coeff.time_direction = TimeDirection::Forward;
    const double blend = (1.0 - gamma) * g * g - added_diffusion * added_diffusion;
    coeff.drift.resize(f.size());
    for (std::size_t j = 0; j < f.size(); ++j) {
        coeff.drift[j] = f[j] - 0.5 * blend * score[j];
    }
    coeff.diffusion = std::sqrt(gamma * g * g + added_diffusion * added_diffusion);
    return coeff;
}

SdeCoefficients scaled_noise_coefficients(std::span<const double> f, double g, double gamma,
                                          std::span<const double> score) {
    if (!(gamma >= 0.0)) {
        throw std::invalid_argument("gamma must be >= 0");
    }
    if (f.size() != score.size()) {
        throw std::invalid_argument("drift/score dimension mismatch");
    }
    SdeCoefficients coeff;
    coeff.time_direction = TimeDirection::Forward;
    coeff.drift.resize(f.size());
    const double half_residual = 0.5 * ((1.0 - gamma) * g * g);
    for (std::size_t j = 0; j < f.size(); ++j) {
        coeff.drift[j] = f[j] - half_residual * score[j];
    }
    coeff.diffusion = std::sqrt(gamma) * g;
    return coeff;
}

SdeCoefficients singular_sde_coefficients(double sigma1, std::span<const double> x, double t) {
    if (!(sigma1 > 0.0)) {
        throw std::invalid_argument("sigma1 must be > 0");
    }
    if (t >= 1.0) {
        throw std::domain_error("singular SDE coefficients have a pole at t = 1");
    }
    SdeCoefficients coeff;
    coeff.time_direction = TimeDirection::Forward;
    coeff.drift.resize(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) {
        coeff.drift[j] = -x[j] / (1.0 - t);
    }
    coeff.diffusion = sigma1 * std::sqrt(2.0 * t / (1.0 - t));
    return coeff;
}

SdeCoefficients reverse_time_coefficients(const SdeCoefficients& forward,
                                          std::span<const double> score) {
    if (forward.time_direction != TimeDirection::Forward) {
        throw std::invalid_argument("reverse_time_coefficients expects forward coefficients");
    }
    if (forward.drift.size() != score.size()) {
        throw std::invalid_argument("drift/score dimension mismatch");
    }
    SdeCoefficients coeff;
    coeff.time_direction = TimeDirection::Reverse;
    const double g2 = forward.diffusion * forward.diffusion;
    coeff.drift.resize(forward.drift.size());
    for (std::size_t j = 0; j < score.size(); ++j) {
        coeff.drift[j] = forward.drift[j] - g2 * score[j];
    }
    coeff.diffusion = forward.diffusion;
    return coeff;
}

// v - (g~^2/2) score with one velocity evaluation and the t-pole cancelled.
void reverse_drift_into(const FlowField& field, const DiffusionSchedule& schedule,
                        std::span<const double> x, double t, std::span<double> out) {
    field.velocity(x, t, out);
    if (schedule.family == SdeFamily::Deterministic || schedule.alpha_scale == 0.0) {
        return;
    }
    if (!field.schedule.linear) {
        throw std::invalid_argument("stochastic reverse drift requires the linear schedule");
    }
    const int n = schedule.power_t;
    const int m = schedule.power_one_minus_t;
    if (n == 0 && t <= 0.0) {
        throw std::domain_error("reverse drift with n = 0 is singular at t = 0");
    }
    if (m < 0 && t >= 1.0) {
        throw std::domain_error("reverse drift has a pole at t = 1 for this schedule");
    }
    const double scale2 = schedule.alpha_scale * schedule.alpha_scale;
    const double factor = 0.5 * scale2 * ipow(t, n - 1) * ipow(1.0 - t, m);
    const double s1 = field.endpoint_p1.variance;
    for (std::size_t j = 0; j < out.size(); ++j) {
        const double v = out[j];
        out[j] = v - factor * (-(1.0 - t) * v + field.endpoint_p1.mean[j] - x[j]) / s1;
    }
}

SdeCoefficients reverse_flow_sde_coefficients(const FlowField& field,
                                              const DiffusionSchedule& schedule,
                                              std::span<const double> x, double t) {
    SdeCoefficients coeff;
    coeff.time_direction = TimeDirection::Reverse;
    coeff.drift.resize(field.dimension);
    reverse_drift_into(field, schedule, x, t, coeff.drift);
    coeff.diffusion = diffusion_magnitude(schedule, t);
    return coeff;
}

}  // namespace flowsde
