#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "flowsde/flow.hpp"

namespace flowsde {

// =============================================================================
// Diffusion schedules g~(t) = alpha * t^(n/2) * (1-t)^(m/2)
// =============================================================================

// The named rows of the sampler catalog plus free integer powers. Negative m
// puts a pole at t = 1 (Singular has m = -1).
enum class SdeFamily {
    Deterministic,
    Constant,
    Singular,
    NonSingular,
    ZeroEnds,
    CustomPower,
};

const char* family_name(SdeFamily family);
SdeFamily family_from_name(const std::string& name);  // throws on unknown names

struct DiffusionSchedule {
    SdeFamily family = SdeFamily::Deterministic;
    double alpha_scale = 0.0;  // alpha >= 0; forced to 0 for Deterministic
    int power_t = 0;           // n >= 0
    int power_one_minus_t = 0; // m, any integer

    static DiffusionSchedule deterministic();
    static DiffusionSchedule constant(double alpha);
    static DiffusionSchedule singular(double alpha);
    static DiffusionSchedule non_singular(double alpha);
    static DiffusionSchedule zero_ends(double alpha);
    static DiffusionSchedule custom_power(int n, int m, double alpha);
    static DiffusionSchedule make(SdeFamily family, double alpha, int n = 0, int m = 0);
};

// gamma_t >= 0 indexes the blended family of the scalar transform.
struct GammaSchedule {
    std::function<double(double)> gamma_of_t;
};

enum class TimeDirection { Forward, Reverse };

struct SdeCoefficients {
    std::vector<double> drift;   // f-bar at (x, t)
    double diffusion = 0.0;      // scalar g-bar at t, >= 0
    TimeDirection time_direction = TimeDirection::Forward;
};

// =============================================================================
// Operations
// =============================================================================

// Diffusion magnitude g(t) of a named schedule. Throws std::domain_error at a
// pole (Singular at t=1, or any custom power with m < 0 at t = 1).
double diffusion_magnitude(const DiffusionSchedule& schedule, double t);

// g~^2(t) * score, with the 1/t of the imputed score cancelled against t^n:
//   scale2 * t^(n-1) * (1-t)^m * (-(1-t) v + mu1 - x) / sigma1^2
// Finite at t = 0 whenever n >= 1; n = 0 throws there. m < 0 throws at t = 1.
void fused_score_product_into(const FlowField& field, int n, int m, double scale2,
                              std::span<const double> x, double t, std::span<double> out);
std::vector<double> fused_score_product(const FlowField& field, int n, int m, double scale2,
                                        std::span<const double> x, double t);

// Forward coefficients of the marginal-preserving member indexed by g~:
//   drift = v + (g~^2/2) grad ln p_t, diffusion = g~(t)
SdeCoefficients flow_sde_coefficients(const FlowField& field, const DiffusionSchedule& schedule,
                                      std::span<const double> x, double t);

// Scalar form of the general transform, G = g I and G~ = g~ I so the
// divergence terms vanish identically:
//   drift = f - ((1-gamma) g^2 - g~^2) / 2 * score
//   diffusion = sqrt(gamma g^2 + g~^2)
SdeCoefficients marginal_preserving_transform(std::span<const double> f, double g,
                                              double added_diffusion, double gamma,
                                              std::span<const double> score);

// g~ = 0 subset: drift = f - (1-gamma) g^2 / 2 * score, diffusion = sqrt(gamma) g.
SdeCoefficients scaled_noise_coefficients(std::span<const double> f, double g, double gamma,
                                          std::span<const double> score);

// The affine SDE matching the Gaussian-flow marginals (mu1 = 0 convention):
//   drift = -x / (1-t), diffusion = sigma1 sqrt(2t / (1-t))
// Throws std::domain_error at t = 1.
SdeCoefficients singular_sde_coefficients(double sigma1, std::span<const double> x, double t);

// Time reversal: drift_rev = f - g^2 * score, same diffusion.
SdeCoefficients reverse_time_coefficients(const SdeCoefficients& forward,
                                          std::span<const double> score);

// Reverse drift for the flow-based family, v - (g^2/2) score, evaluated in
// fused form so it stays finite at t -> 0. One velocity call per evaluation;
// this is the integrator's hot path.
void reverse_drift_into(const FlowField& field, const DiffusionSchedule& schedule,
                        std::span<const double> x, double t, std::span<double> out);
SdeCoefficients reverse_flow_sde_coefficients(const FlowField& field,
                                              const DiffusionSchedule& schedule,
                                              std::span<const double> x, double t);

}  // namespace flowsde
