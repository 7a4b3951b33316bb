#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace flowsde {

// =============================================================================
// Interpolation schedules
// =============================================================================

// x_t = alpha_t * x0 + beta_t * x1 with alpha_0 = 1, alpha_1 = 0,
// beta_0 = 0, beta_1 = 1. The default instance is the linear interpolation
// x_t = (1-t) x0 + t x1; score imputation is only valid for that one.
struct Schedule {
    std::function<double(double)> alpha_fn;
    std::function<double(double)> beta_fn;
    bool linear = false;

    double alpha(double t) const { return linear ? 1.0 - t : alpha_fn(t); }
    double beta(double t) const { return linear ? t : beta_fn(t); }
    double k(double t) const { return alpha(t) + beta(t); }
};

Schedule linear_schedule();
Schedule custom_schedule(std::function<double(double)> alpha_fn,
                         std::function<double(double)> beta_fn);

// =============================================================================
// Endpoint distributions (isotropic Gaussians and mixtures of them)
// =============================================================================

struct GaussianEndpoint {
    std::vector<double> mean;  // mu, one entry per dimension
    double variance = 1.0;     // sigma^2, shared across dimensions

    std::size_t dimension() const { return mean.size(); }
    bool operator==(const GaussianEndpoint&) const = default;
};

GaussianEndpoint gaussian_1d(double mean, double variance);

struct MixtureComponent {
    double weight = 1.0;
    GaussianEndpoint endpoint;

    bool operator==(const MixtureComponent&) const = default;
};

struct GaussianMixtureEndpoint {
    std::vector<MixtureComponent> components;

    bool operator==(const GaussianMixtureEndpoint&) const = default;

    std::size_t dimension() const { return components.front().endpoint.dimension(); }
    // Throws std::invalid_argument unless weights sum to 1 within 1e-12,
    // there is at least one component, and all variances are positive.
    void validate() const;
};

// =============================================================================
// Flow fields
// =============================================================================

// Velocity callback writes v(x, t) into `out`; both spans have length d.
using VelocityFn =
    std::function<void(std::span<const double> x, double t, std::span<double> out)>;

// A flow dx = v(x, t) dt together with the endpoint distribution p1 and the
// interpolation schedule it was built from. The velocity itself is finite
// everywhere on [0, 1].
struct FlowField {
    std::size_t dimension = 0;
    VelocityFn velocity;
    GaussianEndpoint endpoint_p1;
    Schedule schedule;
};

FlowField make_two_gaussian_field(const GaussianEndpoint& p0, const GaussianEndpoint& p1,
                                  const Schedule& schedule);
FlowField make_mixture_field(const GaussianMixtureEndpoint& p0, const GaussianEndpoint& p1,
                             const Schedule& schedule);

// =============================================================================
// Operations
// =============================================================================

// Closed-form E[x1 - x0 | x_t = x] for Gaussian p0, p1:
//   v = [(k_t mu1 - x) alpha_t s0 + (x - k_t mu0) beta_t s1] / (alpha_t^2 s0 + beta_t^2 s1)
void velocity_two_gaussian_into(const GaussianEndpoint& p0, const GaussianEndpoint& p1,
                                const Schedule& schedule, std::span<const double> x, double t,
                                std::span<double> out);
std::vector<double> velocity_two_gaussian(const GaussianEndpoint& p0, const GaussianEndpoint& p1,
                                          const Schedule& schedule, std::span<const double> x,
                                          double t);

// Posterior-weighted combination of per-component two-Gaussian velocities.
// Component responsibilities come from the per-component marginal
// N(alpha_t mu_i + beta_t mu1, alpha_t^2 s_i + beta_t^2 s1).
void velocity_mixture_into(const GaussianMixtureEndpoint& p0, const GaussianEndpoint& p1,
                           const Schedule& schedule, std::span<const double> x, double t,
                           std::span<double> out);
std::vector<double> velocity_mixture(const GaussianMixtureEndpoint& p0,
                                     const GaussianEndpoint& p1, const Schedule& schedule,
                                     std::span<const double> x, double t);

// Responsibilities r_i(x, t); nonnegative, sum to 1.
std::vector<double> mixture_posterior(const GaussianMixtureEndpoint& p0,
                                      const GaussianEndpoint& p1, const Schedule& schedule,
                                      std::span<const double> x, double t);

// Score imputed from the velocity (linear schedule only):
//   grad ln p_t(x) = (-(1-t) v(x,t) + mu1 - x) / (t sigma1^2)
// Throws std::domain_error at t = 0; callers that need t -> 0 use the fused
// form in sde_family.hpp instead.
void score_from_velocity_into(const FlowField& field, std::span<const double> x, double t,
                              std::span<double> out);
std::vector<double> score_from_velocity(const FlowField& field, std::span<const double> x,
                                        double t);

// Exact score of the Gaussian marginal N(mu_t, sigma_t^2): -(x - mu_t) / sigma_t^2.
void analytic_score_gaussian_into(const GaussianEndpoint& p0, const GaussianEndpoint& p1,
                                  const Schedule& schedule, std::span<const double> x, double t,
                                  std::span<double> out);
std::vector<double> analytic_score_gaussian(const GaussianEndpoint& p0,
                                            const GaussianEndpoint& p1, const Schedule& schedule,
                                            std::span<const double> x, double t);

// Gradient of log of the mixture-of-Gaussians marginal.
void analytic_score_mixture_into(const GaussianMixtureEndpoint& p0, const GaussianEndpoint& p1,
                                 const Schedule& schedule, std::span<const double> x, double t,
                                 std::span<double> out);
std::vector<double> analytic_score_mixture(const GaussianMixtureEndpoint& p0,
                                           const GaussianEndpoint& p1, const Schedule& schedule,
                                           std::span<const double> x, double t);

// Log density of the mixture marginal at time t (used by the score and by
// finite-difference checks).
double mixture_marginal_log_density(const GaussianMixtureEndpoint& p0,
                                    const GaussianEndpoint& p1, const Schedule& schedule,
                                    std::span<const double> x, double t);

// Classifier-free guidance: v_cfg = (1 + lambda) v_cond - lambda v_uncond.
void cfg_velocity_into(std::span<const double> v_cond, std::span<const double> v_uncond,
                       double lambda, std::span<double> out);
std::vector<double> cfg_velocity(std::span<const double> v_cond,
                                 std::span<const double> v_uncond, double lambda);

}  // namespace flowsde
