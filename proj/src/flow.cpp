#include "flowsde/flow.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace flowsde {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void check_dimensions(std::size_t expected, std::span<const double> x, std::span<double> out) {
    if (x.size() != expected || out.size() != expected) {
        throw std::invalid_argument("state dimension mismatch: expected " +
                                    std::to_string(expected));
    }
}

// log N(x; m, s I) for isotropic s = sigma^2, diagonal over all dims.
double log_gaussian_density(std::span<const double> x, std::span<const double> mean,
                            double variance) {
    double q = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double r = x[j] - mean[j];
        q += r * r;
    }
    const double d = static_cast<double>(x.size());
    return -0.5 * (q / variance + d * (std::log(variance) + kLog2Pi));
}

}  // namespace

Schedule linear_schedule() {
    Schedule s;
    s.linear = true;
    return s;
}

Schedule custom_schedule(std::function<double(double)> alpha_fn,
                         std::function<double(double)> beta_fn) {
    Schedule s;
    s.alpha_fn = std::move(alpha_fn);
    s.beta_fn = std::move(beta_fn);
    s.linear = false;
    return s;
}

GaussianEndpoint gaussian_1d(double mean, double variance) {
    if (!(variance > 0.0)) {
        throw std::invalid_argument("gaussian endpoint needs variance > 0");
    }
    return GaussianEndpoint{{mean}, variance};
}

void GaussianMixtureEndpoint::validate() const {
    if (components.empty()) {
        throw std::invalid_argument("mixture needs at least one component");
    }
    double total = 0.0;
    const std::size_t d = components.front().endpoint.dimension();
    for (const auto& c : components) {
        if (!(c.weight > 0.0)) {
            throw std::invalid_argument("mixture weights must be positive");
        }
        if (!(c.endpoint.variance > 0.0)) {
            throw std::invalid_argument("mixture component needs variance > 0");
        }
        if (c.endpoint.dimension() != d) {
            throw std::invalid_argument("mixture components disagree on dimension");
        }
        total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-12) {
        throw std::invalid_argument("mixture weights must sum to 1 (got " +
                                    std::to_string(total) + ")");
    }
}

// -----------------------------------------------------------------------------
// Two-Gaussian velocity:
//   v = [(k mu1 - x) a s0 + (x - k mu0) b s1] / (a^2 s0 + b^2 s1)
// The denominator is the marginal variance and stays positive on [0, 1].
// -----------------------------------------------------------------------------
void velocity_two_gaussian_into(const GaussianEndpoint& p0, const GaussianEndpoint& p1,
                                const Schedule& schedule, std::span<const double> x, double t,
                                std::span<double> out) {
    check_dimensions(p0.dimension(), x, out);
    const double a = schedule.alpha(t);
    const double b = schedule.beta(t);
    const double k = a + b;
    const double s0 = p0.variance;
    const double s1 = p1.variance;
    const double denom = a * a * s0 + b * b * s1;
    for (std::size_t j = 0; j < x.size(); ++j) {
        out[j] = ((k * p1.mean[j] - x[j]) * a * s0 + (x[j] - k * p0.mean[j]) * b * s1) / denom;
    }
}

std::vector<double> velocity_two_gaussian(const GaussianEndpoint& p0, const GaussianEndpoint& p1,
                                          const Schedule& schedule, std::span<const double> x,
                                          double t) {
    std::vector<double> out(x.size());
    velocity_two_gaussian_into(p0, p1, schedule, x, t, out);
    return out;
}

std::vector<double> mixture_posterior(const GaussianMixtureEndpoint& p0,
                                      const GaussianEndpoint& p1, const Schedule& schedule,
                                      std::span<const double> x, double t) {
    p0.validate();
    const double a = schedule.alpha(t);
    const double b = schedule.beta(t);
    const std::size_t n = p0.components.size();
    const std::size_t d = p0.dimension();

    std::vector<double> log_post(n);
    std::vector<double> marginal_mean(d);
    double max_lp = -HUGE_VAL;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& comp = p0.components[i];
        for (std::size_t j = 0; j < d; ++j) {
            marginal_mean[j] = a * comp.endpoint.mean[j] + b * p1.mean[j];
        }
        const double var = a * a * comp.endpoint.variance + b * b * p1.variance;
        log_post[i] = std::log(comp.weight) + log_gaussian_density(x, marginal_mean, var);
        max_lp = std::max(max_lp, log_post[i]);
    }
    double total = 0.0;
    for (auto& lp : log_post) {
        lp = std::exp(lp - max_lp);
        total += lp;
    }
    for (auto& lp : log_post) {
        lp /= total;
    }
    return log_post;
}

void velocity_mixture_into(const GaussianMixtureEndpoint& p0, const GaussianEndpoint& p1,
                           const Schedule& schedule, std::span<const double> x, double t,
                           std::span<double> out) {
    check_dimensions(p0.dimension(), x, out);
    const std::vector<double> post = mixture_posterior(p0, p1, schedule, x, t);
    std::fill(out.begin(), out.end(), 0.0);
    std::vector<double> v(out.size());
    for (std::size_t i = 0; i < p0.components.size(); ++i) {
        velocity_two_gaussian_into(p0.components[i].endpoint, p1, schedule, x, t, v);
        for (std::size_t j = 0; j < out.size(); ++j) {
            out[j] += post[i] * v[j];
        }
    }
}

std::vector<double> velocity_mixture(const GaussianMixtureEndpoint& p0,
                                     const GaussianEndpoint& p1, const Schedule& schedule,
                                     std::span<const double> x, double t) {
    std::vector<double> out(x.size());
    velocity_mixture_into(p0, p1, schedule, x, t, out);
    return out;
}

// -----------------------------------------------------------------------------
// Score imputation, valid for the linear schedule only:
//   grad ln p_t(x) = (-(1-t) v + mu1 - x) / (t s1)
// -----------------------------------------------------------------------------
void score_from_velocity_into(const FlowField& field, std::span<const double> x, double t,
                              std::span<double> out) {
    if (!field.schedule.linear) {
        throw std::invalid_argument("score_from_velocity requires the linear schedule");
    }
    if (t <= 0.0) {
        throw std::domain_error("score_from_velocity is singular at t = 0");
    }
    check_dimensions(field.dimension, x, out);
    field.velocity(x, t, out);
    const double s1 = field.endpoint_p1.variance;
    for (std::size_t j = 0; j < out.size(); ++j) {
        out[j] = (-(1.0 - t) * out[j] + field.endpoint_p1.mean[j] - x[j]) / (t * s1);
    }
}

std::vector<double> score_from_velocity(const FlowField& field, std::span<const double> x,
                                        double t) {
    std::vector<double> out(x.size());
    score_from_velocity_into(field, x, t, out);
    return out;
}

void analytic_score_gaussian_into(const GaussianEndpoint& p0, const GaussianEndpoint& p1,
                                  const Schedule& schedule, std::span<const double> x, double t,
                                  std::span<double> out) {
    check_dimensions(p0.dimension(), x, out);
    const double a = schedule.alpha(t);
    const double b = schedule.beta(t);
    const double var = a * a * p0.variance + b * b * p1.variance;
    for (std::size_t j = 0; j < x.size(); ++j) {
        out[j] = -(x[j] - (a * p0.mean[j] + b * p1.mean[j])) / var;
    }
}

std::vector<double> analytic_score_gaussian(const GaussianEndpoint& p0,
                                            const GaussianEndpoint& p1, const Schedule& schedule,
                                            std::span<const double> x, double t) {
    std::vector<double> out(x.size());
    analytic_score_gaussian_into(p0, p1, schedule, x, t, out);
    return out;
}

void analytic_score_mixture_into(const GaussianMixtureEndpoint& p0, const GaussianEndpoint& p1,
                                 const Schedule& schedule, std::span<const double> x, double t,
                                 std::span<double> out) {
    check_dimensions(p0.dimension(), x, out);
    const std::vector<double> post = mixture_posterior(p0, p1, schedule, x, t);
    const double a = schedule.alpha(t);
    const double b = schedule.beta(t);
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t i = 0; i < p0.components.size(); ++i) {
        const auto& comp = p0.components[i].endpoint;
        const double var = a * a * comp.variance + b * b * p1.variance;
        for (std::size_t j = 0; j < out.size(); ++j) {
            const double m = a * comp.mean[j] + b * p1.mean[j];
            out[j] += post[i] * (-(x[j] - m) / var);
        }
    }
}

std::vector<double> analytic_score_mixture(const GaussianMixtureEndpoint& p0,
                                           const GaussianEndpoint& p1, const Schedule& schedule,
                                           std::span<const double> x, double t) {
    std::vector<double> out(x.size());
    analytic_score_mixture_into(p0, p1, schedule, x, t, out);
    return out;
}

double mixture_marginal_log_density(const GaussianMixtureEndpoint& p0,
                                    const GaussianEndpoint& p1, const Schedule& schedule,
                                    std::span<const double> x, double t) {
    p0.validate();
    const double a = schedule.alpha(t);
    const double b = schedule.beta(t);
    const std::size_t d = p0.dimension();
    std::vector<double> marginal_mean(d);
    double max_lp = -HUGE_VAL;
    std::vector<double> lps(p0.components.size());
    for (std::size_t i = 0; i < p0.components.size(); ++i) {
        const auto& comp = p0.components[i];
        for (std::size_t j = 0; j < d; ++j) {
            marginal_mean[j] = a * comp.endpoint.mean[j] + b * p1.mean[j];
        }
        const double var = a * a * comp.endpoint.variance + b * b * p1.variance;
        lps[i] = std::log(comp.weight) + log_gaussian_density(x, marginal_mean, var);
        max_lp = std::max(max_lp, lps[i]);
    }
    double total = 0.0;
    for (double lp : lps) {
        total += std::exp(lp - max_lp);
    }
    return max_lp + std::log(total);
}

void cfg_velocity_into(std::span<const double> v_cond, std::span<const double> v_uncond,
                       double lambda, std::span<double> out) {
    if (v_cond.size() != v_uncond.size() || out.size() != v_cond.size()) {
        throw std::invalid_argument("cfg_velocity: dimension mismatch");
    }
    for (std::size_t j = 0; j < out.size(); ++j) {
        out[j] = (1.0 + lambda) * v_cond[j] - lambda * v_uncond[j];
    }
}

std::vector<double> cfg_velocity(std::span<const double> v_cond,
                                 std::span<const double> v_uncond, double lambda) {
    std::vector<double> out(v_cond.size());
    cfg_velocity_into(v_cond, v_uncond, lambda, out);
    return out;
}

FlowField make_two_gaussian_field(const GaussianEndpoint& p0, const GaussianEndpoint& p1,
                                  const Schedule& schedule) {
    if (!(p0.variance > 0.0) || !(p1.variance > 0.0)) {
        throw std::invalid_argument("endpoints need variance > 0");
    }
    if (p0.dimension() != p1.dimension()) {
        throw std::invalid_argument("endpoints disagree on dimension");
    }
    FlowField field;
    field.dimension = p0.dimension();
    field.endpoint_p1 = p1;
    field.schedule = schedule;
    field.velocity = [p0, p1, schedule](std::span<const double> x, double t,
                                        std::span<double> out) {
        velocity_two_gaussian_into(p0, p1, schedule, x, t, out);
    };
    return field;
}

FlowField make_mixture_field(const GaussianMixtureEndpoint& p0, const GaussianEndpoint& p1,
                             const Schedule& schedule) {
    p0.validate();
    if (p0.dimension() != p1.dimension()) {
        throw std::invalid_argument("endpoints disagree on dimension");
    }
    FlowField field;
    field.dimension = p1.dimension();
    field.endpoint_p1 = p1;
    field.schedule = schedule;
    field.velocity = [p0, p1, schedule](std::span<const double> x, double t,
                                        std::span<double> out) {
        velocity_mixture_into(p0, p1, schedule, x, t, out);
    };
    return field;
}

}  // namespace flowsde
