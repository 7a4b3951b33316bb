#include "flowsde/integrator.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "flowsde/rng.hpp"

namespace flowsde {

TimeGrid TimeGrid::uniform(double t_start, int num_steps) {
    if (!(t_start > 0.0) || t_start > 1.0) {
        throw std::invalid_argument("t_start must lie in (0, 1]");
    }
    if (num_steps < 1) {
        throw std::invalid_argument("num_steps must be >= 1");
    }
    TimeGrid grid;
    grid.t_start = t_start;
    grid.num_steps = num_steps;
    grid.points.resize(static_cast<std::size_t>(num_steps) + 1);
    for (int i = 0; i <= num_steps; ++i) {
        grid.points[static_cast<std::size_t>(i)] =
            t_start * (1.0 - static_cast<double>(i) / static_cast<double>(num_steps));
    }
    grid.points.back() = 0.0;
    return grid;
}

double default_t_start(SdeFamily family) {
    return family == SdeFamily::Singular ? 1.0 - 1e-3 : 1.0;
}

std::vector<double> sample_prior(const GaussianEndpoint& p1, std::size_t count, RngSpec rng) {
    if (count < 1) {
        throw std::invalid_argument("sample_prior needs count >= 1");
    }
    const std::size_t d = p1.dimension();
    const double sigma = std::sqrt(p1.variance);
    std::vector<double> states(count * d);
    for (std::size_t i = 0; i < count; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            states[i * d + j] =
                p1.mean[j] + sigma * rng::standard_normal(rng.seed, rng::kPriorStream, i, j);
        }
    }
    return states;
}

namespace {

std::vector<std::size_t> recorded_indices(int num_steps, int stride) {
    std::vector<std::size_t> indices;
    for (int i = 0; i <= num_steps; i += stride) {
        indices.push_back(static_cast<std::size_t>(i));
    }
    if (indices.back() != static_cast<std::size_t>(num_steps)) {
        indices.push_back(static_cast<std::size_t>(num_steps));
    }
    return indices;
}

// The whole simulation; the deterministic run is the zero-diffusion member,
// so one loop serves both entry points.
TrajectoryEnsemble run_simulation(const FlowField& field, const DiffusionSchedule& schedule,
                                  const TimeGrid& grid, std::size_t count, RngSpec rng,
                                  const SimulateOptions& options) {
    if (grid.points.size() != static_cast<std::size_t>(grid.num_steps) + 1) {
        throw std::invalid_argument("time grid points/num_steps mismatch");
    }
    if (options.record_stride < 1) {
        throw std::invalid_argument("record_stride must be >= 1");
    }
    const std::size_t d = field.dimension;
    const auto record_at = recorded_indices(grid.num_steps, options.record_stride);

    TrajectoryEnsemble ensemble;
    ensemble.num_trajectories = count;
    ensemble.dimension = d;
    ensemble.rng = rng;
    ensemble.recorded_times.reserve(record_at.size());
    for (std::size_t idx : record_at) {
        ensemble.recorded_times.push_back(grid.points[idx]);
    }
    ensemble.states.assign(record_at.size(), std::vector<double>(count * d));

    std::atomic<bool> diverged{false};
    std::exception_ptr first_error = nullptr;
    std::mutex error_mutex;

    auto worker = [&](std::size_t begin, std::size_t end) {
        std::vector<double> x(d);
        std::vector<double> drift(d);
        const double sigma1 = std::sqrt(field.endpoint_p1.variance);
        try {
            for (std::size_t traj = begin; traj < end; ++traj) {
                for (std::size_t j = 0; j < d; ++j) {
                    x[j] = field.endpoint_p1.mean[j] +
                           sigma1 * rng::standard_normal(rng.seed, rng::kPriorStream, traj, j);
                }
                std::size_t next_record = 0;
                if (record_at[0] == 0) {
                    for (std::size_t j = 0; j < d; ++j) {
                        ensemble.states[0][traj * d + j] = x[j];
                    }
                    next_record = 1;
                }
                bool this_diverged = false;
                for (int i = 0; i < grid.num_steps; ++i) {
                    const std::size_t step = static_cast<std::size_t>(i);
                    const double t = grid.points[step];
                    const double dt = grid.points[step + 1] - grid.points[step];
                    reverse_drift_into(field, schedule, x, t, drift);
                    const double g = diffusion_magnitude(schedule, t);
                    const bool last_step = (i + 1 == grid.num_steps);
                    const bool add_noise =
                        g != 0.0 && (!last_step || options.noise_on_final_step);
                    const double noise_scale = add_noise ? g * std::sqrt(-dt) : 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                        double z = x[j] + drift[j] * dt;
                        if (add_noise) {
                            z += noise_scale * rng::standard_normal(rng.seed, rng::kStepStream,
                                                                    traj, step * d + j);
                        }
                        x[j] = z;
                        if (!this_diverged &&
                            (!std::isfinite(z) || std::abs(z) > options.divergence_bound)) {
                            this_diverged = true;
                        }
                    }
                    if (next_record < record_at.size() && record_at[next_record] == step + 1) {
                        auto& row = ensemble.states[next_record];
                        for (std::size_t j = 0; j < d; ++j) {
                            row[traj * d + j] = x[j];
                        }
                        ++next_record;
                    }
                }
                if (this_diverged) {
                    diverged.store(true, std::memory_order_relaxed);
                }
            }
        } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!first_error) {
                first_error = std::current_exception();
            }
        }
    };

    const int threads = std::max(1, options.num_threads);
    if (threads == 1 || count < 2) {
        worker(0, count);
    } else {
        const std::size_t n_workers = std::min<std::size_t>(threads, count);
        std::vector<std::thread> pool;
        pool.reserve(n_workers);
        const std::size_t chunk = (count + n_workers - 1) / n_workers;
        for (std::size_t w = 0; w < n_workers; ++w) {
            const std::size_t begin = w * chunk;
            const std::size_t end = std::min(count, begin + chunk);
            if (begin >= end) {
                break;
            }
            pool.emplace_back(worker, begin, end);
        }
        for (auto& th : pool) {
            th.join();
        }
    }
    if (first_error) {
        std::rethrow_exception(first_error);
    }
    ensemble.diverged = diverged.load();
    return ensemble;
}

}  // namespace

TrajectoryEnsemble simulate_reverse(const FlowField& field, const DiffusionSchedule& schedule,
                                    const TimeGrid& grid, std::size_t count, RngSpec rng,
                                    const SimulateOptions& options) {
    return run_simulation(field, schedule, grid, count, rng, options);
}

TrajectoryEnsemble simulate_ode(const FlowField& field, const TimeGrid& grid, std::size_t count,
                                RngSpec rng, const SimulateOptions& options) {
    return run_simulation(field, DiffusionSchedule::deterministic(), grid, count, rng, options);
}

}  // namespace flowsde
