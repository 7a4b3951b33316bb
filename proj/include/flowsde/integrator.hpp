#pragma once

#include <cstdint>
#include <vector>

#include "flowsde/flow.hpp"
#include "flowsde/sde_family.hpp"

namespace flowsde {

// =============================================================================
// Time grids
// =============================================================================

// Uniform descending grid t_i = t_start * (1 - i/N); t_N is exactly 0.
struct TimeGrid {
    double t_start = 1.0;
    int num_steps = 0;
    std::vector<double> points;

    static TimeGrid uniform(double t_start, int num_steps);
};

// Samplers start at t = 1 except Singular, whose coefficients pole there;
// it starts at 1 - 1e-3 so the run can still converge by t = 0.
double default_t_start(SdeFamily family);

// =============================================================================
// Trajectory ensembles
// =============================================================================

// One independent noise substream per trajectory index, keyed off this seed.
struct RngSpec {
    std::uint64_t seed = 0;
};

struct TrajectoryEnsemble {
    std::size_t num_trajectories = 0;
    std::size_t dimension = 0;
    std::vector<double> recorded_times;        // descending, subset of the grid
    std::vector<std::vector<double>> states;   // [time index][trajectory * dim + j]
    RngSpec rng;
    bool diverged = false;
};

struct SimulateOptions {
    int record_stride = 1;          // record every k-th grid point (plus t = 0)
    double divergence_bound = 1e6;  // flag the run once any |state| exceeds this
    bool noise_on_final_step = true;
    int num_threads = 1;
};

// =============================================================================
// Operations
// =============================================================================

// i.i.d. draws from N(mu1, sigma1^2 I); layout [trajectory * dim + j].
std::vector<double> sample_prior(const GaussianEndpoint& p1, std::size_t count, RngSpec rng);

// Euler-Maruyama backward from the prior:
//   z <- z + f_rev(z, t) dt + g~(t) sqrt(|dt|) xi,  dt < 0
// Coefficients are evaluated at the current (left) time of each step, so
// t = 0 is never an evaluation point. Pole hits surface as std::domain_error.
TrajectoryEnsemble simulate_reverse(const FlowField& field, const DiffusionSchedule& schedule,
                                    const TimeGrid& grid, std::size_t count, RngSpec rng,
                                    const SimulateOptions& options = {});

// Explicit Euler on dx = v(x, t) dt backward; rng feeds only the prior draws.
TrajectoryEnsemble simulate_ode(const FlowField& field, const TimeGrid& grid, std::size_t count,
                                RngSpec rng, const SimulateOptions& options = {});

}  // namespace flowsde
