#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <cmath>

#include "flowsde/flow.hpp"
#include "flowsde/integrator.hpp"
#include "flowsde/rng.hpp"
#include "flowsde/stats.hpp"

using namespace flowsde;

namespace {

const GaussianEndpoint kP0 = gaussian_1d(-1.0, 0.3);
const GaussianEndpoint kP1 = gaussian_1d(0.0, 1.0);

FlowField toy_field() { return make_two_gaussian_field(kP0, kP1, linear_schedule()); }

struct Moments {
    double mean, variance;
};

Moments moments_of(std::span<const double> values) {
    double s = 0.0;
    for (double v : values) {
        s += v;
    }
    const double mean = s / static_cast<double>(values.size());
    double sq = 0.0;
    for (double v : values) {
        sq += (v - mean) * (v - mean);
    }
    return {mean, sq / static_cast<double>(values.size() - 1)};
}

}  // namespace

TEST_CASE("uniform time grid") {
    const TimeGrid grid = TimeGrid::uniform(1.0, 50);
    REQUIRE(grid.points.size() == 51);
    CHECK(grid.points.front() == 1.0);
    CHECK(grid.points.back() == 0.0);
    for (std::size_t i = 0; i + 1 < grid.points.size(); ++i) {
        CHECK(grid.points[i] > grid.points[i + 1]);
        CHECK(grid.points[i] - grid.points[i + 1] == doctest::Approx(0.02).epsilon(1e-12));
    }
    const TimeGrid offset = TimeGrid::uniform(1.0 - 1e-3, 10);
    CHECK(offset.points.front() == doctest::Approx(0.999));
    CHECK(offset.points.back() == 0.0);
    CHECK_THROWS_AS(TimeGrid::uniform(0.0, 10), std::invalid_argument);
    CHECK_THROWS_AS(TimeGrid::uniform(1.1, 10), std::invalid_argument);
    CHECK_THROWS_AS(TimeGrid::uniform(0.5, 0), std::invalid_argument);
}

TEST_CASE("default start times") {
    CHECK(default_t_start(SdeFamily::Singular) == doctest::Approx(1.0 - 1e-3));
    CHECK(default_t_start(SdeFamily::Deterministic) == 1.0);
    CHECK(default_t_start(SdeFamily::NonSingular) == 1.0);
}

TEST_CASE("prior sampling") {
    SUBCASE("fixed seed reproduces bit-identical draws") {
        const auto a = sample_prior(kP1, 1000, RngSpec{77});
        const auto b = sample_prior(kP1, 1000, RngSpec{77});
        CHECK(a == b);
        const auto c = sample_prior(kP1, 1000, RngSpec{78});
        CHECK(a != c);
    }
    SUBCASE("standard normal moments at one million draws") {
        const auto draws = sample_prior(kP1, 1'000'000, RngSpec{123});
        const Moments m = moments_of(draws);
        CHECK(std::abs(m.mean) < 4.0 / 1000.0);
        CHECK(m.variance == doctest::Approx(1.0).epsilon(0.01));
    }
    SUBCASE("variance scaling") {
        const auto draws = sample_prior(gaussian_1d(0.0, 4.0), 1'000'000, RngSpec{123});
        CHECK(moments_of(draws).variance == doctest::Approx(4.0).epsilon(0.01));
    }
    SUBCASE("count must be positive") {
        CHECK_THROWS_AS(sample_prior(kP1, 0, RngSpec{1}), std::invalid_argument);
    }
}

TEST_CASE("zero-diffusion reverse run equals the ODE run bit for bit") {
    const FlowField field = toy_field();
    const TimeGrid grid = TimeGrid::uniform(1.0, 64);
    const RngSpec rng{2024};
    const auto sde = simulate_reverse(field, DiffusionSchedule::non_singular(0.0), grid, 256, rng);
    const auto ode = simulate_ode(field, grid, 256, rng);
    REQUIRE(sde.states.size() == ode.states.size());
    for (std::size_t k = 0; k < sde.states.size(); ++k) {
        CHECK(sde.states[k] == ode.states[k]);
    }
    CHECK(sde.recorded_times == ode.recorded_times);
}

TEST_CASE("determinism across thread counts") {
    const FlowField field = toy_field();
    const TimeGrid grid = TimeGrid::uniform(1.0, 32);
    SimulateOptions serial;
    serial.num_threads = 1;
    SimulateOptions parallel;
    parallel.num_threads = 7;
    const auto schedule = DiffusionSchedule::zero_ends(1.0);
    const auto a = simulate_reverse(field, schedule, grid, 501, RngSpec{5}, serial);
    const auto b = simulate_reverse(field, schedule, grid, 501, RngSpec{5}, parallel);
    REQUIRE(a.states.size() == b.states.size());
    for (std::size_t k = 0; k < a.states.size(); ++k) {
        CHECK(a.states[k] == b.states[k]);
    }
}

TEST_CASE("single trajectory is reproducible") {
    const FlowField field = toy_field();
    const TimeGrid grid = TimeGrid::uniform(1.0, 20);
    const auto schedule = DiffusionSchedule::constant(0.5);
    const auto a = simulate_reverse(field, schedule, grid, 1, RngSpec{9});
    const auto b = simulate_reverse(field, schedule, grid, 1, RngSpec{9});
    for (std::size_t k = 0; k < a.states.size(); ++k) {
        CHECK(a.states[k] == b.states[k]);
    }
}

TEST_CASE("coefficients are never evaluated at t = 0") {
    FlowField field = toy_field();
    std::atomic<double> min_t{1.0};
    const VelocityFn inner = field.velocity;
    field.velocity = [&min_t, inner](std::span<const double> x, double t, std::span<double> out) {
        double seen = min_t.load();
        while (t < seen && !min_t.compare_exchange_weak(seen, t)) {
        }
        inner(x, t, out);
    };
    const TimeGrid grid = TimeGrid::uniform(1.0, 25);
    simulate_reverse(field, DiffusionSchedule::non_singular(1.0), grid, 64, RngSpec{4});
    CHECK(min_t.load() > 0.0);
    CHECK(min_t.load() == doctest::Approx(1.0 / 25.0).epsilon(1e-12));
}

TEST_CASE("fine-grid ODE recovers the analytic marginal at t = 0") {
    const FlowField field = toy_field();
    const TimeGrid grid = TimeGrid::uniform(1.0, 1000);
    SimulateOptions options;
    options.record_stride = 1000;  // keep only the ends
    options.num_threads = 2;
    const auto run = simulate_ode(field, grid, 100'000, RngSpec{1}, options);
    REQUIRE(run.recorded_times.back() == 0.0);
    const Moments m = moments_of(run.states.back());
    CHECK(std::abs(m.mean - (-1.0)) < 0.005);
    CHECK(m.variance == doctest::Approx(0.3).epsilon(0.02));
    CHECK_FALSE(run.diverged);
}

TEST_CASE("coarse ODE underestimates the variance beyond 3 cross-trial errors") {
    const FlowField field = toy_field();
    const TimeGrid grid = TimeGrid::uniform(1.0, 50);
    SimulateOptions options;
    options.record_stride = 50;
    options.num_threads = 2;
    std::vector<TrajectoryEnsemble> trials;
    for (int trial = 0; trial < 10; ++trial) {
        trials.push_back(simulate_ode(field, grid, 10'000,
                                      RngSpec{rng::trial_seed(7, trial)}, options));
    }
    const MarginalReport report =
        estimate_marginals(trials, analytic_marginal(kP0, kP1));
    const MarginalRow& at_zero = report.row_at(0.0);
    CHECK(at_zero.var_err < 0.0);
    CHECK(std::abs(at_zero.var_err) > 3.0 * at_zero.var_std);
}

TEST_CASE("stochastic run beats the deterministic variance estimate at t = 0") {
    const FlowField field = toy_field();
    const TimeGrid grid = TimeGrid::uniform(1.0, 100);
    SimulateOptions options;
    options.record_stride = 100;
    options.num_threads = 2;
    const AnalyticMarginal truth = analytic_marginal(kP0, kP1);
    std::vector<TrajectoryEnsemble> det, sto;
    for (int trial = 0; trial < 10; ++trial) {
        const RngSpec rng{rng::trial_seed(11, trial)};
        det.push_back(simulate_ode(field, grid, 10'000, rng, options));
        sto.push_back(simulate_reverse(field, DiffusionSchedule::non_singular(1.0), grid, 10'000,
                                       rng, options));
    }
    const double det_err = estimate_marginals(det, truth).row_at(0.0).var_err;
    const double sto_err = estimate_marginals(sto, truth).row_at(0.0).var_err;
    CHECK(std::abs(sto_err) < std::abs(det_err));
}

TEST_CASE("singular start boundary") {
    const FlowField field = toy_field();
    const auto schedule = DiffusionSchedule::singular(std::sqrt(2.0));
    SUBCASE("t_start = 1 hits the pole immediately") {
        const TimeGrid grid = TimeGrid::uniform(1.0, 50);
        CHECK_THROWS_AS(simulate_reverse(field, schedule, grid, 8, RngSpec{3}),
                        std::domain_error);
    }
    SUBCASE("offset start converges by t = 0") {
        const TimeGrid grid = TimeGrid::uniform(1.0 - 1e-3, 100);
        SimulateOptions options;
        options.record_stride = 100;
        const auto run = simulate_reverse(field, schedule, grid, 20'000, RngSpec{3}, options);
        CHECK_FALSE(run.diverged);
        const Moments m = moments_of(run.states.back());
        CHECK(m.mean == doctest::Approx(-1.0).epsilon(0.05));
        CHECK(m.variance == doctest::Approx(0.3).epsilon(0.15));
    }
}

TEST_CASE("divergence is flagged, not clipped") {
    FlowField field = toy_field();
    field.velocity = [](std::span<const double> x, double, std::span<double> out) {
        out[0] = 1e9 * (1.0 + std::abs(x[0]));
    };
    field.schedule = linear_schedule();
    const TimeGrid grid = TimeGrid::uniform(1.0, 5);
    const auto run = simulate_ode(field, grid, 4, RngSpec{6});
    CHECK(run.diverged);
}

TEST_CASE("final step into t = 0 carries noise by default") {
    const FlowField field = toy_field();
    const TimeGrid grid = TimeGrid::uniform(1.0, 1);
    const auto schedule = DiffusionSchedule::constant(1.0);
    SimulateOptions with_noise;
    SimulateOptions without_noise;
    without_noise.noise_on_final_step = false;
    const auto noisy = simulate_reverse(field, schedule, grid, 16, RngSpec{21}, with_noise);
    const auto quiet = simulate_reverse(field, schedule, grid, 16, RngSpec{21}, without_noise);
    CHECK(noisy.states.front() == quiet.states.front());
    CHECK(noisy.states.back() != quiet.states.back());
}

TEST_CASE("recorded subset always includes both ends") {
    const FlowField field = toy_field();
    const TimeGrid grid = TimeGrid::uniform(1.0, 47);
    SimulateOptions options;
    options.record_stride = 10;
    const auto run = simulate_ode(field, grid, 4, RngSpec{2}, options);
    REQUIRE(run.recorded_times.size() == 6);  // 0,10,20,30,40,47
    CHECK(run.recorded_times.front() == 1.0);
    CHECK(run.recorded_times.back() == 0.0);
}
