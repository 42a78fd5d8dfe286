#include <doctest.h>

#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <vector>

#include "snlab/evolve.hpp"
#include "snlab/gaussian.hpp"
#include "snlab/potential.hpp"

using namespace snlab;

namespace {

RadialState initial_state(const SimParams& p, const RadialGrid& grid) {
    RadialState s = RadialState::gaussian(grid, GaussianPacket::from_params(p));
    s.normalize();
    return s;
}

double max_abs_diff(const std::vector<cdouble>& a, const std::vector<cdouble>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

}  // namespace

TEST_SUITE("evolve") {

TEST_CASE("free packet follows the analytic width law") {
    SimParams p;
    EvolveConfig cfg;
    cfg.mode = EvolveMode::free;
    cfg.dt = 2e-3;
    cfg.n_steps = 1500;
    cfg.record_every = 25;
    cfg.grid = RadialGrid::with_extent(40.0, 2048);
    const auto run = evolve_run(p, initial_state(p, cfg.grid), cfg);
    REQUIRE(run.samples.size() > 10);
    double worst = 0.0;
    for (const auto& s : run.samples) {
        const double ref = peak_radius(GaussianPacket::from_params(p, s.t));
        worst = std::max(worst, std::abs(s.peak_radius / ref - 1.0));
        const double st = s.t;
        CHECK(s.peak_radius / p.width / std::sqrt(1.0 + st * st) == doctest::Approx(1.0).epsilon(0.005));
    }
    CHECK(worst < 0.002);
    const double e0 = run.samples.front().energy;
    for (const auto& s : run.samples) CHECK(std::abs(s.energy / e0 - 1.0) < 1e-6);
}

TEST_CASE("constant potential only adds a global phase") {
    SimParams p;
    const double v0 = 0.3;
    EvolveConfig cfg;
    cfg.mode = EvolveMode::free;
    cfg.dt = 1e-3;
    cfg.grid = RadialGrid::with_extent(30.0, 1024);
    EvolveConfig shifted = cfg;
    shifted.external_potential = [v0](double, std::span<double> v) {
        for (auto& x : v) x = v0;
    };
    Evolver a(p, cfg), b(p, shifted);
    auto s = initial_state(p, cfg.grid), g = s;
    for (int k = 0; k < 500; ++k) {
        a.step(s);
        b.step(g);
    }
    const cdouble phase = std::polar(1.0, -v0 * s.time / p.hbar);
    for (auto& x : s.u) x *= phase;
    CHECK(max_abs_diff(s.u, g.u) < 1e-12);
    const auto da = s.density(), db = g.density();
    for (std::size_t i = 0; i < da.size(); ++i) CHECK(da[i] == doctest::Approx(db[i]).epsilon(1e-10));
}

TEST_CASE("self-gravitating packet above threshold contracts at once") {
    SimParams p;
    p.mass = 1.5;
    EvolveConfig cfg;
    cfg.mode = EvolveMode::sn;
    cfg.dt = 1e-3;
    cfg.n_steps = 50;
    cfg.record_every = 5;
    cfg.grid = RadialGrid::with_extent(20.0, 2048);
    const auto run = evolve_run(p, initial_state(p, cfg.grid), cfg);
    REQUIRE(run.samples.size() >= 3);
    CHECK(run.samples[1].peak_radius < run.samples[0].peak_radius);
    CHECK(run.samples[2].peak_radius < run.samples[1].peak_radius);
}

TEST_CASE("self-gravitating packet below threshold expands at once") {
    SimParams p;
    p.mass = 0.7;
    EvolveConfig cfg;
    cfg.mode = EvolveMode::sn;
    cfg.dt = 1e-3;
    cfg.n_steps = 50;
    cfg.record_every = 5;
    cfg.grid = RadialGrid::with_extent(20.0, 2048);
    const auto run = evolve_run(p, initial_state(p, cfg.grid), cfg);
    CHECK(run.samples[1].peak_radius > run.samples[0].peak_radius);
}

TEST_CASE("linearized evolution is linear for a fixed noise sample") {
    SimParams p;
    p.G = 0.5;
    EvolveConfig cfg;
    cfg.mode = EvolveMode::stochastic_linearized;
    cfg.dt = 2e-3;
    cfg.grid = RadialGrid::with_extent(20.0, 512);
    Evolver ev(p, cfg);
    const std::size_t n = cfg.grid.n_points;
    std::vector<double> noise(n - 2);
    for (std::size_t i = 0; i < noise.size(); ++i) noise[i] = 0.4 * std::sin(0.37 * double(i));

    auto psi1 = initial_state(p, cfg.grid);
    SimParams q = p;
    q.width = 1.7;
    auto psi2 = initial_state(q, cfg.grid);
    const cdouble alpha(0.6, 0.2), beta(-0.3, 0.7);
    RadialState mix = psi1;
    for (std::size_t i = 0; i < n; ++i) mix.u[i] = alpha * psi1.u[i] + beta * psi2.u[i];
    const double scale = std::sqrt(mix.norm());
    for (auto& x : mix.u) x /= scale;

    for (int k = 0; k < 200; ++k) {
        ev.step(psi1, noise);
        ev.step(psi2, noise);
        ev.step(mix, noise);
    }
    std::vector<cdouble> combo(n);
    for (std::size_t i = 0; i < n; ++i) combo[i] = (alpha * psi1.u[i] + beta * psi2.u[i]) / scale;
    CHECK(max_abs_diff(combo, mix.u) < 1e-12);
}

TEST_CASE("stochastic trajectories preserve the norm") {
    SimParams p;
    EvolveConfig cfg;
    cfg.mode = EvolveMode::stochastic_sn;
    cfg.dt = 2e-3;
    cfg.n_steps = 500;
    cfg.record_every = 50;
    cfg.kernel_refresh = 0.1;
    cfg.grid = RadialGrid::with_extent(12.0, 96);
    cfg.temporal = {TemporalMode::white, 0.0};
    cfg.seed = 11;
    const auto run = evolve_run(p, initial_state(p, cfg.grid), cfg);
    for (const auto& s : run.samples)
        if (s.t > 0.0) CHECK(std::abs(s.norm - 1.0) / s.t < 1e-6);
    CHECK(run.max_step_norm_drift < 1e-10);
    CHECK(run.kernel_rebuilds > 1);
}

TEST_CASE("step rejects noise of the wrong size and unstable steps") {
    SimParams p;
    EvolveConfig cfg;
    cfg.mode = EvolveMode::stochastic_linearized;
    cfg.grid = RadialGrid::with_extent(10.0, 128);
    Evolver ev(p, cfg);
    auto s = initial_state(p, cfg.grid);
    std::vector<double> bad(5, 0.0);
    CHECK_THROWS_AS(ev.step(s, bad), std::invalid_argument);
    std::vector<double> huge(cfg.grid.n_points - 2, 1e6);
    CHECK_THROWS_AS(ev.step(s, huge), NumericalError);
}

TEST_CASE("phase ansatz is exact without a potential") {
    SimParams p;
    EvolveConfig cfg;
    cfg.mode = EvolveMode::stochastic_linearized;
    cfg.mean_scale = 0.0;
    cfg.dt = 5e-3;
    cfg.n_steps = 100;
    cfg.grid = RadialGrid::with_extent(15.0, 256);
    NoiseRealization zero;
    const auto r = cfg.grid.radii();
    zero.radii.assign(r.begin() + 1, r.end() - 1);
    zero.n_steps = cfg.n_steps;
    zero.dt = cfg.dt;
    zero.values.assign(zero.n_steps * zero.radii.size(), 0.0);
    const auto rep = phase_ansatz_check(p, cfg, zero, {0.5, 1.0, 2.0});
    CHECK(rep.max_deviation < 1e-12);
    CHECK(rep.max_accumulated_phase == 0.0);
    CHECK(rep.weak_regime);
}

TEST_CASE("phase ansatz is exact for a spatially uniform potential") {
    SimParams p;
    EvolveConfig cfg;
    cfg.mode = EvolveMode::stochastic_linearized;
    cfg.mean_scale = 0.0;
    cfg.dt = 5e-3;
    cfg.n_steps = 100;
    cfg.grid = RadialGrid::with_extent(15.0, 256);
    NoiseRealization uni;
    const auto r = cfg.grid.radii();
    uni.radii.assign(r.begin() + 1, r.end() - 1);
    uni.n_steps = cfg.n_steps;
    uni.dt = cfg.dt;
    for (std::size_t k = 0; k < uni.n_steps; ++k)
        for (std::size_t i = 0; i < uni.radii.size(); ++i) uni.values.push_back(0.2 + 0.1 * std::cos(0.1 * double(k)));
    const auto rep = phase_ansatz_check(p, cfg, uni, {0.5, 1.0, 2.0});
    CHECK(rep.max_accumulated_phase > 0.05);
    CHECK(rep.max_deviation < 1e-10);
}

TEST_CASE("phase ansatz rejects mismatched inputs") {
    SimParams p;
    EvolveConfig cfg;
    cfg.mode = EvolveMode::stochastic_linearized;
    cfg.grid = RadialGrid::with_extent(15.0, 256);
    cfg.n_steps = 10;
    NoiseRealization bad;
    bad.radii = {1.0, 2.0};
    bad.n_steps = 10;
    bad.dt = cfg.dt;
    bad.values.assign(20, 0.0);
    CHECK_THROWS_AS(phase_ansatz_check(p, cfg, bad, {1.0}), std::invalid_argument);
    cfg.mode = EvolveMode::free;
    CHECK_THROWS_AS(phase_ansatz_check(p, cfg, bad, {1.0}), std::invalid_argument);
}

TEST_CASE("oscillation detector on a synthetic breathing curve") {
    std::vector<TrajectorySample> s;
    for (int k = 0; k <= 2000; ++k) {
        const double t = 0.01 * k;
        s.push_back({t, 1.0 + 0.3 * std::sin(t), 0.0, 1.0, 0.0});
    }
    const auto rep = detect_oscillation(s, 1.0);
    CHECK(rep.full_oscillation);
    CHECK(rep.brackets_reference);
    CHECK(rep.maxima.size() >= 3);
    CHECK(rep.maxima.front() == doctest::Approx(1.3).epsilon(1e-3));
    CHECK(rep.minima.front() == doctest::Approx(0.7).epsilon(1e-3));
    CHECK(rep.ratio_to_reference == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("oscillation detector ignores a monotone curve") {
    std::vector<TrajectorySample> s;
    for (int k = 0; k <= 500; ++k) {
        const double t = 0.01 * k;
        s.push_back({t, std::sqrt(1.0 + t * t), 0.0, 1.0, 0.0});
    }
    const auto rep = detect_oscillation(s, 1.0);
    CHECK_FALSE(rep.full_oscillation);
    CHECK(rep.maxima.empty());
    CHECK(rep.minima.empty());
}

}

TEST_SUITE("evolve_weak_phase") {

TEST_CASE("phase ansatz holds within five percent at weak coupling") {
    SimParams p;
    p.G = 1e-3;
    EvolveConfig cfg;
    cfg.mode = EvolveMode::stochastic_linearized;
    cfg.dt = 5e-3;
    cfg.n_steps = 20;
    cfg.grid = RadialGrid::with_extent(10.0, 256);
    cfg.temporal = {TemporalMode::exponential_memory, std::numeric_limits<double>::infinity()};
    const auto r = cfg.grid.radii();
    const std::vector<double> interior(r.begin() + 1, r.end() - 1);
    const auto kernel = tabulate_energy_correlator(p, GaussianPacket::from_params(p), interior);
    const auto model = NoiseModel::build(interior, kernel, cfg.temporal, cfg.dt, 5);
    const auto noise = sample(model, cfg.n_steps, 0);
    const auto rep = phase_ansatz_check(p, cfg, noise, {0.5, 1.0, 1.5});
    CHECK(rep.weak_regime);
    CHECK(rep.max_accumulated_phase > 0.0);
    CHECK(rep.relative <= 0.05);
}

}
