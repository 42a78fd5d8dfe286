#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "snlab/mastereq.hpp"

using namespace snlab;
using std::numbers::pi;

namespace {

double sinc0(double x) { return std::abs(x) < 1e-8 ? 1.0 - x * x / 6.0 : std::sin(x) / x; }

DKernel toy_kernel(const SimParams& p, const ToySystem& sys, TemporalModel temporal) {
    return build_dkernel(p, GaussianPacket::from_params(p), KGrid::for_grid(sys.grid, 16), temporal);
}

MasterConfig short_run() {
    MasterConfig cfg;
    cfg.t_final = 1.0;
    cfg.dt = 2e-3;
    cfg.record_every = 50;
    cfg.trace_abort = 0.9;
    return cfg;
}

}  // namespace

TEST_SUITE("mastereq") {

TEST_CASE("k-grid spacing, weights and coupling") {
    const auto g = KGrid::log_spaced(0.25, 4.0, 5);
    REQUIRE(g.size() == 5);
    CHECK(g.k[2] == doctest::Approx(1.0).epsilon(1e-14));
    double w = 0.0;
    for (double x : g.weight) w += x;
    CHECK(w == doctest::Approx(3.75).epsilon(1e-14));
    const auto a = g.coupling(2.0, {0.0, 1.0});
    CHECK(a[2 * 2 + 0] == doctest::Approx(2.0));
    CHECK(a[2 * 2 + 1] == doctest::Approx(2.0 * std::sin(1.0)));
    CHECK_THROWS_AS(KGrid::log_spaced(0.1, 1.0, 3), std::invalid_argument);
    CHECK_THROWS_AS(KGrid::log_spaced(0.0, 1.0, 8), std::invalid_argument);
}

TEST_CASE("noise transform matches radial quadrature of the j0 covariance") {
    SimParams p;
    const auto packet = GaussianPacket::from_params(p);
    const double b = packet.density_exponent();
    using GK = boost::math::quadrature::gauss_kronrod<double, 61>;
    auto expect = [&](auto f) {
        return GK::integrate([&](double r) { return 4.0 * pi * r * r * std::pow(b / pi, 1.5) * std::exp(-b * r * r) * f(r); },
                             0.0, 12.0, 15, 1e-14);
    };
    for (auto [k, kp] : {std::pair{1.0, 1.0}, std::pair{0.3, 2.5}, std::pair{4.0, 0.7}}) {
        const double cov = expect([&](double r) { return sinc0(k * r) * sinc0(kp * r); }) -
                           expect([&](double r) { return sinc0(k * r); }) * expect([&](double r) { return sinc0(kp * r); });
        const double ref = p.G * p.G / 4.0 / (k * k * kp * kp) * cov;
        CHECK(radial_noise_transform(p, packet, k, kp) == doctest::Approx(ref).epsilon(1e-9));
    }
}

TEST_CASE("kernel spot value agrees with a Monte-Carlo oracle") {
    SimParams p;
    const auto packet = GaussianPacket::from_params(p);
    const double sigma = std::sqrt(1.0 / (2.0 * packet.density_exponent()));
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> z(0.0, sigma);
    const int n = 2000000;
    std::vector<double> j(n);
    double s = 0.0;
    for (auto& x : j) {
        const double r = std::sqrt(std::pow(z(rng), 2) + std::pow(z(rng), 2) + std::pow(z(rng), 2));
        x = sinc0(r);
        s += x;
    }
    const double mean = s / n;
    double m2 = 0.0, m4 = 0.0;
    for (double x : j) {
        const double d2 = (x - mean) * (x - mean);
        m2 += d2;
        m4 += d2 * d2;
    }
    const double var = m2 / n;
    const double var_err = std::sqrt((m4 / n - var * var) / n);
    const double c_mc = p.G * p.G / 4.0 * var, c_err = p.G * p.G / 4.0 * var_err;

    const auto g = KGrid::log_spaced(0.25, 4.0, 5);
    const auto d = build_dkernel(p, packet, g, {TemporalMode::white, 0.0});
    const double gamma_h2m2 = d.gamma * p.hbar * p.hbar * p.mass * p.mass;
    const double c_from_kernel = d.spatial[2 * 5 + 2] * gamma_h2m2 / std::pow(2.0 / pi, 2);
    CHECK(std::abs(c_from_kernel - c_mc) < 3.0 * c_err + 1e-12);
    CHECK(d.plain(2, 2, 0.0, 0.0) == doctest::Approx(d.tilde(2, 2, 0.0, 0.0) / (16.0 * pi * pi)));
}

TEST_CASE("kernel is symmetric and real for a spherical packet") {
    SimParams p;
    const auto sys = ToySystem::gaussian(p);
    const auto d = toy_kernel(p, sys, {TemporalMode::exponential_memory, 1.5});
    const std::size_t M = d.kgrid.size();
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<std::size_t> idx(0, M - 1);
    std::uniform_real_distribution<double> tt(0.0, 5.0);
    for (int i = 0; i < 200; ++i) {
        const std::size_t n = idx(rng), m = idx(rng);
        const double t = tt(rng), tp = tt(rng);
        CHECK(d.tilde(n, m, t, tp) == d.tilde(m, n, tp, t));
        CHECK(std::isfinite(d.spatial[n * M + m]));
    }
    CHECK(d.tilde(0, 0, 1.0, 1.0) == doctest::Approx(d.spatial[0]));
    CHECK(d.tilde(0, 0, 0.0, 1.5) == doctest::Approx(d.spatial[0] * std::exp(-1.0)));
    const auto white = toy_kernel(p, sys, {TemporalMode::white, 0.0});
    CHECK(white.tilde(0, 1, 1.0, 1.0) == white.spatial[1]);
    CHECK(white.tilde(0, 1, 1.0, 1.1) == 0.0);
}

TEST_CASE("reconstructed covariance is positive semi-definite") {
    SimParams p;
    const auto sys = ToySystem::gaussian(p);
    const auto d = toy_kernel(p, sys, {TemporalMode::white, 0.0});
    const auto c = reconstructed_covariance(d, sys.radii);
    const auto N = Eigen::Index(sys.size());
    Eigen::MatrixXd m = Eigen::Map<const Eigen::MatrixXd>(c.data(), N, N);
    CHECK((m - m.transpose()).cwiseAbs().maxCoeff() == 0.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    CHECK(es.eigenvalues().minCoeff() > -1e-12 * es.eigenvalues().maxCoeff());
    CHECK(es.eigenvalues().maxCoeff() > 0.0);
}

TEST_CASE("zero coupling reduces to unitary evolution") {
    SimParams p;
    p.G = 0.1;
    const auto sys = ToySystem::gaussian(p, 10);
    auto d = toy_kernel(p, sys, {TemporalMode::exponential_memory, 1.0});
    d.gamma = 0.0;
    auto cfg = short_run();
    const auto r = evolve_master(sys, d, sys.initial_density(), cfg);
    REQUIRE(r.samples.size() >= 2);
    for (std::size_t i = 0; i < r.samples.size(); ++i) {
        const auto ref = unitary_reference(sys, sys.initial_density(), r.samples[i].t, p.hbar);
        CHECK((r.rho[i] - ref).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("mean term conserves trace and Hermiticity") {
    SimParams p;
    p.G = 0.1;
    const auto sys = ToySystem::gaussian(p, 10);
    const auto d = toy_kernel(p, sys, {TemporalMode::white, 0.0});
    auto cfg = short_run();
    cfg.memory_term = false;
    const auto r = evolve_master(sys, d, sys.initial_density(), cfg);
    CHECK(r.max_trace_drift < 1e-8);
    CHECK(r.max_raw_asymmetry < 1e-13);
    CHECK(r.min_eigenvalue > -1e-10);
}

TEST_CASE("full equation stays Hermitian and loses trace only at order gamma") {
    for (auto temporal : {TemporalModel{TemporalMode::white, 0.0}, TemporalModel{TemporalMode::exponential_memory, 1.0}}) {
        std::vector<double> drift;
        for (double G : {0.1, 0.2}) {
            SimParams p;
            p.G = G;
            const auto sys = ToySystem::gaussian(p, 10);
            const auto r = evolve_master(sys, toy_kernel(p, sys, temporal), sys.initial_density(), short_run());
            CHECK(r.max_raw_asymmetry < 1e-13);
            drift.push_back(r.max_trace_drift);
        }
        CHECK(drift[0] > 0.0);
        CHECK(drift[1] / drift[0] == doctest::Approx(4.0).epsilon(0.05));
    }
}

TEST_CASE("departure from unitary evolution grows linearly in sqrt(gamma)") {
    SimParams p;
    p.G = 1.0;
    const auto sys = ToySystem::gaussian(p, 10);
    const auto base = toy_kernel(p, sys, {TemporalMode::white, 0.0});
    auto cfg = short_run();
    std::vector<double> dev;
    for (double s : {1e-4, 2e-4, 4e-4}) {
        auto d = base;
        d.gamma = base.gamma * s * s;
        const auto r = evolve_master(sys, d, sys.initial_density(), cfg);
        const auto ref = unitary_reference(sys, sys.initial_density(), r.samples.back().t, p.hbar);
        dev.push_back((r.rho.back() - ref).norm());
    }
    CHECK(dev[0] > 0.0);
    CHECK(dev[1] / dev[0] == doctest::Approx(2.0).epsilon(0.01));
    CHECK(dev[2] / dev[1] == doctest::Approx(2.0).epsilon(0.01));
}

TEST_CASE("noise-free toy ensemble matches the mean-term master equation") {
    SimParams p;
    p.G = 0.1;
    const auto sys = ToySystem::gaussian(p, 10);
    const auto d = toy_kernel(p, sys, {TemporalMode::white, 0.0});
    auto cfg = short_run();
    cfg.memory_term = false;
    const auto m = evolve_master(sys, d, sys.initial_density(), cfg);
    const auto e = toy_ensemble(sys, d, cfg, 4, 1, false, 2);
    REQUIRE(e.rho.size() == m.rho.size());
    for (std::size_t i = 0; i < e.rho.size(); ++i) {
        CHECK(e.t[i] == doctest::Approx(m.samples[i].t));
        CHECK((e.rho[i] - m.rho[i]).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("invalid inputs are rejected") {
    SimParams p;
    CHECK_THROWS_AS(ToySystem::gaussian(p, 5), std::invalid_argument);
    CHECK_THROWS_AS(ToySystem::gaussian(p, 80), std::invalid_argument);
    const auto sys = ToySystem::gaussian(p, 10);
    const auto d = toy_kernel(p, sys, {TemporalMode::white, 0.0});
    auto cfg = short_run();
    Eigen::MatrixXcd bad = sys.initial_density();
    bad(0, 1) += 0.1;
    CHECK_THROWS_AS(evolve_master(sys, d, bad, cfg), std::invalid_argument);
    CHECK_THROWS_AS(evolve_master(sys, d, 2.0 * sys.initial_density(), cfg), std::invalid_argument);
    Eigen::MatrixXcd neg = Eigen::MatrixXcd::Zero(Eigen::Index(sys.size()), Eigen::Index(sys.size()));
    neg(0, 0) = 1.5;
    neg(1, 1) = -0.5;
    CHECK_THROWS_AS(evolve_master(sys, d, neg, cfg), std::invalid_argument);
    cfg.dt = 0.0;
    CHECK_THROWS_AS(evolve_master(sys, d, sys.initial_density(), cfg), std::invalid_argument);
    CHECK_THROWS_AS(build_dkernel(p, GaussianPacket::from_params(p), KGrid::for_grid(sys.grid, 16),
                                  {TemporalMode::exponential_memory, 0.0}),
                    std::invalid_argument);
    cfg = short_run();
    cfg.trace_abort = 1e-12;
    SimParams strong = p;
    const auto ds = toy_kernel(strong, sys, {TemporalMode::white, 0.0});
    CHECK_THROWS_AS(evolve_master(sys, ds, sys.initial_density(), cfg), NumericalError);
}

}
