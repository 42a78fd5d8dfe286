#include "snlab/evolve.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "snlab/gaussian.hpp"
#include "snlab/potential.hpp"

namespace snlab {

std::string_view to_string(EvolveMode m) {
    switch (m) {
        case EvolveMode::free: return "free";
        case EvolveMode::sn: return "sn";
        case EvolveMode::stochastic_sn: return "stochastic_sn";
        case EvolveMode::stochastic_linearized: return "stochastic_linearized";
    }
    return "unknown";
}

EvolveMode parse_evolve_mode(std::string_view s) {
    if (s == "free") return EvolveMode::free;
    if (s == "sn") return EvolveMode::sn;
    if (s == "stochastic_sn") return EvolveMode::stochastic_sn;
    if (s == "stochastic_linearized") return EvolveMode::stochastic_linearized;
    throw std::invalid_argument("unknown evolve mode '" + std::string(s) +
                                "' (expected free, sn, stochastic_sn or stochastic_linearized)");
}

void EvolveConfig::validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("evolve: dt must be positive");
    if (n_steps == 0) throw std::invalid_argument("evolve: n_steps must be positive");
    if (grid.n_points < 16) throw std::invalid_argument("evolve: grid needs at least 16 points");
    if (!(grid.spacing > 0.0)) throw std::invalid_argument("evolve: grid spacing must be positive");
    if (record_every == 0) throw std::invalid_argument("evolve: record_every must be positive");
    if (!(noise_scale >= 0.0)) throw std::invalid_argument("evolve: noise_scale must be non-negative");
    if (!(kernel_refresh > 0.0)) throw std::invalid_argument("evolve: kernel_refresh must be positive");
    if (!(max_step_phase > 0.0)) throw std::invalid_argument("evolve: max_step_phase must be positive");
    if (temporal.mode == TemporalMode::exponential_memory && !(temporal.correlation_time > 0.0))
        throw std::invalid_argument("evolve: correlation time must be positive");
}

struct Evolver::LabNoise {
    std::vector<double> radii;
    std::unique_ptr<NoiseModel> model;
    std::unique_ptr<NoiseStream> stream;
    double alpha = 0.0;
    std::size_t rebuilds = 0;

    std::unique_ptr<NoiseModel> build(const SimParams& p, const EvolveConfig& cfg, double t) {
        const auto packet = GaussianPacket::from_params(p, t);
        auto k = tabulate_energy_correlator(p, packet, radii);
        const double s2 = cfg.noise_scale * cfg.noise_scale;
        for (auto& v : k) v *= s2;
        alpha = packet.spread_factor();
        return std::make_unique<NoiseModel>(NoiseModel::build(radii, std::move(k), cfg.temporal, cfg.dt, cfg.seed));
    }
};

Evolver::Evolver(const SimParams& p, const EvolveConfig& cfg)
    : p_(p), cfg_(cfg), kinetic_(cfg.grid, p.mass, p.hbar) {
    p_.validate();
    cfg_.validate();
    if (cfg_.stochastic()) {
        noise_ = std::make_unique<LabNoise>();
        for (std::size_t i = 1; i + 1 < cfg_.grid.n_points; ++i) noise_->radii.push_back(cfg_.grid.r(i));
    }
}

Evolver::~Evolver() = default;

std::size_t Evolver::kernel_rebuilds() const { return noise_ ? noise_->rebuilds : 0; }

std::span<const double> Evolver::draw_noise(double t) {
    auto& ln = *noise_;
    if (!ln.model) {
        ln.model = ln.build(p_, cfg_, t);
        ln.stream = std::make_unique<NoiseStream>(*ln.model, cfg_.trajectory);
        ln.rebuilds = 1;
    } else {
        const double a = GaussianPacket::from_params(p_, t).spread_factor();
        if (std::abs(a - ln.alpha) > cfg_.kernel_refresh * ln.alpha) {
            auto fresh = ln.build(p_, cfg_, t);
            ln.stream->rebind(*fresh);
            ln.model = std::move(fresh);
            ++ln.rebuilds;
        }
    }
    return ln.stream->next(cfg_.dt);
}

void Evolver::potential_at(const RadialState& s, double t, std::span<const double> noise, std::vector<double>& v) {
    const std::size_t n = s.u.size();
    switch (cfg_.mode) {
        case EvolveMode::free:
            v.assign(n, 0.0);
            break;
        case EvolveMode::sn:
        case EvolveMode::stochastic_sn:
            mean_potential_grid_into(p_, s, v);
            for (auto& x : v) x *= cfg_.mean_scale;
            break;
        case EvolveMode::stochastic_linearized: {
            v.resize(n);
            const auto packet = GaussianPacket::from_params(p_, t);
            for (std::size_t i = 0; i < n; ++i)
                v[i] = cfg_.mean_scale * mean_potential_gaussian(p_, packet, s.grid.r(i));
            break;
        }
    }
    if (!noise.empty()) {
        if (noise.size() != n - 2) throw std::invalid_argument("Evolver: noise sample must cover the interior points");
        for (std::size_t i = 0; i < noise.size(); ++i) v[i + 1] += noise[i];
    }
    if (cfg_.external_potential) {
        scratch_.assign(n, 0.0);
        cfg_.external_potential(t, scratch_);
        for (std::size_t i = 0; i < n; ++i) v[i] += scratch_[i];
    }
}

void Evolver::apply_phase(RadialState& s, const std::vector<double>& v, double dt) {
    const double f = -dt / p_.hbar;
    for (std::size_t i = 1; i + 1 < s.u.size(); ++i) s.u[i] *= std::polar(1.0, f * v[i]);
}

void Evolver::step(RadialState& s) {
    if (cfg_.stochastic()) {
        const auto noise = draw_noise(s.time);
        last_noise_.assign(noise.begin(), noise.end());
        step(s, last_noise_);
    } else {
        step(s, {});
    }
}

void Evolver::step(RadialState& s, std::span<const double> noise) {
    if (s.u.size() != cfg_.grid.n_points) throw std::invalid_argument("Evolver: state grid does not match config");
    if (noise.data() != last_noise_.data()) last_noise_.assign(noise.begin(), noise.end());
    const double dt = cfg_.dt;
    const double t = s.time;
    const double norm_before = s.norm();
    const bool has_potential = cfg_.mode != EvolveMode::free || !noise.empty() || cfg_.external_potential;

    if (has_potential) {
        potential_at(s, t, noise, v_first_);
        double vmax = 0.0;
        for (double x : v_first_) vmax = std::max(vmax, std::abs(x));
        if (vmax * dt / p_.hbar > cfg_.max_step_phase)
            throw NumericalError("Evolver: potential phase per step " + std::to_string(vmax * dt / p_.hbar) +
                                 " exceeds the stability bound " + std::to_string(cfg_.max_step_phase) +
                                 "; reduce dt");
        apply_phase(s, v_first_, 0.5 * dt);
    } else {
        v_first_.assign(s.u.size(), 0.0);
    }
    kinetic_.apply(s.u, dt);
    if (has_potential) {
        potential_at(s, t + dt, noise, v_second_);
        apply_phase(s, v_second_, 0.5 * dt);
    }
    s.time = t + dt;

    const double drift = std::abs(s.norm() - norm_before);
    if (!(drift <= cfg_.norm_tolerance))
        throw NumericalError("Evolver: norm drift " + std::to_string(drift) + " in one step at t=" +
                             std::to_string(s.time));
}

double Evolver::energy(const RadialState& s) {
    const std::size_t n = s.u.size();
    auto expect = [&](const std::vector<double>& pot) {
        double acc = 0.0;
        for (std::size_t i = 1; i + 1 < n; ++i) acc += std::norm(s.u[i]) * pot[i];
        return 4.0 * std::numbers::pi * s.grid.spacing * acc;
    };
    double e = kinetic_.kinetic_energy(s.u);
    std::vector<double> v;
    if (cfg_.mode == EvolveMode::sn || cfg_.mode == EvolveMode::stochastic_sn) {
        mean_potential_grid_into(p_, s, v);
        for (auto& x : v) x *= cfg_.mean_scale;
        e += 0.5 * expect(v);
    } else if (cfg_.mode == EvolveMode::stochastic_linearized) {
        v.resize(n);
        const auto packet = GaussianPacket::from_params(p_, s.time);
        for (std::size_t i = 0; i < n; ++i) v[i] = cfg_.mean_scale * mean_potential_gaussian(p_, packet, s.grid.r(i));
        e += expect(v);
    }
    if (cfg_.external_potential) {
        v.assign(n, 0.0);
        cfg_.external_potential(s.time, v);
        e += expect(v);
    }
    if (!last_noise_.empty()) {
        v.assign(n, 0.0);
        for (std::size_t i = 0; i < last_noise_.size(); ++i) v[i + 1] = last_noise_[i];
        e += expect(v);
    }
    return e;
}

TrajectorySummary evolve_run(const SimParams& p, RadialState initial, const EvolveConfig& cfg) {
    Evolver ev(p, cfg);
    if (initial.u.size() != cfg.grid.n_points)
        throw std::invalid_argument("evolve_run: initial state grid does not match config");
    const double n0 = initial.norm();
    if (std::abs(n0 - 1.0) > 1e-6)
        throw std::invalid_argument("evolve_run: initial norm " + std::to_string(n0) + " is not 1 within 1e-6");

    TrajectorySummary out;
    out.mode = cfg.mode;
    auto record = [&](RadialState& s) {
        out.samples.push_back({s.time, s.peak_radius(), s.rms_radius(), s.norm(), ev.energy(s)});
    };
    record(initial);
    if (cfg.snapshot_every) out.snapshots.push_back({initial.time, initial.u});
    double prev = n0;
    for (std::size_t k = 1; k <= cfg.n_steps; ++k) {
        ev.step(initial);
        const double nk = initial.norm();
        out.max_step_norm_drift = std::max(out.max_step_norm_drift, std::abs(nk - prev));
        prev = nk;
        if (k % cfg.record_every == 0 || k == cfg.n_steps) record(initial);
        if (cfg.snapshot_every && (k % cfg.snapshot_every == 0)) out.snapshots.push_back({initial.time, initial.u});
    }
    out.kernel_rebuilds = ev.kernel_rebuilds();
    return out;
}

OscillationReport detect_oscillation(const std::vector<TrajectorySample>& samples, double reference,
                                     double min_swing) {
    OscillationReport rep;
    if (samples.size() < 3) return rep;
    // Hysteresis turning-point search.
    int dir = 0;  // +1 rising, -1 falling
    std::size_t ext = 0;
    std::vector<std::pair<std::size_t, int>> turns;
    for (std::size_t i = 1; i < samples.size(); ++i) {
        const double x = samples[i].peak_radius;
        const double e = samples[ext].peak_radius;
        if (dir >= 0 && x > e) {
            ext = i;
            if (dir == 0 && x > samples[0].peak_radius * (1 + min_swing)) dir = 1;
        } else if (dir <= 0 && x < e) {
            ext = i;
            if (dir == 0 && x < samples[0].peak_radius * (1 - min_swing)) dir = -1;
        }
        if (dir == 1 && x < samples[ext].peak_radius * (1 - min_swing)) {
            turns.push_back({ext, +1});
            dir = -1;
            ext = i;
        } else if (dir == -1 && x > samples[ext].peak_radius * (1 + min_swing)) {
            turns.push_back({ext, -1});
            dir = 1;
            ext = i;
        }
    }
    for (auto [i, kind] : turns) {
        if (kind > 0) {
            rep.maxima_t.push_back(samples[i].t);
            rep.maxima.push_back(samples[i].peak_radius);
        } else {
            rep.minima_t.push_back(samples[i].t);
            rep.minima.push_back(samples[i].peak_radius);
        }
    }
    rep.full_oscillation = turns.size() >= 3;
    if (!rep.maxima.empty() && !rep.minima.empty()) {
        const double top = *std::max_element(rep.maxima.begin(), rep.maxima.end());
        const double bottom = *std::min_element(rep.minima.begin(), rep.minima.end());
        rep.brackets_reference = top >= 0.5 * reference && bottom <= 2.0 * reference;
    }
    if (turns.size() >= 2) {
        double acc = 0.0;
        std::size_t cnt = 0;
        for (std::size_t i = turns.front().first; i <= turns.back().first; ++i, ++cnt) acc += samples[i].peak_radius;
        rep.mean_width = acc / static_cast<double>(cnt);
    } else {
        double acc = 0.0;
        for (const auto& s : samples) acc += s.peak_radius;
        rep.mean_width = acc / static_cast<double>(samples.size());
    }
    rep.ratio_to_reference = rep.mean_width / reference;
    return rep;
}

PhaseAnsatzReport phase_ansatz_check(const SimParams& p, const EvolveConfig& cfg, const NoiseRealization& noise,
                                     const std::vector<double>& r_probe) {
    if (cfg.mode != EvolveMode::stochastic_linearized)
        throw std::invalid_argument("phase_ansatz_check: requires stochastic_linearized mode");
    const std::size_t n = cfg.grid.n_points;
    if (noise.radii.size() != n - 2) throw std::invalid_argument("phase_ansatz_check: noise must cover the interior points");
    for (std::size_t i = 0; i < noise.radii.size(); ++i)
        if (std::abs(noise.radii[i] - cfg.grid.r(i + 1)) > 1e-12 * cfg.grid.extent())
            throw std::invalid_argument("phase_ansatz_check: noise radii differ from the grid");
    if (noise.n_steps < cfg.n_steps) throw std::invalid_argument("phase_ansatz_check: noise realization too short");
    if (std::abs(noise.dt - cfg.dt) > 1e-12 * cfg.dt) throw std::invalid_argument("phase_ansatz_check: noise dt differs");

    PhaseAnsatzReport rep;
    std::vector<std::size_t> idx;
    for (double r : r_probe) {
        const auto i = cfg.grid.nearest_index(r);
        if (i == 0 || i + 1 >= n) throw std::invalid_argument("phase_ansatz_check: probe radius off the interior");
        idx.push_back(i);
        rep.probe_radii.push_back(cfg.grid.r(i));
    }

    const auto packet = GaussianPacket::from_params(p);
    RadialState full = RadialState::gaussian(cfg.grid, packet);
    full.normalize();
    RadialState bare = full;

    EvolveConfig free_cfg = cfg;
    free_cfg.mode = EvolveMode::free;
    free_cfg.external_potential = nullptr;
    Evolver ev(p, cfg);
    Evolver ev_free(p, free_cfg);

    // Reference phase: trapezoid of -(1/hbar) V(r, t) over each step.
    std::vector<double> phase(idx.size(), 0.0), action(idx.size(), 0.0);
    std::vector<double> ext(n);
    auto v_at = [&](std::size_t q, double t, std::size_t step) {
        const std::size_t i = idx[q];
        double v = cfg.mean_scale * mean_potential_gaussian(p, GaussianPacket::from_params(p, t), cfg.grid.r(i));
        v += noise.at(step, i - 1);
        if (cfg.external_potential) {
            std::fill(ext.begin(), ext.end(), 0.0);
            cfg.external_potential(t, ext);
            v += ext[i];
        }
        return v;
    };
    for (std::size_t k = 0; k < cfg.n_steps; ++k) {
        const double t = full.time;
        for (std::size_t q = 0; q < idx.size(); ++q) {
            const double v0 = v_at(q, t, k), v1 = v_at(q, t + cfg.dt, k);
            phase[q] -= 0.5 * cfg.dt * (v0 + v1) / p.hbar;
            action[q] += 0.5 * cfg.dt * (std::abs(v0) + std::abs(v1)) / p.hbar;
        }
        ev.step(full, std::span<const double>(&noise.values[k * (n - 2)], n - 2));
        ev_free.step(bare);
    }
    for (std::size_t q = 0; q < idx.size(); ++q) {
        const std::size_t i = idx[q];
        const double measured = std::arg(full.u[i] * std::conj(bare.u[i]));
        const double d = std::remainder(measured - phase[q], 2.0 * std::numbers::pi);
        rep.max_deviation = std::max(rep.max_deviation, std::abs(d));
        rep.max_accumulated_phase = std::max(rep.max_accumulated_phase, std::abs(phase[q]));
        rep.potential_action = std::max(rep.potential_action, action[q]);
    }
    rep.relative = rep.max_accumulated_phase > 0.0 ? rep.max_deviation / rep.max_accumulated_phase : 0.0;
    rep.weak_regime = rep.potential_action <= 1.0;
    return rep;
}

void write_trajectory_csv(const std::string& path, const TrajectorySummary& s, const std::string& header) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_trajectory_csv: cannot open " + path);
    if (!header.empty()) out << "# " << header << '\n';
    out << "t,r_p,rms,norm,energy\n";
    char buf[160];
    for (const auto& x : s.samples) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g\n", x.t, x.peak_radius, x.rms_radius, x.norm,
                      x.energy);
        out << buf;
    }
}

void write_snapshots_binary(const std::string& path, const RadialGrid& grid, const std::vector<Snapshot>& snaps,
                            double dt, std::uint64_t seed) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_snapshots_binary: cannot open " + path);
    auto put = [&](const auto& v) { out.write(reinterpret_cast<const char*>(&v), sizeof(v)); };
    out.write("SNLB", 4);
    put(std::uint32_t{1});
    put(std::uint32_t{1});
    put(static_cast<std::uint64_t>(grid.n_points));
    put(static_cast<std::uint64_t>(snaps.size()));
    put(dt);
    put(seed);
    for (std::size_t i = 0; i < grid.n_points; ++i) put(grid.r(i));
    for (const auto& s : snaps)
        out.write(reinterpret_cast<const char*>(s.u.data()), std::streamsize(s.u.size() * sizeof(cdouble)));
}

}  // namespace snlab
