#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "snlab/errors.hpp"
#include "snlab/noise.hpp"
#include "snlab/params.hpp"
#include "snlab/radial.hpp"

namespace snlab {

enum class EvolveMode { free, sn, stochastic_sn, stochastic_linearized };

std::string_view to_string(EvolveMode m);
EvolveMode parse_evolve_mode(std::string_view s);

struct EvolveConfig {
    EvolveMode mode = EvolveMode::free;
    double dt = 1e-3;
    std::size_t n_steps = 1000;
    RadialGrid grid = RadialGrid::with_extent(40.0, 2048);

    std::size_t record_every = 10;
    std::size_t snapshot_every = 0;  // 0 disables snapshots

    // Stochastic modes. The noise covariance is the energy correlator of the
    // free packet with the configured width, rebuilt whenever its spread factor
    // has moved by more than `kernel_refresh` (relative).
    TemporalModel temporal;
    std::uint64_t seed = 0;
    std::uint64_t trajectory = 0;
    double noise_scale = 1.0;
    double kernel_refresh = 0.01;

    /// Multiplies the mean (Newtonian) potential; 0 switches it off.
    double mean_scale = 1.0;

    /// Stability bound: max |V| dt / hbar per step.
    double max_step_phase = std::numbers::pi / 4.0;
    /// Abort when the norm moves by more than this in one step.
    double norm_tolerance = 1e-4;

    /// Optional extra potential, energy units, written over all grid points.
    std::function<void(double t, std::span<double> v)> external_potential;

    void validate() const;
    bool stochastic() const {
        return mode == EvolveMode::stochastic_sn || mode == EvolveMode::stochastic_linearized;
    }
};

/// Strang split-step integrator on the reduced radial wavefunction:
/// half potential phase, exact spectral kinetic step, half potential phase.
/// In `sn` modes the mean potential is rebuilt from the current density at
/// each half step; in `stochastic_linearized` it is the analytic potential of
/// the free packet, so the evolution is linear in the state. Noise is held
/// constant over a step.
class Evolver {
public:
    Evolver(const SimParams& p, const EvolveConfig& cfg);
    ~Evolver();
    Evolver(const Evolver&) = delete;
    Evolver& operator=(const Evolver&) = delete;

    /// One step. Stochastic modes draw their own noise.
    void step(RadialState& s);

    /// One step with a caller-supplied noise sample on the interior points
    /// (grid points 1..n-2). Empty means no noise.
    void step(RadialState& s, std::span<const double> noise);

    /// <H> for the mode: kinetic plus mean-field energy (half weight for the
    /// self-consistent term) plus the current noise expectation.
    double energy(const RadialState& s);

    /// Potential applied in the first half of the last step, all grid points.
    const std::vector<double>& last_potential() const { return v_first_; }

    std::size_t kernel_rebuilds() const;
    const EvolveConfig& config() const { return cfg_; }

private:
    void potential_at(const RadialState& s, double t, std::span<const double> noise, std::vector<double>& v);
    void apply_phase(RadialState& s, const std::vector<double>& v, double dt);
    std::span<const double> draw_noise(double t);

    SimParams p_;
    EvolveConfig cfg_;
    KineticPropagator kinetic_;
    std::vector<double> v_first_, v_second_, scratch_;
    std::vector<double> last_noise_;
    struct LabNoise;
    std::unique_ptr<LabNoise> noise_;
};

struct TrajectorySample {
    double t;
    double peak_radius;
    double rms_radius;
    double norm;
    double energy;
};

struct Snapshot {
    double t;
    std::vector<cdouble> u;
};

struct TrajectorySummary {
    EvolveMode mode = EvolveMode::free;
    std::vector<TrajectorySample> samples;
    std::vector<Snapshot> snapshots;
    double max_step_norm_drift = 0.0;
    std::size_t kernel_rebuilds = 0;
};

TrajectorySummary evolve_run(const SimParams& p, RadialState initial, const EvolveConfig& cfg);

/// Turning points of r_p(t) found with hysteresis: a maximum or minimum counts
/// once the curve has moved away from it by `min_swing` (relative to the
/// running value).
struct OscillationReport {
    std::vector<double> maxima_t, maxima;
    std::vector<double> minima_t, minima;
    bool full_oscillation = false;  // three alternating turning points
    bool brackets_reference = false;  // largest max >= ref / 2 and smallest min <= 2 ref
    double mean_width = 0.0;         // mean of r_p between the first and last turning point
    double ratio_to_reference = 0.0;  // mean_width / reference
};

OscillationReport detect_oscillation(const std::vector<TrajectorySample>& samples, double reference,
                                     double min_swing = 0.02);

struct PhaseAnsatzReport {
    double max_deviation = 0.0;        // radians
    double max_accumulated_phase = 0.0;  // max |phi_ref| over probes
    double relative = 0.0;             // max_deviation / max_accumulated_phase
    double potential_action = 0.0;     // max |V| T / hbar
    bool weak_regime = true;           // potential_action <= 1
    std::vector<double> probe_radii;   // grid points actually used
};

/// Evolves Psi with the given noise realization in linearized mode and the
/// free packet psi on the same grid, then compares arg(Psi / psi) at the probe
/// radii with -(1/hbar) int V dt of the same realization (trapezoid in time).
PhaseAnsatzReport phase_ansatz_check(const SimParams& p, const EvolveConfig& cfg,
                                     const NoiseRealization& noise, const std::vector<double>& r_probe);

void write_trajectory_csv(const std::string& path, const TrajectorySummary& s, const std::string& header);

/// Same binary layout as noise realizations, kind 1, complex rows.
void write_snapshots_binary(const std::string& path, const RadialGrid& grid,
                            const std::vector<Snapshot>& snaps, double dt, std::uint64_t seed);

}  // namespace snlab
