#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "snlab/errors.hpp"
#include "snlab/noise.hpp"
#include "snlab/params.hpp"
#include "snlab/radial.hpp"

namespace snlab {

/// Monte-Carlo estimate of rho(r_i, r_j) = <Psi(r_i) Psi*(r_j)> over noise
/// realizations of the linearized stochastic equation.
///
/// Trajectories are integrated in the co-moving frame of the free packet
/// (lengths in units of a L(t), L = sqrt(1 + t^2) in units of m a^2 / hbar),
/// where the free Gaussian is a stationary state:
///   i v_tau = -v_xixi / 2 + xi^2 v / 2 + L [ -g erf(xi)/xi + (g/2) W(xi) ] v,
///   tau = atan(t), g = G m^3 a / hbar^2,
/// and W is a Gaussian field with the unit-width covariance kernel. The map
/// back to the lab frame is exact; observation radii are evaluated from the
/// sine series of v at xi = r / (a L).
struct EnsembleConfig {
    std::size_t n_trajectories = 400;
    std::uint64_t seed = 0;
    double t_final = 50.0;     // simulation time units
    std::size_t n_records = 101;  // uniform in t, including t = 0
    std::vector<std::array<double, 2>> pairs;  // physical radii (r1, r2)

    /// Default: frozen field (infinite correlation time).
    TemporalModel temporal{TemporalMode::exponential_memory, std::numeric_limits<double>::infinity()};
    double noise_scale = 1.0;
    double mean_scale = 1.0;

    double xi_max = 10.0;
    std::size_t n_points = 160;
    double max_step_phase = 0.05;  // max |L P1| dtau per step, radians
    double max_dtau = 2e-3;
    double norm_tolerance = 1e-4;  // per step
    double max_failure_fraction = 0.01;
    std::size_t n_batches = 20;
    /// Points whose free-packet amplitude is below this fraction of the peak
    /// are reported as unresolved.
    double resolve_floor = 1e-9;

    void validate() const;
};

struct DensitySnapshot {
    double t = 0.0;
    std::vector<cdouble> rho;        // row-major k x k over observation radii
    std::vector<double> stderr_re;   // per entry
    std::vector<double> stderr_im;
    std::vector<char> resolved;      // per observation radius
};

struct CoherenceDecay {
    double r1 = 0.0, r2 = 0.0;
    std::vector<double> t;
    std::vector<double> D;       // NaN where unresolved
    std::vector<double> D_err;   // jackknife over batches
};

struct EnsembleResult {
    std::vector<double> radii;  // observation radii
    std::vector<double> t;
    std::vector<DensitySnapshot> rho;
    std::vector<CoherenceDecay> decays;
    std::size_t n_samples = 0;
    std::size_t n_failed = 0;
    double max_norm_rate = 0.0;   // max over trajectories of |norm(t) - 1| / t
    double mean_steps = 0.0;      // co-moving steps per trajectory
};

/// Runs the ensemble. Batches of trajectories run in parallel and are merged
/// in batch order, so results do not depend on the thread count.
EnsembleResult run_ensemble(const SimParams& p, const EnsembleConfig& cfg);

/// Builds the co-moving noise model (interior points of the xi grid). Exposed
/// so callers can reuse the factorisation across runs.
NoiseModel comoving_noise_model(const EnsembleConfig& cfg);
EnsembleResult run_ensemble(const SimParams& p, const EnsembleConfig& cfg, const NoiseModel& model);

struct DecoherenceEstimate {
    double threshold = 0.0;      // exp(-Lambda / 2)
    double crossing_time = 0.0;  // first crossing, interpolated in log D
    bool crossed = false;        // false: crossing_time is a lower bound (last resolved time)
    bool initially_below = false;  // already below threshold at the first resolved time
    double fit_rate = 0.0;       // kappa in log D = -kappa t^2 / 2
    double fit_time = 0.0;       // sqrt(Lambda / kappa)
    double fit_residual = 0.0;   // rms of log D residuals
    std::size_t points_used = 0;
};

DecoherenceEstimate extract_decoherence_time(const CoherenceDecay& decay, double criterion_constant);

/// Phase variance of psi(r1) / psi(r2) predicted by the local-phase picture
/// for the same noise model the ensemble samples: -(1/hbar) int V dt at fixed
/// r, with the two-time covariance of the co-moving field. Mean potential
/// cancels in |rho| and is excluded. Values at each requested time.
std::vector<double> ansatz_phase_variance(const SimParams& p, double r1, double r2, const std::vector<double>& times,
                                          const TemporalModel& temporal, double noise_scale = 1.0,
                                          std::size_t n_nodes = 160);

void write_decay_csv(const std::string& path, const CoherenceDecay& d, const std::string& header);

}  // namespace snlab
