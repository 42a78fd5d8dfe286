#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "snlab/errors.hpp"
#include "snlab/gaussian.hpp"
#include "snlab/noise.hpp"
#include "snlab/params.hpp"
#include "snlab/radial.hpp"

namespace snlab {

/// Radial wavenumbers for the s-wave reduction of int d^3k. The operator
/// A(k) = (m/k) exp(i k.r) projected on l = 0 is diagonal on the position
/// grid with elements (m/k) j0(k r).
struct KGrid {
    std::vector<double> k;
    std::vector<double> weight;  // int dk f(k) ~ sum weight_n f(k_n)

    /// Logarithmic spacing, trapezoid weights in k. Requires M >= 4, k_min > 0.
    static KGrid log_spaced(double k_min, double k_max, std::size_t M);
    /// k in [pi / R, pi / h] for the given position grid.
    static KGrid for_grid(const RadialGrid& grid, std::size_t M = 16);

    std::size_t size() const { return k.size(); }
    /// Row-major M x N matrix of (m / k_n) j0(k_n r_i).
    std::vector<double> coupling(double mass, const std::vector<double>& radii) const;
};

/// Radial transform of the equal-time energy covariance of the free packet,
///   C_hat(k, k') = int int r^2 r'^2 j0(k r) j0(k' r') C_s(r, r') dr dr',
/// where C_s is the covariance of the angle-averaged noise (what an l = 0
/// state couples to). Closed form for a Gaussian density exp(-b x^2):
///   (G^2 m^4 / 4) / (k^2 k'^2) exp(-(k^2 + k'^2) / 4b) [sinh(z)/z - 1],
///   z = k k' / 2b.
double radial_noise_transform(const SimParams& p, const GaussianPacket& packet, double k, double k_prime);

/// Noise correlation on the k-grid: D_tilde(k, k', t, t') = spatial(k, k') f(t - t')
/// with f = delta (white) or exp(-|t - t'| / tau_c). D_tilde = 16 pi^2 k^2 k'^2 D.
struct DKernel {
    KGrid kgrid;
    std::vector<double> spatial;  // M x M, row-major
    TemporalModel temporal;
    double gamma = 0.0;  // (G / (2 pi^2 hbar))^2
    double mass = 1.0;
    double hbar = 1.0;

    /// D_tilde with the temporal factor; the white delta is returned as its
    /// weight at t = t' and zero elsewhere.
    double tilde(std::size_t n, std::size_t n_prime, double t, double t_prime) const;
    /// D = D_tilde / (16 pi^2 k^2 k'^2)
    double plain(std::size_t n, std::size_t n_prime, double t, double t_prime) const;
};

DKernel build_dkernel(const SimParams& p, const GaussianPacket& packet, const KGrid& kgrid,
                      const TemporalModel& temporal);

/// Energy covariance the k-grid kernel represents on the given radii:
///   gamma hbar^2 sum_nn' w_n w_n' D_tilde_s a_n(r) a_n'(r'),  a = (m/k) j0(k r).
/// Positive semi-definite by construction; the toy ensemble samples it.
std::vector<double> reconstructed_covariance(const DKernel& d, const std::vector<double>& radii);

/// Small position-space system for the master equation: interior points of a
/// radial grid, amplitudes c_i = sqrt(4 pi h) u_i so that sum |c|^2 = 1.
struct ToySystem {
    RadialGrid grid;
    std::vector<double> radii;   // interior
    Eigen::MatrixXd h0;          // spectral kinetic operator
    Eigen::VectorXcd psi0;       // initial free Gaussian, normalised

    static ToySystem gaussian(const SimParams& p, std::size_t n_points = 10, double extent_widths = 6.0);
    std::size_t size() const { return radii.size(); }
    Eigen::MatrixXcd initial_density() const { return psi0 * psi0.adjoint(); }
};

struct MasterConfig {
    double t_final = 10.0;
    double dt = 2e-3;
    std::size_t record_every = 50;
    bool mean_term = true;    // order sqrt(gamma)
    bool memory_term = true;  // order gamma
    double trace_abort = 1e-2;  // abort when |tr rho - 1| exceeds this

    void validate() const;
};

struct MasterSample {
    double t = 0.0;
    double trace_drift = 0.0;       // |tr rho - 1|
    double min_eigenvalue = 0.0;
    double raw_asymmetry = 0.0;     // max |rho - rho^dagger| before symmetrisation, this interval
};

struct MasterResult {
    std::vector<double> radii;
    std::vector<MasterSample> samples;
    std::vector<Eigen::MatrixXcd> rho;  // per sample
    double max_trace_drift = 0.0;
    double max_raw_asymmetry = 0.0;
    double min_eigenvalue = 1.0;
};

/// Integrates
///   d rho/dt = -(i/hbar)[H0, rho] + i sqrt(gamma) int dk (<A^+> A rho - rho A^+ <A>)
///              - gamma int_0^t dt' int dk dk' D_tilde (A(k) A(k', t'-t) rho + rho A^+(k', t'-t) A^+(k))
/// with <A> taken in the freely evolving initial state. The free part is
/// propagated exactly (integrating-factor RK4). The memory integral is done
/// analytically in the eigenbasis of H0; the white limit carries weight 1/2
/// from the delta at the end point.
MasterResult evolve_master(const ToySystem& sys, const DKernel& d, const Eigen::MatrixXcd& rho0,
                           const MasterConfig& cfg);

/// exp(-i H0 t / hbar) rho0 exp(i H0 t / hbar) by dense matrix exponential.
Eigen::MatrixXcd unitary_reference(const ToySystem& sys, const Eigen::MatrixXcd& rho0, double t, double hbar);

/// Mean potential the sqrt(gamma) term applies at time t (energy, per radius).
std::vector<double> mean_term_potential(const ToySystem& sys, const DKernel& d, double t);

struct ToyEnsembleResult {
    std::vector<double> t;
    std::vector<Eigen::MatrixXcd> rho;
    std::vector<Eigen::MatrixXd> stderr_abs;  // standard error of |rho_ab| estimates, batch jackknife
    std::size_t n_trajectories = 0;
};

/// Trajectories of the linear stochastic equation on the toy grid with the
/// same kernel: potential = mean term + noise drawn from
/// `reconstructed_covariance` with the kernel's temporal model. Strang steps
/// with the exact free propagator. Records match `evolve_master` sampling.
ToyEnsembleResult toy_ensemble(const ToySystem& sys, const DKernel& d, const MasterConfig& cfg,
                               std::size_t n_trajectories, std::uint64_t seed, bool with_noise = true,
                               std::size_t n_batches = 20);

void write_master_csv(const std::string& path, const MasterResult& r, const std::string& header);

}  // namespace snlab
