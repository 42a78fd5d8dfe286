#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "snlab/rng.hpp"

namespace snlab {

enum class TemporalMode { white, exponential_memory };

std::string_view to_string(TemporalMode m);

struct TemporalModel {
    TemporalMode mode = TemporalMode::white;
    /// Correlation time for exponential memory; +inf freezes the field.
    double correlation_time = std::numeric_limits<double>::infinity();
};

/// Gaussian random field on a fixed set of radii with a prescribed spatial
/// covariance, factorised once and sampled through counter-based streams.
class NoiseModel {
public:
    /// `kernel` is row-major n x n. Eigenvalues below -psd_band * lambda_max
    /// are an error; those inside the band are clamped to zero and counted.
    static NoiseModel build(std::vector<double> radii, std::vector<double> kernel,
                            TemporalModel temporal, double dt, std::uint64_t seed,
                            double psd_band = 1e-10);

    std::size_t size() const { return radii_.size(); }
    const std::vector<double>& radii() const { return radii_; }
    const std::vector<double>& kernel() const { return kernel_; }
    const TemporalModel& temporal() const { return temporal_; }
    double dt() const { return dt_; }
    std::uint64_t seed() const { return seed_; }
    std::size_t clamped_eigenvalues() const { return clamped_; }
    std::size_t rank() const { return rank_; }
    double min_eigenvalue() const { return min_eigenvalue_; }
    double max_eigenvalue() const { return max_eigenvalue_; }

    /// Symmetric square root S = V sqrt(Lambda) V^T (row-major), S S^T = C.
    std::vector<double> symmetric_sqrt() const;

    /// max |S S^T - C| / max |C|
    double reconstruction_error() const;

    /// One unit-variance-per-step field value: B z with B B^T = C, z ~ N(0, I)
    /// drawn from stream `trajectory`, counter `step`.
    void draw(std::uint64_t trajectory, std::uint64_t step, std::vector<double>& out) const;

    /// out = B z for a latent vector z of length size(); entries past
    /// sampling_modes() are ignored.
    void apply_basis(const std::vector<double>& z, std::vector<double>& out) const;

    const CounterNormal& generator() const { return rng_; }

    /// Number of retained modes (columns of B). Modes with eigenvalue below
    /// 1e-15 lambda_max carry no weight and are dropped from sampling.
    std::size_t sampling_modes() const { return modes_; }

private:
    std::vector<double> radii_;
    std::vector<double> kernel_;
    std::vector<double> eigenvectors_;  // column-major n x n
    std::vector<double> eigenvalues_;   // ascending, clamped
    std::vector<double> basis_;         // row-major n x modes_, B = V_K sqrt(Lambda_K)
    TemporalModel temporal_;
    double dt_ = 0.0;
    std::uint64_t seed_ = 0;
    std::size_t clamped_ = 0;
    std::size_t rank_ = 0;
    std::size_t modes_ = 0;
    double min_eigenvalue_ = 0.0;
    double max_eigenvalue_ = 0.0;
    CounterNormal rng_{0};
};

/// Sequential generator for one trajectory. The temporal law acts on a latent
/// standard-normal vector z and the field is V = B z, so the spatial factor B
/// can be swapped (kernel refresh) without breaking the time correlation.
///   white:               z_k fresh each step, V = B z_k / sqrt(dt)
///   exponential memory:  z_k = phi z_{k-1} + sqrt(1 - phi^2) xi_k,
///                        phi = exp(-dt / tau_c), z_0 stationary
/// An infinite tau_c keeps z_0 for the whole trajectory.
class NoiseStream {
public:
    NoiseStream(const NoiseModel& model, std::uint64_t trajectory);

    /// Uses a new spatial factor from the next step on. The grid size must match.
    void rebind(const NoiseModel& model);

    /// Advances by `dt` (which may differ from the model's nominal step) and
    /// returns the field held constant over that step.
    const std::vector<double>& next(double dt);
    const std::vector<double>& next() { return next(model_->dt()); }

    std::uint64_t steps_taken() const { return step_; }

private:
    const NoiseModel* model_;
    std::uint64_t trajectory_;
    std::uint64_t step_ = 0;
    std::vector<double> z_;
    std::vector<double> xi_;
    std::vector<double> value_;
};

struct NoiseRealization {
    std::vector<double> radii;
    std::vector<double> values;  // row-major [step][point]
    std::size_t n_steps = 0;
    double dt = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t trajectory = 0;
    TemporalModel temporal;

    double at(std::size_t step, std::size_t point) const { return values[step * radii.size() + point]; }
};

NoiseRealization sample(const NoiseModel& model, std::size_t n_steps, std::uint64_t trajectory = 0);

/// Binary layout shared by noise realizations and state snapshots:
///   magic "SNLB", u32 version, u32 kind (0 real field, 1 complex state),
///   u64 n_points, u64 n_rows, f64 dt, u64 seed, f64 radii[n_points],
///   payload f64 row-major (complex as interleaved re, im).
/// Little-endian host order.
void write_binary(const std::string& path, const NoiseRealization& r);
NoiseRealization read_noise_binary(const std::string& path);

void write_csv(const std::string& path, const NoiseRealization& r);

}  // namespace snlab
