#pragma once

#include <complex>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "snlab/gaussian.hpp"

namespace snlab {

using cdouble = std::complex<double>;

/// Uniform radial grid r_i = i h, i = 0..n-1. Both end points carry u = 0.
struct RadialGrid {
    std::size_t n_points = 0;
    double spacing = 0.0;

    static RadialGrid with_extent(double r_max, std::size_t n_points);

    double r(std::size_t i) const { return spacing * static_cast<double>(i); }
    double extent() const { return spacing * static_cast<double>(n_points - 1); }
    std::size_t interior() const { return n_points - 2; }
    std::size_t nearest_index(double radius) const;
    std::vector<double> radii() const;
};

/// Reduced radial wavefunction u_i = r_i psi(r_i).
struct RadialState {
    RadialGrid grid;
    std::vector<cdouble> u;
    double time = 0.0;

    static RadialState from_function(const RadialGrid& grid,
                                     const std::function<cdouble(double)>& psi_of_r,
                                     double t = 0.0);
    static RadialState gaussian(const RadialGrid& grid, const GaussianPacket& packet);

    /// 4 pi h sum |u_i|^2 (trapezoid with zero end values).
    double norm() const;
    void normalize();

    /// psi(r_i) = u_i / r_i; the origin value is extrapolated linearly from u_1/r_1.
    cdouble psi_at(std::size_t i) const;

    /// |psi|^2 at each grid point.
    std::vector<double> density() const;

    /// Peak of the radial probability density 4 pi r^2 |psi|^2 = 4 pi |u|^2,
    /// refined from the grid maximum by a local quartic fit.
    double peak_radius() const;

    /// sqrt(<r^2>)
    double rms_radius() const;
};

/// Exact propagator of -hbar^2/(2m) d^2/dr^2 on the sine basis of the grid
/// (Dirichlet at r = 0 and r = R). Owns its FFTW plan; not copyable.
class KineticPropagator {
public:
    KineticPropagator(const RadialGrid& grid, double mass, double hbar);
    ~KineticPropagator();
    KineticPropagator(const KineticPropagator&) = delete;
    KineticPropagator& operator=(const KineticPropagator&) = delete;

    /// u <- exp(-i T dt / hbar) u
    void apply(std::span<cdouble> u, double dt);

    /// 4 pi <u| -hbar^2/(2m) d^2/dr^2 |u> with the same spectral operator.
    double kinetic_energy(std::span<const cdouble> u);

    /// Dense matrix of the spectral kinetic operator on the interior points,
    /// row-major, size interior()^2. Used by the master-equation integrator.
    std::vector<double> dense_operator() const;

    /// Sine-series interpolant of u evaluated at arbitrary radii in [0, R].
    void evaluate(std::span<const cdouble> u, std::span<const double> radii, std::span<cdouble> out);

    /// Largest representable kinetic energy hbar^2 k_max^2 / (2m).
    double max_energy() const;

    const RadialGrid& grid() const { return grid_; }

private:
    void forward(std::span<const cdouble> u);
    void backward(std::span<cdouble> u);

    RadialGrid grid_;
    double mass_;
    double hbar_;
    std::size_t n_;  // interior points
    std::vector<double> wavenumber_sq_;
    double* buffer_ = nullptr;
    void* plan_ = nullptr;
};

}  // namespace snlab
