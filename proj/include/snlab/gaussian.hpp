#pragma once

#include <array>
#include <complex>

#include "snlab/params.hpp"

namespace snlab {

/// Free spherically symmetric Gaussian packet of initial width `width`.
struct GaussianPacket {
    double width;
    double mass;
    double time = 0.0;
    double hbar = 1.0;

    static GaussianPacket from_params(const SimParams& p, double t = 0.0) {
        return {p.width, p.mass, t, p.hbar};
    }

    /// hbar t / (m a^2)
    double reduced_time() const { return hbar * time / (mass * width * width); }

    /// alpha(t) = 1 / (1 + hbar^2 t^2 / (m^2 a^4)), in (0, 1].
    double spread_factor() const {
        const double s = reduced_time();
        return 1.0 / (1.0 + s * s);
    }

    /// 1 + i hbar t / (m a^2)
    std::complex<double> complex_width_factor() const { return {1.0, reduced_time()}; }

    /// Exponent of the density: |psi|^2 ~ exp(-beta r^2), beta = alpha / a^2.
    double density_exponent() const { return spread_factor() / (width * width); }
};

std::complex<double> psi(const GaussianPacket& packet, double r);

/// Cartesian wrapper used by tests; delegates to the radial form.
std::complex<double> psi(const GaussianPacket& packet, const std::array<double, 3>& x);

/// |psi(r,t)|^2, evaluated from the real density formula.
double density(const GaussianPacket& packet, double r);

/// a sqrt(1 + hbar^2 t^2 / (m^2 a^4)); argmax of 4 pi r^2 |psi|^2.
double peak_radius(const GaussianPacket& packet);

struct AccelBalance {
    double quantum;         // hbar^2 / (m^2 r_p^3)
    double gravity_point;   // G m / r_p^2
    double gravity_interior;  // G m r_p / R^3
};

/// `radius` is the size R of the extended object for the interior case.
AccelBalance accel_balance(const SimParams& p, double peak, double radius);
AccelBalance accel_balance(const SimParams& p, double peak);

}  // namespace snlab
