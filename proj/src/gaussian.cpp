#include "snlab/gaussian.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace snlab {

std::complex<double> psi(const GaussianPacket& packet, double r) {
    if (r < 0.0) throw std::invalid_argument("psi: radius must be non-negative");
    const double a2 = packet.width * packet.width;
    const std::complex<double> w = packet.complex_width_factor();
    // (1 + i s)^(-3/2) via the principal log; arg(w) stays in (-pi/2, pi/2).
    const std::complex<double> prefactor = std::exp(-1.5 * std::log(w));
    const double norm = std::pow(std::numbers::pi * a2, -0.75);
    return norm * prefactor * std::exp(-r * r / (2.0 * a2 * w));
}

std::complex<double> psi(const GaussianPacket& packet, const std::array<double, 3>& x) {
    return psi(packet, std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]));
}

double density(const GaussianPacket& packet, double r) {
    const double beta = packet.density_exponent();
    return std::pow(beta / std::numbers::pi, 1.5) * std::exp(-beta * r * r);
}

double peak_radius(const GaussianPacket& packet) {
    if (packet.time < 0.0) throw std::invalid_argument("peak_radius: time must be non-negative");
    const double s = packet.reduced_time();
    return packet.width * std::sqrt(1.0 + s * s);
}

AccelBalance accel_balance(const SimParams& p, double peak, double radius) {
    p.validate();
    if (!(peak > 0.0)) throw std::invalid_argument("accel_balance: peak radius must be positive");
    if (!(radius > 0.0)) throw std::invalid_argument("accel_balance: object radius must be positive");
    return AccelBalance{
        .quantum = p.hbar * p.hbar / (p.mass * p.mass * peak * peak * peak),
        .gravity_point = p.G * p.mass / (peak * peak),
        .gravity_interior = p.G * p.mass * peak / (radius * radius * radius),
    };
}

AccelBalance accel_balance(const SimParams& p, double peak) {
    AccelBalance out = accel_balance(p, peak, peak);
    out.gravity_interior = std::numeric_limits<double>::quiet_NaN();
    return out;
}

}  // namespace snlab
