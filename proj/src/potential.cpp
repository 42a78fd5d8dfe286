#include "snlab/potential.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "snlab/special.hpp"

namespace snlab {

namespace coulomb {

double single(double beta, double r) {
    const double sb = std::sqrt(beta);
    const double x = sb * r;
    if (x < 1e-4) {
        // erf(x)/x = (2/sqrt(pi)) (1 - x^2/3 + x^4/10 - ...)
        const double x2 = x * x;
        return sb * 2.0 * std::numbers::inv_sqrtpi * (1.0 - x2 / 3.0 + x2 * x2 / 10.0);
    }
    return std::erf(x) / r;
}

double squared(double beta, double r) {
    const double sb = std::sqrt(beta);
    const double x = sb * r;
    if (x < 1e-4) {
        // F(x)/x = 1 - 2x^2/3 + 4x^4/15 - ...
        const double x2 = x * x;
        return 2.0 * beta * (1.0 - 2.0 * x2 / 3.0 + 4.0 * x2 * x2 / 15.0);
    }
    return 2.0 * sb * special::dawson(x) / r;
}

Estimate two_center(double beta, double r1, double r2, double rel_tol) {
    using boost::math::quadrature::gauss_kronrod;
    const double d2 = (r1 - r2) * (r1 - r2);
    double outer_err = 0.0;
    double inner_err_sum = 0.0;
    auto inner = [&](double theta) {
        const double c = std::cos(theta), s = std::sin(theta);
        const double A = r1 * r1 * c * c + r2 * r2 * s * s;
        const double B = c * c * s * s * d2;
        auto f = [&](double y) {
            const double w = 1.0 - y * y;
            double e = beta * w * A;
            if (B > 0.0) {
                if (y == 0.0) return 0.0;
                e += beta * w * w * B / (y * y);
            }
            return std::exp(-e);
        };
        double err = 0.0;
        const double v = gauss_kronrod<double, 31>::integrate(f, 0.0, 1.0, 15, rel_tol, &err);
        inner_err_sum += err;
        return v;
    };
    const double half_pi = 0.5 * std::numbers::pi;
    const double v = gauss_kronrod<double, 31>::integrate(inner, 0.0, half_pi, 15, rel_tol, &outer_err);
    const double pref = 4.0 * beta / std::numbers::pi;
    // The outer routine reports its own estimate; the inner errors are
    // summed over all abscissae, which over-counts but never under-counts.
    const double inner_bound = inner_err_sum * half_pi / 31.0;
    return {pref * v, pref * (std::abs(outer_err) + inner_bound)};
}

}  // namespace coulomb

double mean_potential_gaussian(const SimParams& p, const GaussianPacket& packet, double r) {
    if (r < 0.0) throw std::invalid_argument("mean_potential_gaussian: negative radius");
    return -p.G * p.mass * p.mass * coulomb::single(packet.density_exponent(), r);
}

void mean_potential_grid_into(const SimParams& p, const RadialState& state, std::vector<double>& out) {
    const std::size_t n = state.u.size();
    const double h = state.grid.spacing;
    out.assign(n, 0.0);
    // outer(i) = int_{r_i}^{R} |u|^2 / r dr, accumulated from the far end.
    std::vector<double> outer(n, 0.0);
    auto g = [&](std::size_t i) { return i == 0 ? 0.0 : std::norm(state.u[i]) / state.grid.r(i); };
    for (std::size_t i = n - 1; i-- > 0;) outer[i] = outer[i + 1] + 0.5 * h * (g(i) + g(i + 1));
    const double pref = -4.0 * std::numbers::pi * p.G * p.mass * p.mass;
    double inner = 0.0;
    out[0] = pref * outer[0];
    for (std::size_t i = 1; i < n; ++i) {
        inner += 0.5 * h * (std::norm(state.u[i - 1]) + std::norm(state.u[i]));
        out[i] = pref * (inner / state.grid.r(i) + outer[i]);
    }
}

MeanPotential mean_potential_grid(const SimParams& p, const RadialState& state) {
    if (state.grid.n_points < 16)
        throw std::invalid_argument("mean_potential_grid: grid needs at least 16 points");
    const double norm = state.norm();
    if (std::abs(norm - 1.0) > 1e-6)
        throw std::invalid_argument("mean_potential_grid: state norm " + std::to_string(norm) +
                                    " differs from 1 by more than 1e-6");
    MeanPotential out{{}, PotentialSource::grid_convolution};
    mean_potential_grid_into(p, state, out.values);
    return out;
}

CorrelatorValue stochastic_correlator(const SimParams& p, const GaussianPacket& packet, double r,
                                      double r_prime) {
    if (r < 0.0 || r_prime < 0.0) throw std::invalid_argument("stochastic_correlator: negative radius");
    const double beta = packet.density_exponent();
    double two, two_err;
    if (r == r_prime) {
        two = coulomb::squared(beta, r);
        two_err = 1e-15 * two;
    } else {
        const auto est = coulomb::two_center(beta, r, r_prime);
        two = est.value;
        two_err = est.error;
    }
    const double single_product = coulomb::single(beta, r) * coulomb::single(beta, r_prime);
    const double pref = p.G * p.G * p.mass * p.mass / 8.0;
    return {pref * (2.0 * two - 2.0 * single_product), pref * 2.0 * two_err};
}

CorrelatorValue energy_correlator(const SimParams& p, const GaussianPacket& packet, double r,
                                  double r_prime) {
    auto c = stochastic_correlator(p, packet, r, r_prime);
    const double m2 = p.mass * p.mass;
    return {c.value * m2, c.error * m2};
}

std::vector<double> tabulate_energy_correlator(const SimParams& p, const GaussianPacket& packet,
                                               const std::vector<double>& radii) {
    const std::size_t n = radii.size();
    std::vector<double> k(n * n, 0.0);
    const long long pairs = static_cast<long long>(n * (n + 1) / 2);
#pragma omp parallel for schedule(dynamic)
    for (long long q = 0; q < pairs; ++q) {
        // Unrank q into (i, j) with j <= i.
        std::size_t i = static_cast<std::size_t>((std::sqrt(8.0 * double(q) + 1.0) - 1.0) / 2.0);
        while (i * (i + 1) / 2 > static_cast<std::size_t>(q)) --i;
        while ((i + 1) * (i + 2) / 2 <= static_cast<std::size_t>(q)) ++i;
        const std::size_t j = static_cast<std::size_t>(q) - i * (i + 1) / 2;
        const double v = energy_correlator(p, packet, radii[i], radii[j]).value;
        k[i * n + j] = v;
        k[j * n + i] = v;
    }
    return k;
}

std::vector<double> unit_width_kernel(const std::vector<double>& s) {
    SimParams unit;
    unit.mass = 1.0;
    unit.width = 1.0;
    unit.hbar = 1.0;
    unit.G = 1.0;
    auto k = tabulate_energy_correlator(unit, GaussianPacket::from_params(unit), s);
    for (auto& v : k) v *= 4.0;
    return k;
}

void write_kernel_csv(const std::string& path, const std::vector<double>& radii,
                      const std::vector<double>& kernel, const std::string& header_note) {
    const std::size_t n = radii.size();
    if (kernel.size() != n * n) throw std::invalid_argument("write_kernel_csv: size mismatch");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_kernel_csv: cannot open " + path);
    char buf[64];
    out << "# grid n=" << n;
    if (n > 0) {
        std::snprintf(buf, sizeof buf, " r_min=%.17g r_max=%.17g", radii.front(), radii.back());
        out << buf;
    }
    if (!header_note.empty()) out << ' ' << header_note;
    out << '\n';
    for (std::size_t i = 0; i < n; ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", radii[i]);
        out << (i ? "," : "") << buf;
    }
    out << '\n';
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", kernel[i * n + j]);
            out << (j ? "," : "") << buf;
        }
        out << '\n';
    }
}

}  // namespace snlab
