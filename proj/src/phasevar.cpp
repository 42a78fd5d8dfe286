#include "snlab/phasevar.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "snlab/gaussian.hpp"
#include "snlab/potential.hpp"
#include "snlab/special.hpp"

namespace snlab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

PhaseVarianceResult base_result(const SimParams& p, double r1, double r2, double T, PhaseMethod m) {
    PhaseVarianceResult r;
    r.method = m;
    r.mass = p.mass;
    r.width = p.width;
    r.r1 = r1;
    r.r2 = r2;
    r.T = T;
    r.deterministic_part = kNaN;
    r.stochastic_part = kNaN;
    return r;
}

double coupling(const SimParams& p) {
    const double gm2 = p.G * p.mass * p.mass;
    return gm2 * gm2 / (p.hbar * p.hbar);
}

bool window_is_short(const SimParams& p, double r1, double r2, double T) {
    return T <= small_time_bound(p, r1) && T <= small_time_bound(p, r2);
}

}  // namespace

std::string_view to_string(PhaseMethod m) {
    switch (m) {
        case PhaseMethod::quadrature: return "quadrature";
        case PhaseMethod::closed_form: return "closed_form";
        case PhaseMethod::asymptote: return "asymptote";
    }
    return "unknown";
}

PhaseVarianceResult phase_variance_quadrature(const SimParams& p, double r1, double r2, double T,
                                              double rel_tol) {
    p.validate();
    if (!(r1 > 0.0) || !(r2 > 0.0))
        throw std::invalid_argument("phase_variance_quadrature: radii must be positive");
    if (!(T >= 0.0)) throw std::invalid_argument("phase_variance_quadrature: T must be non-negative");
    auto out = base_result(p, r1, r2, T, PhaseMethod::quadrature);
    out.small_time_ok = window_is_short(p, r1, r2, T);
    if (T == 0.0 || r1 == r2) {
        out.deterministic_part = 0.0;
        out.stochastic_part = 0.0;
        return out;
    }
    using boost::math::quadrature::gauss_kronrod;
    auto beta_at = [&](double t) { return GaussianPacket::from_params(p, t).density_exponent(); };

    double j_err = 0.0;
    const double dJ = gauss_kronrod<double, 31>::integrate(
        [&](double t) {
            const double b = beta_at(t);
            return coulomb::single(b, r1) - coulomb::single(b, r2);
        },
        0.0, T, 12, rel_tol, &j_err);

    double q_inner_err = 0.0;
    double q_err = 0.0;
    const double qsum = gauss_kronrod<double, 15>::integrate(
        [&](double t) {
            const double b = beta_at(t);
            const auto cross = coulomb::two_center(b, r1, r2, rel_tol * 0.1);
            q_inner_err = std::max(q_inner_err, cross.error);
            return coulomb::squared(b, r1) + coulomb::squared(b, r2) - 2.0 * cross.value;
        },
        0.0, T, 10, rel_tol, &q_err);

    const double P = coupling(p);
    out.deterministic_part = P * dJ * dJ;
    out.stochastic_part = 0.25 * P * (T * qsum - dJ * dJ);
    out.dphi2 = P * (0.75 * dJ * dJ + 0.25 * T * qsum);
    out.error = P * (1.5 * std::abs(dJ) * j_err + 0.25 * T * (q_err + 2.0 * q_inner_err * T));
    return out;
}

PhaseVarianceResult phase_variance_closed_form(const SimParams& p, double r1, double r2, double T) {
    p.validate();
    if (!(r1 > 0.0) || !(r2 > 0.0))
        throw std::invalid_argument("phase_variance_closed_form: radii must be positive");
    auto out = base_result(p, r1, r2, T, PhaseMethod::closed_form);
    out.small_time_ok = window_is_short(p, r1, r2, T);
    const double a = p.width;
    const double x1 = r1 / a, x2 = r2 / a;
    out.scaled_erfi_path = special::erfi_overflows(x1) || special::erfi_overflows(x2);
    if (r1 == r2) return out;

    const double e1 = std::erf(x1), e2 = std::erf(x2);
    // exp(-x^2) erfi(x), never erfi alone.
    const double s1 = special::erfi_scaled(x1), s2 = special::erfi_scaled(x2);
    const double sqpi = std::sqrt(std::numbers::pi);

    const double mean_group = e1 * e1 / (r1 * r1) + e2 * e2 / (r2 * r2) - 2.0 * e1 * e2 / (r1 * r2);
    const double noise_group = sqpi / (r1 * a) * s1 + sqpi / (r2 * a) * s2 -
                               2.0 * sqpi / (a * std::sqrt(r1 * r2)) * std::sqrt(s1 * s2);
    const double P = coupling(p);
    out.dphi2 = 0.75 * P * T * T * mean_group + 0.25 * P * T * T * noise_group;
    // Both groups are differences of nearby positive numbers; report the
    // cancellation-limited rounding level.
    const double scale = 0.75 * P * T * T * (e1 * e1 / (r1 * r1) + e2 * e2 / (r2 * r2)) +
                         0.25 * P * T * T * (sqpi / (r1 * a) * s1 + sqpi / (r2 * a) * s2);
    out.error = 8.0 * std::numeric_limits<double>::epsilon() * scale;
    return out;
}

PhaseVarianceResult phase_variance_asymptote(const SimParams& p, double r1, double r2, double T) {
    p.validate();
    if (!(r1 > 0.0) || !(r2 > 0.0))
        throw std::invalid_argument("phase_variance_asymptote: radii must be positive");
    auto out = base_result(p, r1, r2, T, PhaseMethod::asymptote);
    out.small_time_ok = window_is_short(p, r1, r2, T);
    const double d = 1.0 / r1 - 1.0 / r2;
    out.dphi2 = coupling(p) * T * T * d * d;
    return out;
}

double small_time_bound(const SimParams& p, double r1, double eta) {
    p.validate();
    if (!(r1 > 0.0)) throw std::invalid_argument("small_time_bound: r1 must be positive");
    const double a = p.width;
    const double x = r1 / a;
    const double coef = p.hbar * p.hbar * r1 / (p.mass * p.mass * a * a * a * a) /
                        (3.0 * a * std::sqrt(std::numbers::pi));
    // T^2 <= eta erf(x) exp(x^2) / coef; take the root with exp(x^2/2) outside.
    const double half_exp = std::exp(0.5 * x * x);
    if (!std::isfinite(half_exp)) return std::numeric_limits<double>::infinity();
    return std::sqrt(eta * std::erf(x) / coef) * half_exp;
}

DecoherenceTime decoherence_time(const SimParams& p, double r1, double r2) {
    p.validate();
    if (!(r1 > 0.0) || !(r2 > 0.0))
        throw std::invalid_argument("decoherence_time: radii must be positive");
    const double dE = p.G * p.mass * p.mass * std::abs(1.0 / r1 - 1.0 / r2);
    if (dE == 0.0) return {std::numeric_limits<double>::infinity(), 0.0, true};
    return {std::sqrt(p.criterion_constant) * p.hbar / dE, dE, false};
}

}  // namespace snlab
