#pragma once

#include <string_view>

#include "snlab/params.hpp"

namespace snlab {

enum class PhaseMethod { quadrature, closed_form, asymptote };

std::string_view to_string(PhaseMethod m);

struct PhaseVarianceResult {
    double dphi2 = 0.0;
    PhaseMethod method = PhaseMethod::asymptote;
    double mass = 0.0, width = 0.0, r1 = 0.0, r2 = 0.0, T = 0.0;
    double error = 0.0;
    bool small_time_ok = true;

    // Split of dphi2 into the square of the mean-potential phase difference
    // and the variance contributed by the noise. Filled by the quadrature
    // only; the other methods leave them NaN.
    double deterministic_part;
    double stochastic_part;

    // Closed form only: the raw erfi would overflow at one of the points and
    // the jointly scaled routine was used.
    bool scaled_erfi_path = false;
};

/// <[phi(r1) - phi(r2)]^2> for the free Gaussian with the full time
/// dependence of the packet, by quadrature:
///   (G^2 m^4/hbar^2) { 3/4 [J(r1) - J(r2)]^2
///                      + 1/4 T int_0^T [Q(r1,r1) + Q(r2,r2) - 2 Q(r1,r2)] dt }
/// J(r) = int_0^T I(r,t) dt with I the single-centre Coulomb integral and Q
/// the two-centre integral. The noise is taken fully correlated across the
/// window, which is what makes the result grow as T^2.
PhaseVarianceResult phase_variance_quadrature(const SimParams& p, double r1, double r2, double T,
                                              double rel_tol = 1e-9);

/// erf/erfi closed form valid for short windows (packet frozen at t = 0),
/// with the cross term of the second group written as a perfect square.
PhaseVarianceResult phase_variance_closed_form(const SimParams& p, double r1, double r2, double T);

/// (G^2 m^4 / hbar^2) T^2 (1/r1 - 1/r2)^2
PhaseVarianceResult phase_variance_asymptote(const SimParams& p, double r1, double r2, double T);

/// Largest T with exp(-x^2) (hbar^2 r1 / (m^2 a^4)) T^2 / (3 a sqrt(pi)) <= eta erf(x),
/// x = r1/a. Returns +inf when the bound exceeds double range.
double small_time_bound(const SimParams& p, double r1, double eta = 0.01);

struct DecoherenceTime {
    double time;          // +inf when r1 == r2
    double delta_energy;  // G m^2 |1/r1 - 1/r2|
    bool infinite;
};

/// Solves the asymptote for dphi2 = criterion_constant.
DecoherenceTime decoherence_time(const SimParams& p, double r1, double r2);

}  // namespace snlab
