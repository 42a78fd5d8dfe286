#pragma once

#include <string>
#include <vector>

#include "snlab/gaussian.hpp"
#include "snlab/params.hpp"
#include "snlab/radial.hpp"

namespace snlab {

/// Integrals of a Gaussian density rho(x) = (beta/pi)^(3/2) exp(-beta x^2)
/// against Coulomb-type kernels. Points r1, r2 lie on a common ray from the
/// packet centre; all radial pairs in this library use that geometry.
namespace coulomb {

/// int rho(x) / |x - r| d^3x = erf(sqrt(beta) r) / r
double single(double beta, double r);

/// int rho(x) / |x - r|^2 d^3x = 2 sqrt(beta) F(sqrt(beta) r) / r, F = Dawson
double squared(double beta, double r);

struct Estimate {
    double value;
    double error;
};

/// int rho(x) / (|x - r1| |x - r2|) d^3x.
///
/// Writing each 1/|y| as (2/sqrt(pi)) int exp(-u^2 y^2) du makes the spatial
/// integral Gaussian; after polar and w = 1 - y^2 substitutions what remains is
///   (4 beta / pi) int_0^{pi/2} dtheta int_0^1 dy
///       exp(-beta (1-y^2) A - beta (1-y^2)^2 B / y^2),
///   A = r1^2 cos^2 + r2^2 sin^2,  B = cos^2 sin^2 (r1 - r2)^2,
/// which is bounded and smooth on a finite box: both Coulomb singularities are
/// gone. Integrated by nested adaptive Gauss-Kronrod.
Estimate two_center(double beta, double r1, double r2, double rel_tol = 1e-10);

}  // namespace coulomb

/// -G m^2 erf(sqrt(alpha) r / a) / r, with the series limit near r = 0.
double mean_potential_gaussian(const SimParams& p, const GaussianPacket& packet, double r);

enum class PotentialSource { analytic_gaussian, grid_convolution };

struct MeanPotential {
    std::vector<double> values;  // V(r_i), energy
    PotentialSource source;
};

/// Shell-theorem potential of the state's own density via cumulative
/// trapezoid sums:
///   V(r) = -4 pi G m^2 [ (1/r) int_0^r |u|^2 dr' + int_r^R |u|^2 / r' dr' ].
/// Throws if the state is not normalised to 1e-6 or the grid has < 16 points.
MeanPotential mean_potential_grid(const SimParams& p, const RadialState& state);

/// Same sums without the normalisation precondition; used inside the stepper
/// where the norm is monitored separately.
void mean_potential_grid_into(const SimParams& p, const RadialState& state,
                              std::vector<double>& out);

struct CorrelatorValue {
    double value;
    double error;
};

/// Equal-time two-point function of the stochastic potential (per unit mass)
/// for the free packet:
///   (G^2 m^2 / 8) [ 2 int |psi|^2 / (|x-r||x-r'|) - 2 I(r) I(r') ],
///   I(r) = int |psi|^2 / |x - r|.
CorrelatorValue stochastic_correlator(const SimParams& p, const GaussianPacket& packet,
                                      double r, double r_prime);

/// Covariance of the potential-energy noise m V_st, i.e. m^2 times the above.
CorrelatorValue energy_correlator(const SimParams& p, const GaussianPacket& packet,
                                  double r, double r_prime);

/// Dense symmetric matrix of `energy_correlator` over `radii`, row-major.
/// The (i, j) evaluations are independent and run in parallel.
std::vector<double> tabulate_energy_correlator(const SimParams& p, const GaussianPacket& packet,
                                               const std::vector<double>& radii);

/// Covariance of 1/|x - s| under the unit-width density exp(-x^2) / pi^(3/2):
///   K(s, s') = int rho / (|x-s||x-s'|) - I(s) I(s').
/// For a packet with density exponent beta the energy covariance is
///   (G^2 m^4 / 4) beta K(sqrt(beta) r, sqrt(beta) r'),
/// so one table serves every mass and every time.
std::vector<double> unit_width_kernel(const std::vector<double>& s);

/// Writes a row-major kernel with a one-line grid header.
void write_kernel_csv(const std::string& path, const std::vector<double>& radii,
                      const std::vector<double>& kernel, const std::string& header_note = {});

}  // namespace snlab
