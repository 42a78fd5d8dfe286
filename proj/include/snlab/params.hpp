#pragma once

#include <map>
#include <string>
#include <string_view>

namespace snlab {

/// Physical parameters in simulation units (default hbar = G = 1).
///
/// SI conversion factors live in `SiUnits` and are used for display only;
/// nothing inside the numerics reads them.
struct SimParams {
    double mass = 1.0;
    double width = 1.0;
    double hbar = 1.0;
    double G = 1.0;
    double c = 1.0;
    double criterion_constant = 9.869604401089358;  // pi^2
    double regime_ratio = 10.0;

    /// Throws std::invalid_argument naming the first offending field.
    void validate() const;
};

struct DerivedScales {
    double critical_length;        // hbar^2 / (G m^3)
    double threshold_mass;         // (hbar^2 / (G a))^(1/3)
    double tau_spread;             // m a^2 / hbar
    double decoherence_energy;     // G m^2 / a
};

DerivedScales derive_scales(const SimParams& p);

enum class Regime { micro, transition, macro };

std::string_view to_string(Regime r);

/// micro iff m^3 R < (hbar^2/G) / ratio, macro iff m^3 R > ratio * hbar^2/G.
Regime classify_regime(const SimParams& p, double radius);

struct CriticalLength {
    double value;
    Regime regime;
    bool transition_flag;
    // Both candidates are filled in every regime; `value` picks one of them,
    // or their geometric mean inside the transition band.
    double point_candidate;
    double interior_candidate;
};

CriticalLength critical_length_extended(const SimParams& p, double radius);

/// Conversion factors from simulation units to SI, for display.
struct SiUnits {
    double length = 1.0;   // metres per simulation length unit
    double mass = 1.0;     // kilograms per simulation mass unit
    double time = 1.0;     // seconds per simulation time unit
};

/// Overrides are `key=value` strings using the config-file key names.
SimParams load_params(const std::string& path);
SimParams params_from_map(const std::map<std::string, double>& values);
void apply_override(SimParams& p, std::string_view key_eq_value);
std::map<std::string, double> params_to_map(const SimParams& p);

}  // namespace snlab
