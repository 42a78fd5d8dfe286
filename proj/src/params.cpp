#include "snlab/params.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace snlab {

namespace {

void require_positive(double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v))
        throw std::invalid_argument(std::string("parameter '") + name +
                                    "' must be positive and finite");
}

double* field_for(SimParams& p, std::string_view key) {
    if (key == "mass") return &p.mass;
    if (key == "width") return &p.width;
    if (key == "hbar") return &p.hbar;
    if (key == "G") return &p.G;
    if (key == "c") return &p.c;
    if (key == "criterion_constant") return &p.criterion_constant;
    if (key == "regime_ratio") return &p.regime_ratio;
    return nullptr;
}

}  // namespace

void SimParams::validate() const {
    require_positive(mass, "mass");
    require_positive(width, "width");
    require_positive(hbar, "hbar");
    require_positive(G, "G");
    require_positive(c, "c");
    require_positive(criterion_constant, "criterion_constant");
    if (!(regime_ratio >= 1.0))
        throw std::invalid_argument("parameter 'regime_ratio' must be >= 1");
}

DerivedScales derive_scales(const SimParams& p) {
    p.validate();
    const double m3 = p.mass * p.mass * p.mass;
    return DerivedScales{
        .critical_length = p.hbar * p.hbar / (p.G * m3),
        .threshold_mass = std::cbrt(p.hbar * p.hbar / (p.G * p.width)),
        .tau_spread = p.mass * p.width * p.width / p.hbar,
        .decoherence_energy = p.G * p.mass * p.mass / p.width,
    };
}

std::string_view to_string(Regime r) {
    switch (r) {
        case Regime::micro: return "micro";
        case Regime::macro: return "macro";
        case Regime::transition: return "transition";
    }
    return "unknown";
}

Regime classify_regime(const SimParams& p, double radius) {
    p.validate();
    require_positive(radius, "radius");
    const double lhs = p.mass * p.mass * p.mass * radius;
    const double rhs = p.hbar * p.hbar / p.G;
    if (lhs * p.regime_ratio < rhs) return Regime::micro;
    if (lhs > p.regime_ratio * rhs) return Regime::macro;
    return Regime::transition;
}

CriticalLength critical_length_extended(const SimParams& p, double radius) {
    const Regime regime = classify_regime(p, radius);
    const double point = derive_scales(p).critical_length;
    const double interior = std::pow(point, 0.25) * std::pow(radius, 0.75);
    CriticalLength out{point, regime, false, point, interior};
    switch (regime) {
        case Regime::micro: out.value = point; break;
        case Regime::macro: out.value = interior; break;
        case Regime::transition:
            out.value = std::sqrt(point * interior);
            out.transition_flag = true;
            break;
    }
    return out;
}

SimParams params_from_map(const std::map<std::string, double>& values) {
    SimParams p;
    for (const auto& [key, v] : values) {
        double* f = field_for(p, key);
        if (!f) throw std::invalid_argument("unknown config key '" + key + "'");
        *f = v;
    }
    p.validate();
    return p;
}

std::map<std::string, double> params_to_map(const SimParams& p) {
    return {{"mass", p.mass},
            {"width", p.width},
            {"hbar", p.hbar},
            {"G", p.G},
            {"c", p.c},
            {"criterion_constant", p.criterion_constant},
            {"regime_ratio", p.regime_ratio}};
}

SimParams load_params(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument("config '" + path + "': " + e.what());
    }
    std::map<std::string, double> values;
    const auto& section = j.contains("params") ? j.at("params") : j;
    for (const auto& [key, v] : section.items()) {
        SimParams probe;
        if (!field_for(probe, key)) continue;  // other sections
        if (!v.is_number()) throw std::invalid_argument("config key '" + key + "' must be a number");
        values[key] = v.get<double>();
    }
    return params_from_map(values);
}

void apply_override(SimParams& p, std::string_view kv) {
    const auto eq = kv.find('=');
    if (eq == std::string_view::npos)
        throw std::invalid_argument("override '" + std::string(kv) + "' is not key=value");
    const std::string key(kv.substr(0, eq));
    const std::string value(kv.substr(eq + 1));
    double* f = field_for(p, key);
    if (!f) throw std::invalid_argument("unknown parameter key '" + key + "'");
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(value, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != value.size())
        throw std::invalid_argument("override '" + key + "' has non-numeric value '" + value + "'");
    *f = v;
    p.validate();
}

}  // namespace snlab
