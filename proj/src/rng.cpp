#include "snlab/rng.hpp"

#include <cmath>
#include <numbers>

namespace snlab {

namespace {

constexpr std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t hash4(std::uint64_t seed, std::uint64_t stream, std::uint64_t step, std::uint64_t index) {
    std::uint64_t h = mix(seed);
    h = mix(h ^ (stream * 0xD6E8FEB86659FD93ULL));
    h = mix(h ^ (step * 0xA0761D6478BD642FULL));
    return mix(h ^ (index * 0xE7037ED1A0B428DBULL));
}

// 53 random bits mapped into the open interval (0, 1).
double to_open_unit(std::uint64_t bits) {
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace

double CounterNormal::uniform(std::uint64_t stream, std::uint64_t step, std::uint64_t index) const {
    return to_open_unit(hash4(seed_, stream, step, index));
}

void CounterNormal::fill(std::uint64_t stream, std::uint64_t step, std::span<double> out) const {
    // Box-Muller on consecutive index pairs.
    for (std::size_t i = 0; i < out.size(); i += 2) {
        const double u1 = uniform(stream, step, i);
        const double u2 = uniform(stream, step, i + 1);
        const double rad = std::sqrt(-2.0 * std::log(u1));
        const double ang = 2.0 * std::numbers::pi * u2;
        out[i] = rad * std::cos(ang);
        if (i + 1 < out.size()) out[i + 1] = rad * std::sin(ang);
    }
}

}  // namespace snlab
