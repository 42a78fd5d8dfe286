#pragma once

#include <cstdint>
#include <span>

namespace snlab {

/// Counter-based normal generator: the value at (seed, stream, step, index) is
/// a pure function of those four integers, so trajectories can be generated
/// in any order or on any thread and still reproduce bit for bit.
class CounterNormal {
public:
    explicit CounterNormal(std::uint64_t seed) : seed_(seed) {}

    /// Fills `out` with i.i.d. N(0,1) values for the given (stream, step).
    void fill(std::uint64_t stream, std::uint64_t step, std::span<double> out) const;

    /// Uniform in (0, 1) for the given counter tuple.
    double uniform(std::uint64_t stream, std::uint64_t step, std::uint64_t index) const;

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
};

}  // namespace snlab
