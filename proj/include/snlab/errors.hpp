#pragma once

#include <stdexcept>

namespace snlab {

/// A run that started from a valid configuration but broke a numerical
/// invariant (norm drift, stability bound, too many failed trajectories).
/// Configuration problems throw std::invalid_argument instead.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace snlab
