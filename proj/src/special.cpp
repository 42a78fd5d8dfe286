#include "snlab/special.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace snlab::special {

namespace {

constexpr double kSeriesLimit = 6.0;

// sum_{n>=0} x^(2n+1) / (n! (2n+1)); all terms positive for x > 0.
double erfi_series_sum(double x) {
    const double x2 = x * x;
    double term = x;  // x^(2n+1)/n!
    double sum = x;
    for (int n = 1; n < 400; ++n) {
        term *= x2 / n;
        const double add = term / (2 * n + 1);
        sum += add;
        if (add < sum * 1e-17) break;
    }
    return sum;
}

// F(x) ~ 1/(2x) sum_k (2k-1)!! / (2x^2)^k, truncated at the smallest term.
double dawson_asymptotic(double x) {
    const double inv = 1.0 / (2.0 * x * x);
    double term = 1.0;
    double sum = 1.0;
    for (int k = 1; k < 200; ++k) {
        const double next = term * (2 * k - 1) * inv;
        if (next >= term) break;
        term = next;
        sum += term;
        if (term < sum * 1e-17) break;
    }
    return sum / (2.0 * x);
}

}  // namespace

double dawson(double x) {
    if (x < 0.0) return -dawson(-x);
    if (x == 0.0) return 0.0;
    if (x <= kSeriesLimit) return std::exp(-x * x) * erfi_series_sum(x);
    return dawson_asymptotic(x);
}

double erfi_scaled(double x) {
    return 2.0 * std::numbers::inv_sqrtpi * dawson(x);
}

bool erfi_overflows(double x) {
    // erfi(x) ~ exp(x^2) / (x sqrt(pi)) for large x.
    const double ax = std::abs(x);
    if (ax < 20.0) return false;
    const double log_erfi = ax * ax - std::log(ax * std::sqrt(std::numbers::pi));
    return log_erfi > std::log(std::numeric_limits<double>::max());
}

double erfi(double x) {
    if (erfi_overflows(x)) return std::copysign(std::numeric_limits<double>::infinity(), x);
    if (std::abs(x) <= kSeriesLimit)
        return 2.0 * std::numbers::inv_sqrtpi * std::copysign(erfi_series_sum(std::abs(x)), x);
    return erfi_scaled(x) * std::exp(x * x);
}

double far_field_bracket(double x) {
    const double e = std::erf(x);
    return std::sqrt(std::numbers::pi) * x * erfi_scaled(x) + 3.0 * e * e;
}

}  // namespace snlab::special
