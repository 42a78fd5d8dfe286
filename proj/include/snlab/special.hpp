#pragma once

namespace snlab::special {

/// Dawson integral F(x) = exp(-x^2) * int_0^x exp(t^2) dt.
///
/// Positive-term power series of erfi for |x| <= 6, asymptotic series with
/// optimal truncation beyond. Never forms erfi(x) itself, so it is finite for
/// every finite x.
double dawson(double x);

/// exp(-x^2) * erfi(x) evaluated jointly; equals 2 F(x) / sqrt(pi).
double erfi_scaled(double x);

/// Raw erfi(x). Overflows to +/-inf for |x| above ~26.6; callers on the
/// Appendix-style formulas use `erfi_scaled` instead.
double erfi(double x);

/// True when the raw erfi(x) would not be representable as a finite double.
bool erfi_overflows(double x);

/// sqrt(pi) * x * exp(-x^2) * erfi(x) + 3 erf(x)^2, the per-point bracket of
/// the far-field phase-variance limit. Tends to 4 from above as x -> inf.
double far_field_bracket(double x);

}  // namespace snlab::special
