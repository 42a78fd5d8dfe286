#include <doctest.h>

#include <cmath>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "snlab/special.hpp"

using namespace snlab;

TEST_SUITE("special") {

TEST_CASE("Dawson integral against 40-digit references") {
    const std::pair<double, double> ref[] = {{0.5, 0.42443638350202229593}, {1.0, 0.53807950691276841914},
                                             {2.0, 0.30134038892379196603}, {5.0, 0.10213407442427683544},
                                             {10.0, 0.05025384718759852803}, {30.0, 0.01667594140105917580}};
    for (auto [x, f] : ref) {
        CHECK(special::dawson(x) == doctest::Approx(f).epsilon(1e-13));
        CHECK(special::dawson(-x) == doctest::Approx(-f).epsilon(1e-13));
    }
}

TEST_CASE("Dawson integral against direct quadrature") {
    using boost::math::quadrature::gauss_kronrod;
    for (double x : {0.1, 0.7, 1.5, 3.0, 4.5, 6.0, 6.5, 8.0}) {
        const double q = gauss_kronrod<double, 61>::integrate(
            [x](double t) { return std::exp((t - x) * (t + x)); }, 0.0, x, 15, 1e-14);
        CHECK(special::dawson(x) == doctest::Approx(q).epsilon(1e-12));
    }
}

TEST_CASE("scaled erfi is finite where erfi overflows") {
    CHECK(special::erfi_overflows(30.0));
    CHECK_FALSE(special::erfi_overflows(5.0));
    CHECK(std::isfinite(special::erfi_scaled(30.0)));
    const double x = 3.0;
    CHECK(special::erfi_scaled(x) == doctest::Approx(std::exp(-x * x) * special::erfi(x)).epsilon(1e-13));
    CHECK(special::erfi_scaled(x) == doctest::Approx(2.0 * special::dawson(x) / std::sqrt(std::numbers::pi)));
}

TEST_CASE("far-field bracket approaches 4 from above") {
    // 40-digit reference at x = 8: 4.008003179320854207
    CHECK(special::far_field_bracket(8.0) == doctest::Approx(4.008003179320854207).epsilon(1e-12));
    CHECK(std::abs(special::far_field_bracket(8.0) - 4.0) / 4.0 < 0.01);
    double prev = special::far_field_bracket(6.0);
    for (double x : {8.0, 12.0, 20.0, 50.0, 200.0}) {
        const double b = special::far_field_bracket(x);
        CHECK(b > 4.0);
        CHECK(b < prev);
        prev = b;
    }
}

}
