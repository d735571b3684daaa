#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "volcal/numerics.hpp"

using namespace volcal;

TEST_CASE("normal cdf and pdf basics", "[numerics]") {
    CHECK(norm_cdf(0.0) == Catch::Approx(0.5).margin(1e-16));
    CHECK(norm_cdf(1.96) == Catch::Approx(0.9750021048517795).epsilon(1e-14));
    CHECK(norm_cdf(-1.96) ==
          Catch::Approx(1.0 - 0.9750021048517795).epsilon(1e-12));
    CHECK(norm_pdf(0.0) == Catch::Approx(0.3989422804014327).epsilon(1e-15));
    // symmetry
    for (double x : {0.3, 1.7, 4.0})
        CHECK(norm_cdf(x) + norm_cdf(-x) == Catch::Approx(1.0).margin(1e-15));
}

TEST_CASE("log_erfc_pos matches log(erfc) while erfc is representable",
          "[numerics]") {
    for (double x : {0.0, 0.5, 1.0, 3.0, 8.0, 15.0, 24.0}) {
        const double direct = std::log(std::erfc(x));
        CHECK(log_erfc_pos(x) == Catch::Approx(direct).epsilon(1e-13));
    }
    // Far tail: continuous, decreasing, and close to the leading-order
    // asymptote log( exp(-x^2) / (x sqrt(pi)) ).
    for (double x : {30.0, 60.0, 200.0}) {
        const double asym = -x * x - std::log(x) - kLogSqrtPi;
        CHECK(log_erfc_pos(x) < log_erfc_pos(x - 1.0));
        CHECK(log_erfc_pos(x) == Catch::Approx(asym).epsilon(1e-4));
    }
}

TEST_CASE("log1mexp agrees with naive evaluation", "[numerics]") {
    for (double a : {1e-10, 1e-3, 0.5, 1.0, 5.0, 40.0}) {
        // Reference in extended precision; once exp(-a) is tiny the series
        // log(1-x) = -x - x^2/2 - ... is exact to double precision, while
        // the expm1 route would lose the digits parked a few ulps below 1.
        const long double al = a;
        const long double x = std::exp(-al);
        const double naive = static_cast<double>(
            (x < 1e-8L) ? -x * (1.0L + 0.5L * x) : std::log(-std::expm1(-al)));
        CHECK(log1mexp(-a) == Catch::Approx(naive).epsilon(1e-13));
    }
}

TEST_CASE("log_phi_diff matches direct Gaussian band mass", "[numerics]") {
    const double inf = std::numeric_limits<double>::infinity();
    // moderate bands: direct subtraction is accurate
    struct Band {
        double a, b;
    };
    for (auto [a, b] : {Band{-1.0, 1.0}, Band{0.0, 0.5}, Band{-3.0, -2.0},
                        Band{2.0, 2.1}}) {
        const double direct = std::log(norm_cdf(b) - norm_cdf(a));
        CHECK(log_phi_diff(a, b) == Catch::Approx(direct).epsilon(1e-12));
    }
    // far tail band via complementary error function
    {
        const double a = 8.0, b = 9.0;
        const double direct =
            std::log(0.5 * (std::erfc(a * kInvSqrt2) - std::erfc(b * kInvSqrt2)));
        CHECK(log_phi_diff(a, b) == Catch::Approx(direct).epsilon(1e-12));
    }
    // half-infinite bands
    CHECK(log_phi_diff(-inf, 0.0) == Catch::Approx(std::log(0.5)).epsilon(1e-14));
    CHECK(log_phi_diff(0.0, inf) == Catch::Approx(std::log(0.5)).epsilon(1e-14));
    CHECK(log_phi_diff(5.0, inf) ==
          Catch::Approx(std::log(0.5 * std::erfc(5.0 * kInvSqrt2)))
              .epsilon(1e-12));
    // deep one-sided band consistent with log_erfc_pos
    CHECK(log_phi_diff(30.0, inf) ==
          Catch::Approx(std::log(0.5) + log_erfc_pos(30.0 * kInvSqrt2))
              .epsilon(1e-12));
    CHECK(log_phi_diff(-inf, inf) == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("ScaledReal survives magnitudes far beyond double range",
          "[numerics]") {
    const auto a = ScaledReal::from_log(5000.0);
    const auto b = ScaledReal::from_log(-5000.0);
    CHECK((a * b).to_double() == Catch::Approx(1.0).epsilon(1e-12));
    CHECK(a.ratio_to(a) == Catch::Approx(1.0).epsilon(1e-14));
    CHECK((a / b).log_abs() == Catch::Approx(10000.0).epsilon(1e-12));

    const auto neg = ScaledReal::from_log(3.0, -1);
    CHECK(neg.sign() < 0);
    CHECK((neg * neg).sign() > 0);
    CHECK(ScaledReal::zero().is_zero());
    CHECK((a * ScaledReal::zero()).is_zero());
}

TEST_CASE("ScaledSum accumulates across wildly different scales",
          "[numerics]") {
    ScaledSum s;
    s.add(1.0, 1000.0);
    s.add(1.0, 990.0);
    const auto t = s.total();
    CHECK(t.log_abs() ==
          Catch::Approx(1000.0 + std::log1p(std::exp(-10.0))).epsilon(1e-14));

    ScaledSum c;  // exact cancellation
    c.add(1.0, 500.0);
    c.add(-1.0, 500.0);
    CHECK(c.total().is_zero());

    ScaledSum m;  // ordinary numbers round-trip
    m.add(0.25, 0.0);
    m.add(0.5, 0.0);
    CHECK(m.total().to_double() == Catch::Approx(0.75).epsilon(1e-15));
}

TEST_CASE("golden_section_min locates a smooth interior minimum",
          "[numerics]") {
    auto f = [](double x) { return (x - 2.3) * (x - 2.3) + 1.0; };
    const auto r = golden_section_min(f, 0.0, 5.0, 1e-12);
    CHECK(r.x == Catch::Approx(2.3).margin(1e-7));
    CHECK(r.value == Catch::Approx(1.0).margin(1e-13));
}

TEST_CASE("nelder_mead_min solves a 2d quadratic", "[numerics]") {
    auto f = [](const std::vector<double>& x) {
        const double u = x[0] - 1.0, v = x[1] + 2.0;
        return u * u + 10.0 * v * v;
    };
    const auto r = nelder_mead_min(f, {0.0, 0.0}, {0.5, 0.5}, 1e-12);
    REQUIRE(r.x.size() == 2);
    CHECK(r.x[0] == Catch::Approx(1.0).margin(1e-5));
    CHECK(r.x[1] == Catch::Approx(-2.0).margin(1e-5));
    CHECK(r.value == Catch::Approx(0.0).margin(1e-9));
}
