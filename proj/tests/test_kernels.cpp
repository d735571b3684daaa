#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "support/instances.hpp"
#include "support/quadrature.hpp"
#include "volcal/kernels.hpp"

using namespace volcal;
using testsupport::rel_err;

namespace {

// Single-piece exponent E(s) = alpha (s - c) for direct band checks.
testsupport::ExpPieces flat_exponent(double alpha, double c) {
    return testsupport::ExpPieces{{}, {alpha}, {-alpha * c}};
}

testsupport::OracleSetup random_setup(std::mt19937& rng, bool truncated) {
    std::uniform_real_distribution<double> us1(50.0, 200.0);
    std::uniform_real_distribution<double> usig(1.0, 50.0);
    std::uniform_real_distribution<double> uv(-0.2, 0.2);
    std::uniform_real_distribution<double> uth(-0.1, 0.1);
    std::uniform_int_distribution<int> unk(1, 10);
    std::uniform_real_distribution<double> uoff(-2.5, 2.5);

    testsupport::OracleSetup st;
    st.s1 = us1(rng);
    st.sigma = usig(rng);
    st.theta = uth(rng);
    st.truncated = truncated;
    const int nk = unk(rng);
    std::vector<double> ks;
    while (static_cast<int>(ks.size()) < nk) {
        const double k = st.s1 + uoff(rng) * st.sigma;
        bool clash = false;
        for (double prev : ks)
            if (std::fabs(prev - k) < 1e-3 * st.sigma) clash = true;
        if (!clash && k > 0.0) ks.push_back(k);
    }
    std::sort(ks.begin(), ks.end());
    st.strikes = ks;
    for (std::size_t j = 0; j < ks.size(); ++j) st.v.push_back(uv(rng));
    return st;
}

}  // namespace

TEST_CASE("band primitives match adaptive quadrature", "[kernels]") {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> uc(50.0, 200.0);
    std::uniform_real_distribution<double> usig(1.0, 50.0);
    std::uniform_real_distribution<double> ual(-1.5, 1.5);

    for (int trial = 0; trial < 25; ++trial) {
        const double c = uc(rng);
        const double sig = usig(rng);
        const double alpha = ual(rng) / sig;  // keep alpha*sigma moderate
        const GaussKernel g{c, sig, false};
        const auto E = flat_exponent(alpha, c);

        struct Band {
            double lo, hi;
        };
        const Band bands[] = {{c - 2.0 * sig, c + 1.0 * sig},
                              {c + 3.0 * sig, c + 5.0 * sig},
                              {-kInf, c - sig},
                              {c + 2.0 * sig, kInf},
                              {c + 10.0 * sig, c + 12.0 * sig}};
        for (const auto& b : bands) {
            const auto ref_const = testsupport::integrate_tilted(
                [](double) { return 1.0; }, E, c, sig, b.lo, b.hi);
            CHECK(rel_err(band_moment_const(g, alpha, b.lo, b.hi), ref_const) <
                  1e-11);

            const double pivot = c - 0.7 * sig;
            const auto ref_lin = testsupport::integrate_tilted(
                [pivot](double s) { return s - pivot; }, E, c, sig, b.lo, b.hi);
            CHECK(rel_err(band_moment_linear(g, alpha, b.lo, b.hi, pivot),
                          ref_lin) < 1e-10);

            const double ka = c - 0.3 * sig, kb = c + 0.4 * sig;
            const auto ref_quad = testsupport::integrate_tilted(
                [ka, kb](double s) { return (s - ka) * (s - kb); }, E, c, sig,
                b.lo, b.hi);
            CHECK(rel_err(band_moment_quad(g, alpha, b.lo, b.hi, ka, kb),
                          ref_quad) < 1e-10);
        }
    }
}

TEST_CASE("composed tilt moments match the oracle", "[kernels]") {
    std::mt19937 rng(23);
    for (int trial = 0; trial < 24; ++trial) {
        const bool trunc = (trial % 2) == 1;
        const auto st = random_setup(rng, trunc);
        const GaussKernel g{st.s1, st.sigma, st.truncated};
        const auto pe = payoff_exponent(std::span<const double>(st.strikes),
                                        std::span<const double>(st.v),
                                        st.theta, st.s1);

        CHECK(rel_err(tilt_moment_mass(pe, g), testsupport::oracle_mass(st)) <
              1e-10);
        CHECK(rel_err(tilt_moment_linear(pe, g, st.s1),
                      testsupport::oracle_drift(st)) < 1e-9);
        CHECK(rel_err(tilt_moment_square(pe, g, st.s1),
                      testsupport::oracle_square(st)) < 1e-9);
        for (std::size_t m = 0; m < st.strikes.size(); ++m) {
            CHECK(rel_err(tilt_moment_call(pe, g, st.strikes[m]),
                          testsupport::oracle_call(st, st.strikes[m])) < 1e-9);
        }
        const std::size_t last = st.strikes.size() - 1;
        CHECK(rel_err(tilt_moment_callprod(pe, g, st.strikes[0],
                                           st.strikes[last]),
                      testsupport::oracle_callprod(st, st.strikes[0],
                                                   st.strikes[last])) < 1e-9);
    }
}

TEST_CASE("batched evaluator agrees with single-shot moments", "[kernels]") {
    std::mt19937 rng(31);
    for (int trial = 0; trial < 16; ++trial) {
        const bool trunc = (trial % 2) == 1;
        const auto st = random_setup(rng, trunc);
        const GaussKernel g{st.s1, st.sigma, st.truncated};
        const auto pe = payoff_exponent(std::span<const double>(st.strikes),
                                        std::span<const double>(st.v),
                                        st.theta, st.s1);

        KernelMoments km(st.strikes);
        km.evaluate(g, st.theta, st.v);

        auto as_scaled = [&](double stored) {
            return ScaledReal{stored, km.frame()};
        };
        CHECK(rel_err(as_scaled(km.mass()), tilt_moment_mass(pe, g)) < 1e-11);
        CHECK(rel_err(as_scaled(km.drift()), tilt_moment_linear(pe, g, st.s1)) <
              1e-10);
        CHECK(rel_err(as_scaled(km.square()),
                      tilt_moment_square(pe, g, st.s1)) < 1e-10);
        for (std::size_t m = 0; m < st.strikes.size(); ++m)
            CHECK(rel_err(as_scaled(km.call(m)),
                          tilt_moment_call(pe, g, st.strikes[m])) < 1e-10);
        for (std::size_t m = 0; m < st.strikes.size(); ++m)
            for (std::size_t l = m; l < st.strikes.size(); ++l)
                CHECK(rel_err(as_scaled(km.callprod(m, l)),
                              tilt_moment_callprod(pe, g, st.strikes[m],
                                                   st.strikes[l])) < 1e-10);

        // call_at at off-grid points, including below support and far out
        const double mid =
            0.5 * (st.strikes[0] + st.strikes[st.strikes.size() - 1]);
        for (double q : {mid, st.s1 - 3.0 * st.sigma, st.s1 + 3.0 * st.sigma}) {
            if (trunc && q < 0.0) continue;
            CHECK(rel_err(as_scaled(km.call_at(q)),
                          tilt_moment_call(pe, g, q)) < 1e-9);
        }
    }
}

TEST_CASE("derivative identities hold under finite differences", "[kernels]") {
    std::mt19937 rng(47);
    for (int trial = 0; trial < 6; ++trial) {
        const auto st = random_setup(rng, trial % 2 == 1);
        const GaussKernel g{st.s1, st.sigma, st.truncated};

        auto mass_ratio_at = [&](double theta, const std::vector<double>& v) {
            const auto pe = payoff_exponent(std::span<const double>(st.strikes),
                                            std::span<const double>(v), theta,
                                            st.s1);
            return tilt_moment_mass(pe, g);
        };

        const auto base = mass_ratio_at(st.theta, st.v);
        const auto pe0 = payoff_exponent(std::span<const double>(st.strikes),
                                         std::span<const double>(st.v),
                                         st.theta, st.s1);

        // d/dtheta log-free ratio: dI_u/dtheta = -I_h
        const double step_t = 1e-6;
        const double fd_theta =
            (mass_ratio_at(st.theta + step_t, st.v).ratio_to(base) -
             mass_ratio_at(st.theta - step_t, st.v).ratio_to(base)) /
            (2.0 * step_t);
        const double expect_theta =
            -tilt_moment_linear(pe0, g, st.s1).ratio_to(base);
        CHECK(fd_theta == Catch::Approx(expect_theta).margin(
                              1e-6 * (1.0 + std::fabs(expect_theta))));

        // d/dV_m: dI_u/dV_m = -I_{call m}
        for (std::size_t m = 0; m < st.strikes.size(); m += 2) {
            auto vp = st.v, vm = st.v;
            vp[m] += step_t;
            vm[m] -= step_t;
            const double fd_v = (mass_ratio_at(st.theta, vp).ratio_to(base) -
                                 mass_ratio_at(st.theta, vm).ratio_to(base)) /
                                (2.0 * step_t);
            const double expect_v =
                -tilt_moment_call(pe0, g, st.strikes[m]).ratio_to(base);
            CHECK(fd_v == Catch::Approx(expect_v).margin(
                              1e-6 * (1.0 + std::fabs(expect_v))));
        }
    }
}

TEST_CASE("piecewise exponent is continuous and rebase-invariant",
          "[kernels]") {
    std::mt19937 rng(53);
    const auto st = random_setup(rng, false);
    auto pe = payoff_exponent(std::span<const double>(st.strikes),
                              std::span<const double>(st.v), st.theta, st.s1);
    for (double k : pe.kinks) {
        const double left = pe.value(k - 1e-9);
        const double right = pe.value(k + 1e-9);
        CHECK(left == Catch::Approx(right).margin(1e-6));
    }
    auto rb = pe;
    rb.rebase(0.73 * pe.icept[0] - 1.2);
    for (double s : {st.s1 - 2.0, st.s1, st.s1 + 3.7, st.strikes[0]})
        CHECK(rb.value(s) ==
              Catch::Approx(pe.value(s)).margin(1e-10 *
                                                (1.0 + std::fabs(pe.value(s)))));
}

TEST_CASE("untilted kernels recover closed-form normal moments", "[kernels]") {
    const double c = 100.0, sig = 15.0;
    std::vector<double> ks{90.0, 110.0};
    std::vector<double> v{0.0, 0.0};
    KernelMoments km(ks);

    // untruncated: plain normal distribution
    km.evaluate(GaussKernel{c, sig, false}, 0.0, v);
    const double scale = std::exp(km.frame());
    CHECK(km.mass() * scale == Catch::Approx(1.0).epsilon(1e-12));
    CHECK(km.drift() * scale == Catch::Approx(0.0).margin(1e-14));
    CHECK(km.square() * scale == Catch::Approx(sig * sig).epsilon(1e-12));
    CHECK(km.call(0) * scale ==
          Catch::Approx(testsupport::bach(c - 90.0, sig)).epsilon(1e-12));
    CHECK(km.call(1) * scale ==
          Catch::Approx(testsupport::bach(c - 110.0, sig)).epsilon(1e-12));

    // truncated at zero: normalized lower-truncated normal
    const double sig2 = 40.0;  // only ~Phi(-2.5) of mass clipped
    km.evaluate(GaussKernel{c, sig2, true}, 0.0, v);
    const double scale2 = std::exp(km.frame());
    const double z = c / sig2;
    CHECK(km.mass() * scale2 == Catch::Approx(1.0).epsilon(1e-12));
    CHECK(km.drift() * scale2 ==
          Catch::Approx(sig2 * norm_pdf(z) / norm_cdf(z)).epsilon(1e-10));
}

TEST_CASE("kernel moment guards reject malformed input", "[kernels]") {
    CHECK_THROWS_AS(KernelMoments({100.0, 100.0}), std::invalid_argument);
    CHECK_THROWS_AS(KernelMoments({110.0, 100.0}), std::invalid_argument);
    KernelMoments km({100.0});
    std::vector<double> wrong{0.1, 0.2};
    CHECK_THROWS_AS(km.evaluate(GaussKernel{100.0, 10.0, false}, 0.0, wrong),
                    std::invalid_argument);
}
