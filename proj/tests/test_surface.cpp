#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "support/instances.hpp"
#include "volcal/marginal.hpp"
#include "volcal/surface.hpp"

using namespace volcal;

namespace {

// Trapezoid integral of |F_disc - F_cont| — an independent W1 evaluation.
double w1_against_cdf(const DiscreteMarginal& dm,
                      const std::function<double(double)>& cdf, double lo,
                      double hi, int steps = 40000) {
    const double h = (hi - lo) / steps;
    double acc = 0.0;
    for (int i = 0; i <= steps; ++i) {
        const double s = lo + h * i;
        double fd = 0.0;
        for (std::size_t j = 0; j < dm.grid.size() && dm.grid[j] <= s; ++j)
            fd += dm.mass[j];
        const double val = std::fabs(fd - cdf(s));
        acc += (i == 0 || i == steps) ? 0.5 * val : val;
    }
    return acc * h;
}

}  // namespace

TEST_CASE("discretization reproduces standard normal moments", "[surface]") {
    DiscretizeConfig cfg;
    cfg.n = 1001;
    cfg.center = 0.0;
    cfg.width = 1.0;
    cfg.clamp_zero = false;
    cfg.a_override = -6.0;
    cfg.b_override = 6.0;
    const auto res = discretize_marginal(
        [](double s) { return norm_pdf(s); }, -6.0, cfg);

    const auto& m = res.marginal;
    REQUIRE(static_cast<int>(m.grid.size()) == cfg.n);
    double mass = 0.0;
    for (double p : m.mass) mass += p;
    CHECK(mass == Catch::Approx(1.0).margin(1e-12));
    CHECK(marginal_mean(m) == Catch::Approx(0.0).margin(1e-9));
    double var = 0.0;
    for (std::size_t j = 0; j < m.grid.size(); ++j)
        var += m.mass[j] * m.grid[j] * m.grid[j];
    CHECK(var == Catch::Approx(1.0).margin(1e-4));
}

TEST_CASE("discretization error stays within its bound and halves",
          "[surface]") {
    auto cdf = [](double s) {
        return 0.5 * (norm_cdf((s - testsupport::kHatLo) / testsupport::kHatSigma) +
                      norm_cdf((s - testsupport::kHatHi) / testsupport::kHatSigma));
    };
    DiscretizeConfig cfg;
    cfg.n = 200;
    cfg.center = 100.0;
    cfg.width = 17.0;
    cfg.kinks = testsupport::hat_strikes();
    const auto res_n = discretize_marginal(testsupport::hat_density, 64.0, cfg);
    cfg.n = 400;
    const auto res_2n =
        discretize_marginal(testsupport::hat_density, 64.0, cfg);

    const double w1_n =
        w1_against_cdf(res_n.marginal, cdf, res_n.a - 10.0, res_n.b + 10.0);
    const double w1_2n =
        w1_against_cdf(res_2n.marginal, cdf, res_2n.a - 10.0, res_2n.b + 10.0);

    CHECK(w1_n <= res_n.error_bound);
    CHECK(w1_2n <= res_2n.error_bound);
    CHECK(res_2n.error_bound <= 0.55 * res_n.error_bound);
    CHECK(w1_2n <= 0.75 * w1_n);
    // two-point mean preservation keeps the mean almost exact
    CHECK(marginal_mean(res_n.marginal) == Catch::Approx(100.0).margin(1e-7));
}

TEST_CASE("bimodal quotes calibrate with in-band reprices", "[surface]") {
    const auto qs = testsupport::make_hat_quoteset();
    const auto surf = calibrate_surface(qs);
    REQUIRE(surf.slices.size() == 1);
    const auto& sl = surf.slices[0];

    // solver-level repricing sits inside the quoted bands
    TransitionEvaluator ev(sl.problem);
    EvalRequest req;
    req.want_grad = true;
    req.want_metrics = true;
    const auto fin = ev.evaluate(sl.dual, req);
    CHECK(fin.band_viol <= 1e-8 * surf.spot);

    // the stored discrete marginal reprices within band + discretization slack
    const auto& ws = qs.slices[0];
    for (std::size_t j = 0; j < ws.quotes.size(); ++j) {
        const double price = marginal_call(sl.marginal, ws.quotes[j].strike);
        CHECK(price >=
              ws.quotes[j].bid - sl.disc_error_bound - 1e-8 * surf.spot);
        CHECK(price <=
              ws.quotes[j].ask + sl.disc_error_bound + 1e-8 * surf.spot);
    }
    // a genuinely bimodal fit: density dips between the modes
    TransitionDensity dens(sl.problem, sl.dual);
    CHECK(dens(100.0) < 0.6 * dens(85.0));
    CHECK(dens(100.0) < 0.6 * dens(115.0));
}

TEST_CASE("transition density integrates to one and keeps the mean",
          "[surface]") {
    const auto qs = testsupport::make_tree_quoteset();
    const auto surf = calibrate_surface(qs);
    REQUIRE(surf.slices.size() == 2);

    const auto& s1 = surf.slices[0];
    TransitionDensity dens(s1.problem, s1.dual);
    // trapezoid over a generous window
    const double lo = 40.0, hi = 160.0;
    const int n = 20000;
    double mass = 0.0, mean = 0.0;
    const double h = (hi - lo) / n;
    for (int i = 0; i <= n; ++i) {
        const double s = lo + h * i;
        const double w = (i == 0 || i == n) ? 0.5 : 1.0;
        const double d = dens(s);
        mass += w * d;
        mean += w * d * s;
    }
    mass *= h;
    mean *= h;
    CHECK(mass == Catch::Approx(1.0).margin(1e-6));
    CHECK(mean / mass == Catch::Approx(100.0).margin(1e-4));

    // the stored discrete marginals agree in mean with the martingale spot
    CHECK(marginal_mean(s1.marginal) == Catch::Approx(100.0).margin(1e-6));
    CHECK(marginal_mean(surf.slices[1].marginal) ==
          Catch::Approx(100.0).margin(1e-4));
}

TEST_CASE("arbitrage-free tree quotes calibrate with no spread-check warnings",
          "[surface]") {
    // Valid prices with symmetric spreads can never fail the executable
    // spread checks, flat adjacent slopes included.
    const auto qs = testsupport::make_tree_quoteset();
    const auto surf = calibrate_surface(qs);
    for (const auto& w : surf.warnings)
        CHECK(w.find("static-arbitrage") == std::string::npos);
    CHECK(surf.slices.size() == 2);
}

TEST_CASE("spread-check failures warn and defer to the solver", "[surface]") {
    // The middle bid exceeds the wing-ask chord by 5e-8, so an executable
    // butterfly earns a riskless 1e-8 and the spread check fails.  The same
    // executability means no transition law can reprice inside the bands, so
    // the checks only warn: calibration still runs, and the failure that
    // aborts it is the solver's own diagnosis, carrying the warnings along.
    QuoteSet qs;
    qs.spot = 100.0;
    QuoteSlice sl;
    sl.maturity = 0.25;
    sl.spot = 100.0;
    sl.lambda = 0.1;
    sl.quotes.push_back({0.25, 90.0, 9.5, 10.5});
    sl.quotes.push_back({0.25, 100.0, 7.50000005, 8.0});
    sl.quotes.push_back({0.25, 110.0, 3.5, 4.5});
    qs.slices.push_back(sl);

    try {
        (void)calibrate_surface(qs);
        FAIL("expected CalibrationError");
    } catch (const CalibrationError& e) {
        CHECK(e.maturity == Catch::Approx(0.25));
        bool flagged = false;
        for (const auto& w : e.warnings)
            flagged =
                flagged || w.find("static-arbitrage") != std::string::npos;
        CHECK(flagged);
    }
}

TEST_CASE("degenerate input aborts with an arbitrage diagnosis", "[surface]") {
    const auto qs = testsupport::make_degenerate_quoteset();
    try {
        (void)calibrate_surface(qs);
        FAIL("expected CalibrationError");
    } catch (const CalibrationError& e) {
        CHECK(e.status == SolveStatus::ArbitrageSuspected);
        CHECK(e.maturity == Catch::Approx(0.5));
    }
}

TEST_CASE("smiles reprice quotes and invert to volatilities", "[surface]") {
    const auto qs = testsupport::make_hat_quoteset();
    const auto surf = calibrate_surface(qs);

    const auto pts = query_smile(surf, 0, {80.0, 100.0, 120.0});
    REQUIRE(pts.size() == 3);
    for (const auto& pt : pts) {
        CHECK(pt.price > 0.0);
        REQUIRE(pt.implied_vol.has_value());
        CHECK(*pt.implied_vol > 0.0);
    }
    // price at the ATM strike honors the quoted band up to solver slack
    const double atm = testsupport::hat_call(100.0);
    CHECK(pts[1].price >= atm * 0.995 - 1e-6);
    CHECK(pts[1].price <= atm * 1.005 + 1e-6);
    // a bimodal smile is non-monotone in strike across the modes
    CHECK(pts[0].implied_vol.value() > 0.0);

    const auto grid = uniform_strike_grid(80.0, 120.0, 5);
    REQUIRE(grid.size() == 5);
    CHECK(grid.front() == 80.0);
    CHECK(grid.back() == 120.0);
    CHECK(grid[1] == Catch::Approx(90.0));
}
