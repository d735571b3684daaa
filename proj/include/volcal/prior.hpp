#pragma once
// Reference-measure fitting.  The first slice's prior is a normal law around
// the spot whose volatility is least-squares fitted to the quoted mids via the
// normal-model call formula; transition priors are Gaussian kernels with a
// power-law state-dependent volatility sigma(s) = sigma0 * s^beta, fitted the
// same way with the outer expectation taken under the already-calibrated
// previous marginal.

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "volcal/marginal.hpp"
#include "volcal/numerics.hpp"
#include "volcal/pricing.hpp"
#include "volcal/quotes.hpp"

namespace volcal {

struct FitError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PriorParams {
    double sigma0 = 0.0;  // price units per sqrt(year)
    double beta = 0.0;    // state exponent, in [0, 1]
};

struct PriorFit {
    PriorParams params;
    double objective = 0.0;
    bool at_boundary = false;  // solution pinned to the search box edge
};

namespace detail {

// sigma0 search bracket: wide enough for any sane market, flagged if hit.
[[nodiscard]] inline std::pair<double, double> sigma0_bracket(double spot) {
    return {1e-4 * spot, 5.0 * spot};
}

[[nodiscard]] inline bool near(double x, double y, double rel) {
    return std::fabs(x - y) <= rel * std::max(std::fabs(x), std::fabs(y));
}

// Coarse log-grid scan followed by golden-section refinement.
inline ScalarMinResult min_on_log_grid(const std::function<double(double)>& f,
                                       double lo, double hi, int coarse,
                                       double tol) {
    const double llo = std::log(lo), lhi = std::log(hi);
    int best = 0;
    double best_val = kInf;
    for (int i = 0; i < coarse; ++i) {
        const double x =
            std::exp(llo + (lhi - llo) * i / static_cast<double>(coarse - 1));
        const double v = f(x);
        if (v < best_val) {
            best_val = v;
            best = i;
        }
    }
    const auto at = [&](int i) {
        return std::exp(llo + (lhi - llo) *
                                  std::min(std::max(i, 0), coarse - 1) /
                                  static_cast<double>(coarse - 1));
    };
    return golden_section_min(f, at(best - 1), at(best + 1), tol);
}

}  // namespace detail

// Least-squares volatility of a normal prior for the first maturity:
//   min_sigma  sum_K ( B(spot, t1, K, sigma) - mid_K )^2 .
[[nodiscard]] inline PriorFit fit_first_prior(const WeightedSlice& ws) {
    if (ws.size() == 0) throw FitError("fit_first_prior: empty slice");
    bool any_positive = false;
    for (double m : ws.mid) any_positive = any_positive || m > 0.0;
    if (!any_positive)
        throw FitError("fit_first_prior: all mid prices are zero");

    const double spot = ws.slice.spot;
    const double t = ws.slice.maturity;
    auto objective = [&](double sigma) {
        double obj = 0.0;
        for (std::size_t j = 0; j < ws.size(); ++j) {
            const double d = bachelier_price(spot, t, ws.strike(j), sigma) -
                             ws.mid[j];
            obj += d * d;
        }
        return obj;
    };

    const auto [lo, hi] = detail::sigma0_bracket(spot);
    const auto res = detail::min_on_log_grid(objective, lo, hi, 64, 1e-12);
    PriorFit fit;
    fit.params = {res.x, 0.0};
    fit.objective = res.value;
    fit.at_boundary = detail::near(res.x, lo, 1e-6) || detail::near(res.x, hi, 1e-6);
    return fit;
}

// Least-squares (sigma0, beta) for the transition kernel out of `prev`:
//   min  sum_K ( E^{prev}[ B(S1, dt, K, sigma0 * S1^beta) ] - mid_K )^2 .
// The 2D search runs in (log sigma_mid, beta) with sigma_mid = sigma0 *
// s_mid^beta — the volatility at a representative state — which decorrelates
// the two axes; beta is clamped to [0, 1].  A single-point prev cannot
// identify beta and reduces to the 1D fit at that state with beta = 0.
[[nodiscard]] inline PriorFit fit_transition_prior(const DiscreteMarginal& prev,
                                                   const WeightedSlice& ws,
                                                   double dt) {
    if (ws.size() == 0) throw FitError("fit_transition_prior: empty slice");
    if (!(dt > 0.0)) throw FitError("fit_transition_prior: need dt > 0");
    if (prev.grid.empty())
        throw FitError("fit_transition_prior: empty previous marginal");
    bool any_positive = false;
    for (double m : ws.mid) any_positive = any_positive || m > 0.0;
    if (!any_positive)
        throw FitError("fit_transition_prior: all mid prices are zero");

    const double spot = ws.slice.spot;
    const auto [slo, shi] = detail::sigma0_bracket(spot);

    auto objective_sigma0 = [&](double sigma0, double beta) {
        double obj = 0.0;
        for (std::size_t j = 0; j < ws.size(); ++j) {
            const double k = ws.strike(j);
            double price = 0.0;
            for (std::size_t i = 0; i < prev.grid.size(); ++i) {
                if (prev.mass[i] <= 0.0) continue;
                const double s = prev.grid[i];
                const double sig = sigma0 * std::pow(s, beta);
                // State-power volatilities vanish at s = 0, where the
                // transition law degenerates to the point mass at the state
                // and the call prices reduce to intrinsic value.
                price += prev.mass[i] *
                         (sig > 0.0 ? bachelier_price(s, dt, k, sig)
                                    : std::max(s - k, 0.0));
            }
            const double d = price - ws.mid[j];
            obj += d * d;
        }
        return obj;
    };

    if (prev.grid.size() == 1) {
        const double s = prev.grid[0];
        auto obj1 = [&](double sig) { return objective_sigma0(sig, 0.0); };
        (void)s;
        const auto res = detail::min_on_log_grid(obj1, slo, shi, 64, 1e-12);
        PriorFit fit;
        fit.params = {res.x, 0.0};
        fit.objective = res.value;
        fit.at_boundary =
            detail::near(res.x, slo, 1e-6) || detail::near(res.x, shi, 1e-6);
        return fit;
    }

    const double s_mid = marginal_mean(prev);
    auto from_xy = [&](double log_sig_mid, double beta) {
        const double b = std::min(std::max(beta, 0.0), 1.0);
        double sigma0 = std::exp(log_sig_mid) / std::pow(s_mid, b);
        sigma0 = std::min(std::max(sigma0, slo), shi);
        return PriorParams{sigma0, b};
    };
    // Out-of-box moves are penalized rather than clamped flat: a hard clamp
    // makes every point beyond the boundary evaluate identically, so the
    // simplex can collapse onto the boundary and stop at a false corner
    // minimum.  The quadratic ramp keeps a restoring slope everywhere.
    auto objective_xy = [&](const std::vector<double>& x) {
        const PriorParams p = from_xy(x[0], x[1]);
        const double base = objective_sigma0(p.sigma0, p.beta);
        double over = 0.0;
        if (x[1] < 0.0) over += -x[1];
        if (x[1] > 1.0) over += x[1] - 1.0;
        const double raw_sig = std::exp(x[0]) / std::pow(s_mid, p.beta);
        if (raw_sig < slo) over += std::log(slo / raw_sig);
        if (raw_sig > shi) over += std::log(raw_sig / shi);
        return base + over * over * (1.0 + base) * 100.0;
    };

    // Coarse grid over the box, then simplex refinement from the best cell.
    double best_val = kInf;
    std::vector<double> best_x{std::log(0.2 * spot), 0.5};
    for (int ib = 0; ib <= 4; ++ib) {
        const double beta = ib / 4.0;
        for (int is = 0; is < 16; ++is) {
            const double lsm =
                std::log(slo * std::pow(s_mid, beta)) +
                (std::log(shi * std::pow(s_mid, beta)) -
                 std::log(slo * std::pow(s_mid, beta))) *
                    is / 15.0;
            const double v = objective_xy({lsm, beta});
            if (v < best_val) {
                best_val = v;
                best_x = {lsm, beta};
            }
        }
    }
    auto res = nelder_mead_min(objective_xy, best_x, {0.05, 0.05}, 1e-8, 600);
    // Re-inflate the simplex at the found point: a fresh start escapes the
    // degenerate shapes the first descent can shrink into.
    res = nelder_mead_min(objective_xy, res.x, {0.02, 0.02}, 1e-10, 600);

    PriorFit fit;
    fit.params = from_xy(res.x[0], res.x[1]);
    fit.objective = objective_sigma0(fit.params.sigma0, fit.params.beta);
    fit.at_boundary = detail::near(fit.params.sigma0, slo, 1e-6) ||
                      detail::near(fit.params.sigma0, shi, 1e-6) ||
                      fit.params.beta <= 1e-9 || fit.params.beta >= 1.0 - 1e-9;
    return fit;
}

}  // namespace volcal
