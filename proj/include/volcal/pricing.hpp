#pragma once
// Vanilla call pricing under lognormal and normal models, plus a safeguarded
// implied-volatility inversion.  Zero rates / zero carry throughout: prices
// are undiscounted expectations of (S - K)^+.

#include <cmath>
#include <stdexcept>

#include "volcal/numerics.hpp"

namespace volcal {

// Lognormal call with total volatility omega = sigma * sqrt(T):
//   price = S Phi(d+) - K Phi(d-),  d± = ln(S/K)/omega ± omega/2.
// omega == 0 returns intrinsic value.  Strike 0 returns S.
[[nodiscard]] inline double bs_price(double spot, double strike,
                                     double total_vol) {
    if (!(spot > 0.0) || strike < 0.0 || total_vol < 0.0)
        throw std::domain_error("bs_price: need spot > 0, strike >= 0, vol >= 0");
    if (strike == 0.0) return spot;
    if (total_vol == 0.0) return std::max(spot - strike, 0.0);
    const double m = std::log(spot / strike) / total_vol;
    return spot * norm_cdf(m + 0.5 * total_vol) -
           strike * norm_cdf(m - 0.5 * total_vol);
}

// Normal-model (Bachelier) call:
//   price = (s - K) Phi((s - K)/v) + v phi((s - K)/v),  v = sigma sqrt(t).
[[nodiscard]] inline double bachelier_price(double s, double t, double strike,
                                            double sigma) {
    if (!(t > 0.0) || !(sigma > 0.0))
        throw std::domain_error("bachelier_price: need t > 0 and sigma > 0");
    const double v = sigma * std::sqrt(t);
    const double m = s - strike;
    return m * norm_cdf(m / v) + v * norm_pdf(m / v);
}

// Inverts bs_price in total volatility over omega in [1e-8, 10] using Newton
// steps safeguarded by bisection; converges to |price error| <= 1e-12.
// Returns the annualized volatility omega / sqrt(maturity).  Prices outside
// the open static bounds ((S-K)^+, S) are a domain error.
[[nodiscard]] inline double implied_vol(double spot, double strike,
                                        double maturity, double price) {
    if (!(spot > 0.0) || !(strike > 0.0) || !(maturity > 0.0))
        throw std::domain_error("implied_vol: need spot, strike, maturity > 0");
    const double intrinsic = std::max(spot - strike, 0.0);
    if (!(price > intrinsic) || !(price < spot))
        throw std::domain_error("implied_vol: price outside no-arbitrage bounds");

    constexpr double kOmegaLo = 1e-8;
    constexpr double kOmegaHi = 10.0;
    constexpr double kPriceTol = 1e-12;

    double lo = kOmegaLo, hi = kOmegaHi;
    const double flo = bs_price(spot, strike, lo) - price;
    const double fhi = bs_price(spot, strike, hi) - price;
    if (flo > 0.0) return lo / std::sqrt(maturity);   // below resolvable band
    if (fhi < 0.0) return hi / std::sqrt(maturity);   // above resolvable band

    double omega = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        const double diff = bs_price(spot, strike, omega) - price;
        if (std::fabs(diff) <= kPriceTol) return omega / std::sqrt(maturity);
        if (diff > 0.0)
            hi = omega;
        else
            lo = omega;
        const double d1 = std::log(spot / strike) / omega + 0.5 * omega;
        const double vega = spot * norm_pdf(d1);
        double next = omega - diff / vega;
        if (!(next > lo) || !(next < hi)) next = 0.5 * (lo + hi);
        if (hi - lo < 1e-16 * (1.0 + omega)) return omega / std::sqrt(maturity);
        omega = next;
    }
    return omega / std::sqrt(maturity);
}

}  // namespace volcal
