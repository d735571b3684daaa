#pragma once
// Closed-form moments of exponentially tilted Gaussian transition kernels.
//
// The transition law out of a state s1 is N(center, sigma^2) (optionally
// conditioned on staying nonnegative).  Calibration tilts it by a weight
// e^{E(s)} where E is piecewise linear with kinks at the quoted strikes.  All
// moments of that tilted kernel reduce to band-restricted Gaussian integrals
// with exponential-linear weights, which this header evaluates from erf-family
// primitives in log scale: the natural magnitude of these quantities is
// e^{alpha^2 sigma^2 / 2} and overflows doubles long before the parameter
// ranges of interest are exhausted.
//
// Two evaluation paths are provided on purpose:
//   * band_moment_* / tilt_moment_*: direct per-band sums, simple and easy to
//     audit, used by tests and one-off queries;
//   * KernelMoments: a batched evaluator that produces every moment the
//     calibration loop needs for one state in O(#strikes) via suffix sums
//     (the pairwise products in O(1) each after that), sharing one log frame
//     so downstream arithmetic happens in plain doubles.

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "volcal/numerics.hpp"

namespace volcal {

// Conditional law of the next state given the current one: N(center, sigma^2),
// optionally truncated to [0, inf) and renormalized.
struct GaussKernel {
    double center = 0.0;
    double sigma = 1.0;
    bool truncated = false;
};

// ---------------------------------------------------------------------------
// Band primitives.  All integrate over the band (k1, k2) against the *plain*
// (untruncated) normal law N(center, sigma^2) with weight exp(alpha (s -
// center)); truncation is applied by the composed-moment layer through band
// clamping and mass renormalization.  Either band end may be infinite; an
// empty band (k1 >= k2) gives zero.
// ---------------------------------------------------------------------------

namespace detail {

[[nodiscard]] inline double standardize(double k, const GaussKernel& g) {
    if (k == kInf || k == -kInf) return k;
    return (k - g.center) / g.sigma;
}

}  // namespace detail

// integral of e^{alpha (s - c)} over the band.
[[nodiscard]] inline ScaledReal band_moment_const(const GaussKernel& g,
                                                  double alpha, double k1,
                                                  double k2) {
    if (!(k1 < k2)) return ScaledReal::zero();
    const double a = detail::standardize(k1, g);
    const double b = detail::standardize(k2, g);
    const double as = alpha * g.sigma;
    const double logd = log_phi_diff(a - as, b - as);
    if (logd == -kInf) return ScaledReal::zero();
    return ScaledReal::from_log(0.5 * as * as + logd);
}

// integral of (s - pivot) e^{alpha (s - c)} over the band.
[[nodiscard]] inline ScaledReal band_moment_linear(const GaussKernel& g,
                                                   double alpha, double k1,
                                                   double k2, double pivot) {
    if (!(k1 < k2)) return ScaledReal::zero();
    const double a = detail::standardize(k1, g);
    const double b = detail::standardize(k2, g);
    const double s = g.sigma;
    const double as = alpha * s;
    ScaledSum sum;
    if (a != -kInf) sum.add(s * kInvSqrt2Pi, as * a - 0.5 * a * a);
    if (b != kInf) sum.add(-s * kInvSqrt2Pi, as * b - 0.5 * b * b);
    const double coef = alpha * s * s + g.center - pivot;
    const double logd = log_phi_diff(a - as, b - as);
    if (logd != -kInf) sum.add(coef, 0.5 * as * as + logd);
    return sum.total();
}

// integral of (s - ka)(s - kb) e^{alpha (s - c)} over the band.
[[nodiscard]] inline ScaledReal band_moment_quad(const GaussKernel& g,
                                                 double alpha, double k1,
                                                 double k2, double ka,
                                                 double kb) {
    if (!(k1 < k2)) return ScaledReal::zero();
    const double a = detail::standardize(k1, g);
    const double b = detail::standardize(k2, g);
    const double s = g.sigma;
    const double as = alpha * s;
    const double p = g.center - ka;
    const double q = g.center - kb;
    ScaledSum sum;
    if (a != -kInf)
        sum.add(s * kInvSqrt2Pi * (p + q + s * a + alpha * s * s),
                as * a - 0.5 * a * a);
    if (b != kInf)
        sum.add(-s * kInvSqrt2Pi * (p + q + s * b + alpha * s * s),
                as * b - 0.5 * b * b);
    const double coef = s * s + (p + alpha * s * s) * (q + alpha * s * s);
    const double logd = log_phi_diff(a - as, b - as);
    if (logd != -kInf) sum.add(coef, 0.5 * as * as + logd);
    return sum.total();
}

// ---------------------------------------------------------------------------
// Piecewise-linear exponents.  E(s) = slope[j] s + icept[j] + shift on the
// j-th interval of the kink partition (kinks strictly increasing).  E is
// continuous across kinks by construction of the factories below; the moment
// code relies on that continuity.  `shift` is a common additive constant kept
// separate so callers can rescale without touching the pieces.
// ---------------------------------------------------------------------------

struct PiecewiseExponent {
    std::vector<double> kinks;
    std::vector<double> slope;  // kinks.size() + 1 entries
    std::vector<double> icept;  // kinks.size() + 1 entries
    double shift = 0.0;

    [[nodiscard]] std::size_t intervals() const { return slope.size(); }

    [[nodiscard]] double value(double s) const {
        std::size_t j = 0;
        while (j < kinks.size() && s >= kinks[j]) ++j;
        return slope[j] * s + icept[j] + shift;
    }

    // Moves a constant c out of the intercepts into shift; the represented
    // function is unchanged.
    void rebase(double c) {
        for (double& ic : icept) ic -= c;
        shift += c;
    }
};

// The calibration weight exponent for a state s1:
//   E(s) = -theta (s - s1) - sum_m v[m] (s - strikes[m])^+ .
[[nodiscard]] inline PiecewiseExponent payoff_exponent(
    std::span<const double> strikes, std::span<const double> v, double theta,
    double s1) {
    if (strikes.size() != v.size())
        throw std::invalid_argument("payoff_exponent: strikes/v size mismatch");
    PiecewiseExponent pe;
    pe.kinks.assign(strikes.begin(), strikes.end());
    pe.slope.resize(strikes.size() + 1);
    pe.icept.resize(strikes.size() + 1);
    pe.slope[0] = -theta;
    pe.icept[0] = theta * s1;
    for (std::size_t m = 0; m < strikes.size(); ++m) {
        pe.slope[m + 1] = pe.slope[m] - v[m];
        pe.icept[m + 1] = pe.icept[m] + v[m] * strikes[m];
    }
    return pe;
}

// ---------------------------------------------------------------------------
// Composed moments: direct per-band summation.  These honor g.truncated by
// clamping bands at zero and dividing by the kernel mass on [0, inf).
// ---------------------------------------------------------------------------

namespace detail {

// log of the truncation normalizer Phi(center / sigma); zero if untruncated.
[[nodiscard]] inline double log_trunc_mass(const GaussKernel& g) {
    if (!g.truncated) return 0.0;
    return log_phi_diff(-g.center / g.sigma, kInf);
}

// Iterates the intervals of pe above `lower`, handing (alpha, log prefactor,
// band lo, band hi) to fn.  The prefactor converts the centered-band primitive
// to the full weight e^{E}: e^{E(s)} = e^{alpha (s-c)} * e^{icept + alpha c +
// shift}.
template <typename Fn>
inline void for_each_band(const PiecewiseExponent& pe, const GaussKernel& g,
                          double lower, Fn&& fn) {
    const std::size_t k = pe.kinks.size();
    for (std::size_t j = 0; j <= k; ++j) {
        double lo = (j == 0) ? -kInf : pe.kinks[j - 1];
        const double hi = (j == k) ? kInf : pe.kinks[j];
        if (g.truncated && lo < 0.0) lo = 0.0;
        if (lo < lower) lo = lower;
        if (!(lo < hi)) continue;
        const double alpha = pe.slope[j];
        const double logpre = pe.icept[j] + alpha * g.center + pe.shift;
        fn(alpha, logpre, lo, hi);
    }
}

}  // namespace detail

// integral of e^{E(s)} against the kernel.
[[nodiscard]] inline ScaledReal tilt_moment_mass(const PiecewiseExponent& pe,
                                                 const GaussKernel& g) {
    ScaledSum sum;
    detail::for_each_band(pe, g, -kInf,
                          [&](double alpha, double logpre, double lo, double hi) {
                              ScaledReal b = band_moment_const(g, alpha, lo, hi);
                              sum.add(b.mant, b.lg + logpre);
                          });
    ScaledReal t = sum.total();
    t.lg -= detail::log_trunc_mass(g);
    return t;
}

// integral of (s - pivot) e^{E(s)}.
[[nodiscard]] inline ScaledReal tilt_moment_linear(const PiecewiseExponent& pe,
                                                   const GaussKernel& g,
                                                   double pivot) {
    ScaledSum sum;
    detail::for_each_band(
        pe, g, -kInf, [&](double alpha, double logpre, double lo, double hi) {
            ScaledReal b = band_moment_linear(g, alpha, lo, hi, pivot);
            sum.add(b.mant, b.lg + logpre);
        });
    ScaledReal t = sum.total();
    t.lg -= detail::log_trunc_mass(g);
    return t;
}

// integral of (s - strike)^+ e^{E(s)}.
[[nodiscard]] inline ScaledReal tilt_moment_call(const PiecewiseExponent& pe,
                                                 const GaussKernel& g,
                                                 double strike) {
    ScaledSum sum;
    detail::for_each_band(
        pe, g, strike, [&](double alpha, double logpre, double lo, double hi) {
            ScaledReal b = band_moment_linear(g, alpha, lo, hi, strike);
            sum.add(b.mant, b.lg + logpre);
        });
    ScaledReal t = sum.total();
    t.lg -= detail::log_trunc_mass(g);
    return t;
}

// integral of (s - ka)^+ (s - kb)^+ e^{E(s)}.
[[nodiscard]] inline ScaledReal tilt_moment_callprod(const PiecewiseExponent& pe,
                                                     const GaussKernel& g,
                                                     double ka, double kb) {
    ScaledSum sum;
    detail::for_each_band(
        pe, g, std::max(ka, kb),
        [&](double alpha, double logpre, double lo, double hi) {
            ScaledReal b = band_moment_quad(g, alpha, lo, hi, ka, kb);
            sum.add(b.mant, b.lg + logpre);
        });
    ScaledReal t = sum.total();
    t.lg -= detail::log_trunc_mass(g);
    return t;
}

// integral of (s - pivot)^2 e^{E(s)} over the whole support.
[[nodiscard]] inline ScaledReal tilt_moment_square(const PiecewiseExponent& pe,
                                                   const GaussKernel& g,
                                                   double pivot) {
    ScaledSum sum;
    detail::for_each_band(
        pe, g, -kInf, [&](double alpha, double logpre, double lo, double hi) {
            ScaledReal b = band_moment_quad(g, alpha, lo, hi, pivot, pivot);
            sum.add(b.mant, b.lg + logpre);
        });
    ScaledReal t = sum.total();
    t.lg -= detail::log_trunc_mass(g);
    return t;
}

// ---------------------------------------------------------------------------
// Batched evaluator.  For a fixed strike grid, evaluate(kernel, theta, v)
// computes every per-interval primitive once and exposes
//     mass   = integral of e^E
//     drift  = integral of (s - center) e^E
//     square = integral of (s - center)^2 e^E
//     call(m), call_at(q)        = integral of (s - K)^+ e^E
//     callprod(m, l)             = integral of (s - K_m)^+ (s - K_l)^+ e^E
// all as plain doubles relative to the common log frame().  Truncation is
// folded into the frame, so ratios of reported values are ratios of the
// normalized moments.
//
// The suffix-sum identities behind call()/callprod() use the continuity of E:
// boundary terms of adjacent bands telescope, leaving a single density term
// per kink plus weighted suffix sums of the band masses.
// ---------------------------------------------------------------------------

class KernelMoments {
public:
    explicit KernelMoments(std::vector<double> strikes)
        : strikes_(std::move(strikes)) {
        const std::size_t k = strikes_.size();
        for (std::size_t m = 1; m < k; ++m)
            if (!(strikes_[m - 1] < strikes_[m]))
                throw std::invalid_argument(
                    "KernelMoments: strikes must be strictly increasing");
        slope_.resize(k + 1);
        icept_.resize(k + 1);
        z_.resize(k);
        edge_.resize(k);
        band_.resize(k + 1);
        sp_.resize(k + 2);
        sa_.resize(k + 2);
        sa2_.resize(k + 2);
        sve_.resize(k + 2);
        v_.resize(k);
    }

    [[nodiscard]] std::size_t n_strikes() const { return strikes_.size(); }
    [[nodiscard]] const std::vector<double>& strikes() const { return strikes_; }

    void evaluate(const GaussKernel& g, double theta,
                  std::span<const double> v) {
        const std::size_t k = strikes_.size();
        if (v.size() != k)
            throw std::invalid_argument("KernelMoments: v size mismatch");
        g_ = g;
        v_.assign(v.begin(), v.end());
        const double c = g.center;
        const double s = g.sigma;

        slope_[0] = -theta;
        icept_[0] = theta * c;  // exponent anchored at the current state
        for (std::size_t m = 0; m < k; ++m) {
            slope_[m + 1] = slope_[m] - v[m];
            icept_[m + 1] = icept_[m] + v[m] * strikes_[m];
            z_[m] = (strikes_[m] - c) / s;
        }
        zlo_ = g.truncated ? -c / s : -kInf;

        // Log magnitudes first, then a common frame.
        double fmax = -kInf;
        for (std::size_t j = 0; j <= k; ++j) {
            const double a = (j == 0) ? zlo_ : z_[j - 1];
            const double b = (j == k) ? kInf : z_[j];
            const double as = slope_[j] * s;
            double lg = -kInf;
            if (a < b) {
                const double logd = log_phi_diff(a - as, b - as);
                if (logd != -kInf)
                    lg = icept_[j] + slope_[j] * c + 0.5 * as * as + logd;
            }
            band_[j] = lg;
            if (lg > fmax) fmax = lg;
        }
        for (std::size_t m = 0; m < k; ++m) {
            const double lg = slope_[m] * strikes_[m] + icept_[m] -
                              0.5 * z_[m] * z_[m] + std::log(s * kInvSqrt2Pi);
            edge_[m] = lg;
            if (lg > fmax) fmax = lg;
        }
        double edge0lg = -kInf;
        if (g.truncated) {
            edge0lg = icept_[0] - 0.5 * zlo_ * zlo_ + std::log(s * kInvSqrt2Pi);
            if (edge0lg > fmax) fmax = edge0lg;
        }
        frame_ = fmax - detail::log_trunc_mass(g);

        // Materialize in the frame.
        for (std::size_t j = 0; j <= k; ++j)
            band_[j] = (band_[j] == -kInf) ? 0.0 : std::exp(band_[j] - fmax);
        for (std::size_t m = 0; m < k; ++m)
            edge_[m] = std::exp(edge_[m] - fmax);
        edge0_ = (edge0lg == -kInf) ? 0.0 : std::exp(edge0lg - fmax);

        sp_[k + 1] = sa_[k + 1] = sa2_[k + 1] = sve_[k + 1] = 0.0;
        sve_[k] = 0.0;
        for (std::size_t jj = k + 1; jj-- > 0;) {
            sp_[jj] = sp_[jj + 1] + band_[jj];
            sa_[jj] = sa_[jj + 1] + slope_[jj] * band_[jj];
            sa2_[jj] = sa2_[jj + 1] + slope_[jj] * slope_[jj] * band_[jj];
        }
        for (std::size_t mm = k; mm-- > 0;)
            sve_[mm] = sve_[mm + 1] + v_[mm] * edge_[mm];
    }

    [[nodiscard]] double frame() const { return frame_; }

    [[nodiscard]] double mass() const { return sp_[0]; }

    [[nodiscard]] double drift() const {
        const double s = g_.sigma;
        return s * s * sa_[0] + (g_.truncated ? edge0_ : 0.0);
    }

    [[nodiscard]] double square() const {
        const double s = g_.sigma;
        double val = s * s * sp_[0] + s * s * s * s * sa2_[0] - s * s * sve_[0];
        if (g_.truncated)
            val += (s * zlo_ + slope_[0] * s * s) * edge0_;
        return val;
    }

    // (s - K_m)^+ moment for the m-th strike.
    [[nodiscard]] double call(std::size_t m) const {
        const double s = g_.sigma;
        return edge_[m] + s * s * sa_[m + 1] +
               (g_.center - strikes_[m]) * sp_[m + 1];
    }

    // (s - K_m)^+ (s - K_l)^+ moment; order of m, l does not matter.
    [[nodiscard]] double callprod(std::size_t m, std::size_t l) const {
        if (m > l) std::swap(m, l);
        const double s = g_.sigma;
        const double s2 = s * s;
        const double p = g_.center - strikes_[m];
        const double q = g_.center - strikes_[l];
        return (s2 + p * q) * sp_[l + 1] + (p + q) * s2 * sa_[l + 1] +
               s2 * s2 * sa2_[l + 1] +
               (p + q + s * z_[l] + slope_[l + 1] * s2) * edge_[l] -
               s2 * sve_[l + 1];
    }

    // (s - q)^+ moment for an arbitrary level q (smile queries).
    [[nodiscard]] double call_at(double q) const {
        const double s = g_.sigma;
        const double c = g_.center;
        const std::size_t k = strikes_.size();
        if (g_.truncated && q < 0.0) {
            // Positive part is (s - q) on the whole truncated support.
            return drift() + (c - q) * mass();
        }
        std::size_t j = 0;
        while (j < k && q >= strikes_[j]) ++j;
        const double zq = (q - c) / s;
        const double as = slope_[j] * s;
        const double zhi = (j == k) ? kInf : z_[j];
        double ppart = 0.0;
        if (zq < zhi) {
            const double logd = log_phi_diff(zq - as, zhi - as);
            if (logd != -kInf)
                ppart = std::exp(icept_[j] + slope_[j] * c + 0.5 * as * as +
                                 logd - frame_ - detail::log_trunc_mass(g_));
        }
        const double eq =
            std::exp(slope_[j] * q + icept_[j] - 0.5 * zq * zq +
                     std::log(s * kInvSqrt2Pi) - frame_ -
                     detail::log_trunc_mass(g_));
        return eq + s * s * (slope_[j] * ppart + sa_[j + 1]) +
               (c - q) * (ppart + sp_[j + 1]);
    }

private:
    std::vector<double> strikes_;
    GaussKernel g_{};
    std::vector<double> v_;
    std::vector<double> slope_, icept_, z_;
    std::vector<double> edge_, band_;
    std::vector<double> sp_, sa_, sa2_, sve_;
    double edge0_ = 0.0;
    double zlo_ = -kInf;
    double frame_ = 0.0;
};

}  // namespace volcal
