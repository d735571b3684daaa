#pragma once
// Log-domain scalar utilities: stable normal-tail functions, a signed
// mantissa/exponent value type for quantities whose natural scale is e^{±10^4},
// and small derivative-free minimizers used by the prior-fitting routines.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

namespace volcal {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kInvSqrt2 = 0.70710678118654752440;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;
inline constexpr double kLogSqrtPi = 0.57236494292470008707;
inline constexpr double kLn2 = 0.69314718055994530942;

[[nodiscard]] inline double norm_pdf(double x) {
    return kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

[[nodiscard]] inline double norm_cdf(double x) {
    return 0.5 * std::erfc(-x * kInvSqrt2);
}

// log(erfc(x)) for x >= 0.  Direct evaluation underflows near x ~ 26.6; beyond
// x = 20 we switch to the asymptotic expansion
//   erfc(x) = exp(-x^2) / (x sqrt(pi)) * (1 - 1/(2x^2) + 3/(4x^4) - ...),
// whose truncation error at x = 20 is far below double rounding.
[[nodiscard]] inline double log_erfc_pos(double x) {
    if (x < 20.0) return std::log(std::erfc(x));
    const double ix2 = 1.0 / (x * x);
    const double series =
        1.0 + ix2 * (-0.5 + ix2 * (0.75 + ix2 * (-1.875 + ix2 * 6.5625)));
    return -x * x - std::log(x) - kLogSqrtPi + std::log(series);
}

// log(1 - e^t) for t <= 0, switching between log(-expm1) and log1p(-exp) at
// -ln 2 to keep full precision on both ends.
[[nodiscard]] inline double log1mexp(double t) {
    if (t >= 0.0) return -kInf;  // only reachable at t == 0 for valid input
    return (t > -kLn2) ? std::log(-std::expm1(t)) : std::log1p(-std::exp(t));
}

// log(Phi(b) - Phi(a)) for a <= b; either endpoint may be infinite.  The three
// branches avoid catastrophic cancellation: opposite signs use a sum of erf
// values, a common sign uses erfc-ratio differences via expm1.
[[nodiscard]] inline double log_phi_diff(double a, double b) {
    if (!(a < b)) return -kInf;
    if (a == -kInf && b == kInf) return 0.0;
    if (a <= 0.0 && b >= 0.0) {
        const double hi = (b == kInf) ? 1.0 : std::erf(b * kInvSqrt2);
        const double lo = (a == -kInf) ? 1.0 : std::erf(-a * kInvSqrt2);
        return std::log(0.5 * (hi + lo));
    }
    if (b <= 0.0) return log_phi_diff(-b, -a);
    // 0 < a < b: Phi(b) - Phi(a) = (erfc(a/sqrt2) - erfc(b/sqrt2)) / 2.
    const double la = log_erfc_pos(a * kInvSqrt2);
    if (b == kInf) return la - kLn2;
    const double lb = log_erfc_pos(b * kInvSqrt2);
    return la - kLn2 + log1mexp(lb - la);
}

// Signed value stored as mant * exp(lg).  The mantissa carries the sign and a
// moderate magnitude; lg absorbs the extreme scale.  Exact zero is mant == 0.
struct ScaledReal {
    double mant = 0.0;
    double lg = 0.0;

    [[nodiscard]] static ScaledReal zero() { return {}; }
    [[nodiscard]] static ScaledReal from_log(double logmag, double sign = 1.0) {
        return {sign, logmag};
    }

    [[nodiscard]] bool is_zero() const { return mant == 0.0; }
    [[nodiscard]] double sign() const {
        return (mant > 0.0) ? 1.0 : (mant < 0.0 ? -1.0 : 0.0);
    }
    [[nodiscard]] double log_abs() const {
        return is_zero() ? -kInf : lg + std::log(std::fabs(mant));
    }
    // Collapses to a plain double; may overflow/underflow exactly as the value
    // itself would.
    [[nodiscard]] double to_double() const { return mant * std::exp(lg); }

    [[nodiscard]] friend ScaledReal operator*(const ScaledReal& x,
                                              const ScaledReal& y) {
        if (x.is_zero() || y.is_zero()) return zero();
        return {x.sign() * y.sign(), x.log_abs() + y.log_abs()};
    }
    [[nodiscard]] friend ScaledReal operator/(const ScaledReal& x,
                                              const ScaledReal& y) {
        return {x.sign() * y.sign(), x.log_abs() - y.log_abs()};
    }
    // Ratio collapsed to a double; the scales cancel first.
    [[nodiscard]] double ratio_to(const ScaledReal& y) const {
        if (is_zero()) return 0.0;
        return sign() * y.sign() * std::exp(log_abs() - y.log_abs());
    }
};

// Streaming signed sum of terms mant * e^{lg}.  Keeps a running frame equal to
// the largest exponent seen and accumulates mantissas inside it, so mixed-sign
// sums spanning hundreds of decades stay finite.
class ScaledSum {
public:
    void add(double mant, double lg) {
        if (mant == 0.0) return;
        if (std::isinf(shift_) && shift_ < 0.0) {
            shift_ = lg;
            acc_ = mant;
            return;
        }
        if (lg <= shift_) {
            acc_ += mant * std::exp(lg - shift_);
        } else {
            acc_ = acc_ * std::exp(shift_ - lg) + mant;
            shift_ = lg;
        }
    }
    void add(const ScaledReal& x) { add(x.mant, x.lg); }

    [[nodiscard]] ScaledReal total() const {
        if (std::isinf(shift_) && shift_ < 0.0) return ScaledReal::zero();
        return {acc_, shift_};
    }

private:
    double shift_ = -kInf;
    double acc_ = 0.0;
};

// ---------------------------------------------------------------------------
// Derivative-free minimizers (used for the low-dimensional prior fits).
// ---------------------------------------------------------------------------

struct ScalarMinResult {
    double x = 0.0;
    double value = 0.0;
};

// Golden-section search on [lo, hi]; f must be continuous and the bracket
// should contain a minimizer.  Terminates when the bracket width falls below
// tol * (1 + |x|).
inline ScalarMinResult golden_section_min(const std::function<double(double)>& f,
                                          double lo, double hi, double tol,
                                          int max_iter = 200) {
    constexpr double kInvPhi = 0.61803398874989484820;
    double a = lo, b = hi;
    double c = b - kInvPhi * (b - a);
    double d = a + kInvPhi * (b - a);
    double fc = f(c), fd = f(d);
    for (int it = 0; it < max_iter && (b - a) > tol * (1.0 + std::fabs(a)); ++it) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - kInvPhi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + kInvPhi * (b - a);
            fd = f(d);
        }
    }
    const double xm = 0.5 * (a + b);
    return {xm, f(xm)};
}

struct SimplexMinResult {
    std::vector<double> x;
    double value = 0.0;
    int iterations = 0;
};

// Nelder-Mead in dimension n (intended for n == 2) with standard reflection,
// expansion, contraction and shrink coefficients.  Stops when both the simplex
// diameter and the value spread fall below tol.
inline SimplexMinResult nelder_mead_min(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> x0, std::vector<double> step, double tol,
    int max_iter = 500) {
    const std::size_t n = x0.size();
    std::vector<std::vector<double>> pts(n + 1, x0);
    for (std::size_t i = 0; i < n; ++i) pts[i + 1][i] += step[i];
    std::vector<double> vals(n + 1);
    for (std::size_t i = 0; i <= n; ++i) vals[i] = f(pts[i]);

    auto order = [&] {
        for (std::size_t i = 0; i <= n; ++i)
            for (std::size_t j = i + 1; j <= n; ++j)
                if (vals[j] < vals[i]) {
                    std::swap(vals[i], vals[j]);
                    std::swap(pts[i], pts[j]);
                }
    };

    int it = 0;
    for (; it < max_iter; ++it) {
        order();
        double diam = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            diam = std::max(diam, std::fabs(pts[n][i] - pts[0][i]));
        if (diam < tol && std::fabs(vals[n] - vals[0]) < tol) break;

        std::vector<double> centroid(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) centroid[j] += pts[i][j];
        }
        for (double& c : centroid) c /= static_cast<double>(n);

        auto blend = [&](double coef) {
            std::vector<double> p(n);
            for (std::size_t j = 0; j < n; ++j)
                p[j] = centroid[j] + coef * (pts[n][j] - centroid[j]);
            return p;
        };

        std::vector<double> refl = blend(-1.0);
        double frefl = f(refl);
        if (frefl < vals[0]) {
            std::vector<double> expd = blend(-2.0);
            double fexpd = f(expd);
            if (fexpd < frefl) {
                pts[n] = std::move(expd);
                vals[n] = fexpd;
            } else {
                pts[n] = std::move(refl);
                vals[n] = frefl;
            }
        } else if (frefl < vals[n - 1]) {
            pts[n] = std::move(refl);
            vals[n] = frefl;
        } else {
            std::vector<double> ctr = blend(frefl < vals[n] ? -0.5 : 0.5);
            double fctr = f(ctr);
            if (fctr < std::min(frefl, vals[n])) {
                pts[n] = std::move(ctr);
                vals[n] = fctr;
            } else {
                for (std::size_t i = 1; i <= n; ++i) {
                    for (std::size_t j = 0; j < n; ++j)
                        pts[i][j] = pts[0][j] + 0.5 * (pts[i][j] - pts[0][j]);
                    vals[i] = f(pts[i]);
                }
            }
        }
    }
    order();
    return {pts[0], vals[0], it};
}

}  // namespace volcal
