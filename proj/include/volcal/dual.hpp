#pragma once
// Dual objective for one maturity step.  Decision variables are the potential
// u on the previous support, the martingale multiplier h (one theta per
// support point), and the strike multipliers V.  The objective is
//
//   G(u, h, V) = E^prev[u] + sum_K f_K(V_K) + sum_K V_K * mid_K
//              + sum_{s1} p(s1) * e^{-u(s1)} * I_u(s1; h, V),
//
// with f_K the bid-ask penalty conjugate (quadratic inside the band, linear
// outside).  Minimizing over u and h has closed-form / one-dimensional exact
// solutions (the marginal and martingale projections); minimization over V is
// a smooth convex problem handled by the outer Newton loop.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "volcal/kernels.hpp"
#include "volcal/marginal.hpp"
#include "volcal/parallel.hpp"
#include "volcal/prior.hpp"
#include "volcal/quotes.hpp"

namespace volcal {

// --- bid-ask penalty (convex conjugate of band-constrained repricing) -------
//
// f(V) = V^2 * omega / 2                 if  delta_bid <= V*omega <= delta_ask
//        delta_ask * V - delta_ask^2/(2 omega)   if V*omega > delta_ask
//        delta_bid * V - delta_bid^2/(2 omega)   if V*omega < delta_bid
//
// C^1, convex; gradient clips V*omega into [delta_bid, delta_ask].

[[nodiscard]] inline double penalty_value(double omega, double delta_bid,
                                          double delta_ask, double v) {
    const double t = v * omega;
    if (t > delta_ask) return delta_ask * v - delta_ask * delta_ask / (2.0 * omega);
    if (t < delta_bid) return delta_bid * v - delta_bid * delta_bid / (2.0 * omega);
    return 0.5 * v * t;
}

[[nodiscard]] inline double penalty_grad(double omega, double delta_bid,
                                         double delta_ask, double v) {
    return std::min(std::max(v * omega, delta_bid), delta_ask);
}

[[nodiscard]] inline double penalty_hess(double omega, double delta_bid,
                                         double delta_ask, double v) {
    const double t = v * omega;
    return (t >= delta_bid && t <= delta_ask) ? omega : 0.0;
}

// --- problem container ------------------------------------------------------

struct TransitionProblem {
    // Previous-maturity law (support and weights); weights > 0, sum ~ 1.
    std::vector<double> grid;
    std::vector<double> mass;
    double prev_maturity = 0.0;
    double maturity = 0.0;

    // Quoted strikes for this maturity with mid prices and band geometry.
    std::vector<double> strikes;
    std::vector<double> mid;
    std::vector<double> omega;
    std::vector<double> delta_bid;
    std::vector<double> delta_ask;

    PriorParams prior;            // kernel volatility sigma0 * s^beta
    bool truncate_at_zero = false;
    double scale = 100.0;         // price scale (spot) used by tolerances
    // Previous-law mass sitting at the zero state when the kernel volatility
    // vanishes there (state-power priors with beta > 0).  Such a state is
    // absorbing -- its transition law is the point mass at zero -- so it
    // carries no dual variables and adds nothing to any positive-strike call;
    // the mass is re-inserted when the next marginal is assembled.
    double absorbed_mass = 0.0;

    [[nodiscard]] double dt() const { return maturity - prev_maturity; }
    [[nodiscard]] std::size_t points() const { return grid.size(); }
    [[nodiscard]] std::size_t n_strikes() const { return strikes.size(); }

    [[nodiscard]] double kernel_sigma(double s1) const {
        return prior.sigma0 * std::pow(s1, prior.beta) * std::sqrt(dt());
    }
    [[nodiscard]] GaussKernel kernel_at(std::size_t i) const {
        return GaussKernel{grid[i], kernel_sigma(grid[i]), truncate_at_zero};
    }
};

// Builds the per-maturity problem from the previous law and a weighted quote
// slice.  Support points with negligible weight are dropped (they cannot
// influence prices at double precision but would make u ill-conditioned).
[[nodiscard]] inline TransitionProblem make_problem(
    const DiscreteMarginal& prev, const WeightedSlice& ws,
    const PriorParams& prior, bool truncate_at_zero = false,
    double min_mass = 1e-15) {
    TransitionProblem p;
    p.prev_maturity = prev.maturity;
    p.maturity = ws.slice.maturity;
    if (!(p.maturity > p.prev_maturity))
        throw std::invalid_argument("make_problem: maturities must increase");
    p.strikes = ws.strikes();
    p.mid = ws.mid;
    p.omega = ws.omega;
    p.delta_bid = ws.delta_bid;
    p.delta_ask = ws.delta_ask;
    p.prior = prior;
    p.truncate_at_zero = truncate_at_zero;
    p.scale = ws.slice.spot;
    for (std::size_t i = 0; i < prev.grid.size(); ++i) {
        if (prev.mass[i] < min_mass) continue;
        if (!(p.kernel_sigma(prev.grid[i]) > 0.0)) {
            // Vanishing kernel volatility makes the state absorbing.  That is
            // only valid bookkeeping when every quoted call is worthless from
            // the state, i.e. at the zero state under positive strikes.
            if (prev.grid[i] == 0.0 && !p.strikes.empty() &&
                p.strikes.front() > 0.0) {
                p.absorbed_mass += prev.mass[i];
                continue;
            }
            throw std::invalid_argument(
                "make_problem: kernel volatility vanishes at s1 = " +
                std::to_string(prev.grid[i]));
        }
        p.grid.push_back(prev.grid[i]);
        p.mass.push_back(prev.mass[i]);
    }
    if (p.grid.empty())
        throw std::invalid_argument("make_problem: previous law has no mass");
    return p;
}

// --- dual state -------------------------------------------------------------

struct DualState {
    std::vector<double> u;  // one per previous-support point
    std::vector<double> h;  // one per previous-support point
    std::vector<double> v;  // one per strike

    [[nodiscard]] static DualState zeros(std::size_t n_points,
                                         std::size_t n_strikes) {
        DualState s;
        s.u.assign(n_points, 0.0);
        s.h.assign(n_points, 0.0);
        s.v.assign(n_strikes, 0.0);
        return s;
    }

    [[nodiscard]] double max_abs() const {
        double m = 0.0;
        for (double x : u) m = std::max(m, std::fabs(x));
        for (double x : h) m = std::max(m, std::fabs(x));
        for (double x : v) m = std::max(m, std::fabs(x));
        return m;
    }
};

struct ProjectionReport {
    int max_newton_iters = 0;   // worst-case 1D iteration count across points
    bool bracket_breach = false;  // some theta ran past the divergence bound
    bool tol_failure = false;     // 1D solve hit its iteration cap unconverged
};

struct EvalRequest {
    bool want_value = true;
    bool want_grad = false;
    bool want_hess = false;
    bool want_metrics = false;
    // With want_hess: assemble the curvature of V -> min_{u,h} G instead of
    // the fixed-(u,h) Hessian.  Valid at states where (u, h) satisfy their
    // first-order conditions (i.e. after project()); used by the outer Newton
    // descent, which steps in V and re-projects (u, h) at every trial.
    bool projected_hess = false;
};

struct EvalResult {
    double value = 0.0;
    std::vector<double> grad_u, grad_h, grad_v;
    std::vector<double> prices;          // model call prices per strike
    Eigen::MatrixXd hess_v;
    double grad_inf = 0.0;               // over all requested blocks
    double marginal_err = 0.0;           // max_i |p_i e^{-u} I_u - p_i|
    double mart_err = 0.0;               // max_i |I_h / I_u| (price units)
    double band_viol = 0.0;              // max strike-band violation
};

namespace detail {
[[nodiscard]] inline double safe_exp(double t) {
    return std::exp(std::min(t, 700.0));
}
}  // namespace detail

// --- evaluator --------------------------------------------------------------
//
// Owns per-thread kernel-moment workspaces and per-point packet arrays.  All
// cross-point reductions run serially in point order, so results do not
// depend on the thread count.

class TransitionEvaluator {
  public:
    explicit TransitionEvaluator(const TransitionProblem& p, int threads = 1)
        : p_(&p), threads_(std::max(threads, 1)) {
        const std::size_t n = p.points();
        const std::size_t k = p.n_strikes();
        npairs_ = k * (k + 1) / 2;
        for (int t = 0; t < threads_; ++t) moments_.emplace_back(p.strikes);
        frame_.assign(n, 0.0);
        log_iu_.assign(n, 0.0);
        iu_.assign(n, 0.0);
        ih_.assign(n, 0.0);
        sq_.assign(n, 0.0);
        ik_.assign(n * k, 0.0);
        hp_.assign(n * npairs_, 0.0);
    }

    [[nodiscard]] const TransitionProblem& problem() const { return *p_; }

    // Exact minimization over h (per-point 1D root solve of the conditional
    // mean) followed by the closed-form u update u = log I_u.  Gradients in u
    // and h vanish after this call.
    ProjectionReport project(DualState& s, double h_tol_rel = 1e-12,
                             double theta_bound = 1e3) {
        const std::size_t n = p_->points();
        std::vector<int> iters(n, 0);
        std::vector<unsigned char> breach(n, 0), unconv(n, 0);
        par_for(n, threads_, [&](std::size_t i, int tid) {
            KernelMoments& km = moments_[static_cast<std::size_t>(tid)];
            solve_theta(i, km, s, h_tol_rel, theta_bound, &iters[i],
                        &breach[i], &unconv[i]);
        });
        ProjectionReport rep;
        for (std::size_t i = 0; i < n; ++i) {
            rep.max_newton_iters = std::max(rep.max_newton_iters, iters[i]);
            rep.bracket_breach = rep.bracket_breach || breach[i] != 0;
            rep.tol_failure = rep.tol_failure || unconv[i] != 0;
        }
        return rep;
    }

    // Evaluates the objective and requested derivatives at the given state.
    [[nodiscard]] EvalResult evaluate(const DualState& s, EvalRequest req) {
        const std::size_t n = p_->points();
        const std::size_t k = p_->n_strikes();
        const bool heavy = req.want_grad || req.want_hess || req.want_metrics;

        par_for(n, threads_, [&](std::size_t i, int tid) {
            KernelMoments& km = moments_[static_cast<std::size_t>(tid)];
            km.evaluate(p_->kernel_at(i), s.h[i], s.v);
            frame_[i] = km.frame();
            iu_[i] = km.mass();
            log_iu_[i] = km.frame() + std::log(km.mass());
            if (heavy) {
                ih_[i] = km.drift();
                for (std::size_t m = 0; m < k; ++m)
                    ik_[i * k + m] = km.call(m);
                if (req.want_hess) {
                    std::size_t idx = 0;
                    for (std::size_t m = 0; m < k; ++m)
                        for (std::size_t l = m; l < k; ++l)
                            hp_[i * npairs_ + idx++] = km.callprod(m, l);
                    if (req.projected_hess) sq_[i] = km.square();
                }
            }
        });

        EvalResult out;
        // Value: serial accumulation in point order.
        double val = 0.0;
        bool overflow = false;
        for (std::size_t i = 0; i < n; ++i) {
            const double t = log_iu_[i] - s.u[i];
            if (t > 700.0) overflow = true;
            val += p_->mass[i] * (s.u[i] + detail::safe_exp(t));
        }
        for (std::size_t m = 0; m < k; ++m) {
            val += penalty_value(p_->omega[m], p_->delta_bid[m],
                                 p_->delta_ask[m], s.v[m]) +
                   s.v[m] * p_->mid[m];
        }
        out.value = overflow ? std::numeric_limits<double>::infinity() : val;
        if (!heavy) return out;

        // Reweighted kernel masses w_i = p_i e^{F_i - u_i} (serial order).
        std::vector<double> w(n);
        for (std::size_t i = 0; i < n; ++i)
            w[i] = p_->mass[i] * detail::safe_exp(frame_[i] - s.u[i]);

        out.prices.assign(k, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t m = 0; m < k; ++m)
                out.prices[m] += w[i] * ik_[i * k + m];

        if (req.want_grad) {
            out.grad_u.assign(n, 0.0);
            out.grad_h.assign(n, 0.0);
            out.grad_v.assign(k, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                out.grad_u[i] =
                    p_->mass[i] * (1.0 - detail::safe_exp(log_iu_[i] - s.u[i]));
                out.grad_h[i] = -w[i] * ih_[i];
            }
            for (std::size_t m = 0; m < k; ++m) {
                out.grad_v[m] = penalty_grad(p_->omega[m], p_->delta_bid[m],
                                             p_->delta_ask[m], s.v[m]) +
                                p_->mid[m] - out.prices[m];
            }
            for (double g : out.grad_u)
                out.grad_inf = std::max(out.grad_inf, std::fabs(g));
            for (double g : out.grad_h)
                out.grad_inf = std::max(out.grad_inf, std::fabs(g));
            for (double g : out.grad_v)
                out.grad_inf = std::max(out.grad_inf, std::fabs(g));
        }

        if (req.want_hess) {
            out.hess_v = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k),
                                               static_cast<Eigen::Index>(k));
            // E[(s - c)(s - K_m)^+] per strike, for the projected curvature.
            std::vector<double> dc(req.projected_hess ? k : 0);
            for (std::size_t i = 0; i < n; ++i) {
                const double* cp = &hp_[i * npairs_];
                double mass = 0.0, dh = 0.0, det2 = 0.0;
                bool correct = false;
                if (req.projected_hess) {
                    mass = iu_[i];
                    dh = ih_[i];
                    const double q = sq_[i];
                    // 2x2 Gram determinant of (1, s - c) under the tilted
                    // kernel; positive unless the conditional law degenerates.
                    det2 = mass * q - dh * dh;
                    correct = det2 > 1e-12 * mass * q;
                    for (std::size_t m = 0; m < k; ++m) {
                        const std::size_t diag = m * k - m * (m - 1) / 2;
                        // (s-c)(s-K)^+ = (s-K)(s-K)^+ + (K-c)(s-K)^+
                        dc[m] = cp[diag] + (p_->strikes[m] - p_->grid[i]) *
                                               ik_[i * k + m];
                    }
                }
                std::size_t idx = 0;
                for (std::size_t m = 0; m < k; ++m)
                    for (std::size_t l = m; l < k; ++l) {
                        double c = cp[idx++];
                        if (correct) {
                            const double xm = ik_[i * k + m];
                            const double xl = ik_[i * k + l];
                            // Response of the exact (u, h) minimizers to V:
                            // Schur complement of the per-point 2x2 block.
                            c -= (sq_[i] * xm * xl - dh * (xm * dc[l] + dc[m] * xl) +
                                  mass * dc[m] * dc[l]) /
                                 det2;
                        }
                        c *= w[i];
                        out.hess_v(static_cast<Eigen::Index>(m),
                                   static_cast<Eigen::Index>(l)) += c;
                        if (l != m)
                            out.hess_v(static_cast<Eigen::Index>(l),
                                       static_cast<Eigen::Index>(m)) += c;
                    }
            }
            for (std::size_t m = 0; m < k; ++m)
                out.hess_v(static_cast<Eigen::Index>(m),
                           static_cast<Eigen::Index>(m)) +=
                    penalty_hess(p_->omega[m], p_->delta_bid[m],
                                 p_->delta_ask[m], s.v[m]);
        }

        if (req.want_metrics) {
            for (std::size_t i = 0; i < n; ++i) {
                const double implied =
                    p_->mass[i] * detail::safe_exp(log_iu_[i] - s.u[i]);
                out.marginal_err =
                    std::max(out.marginal_err, std::fabs(implied - p_->mass[i]));
                out.mart_err =
                    std::max(out.mart_err, std::fabs(ih_[i] / iu_[i]));
            }
            for (std::size_t m = 0; m < k; ++m) {
                const double lo = p_->mid[m] + p_->delta_bid[m];
                const double hi = p_->mid[m] + p_->delta_ask[m];
                out.band_viol = std::max(
                    out.band_viol,
                    std::max(out.prices[m] - hi, lo - out.prices[m]));
            }
            out.band_viol = std::max(out.band_viol, 0.0);
        }
        return out;
    }

  private:
    void solve_theta(std::size_t i, KernelMoments& km, DualState& s,
                     double tol_rel, double theta_bound, int* iters,
                     unsigned char* breach, unsigned char* unconv) {
        const GaussKernel g = p_->kernel_at(i);
        const double scale = std::max(1.0, std::fabs(g.center));
        double theta = s.h[i];
        double lo = -kInf, hi = kInf;  // I_h > 0 at lo side, < 0 at hi side
        const int cap = 200;
        int it = 0;
        for (; it < cap; ++it) {
            km.evaluate(g, theta, s.v);
            const double ih = km.drift();
            const double iu = km.mass();
            if (std::fabs(ih) <= tol_rel * iu * scale) break;
            // I_h is strictly decreasing in theta (d I_h / d theta = -I_2).
            if (ih > 0.0)
                lo = std::max(lo, theta);
            else
                hi = std::min(hi, theta);
            const double i2 = km.square();
            double next = theta + ih / i2;
            if (std::isfinite(lo) && std::isfinite(hi) &&
                (next <= lo || next >= hi))
                next = 0.5 * (lo + hi);
            if (!(std::isfinite(next)) || next == theta) {
                if (std::isfinite(lo) && std::isfinite(hi))
                    next = 0.5 * (lo + hi);
                if (next == theta) break;  // no representable progress
            }
            theta = next;
            if (std::fabs(theta) > theta_bound) {
                *breach = 1;
                break;
            }
        }
        if (it == cap) *unconv = 1;
        *iters = it;
        s.h[i] = theta;
        // Closed-form u update at the (new) theta: u = log I_u.
        km.evaluate(g, theta, s.v);
        s.u[i] = km.frame() + std::log(km.mass());
    }

    const TransitionProblem* p_;
    int threads_;
    std::size_t npairs_ = 0;
    std::vector<KernelMoments> moments_;
    std::vector<double> frame_, log_iu_, iu_, ih_, sq_, ik_, hp_;
};

// --- convenience wrappers (single-threaded, used by tests) ------------------

[[nodiscard]] inline double g12_value(const TransitionProblem& p,
                                      const DualState& s) {
    TransitionEvaluator ev(p, 1);
    return ev.evaluate(s, {true, false, false, false}).value;
}

[[nodiscard]] inline EvalResult g12_derivatives(const TransitionProblem& p,
                                                const DualState& s) {
    TransitionEvaluator ev(p, 1);
    return ev.evaluate(s, {true, true, true, true});
}

inline ProjectionReport project_uh(const TransitionProblem& p, DualState& s,
                                   double h_tol_rel = 1e-12,
                                   double theta_bound = 1e3) {
    TransitionEvaluator ev(p, 1);
    return ev.project(s, h_tol_rel, theta_bound);
}

}  // namespace volcal
