#pragma once
// Surface orchestration: sequential per-maturity calibration, discretization
// of the implied one-period law onto a uniform grid (preserving mass and cell
// means so the discrete law dominates the continuous one in convex order up
// to the recorded tail budget), and smile queries that reprice through the
// same kernel moments the solver used.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "volcal/arbitrage.hpp"
#include "volcal/dual.hpp"
#include "volcal/kernels.hpp"
#include "volcal/marginal.hpp"
#include "volcal/pricing.hpp"
#include "volcal/prior.hpp"
#include "volcal/quotes.hpp"
#include "volcal/solver.hpp"

namespace volcal {

// --- discretization ---------------------------------------------------------

struct DiscretizeConfig {
    int n = 200;               // grid points
    double tail_tol = 1e-10;   // absolute call-value budget for the cut tails
    double center = 0.0;       // location hint (typically the spot)
    double width = 1.0;        // scale hint (effective standard deviation)
    std::vector<double> kinks; // density kink locations (quoted strikes)
    bool clamp_zero = true;    // restrict support to [0, inf)
    double a_override = std::numeric_limits<double>::quiet_NaN();
    double b_override = std::numeric_limits<double>::quiet_NaN();
};

struct DiscretizeResult {
    DiscreteMarginal marginal;
    double a = 0.0;
    double b = 0.0;
    double error_bound = 0.0;  // (b - a)/n + tail_tol
};

namespace detail {

// 16-point Gauss-Legendre nodes/weights on [-1, 1] (positive half; mirrored).
inline constexpr double kGlX[8] = {
    0.0950125098376374, 0.2816035507792589, 0.4580167776572274,
    0.6178762444026438, 0.7554044083550030, 0.8656312023878318,
    0.9445750230732326, 0.9894009349916499};
inline constexpr double kGlW[8] = {
    0.1894506104550685, 0.1826034150449236, 0.1691565193950025,
    0.1495959888165767, 0.1246289712555339, 0.0951585116824928,
    0.0622535239386479, 0.0271524594117541};

struct SegmentMoments {
    double m0 = 0.0;  // mass
    double m1 = 0.0;  // first moment
};

inline SegmentMoments integrate_segment(
    const std::function<double(double)>& density, double lo, double hi) {
    SegmentMoments sm;
    if (!(hi > lo)) return sm;
    const double c = 0.5 * (lo + hi), r = 0.5 * (hi - lo);
    for (int q = 0; q < 8; ++q) {
        for (int sgn = -1; sgn <= 1; sgn += 2) {
            const double x = c + sgn * r * kGlX[q];
            const double w = r * kGlW[q];
            const double d = density(x);
            sm.m0 += w * d;
            sm.m1 += w * d * x;
        }
    }
    return sm;
}

}  // namespace detail

// Projects a continuous density onto a uniform n-point grid.  Each grid cell
// is integrated (split at density kinks) and its mass pushed to the two cell
// endpoints preserving the cell mean; mass beyond the grid is lumped at the
// boundary nodes.  Endpoint splitting dilates each cell's conditional law, so
// the discrete measure dominates the continuous one in convex order up to the
// tail budget; the reported error bound is (b - a)/n + tail_tol.
[[nodiscard]] inline DiscretizeResult discretize_marginal(
    const std::function<double(double)>& density, double k_min,
    const DiscretizeConfig& cfg) {
    if (cfg.n < 2) throw std::invalid_argument("discretize_marginal: n < 2");
    if (!(cfg.width > 0.0))
        throw std::invalid_argument("discretize_marginal: width <= 0");
    const double w = cfg.width;

    double a = cfg.center - 6.0 * w;
    if (cfg.clamp_zero) a = std::max(0.0, a);
    if (std::isfinite(cfg.a_override)) a = cfg.a_override;

    // Upper boundary: march panels outward and keep the call-value tail
    // (weighted by distance to k_min) within half the budget.
    double b;
    std::vector<detail::SegmentMoments> panels;
    double b0 = std::max(cfg.center + 6.0 * w, a + w);
    if (std::isfinite(cfg.b_override)) {
        b = cfg.b_override;
        b0 = b;
    } else {
        const int max_panels = 240;
        std::vector<double> call_tail(max_panels + 1, 0.0);
        panels.resize(max_panels);
        for (int j = 0; j < max_panels; ++j)
            panels[j] = detail::integrate_segment(density, b0 + j * w,
                                                  b0 + (j + 1) * w);
        for (int j = max_panels - 1; j >= 0; --j) {
            const double contrib =
                std::max(panels[j].m1 - k_min * panels[j].m0, 0.0);
            call_tail[j] = call_tail[j + 1] + contrib;
        }
        int cut = max_panels;
        for (int j = 0; j <= max_panels; ++j) {
            if (call_tail[j] <= 0.5 * cfg.tail_tol) {
                cut = j;
                break;
            }
        }
        b = b0 + cut * w;
        panels.erase(panels.begin(),
                     panels.begin() + std::min<std::size_t>(cut, panels.size()));
    }
    if (!(b > a)) throw std::invalid_argument("discretize_marginal: b <= a");

    const int n = cfg.n;
    const double h = (b - a) / (n - 1);
    std::vector<double> grid(n), mass(n, 0.0);
    for (int j = 0; j < n; ++j) grid[j] = a + j * h;
    grid[n - 1] = b;

    // Sorted kink list restricted to (a, b).
    std::vector<double> kinks;
    for (double kk : cfg.kinks)
        if (kk > a && kk < b) kinks.push_back(kk);
    std::sort(kinks.begin(), kinks.end());

    std::size_t next_kink = 0;
    for (int j = 0; j + 1 < n; ++j) {
        const double xl = grid[j], xr = grid[j + 1];
        while (next_kink < kinks.size() && kinks[next_kink] <= xl) ++next_kink;
        double segl = xl;
        detail::SegmentMoments cell;
        std::size_t kix = next_kink;
        while (kix < kinks.size() && kinks[kix] < xr) {
            const auto sm = detail::integrate_segment(density, segl, kinks[kix]);
            cell.m0 += sm.m0;
            cell.m1 += sm.m1;
            segl = kinks[kix];
            ++kix;
        }
        const auto sm = detail::integrate_segment(density, segl, xr);
        cell.m0 += sm.m0;
        cell.m1 += sm.m1;
        if (cell.m0 <= 0.0) continue;
        double xbar = cell.m1 / cell.m0;
        xbar = std::min(std::max(xbar, xl), xr);
        const double wl = cell.m0 * (xr - xbar) / h;
        mass[j] += wl;
        mass[j + 1] += cell.m0 - wl;
    }

    // Tails: lump mass beyond the grid at the boundary nodes.
    {
        const double lo_end = cfg.clamp_zero ? 0.0 : a - 30.0 * w;
        if (a > lo_end) {
            const int pl = 60;
            const double hw = (a - lo_end) / pl;
            detail::SegmentMoments lo;
            for (int j = 0; j < pl; ++j) {
                const auto sm = detail::integrate_segment(
                    density, lo_end + j * hw, lo_end + (j + 1) * hw);
                lo.m0 += sm.m0;
                lo.m1 += sm.m1;
            }
            mass[0] += lo.m0;
        }
        if (std::isfinite(cfg.b_override)) {
            const int pu = 60;
            detail::SegmentMoments up;
            for (int j = 0; j < pu; ++j) {
                const auto sm = detail::integrate_segment(density, b + j * w,
                                                          b + (j + 1) * w);
                up.m0 += sm.m0;
                up.m1 += sm.m1;
            }
            mass[n - 1] += up.m0;
        } else {
            for (const auto& pm : panels) mass[n - 1] += pm.m0;
        }
    }

    double total = 0.0;
    for (double m : mass) total += m;
    if (!(total > 0.0))
        throw std::invalid_argument(
            "discretize_marginal: density integrates to zero on the grid");
    for (double& m : mass) m /= total;

    DiscretizeResult out;
    out.marginal.grid = std::move(grid);
    out.marginal.mass = std::move(mass);
    out.a = a;
    out.b = b;
    out.error_bound = (b - a) / n + cfg.tail_tol;
    return out;
}

// --- implied one-period law -------------------------------------------------

// Density of the calibrated law at the slice maturity:
//   rho(s2) = sum_i p_i * exp(E_i(s2)) * phi_{sigma_i}(s2 - s1_i) / I_u(i).
class TransitionDensity {
  public:
    TransitionDensity(const TransitionProblem& p, const DualState& s)
        : p_(&p) {
        KernelMoments km(p.strikes);
        const std::size_t n = p.points();
        exponents_.reserve(n);
        log_norm_.resize(n);
        sigma_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            exponents_.push_back(
                payoff_exponent(p.strikes, s.v, s.h[i], p.grid[i]));
            km.evaluate(p.kernel_at(i), s.h[i], s.v);
            sigma_[i] = p.kernel_sigma(p.grid[i]);
            log_norm_[i] = km.frame() + std::log(km.mass()) +
                           std::log(sigma_[i]) + 0.5 * std::log(2.0 * M_PI);
        }
    }

    [[nodiscard]] double operator()(double s2) const {
        if (p_->truncate_at_zero && s2 < 0.0) return 0.0;
        double acc = 0.0;
        for (std::size_t i = 0; i < p_->points(); ++i) {
            const double z = (s2 - p_->grid[i]) / sigma_[i];
            const double t =
                exponents_[i].value(s2) - 0.5 * z * z - log_norm_[i];
            acc += p_->mass[i] * detail::safe_exp(t);
        }
        return acc;
    }

  private:
    const TransitionProblem* p_;
    std::vector<PiecewiseExponent> exponents_;
    std::vector<double> log_norm_;
    std::vector<double> sigma_;
};

// --- calibrated surface -----------------------------------------------------

struct CalibrationError : std::runtime_error {
    SolveStatus status;
    double maturity;
    // Warnings accumulated before the failing slice (spread-check results,
    // boundary prior fits, ...); carried so callers can still surface them.
    std::vector<std::string> warnings;
    CalibrationError(SolveStatus st, double mat, const std::string& msg)
        : std::runtime_error("calibration failed at maturity " +
                             std::to_string(mat) + ": " + msg),
          status(st),
          maturity(mat) {}
};

struct CalibratedSlice {
    TransitionProblem problem;   // inputs, previous support, kernel parameters
    PriorFit prior_fit;
    DualState dual;              // converged potentials (u fresh, h fresh)
    DiscreteMarginal marginal;   // discretized law at this maturity
    double disc_a = 0.0, disc_b = 0.0, disc_error_bound = 0.0;
    std::vector<TraceRow> trace;
    double lambda_hat = 0.0;
    bool rate_stalled = false;
    int iterations = 0;
    double final_grad_inf = 0.0;
    double monotone_violation = 0.0;  // largest objective increase seen
};

struct CalibratedSurface {
    double spot = 0.0;
    double lambda = 0.0;
    int grid_n = 200;
    double tail_tol = 1e-10;
    double grad_tol_rel = 1e-8;
    bool truncate_at_zero = false;
    std::vector<CalibratedSlice> slices;
    std::vector<std::string> warnings;
};

struct SurfaceConfig {
    SolverConfig solver;
    int grid_n = 200;
    double tail_tol = 1e-10;
    double eps_floor = 1e-4;
    bool truncate_at_zero = false;
    bool run_checks = true;
};

[[nodiscard]] inline CalibratedSurface calibrate_surface(
    const QuoteSet& qs, const SurfaceConfig& cfg = {}) {
    if (qs.slices.empty())
        throw ValidationError("calibrate_surface: no quote slices");
    CalibratedSurface surf;
    surf.spot = qs.spot;
    surf.lambda = qs.slices.front().lambda;
    surf.grid_n = cfg.grid_n;
    surf.tail_tol = cfg.tail_tol;
    surf.grad_tol_rel = cfg.solver.grad_tol_rel;
    surf.truncate_at_zero = cfg.truncate_at_zero;
    surf.warnings = qs.warnings;

    std::vector<WeightedSlice> weighted;
    weighted.reserve(qs.slices.size());
    for (const auto& sl : qs.slices)
        weighted.push_back(compute_weights(sl, cfg.eps_floor));

    if (cfg.run_checks) {
        const SpreadReport rep = check_quotes(weighted);
        if (!rep.overall_pass)
            surf.warnings.push_back(
                "static-arbitrage checks failed (" +
                std::to_string(rep.failures()) +
                " violations); proceeding, solver divergence is authoritative");
    }

    DiscreteMarginal prev = dirac_marginal(qs.spot, 0.0);
    double width_acc_sq = 0.0;

    for (std::size_t si = 0; si < weighted.size(); ++si) {
        const WeightedSlice& ws = weighted[si];
        const bool first = si == 0;
        const double dt = ws.slice.maturity - prev.maturity;

        PriorFit prior = first ? fit_first_prior(ws)
                               : fit_transition_prior(prev, ws, dt);
        if (prior.at_boundary)
            surf.warnings.push_back(
                "prior fit pinned at the search boundary for maturity " +
                std::to_string(ws.slice.maturity));

        TransitionProblem prob = make_problem(prev, ws, prior.params,
                                              cfg.truncate_at_zero);

        const ProbeResult probe = non_degeneracy_probe(ws, prev, {});
        if (!probe.pass)
            surf.warnings.push_back("non-degeneracy probe inconclusive at maturity " +
                                    std::to_string(ws.slice.maturity) + ": " +
                                    probe.detail);

        SliceSolveResult res = sinkhorn_calibrate(prob, cfg.solver);
        if (res.status != SolveStatus::Converged) {
            CalibrationError err(res.status, ws.slice.maturity, res.message);
            err.warnings = surf.warnings;
            throw err;
        }

        const double sig_spot =
            prior.params.sigma0 * std::pow(qs.spot, prior.params.beta);
        width_acc_sq += sig_spot * sig_spot * dt;

        TransitionDensity dens(prob, res.state);
        DiscretizeConfig dc;
        dc.n = cfg.grid_n;
        dc.tail_tol = cfg.tail_tol;
        dc.center = qs.spot;
        dc.width = std::sqrt(width_acc_sq);
        dc.kinks = prob.strikes;
        dc.clamp_zero = true;
        const double k_min = (si + 1 < weighted.size())
                                 ? weighted[si + 1].strike(0)
                                 : ws.strike(0);
        DiscretizeResult dr = discretize_marginal(
            [&dens](double x) { return dens(x); }, k_min, dc);
        dr.marginal.maturity = ws.slice.maturity;
        if (prob.absorbed_mass > 0.0) {
            // Mass absorbed at the zero state bypassed the transition
            // problem (its continuation is the point mass at zero), so the
            // density the discretizer normalized carried only the rest.
            // Restore the split and park the absorbed mass at the lowest
            // node, which is the zero boundary when the grid is clamped.
            const double keep = 1.0 - prob.absorbed_mass;
            for (double& m : dr.marginal.mass) m *= keep;
            dr.marginal.mass.front() += prob.absorbed_mass;
        }

        CalibratedSlice cs;
        cs.problem = std::move(prob);
        cs.prior_fit = prior;
        cs.dual = std::move(res.state);
        cs.marginal = std::move(dr.marginal);
        cs.disc_a = dr.a;
        cs.disc_b = dr.b;
        cs.disc_error_bound = dr.error_bound;
        cs.trace = std::move(res.trace);
        cs.lambda_hat = res.lambda_hat;
        cs.rate_stalled = res.rate_stalled;
        cs.iterations = res.iterations;
        cs.final_grad_inf = res.final_grad_inf;
        cs.monotone_violation = res.monotone_violation;
        surf.slices.push_back(std::move(cs));

        prev = surf.slices.back().marginal;
    }
    return surf;
}

// --- smile queries ----------------------------------------------------------

struct SmilePoint {
    double strike = 0.0;
    double price = 0.0;
    std::optional<double> implied_vol;
};

// Reprices calls at the given strikes for one calibrated maturity, through
// the same kernel moments the solver converged on.  Implied volatility is
// attached where the price sits strictly inside the invertible range.
[[nodiscard]] inline std::vector<SmilePoint> query_smile(
    const CalibratedSurface& surf, std::size_t slice_index,
    const std::vector<double>& strikes) {
    if (slice_index >= surf.slices.size())
        throw std::out_of_range("query_smile: slice index out of range");
    const CalibratedSlice& cs = surf.slices[slice_index];
    const TransitionProblem& p = cs.problem;
    const double t = p.maturity;

    std::vector<SmilePoint> out(strikes.size());
    for (std::size_t q = 0; q < strikes.size(); ++q)
        out[q].strike = strikes[q];

    KernelMoments km(p.strikes);
    for (std::size_t i = 0; i < p.points(); ++i) {
        km.evaluate(p.kernel_at(i), cs.dual.h[i], cs.dual.v);
        const double w = p.mass[i] *
                         detail::safe_exp(km.frame() - cs.dual.u[i]);
        for (std::size_t q = 0; q < strikes.size(); ++q)
            out[q].price += w * km.call_at(strikes[q]);
    }
    for (auto& pt : out) {
        try {
            pt.implied_vol = implied_vol(surf.spot, pt.strike, t, pt.price);
        } catch (const std::domain_error&) {
            pt.implied_vol.reset();
        }
    }
    return out;
}

[[nodiscard]] inline std::vector<double> uniform_strike_grid(double lo,
                                                            double hi, int n) {
    if (n < 2 || !(hi > lo))
        throw std::invalid_argument("uniform_strike_grid: bad range");
    std::vector<double> ks(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j)
        ks[static_cast<std::size_t>(j)] = lo + (hi - lo) * j / (n - 1.0);
    return ks;
}

}  // namespace volcal
