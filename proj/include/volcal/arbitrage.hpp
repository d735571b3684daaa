#pragma once
// Static-arbitrage verification of bid-ask quote sets (vertical, calendar and
// butterfly spread sign conditions) and a cheap non-degeneracy probe for the
// feasibility of calibrating a slice against an already-built marginal.
//
// The spread checks are necessary-and-sufficient conditions for the existence
// of a consistent martingale when applied to exact prices; on bid-ask data we
// apply their widened forms: each condition uses the most favorable side of
// the spread, so a failure is a genuine arbitrage certificate while a pass is
// only "no static arbitrage visible at the quoted spreads".

#include <cmath>
#include <cstddef>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "volcal/marginal.hpp"
#include "volcal/quotes.hpp"

namespace volcal {

struct VerticalCheck {
    std::size_t slice = 0;   // maturity index (0-based)
    std::size_t strike = 0;  // strike index within slice (0-based, real strikes)
    double value = 0.0;      // VS
    bool pass = true;
    bool strict_warning = false;  // strictness (equality) case, not a failure
};

struct CalendarCheck {
    std::size_t slice1 = 0, slice2 = 0;    // i1 < i2
    std::optional<std::size_t> strike1, strike2;  // empty = synthetic strike 0
    double k1 = 0.0, k2 = 0.0;
    double value = 0.0;  // CVS
    bool pass = true;
    bool strict_warning = false;
};

struct ButterflyCheck {
    std::size_t slice_mid = 0, slice_lo = 0, slice_hi = 0;  // i, i1, i2
    double k_lo = 0.0, k_mid = 0.0, k_hi = 0.0;
    double value = 0.0;  // CBS
    bool pass = true;
};

struct SpreadReport {
    std::vector<VerticalCheck> vertical;
    std::vector<CalendarCheck> calendar;
    std::vector<ButterflyCheck> butterfly;
    bool overall_pass = true;

    void fold(bool pass) { overall_pass = overall_pass && pass; }

    [[nodiscard]] std::size_t failures() const {
        std::size_t n = 0;
        for (const auto& c : vertical) n += !c.pass;
        for (const auto& c : calendar) n += !c.pass;
        for (const auto& c : butterfly) n += !c.pass;
        return n;
    }
};

namespace detail {

// Sign slack for spread conditions: protects exact synthetic data from
// spurious failures at rounding level without masking genuine violations,
// which are macroscopic by construction of a real arbitrage.
[[nodiscard]] inline double spread_slack(double spot) { return 1e-12 * spot; }

// Quoted strikes augmented by the synthetic strike-0 call, whose bid and ask
// are both the current forward (here: spot, zero rates).
struct AugmentedSlice {
    const WeightedSlice* ws;
    double spot;

    [[nodiscard]] std::size_t count() const { return ws->size() + 1; }
    [[nodiscard]] double strike(std::size_t a) const {
        return a == 0 ? 0.0 : ws->strike(a - 1);
    }
    [[nodiscard]] double bid(std::size_t a) const {
        return a == 0 ? spot : ws->slice.quotes[a - 1].bid;
    }
    [[nodiscard]] double ask(std::size_t a) const {
        return a == 0 ? spot : ws->slice.quotes[a - 1].ask;
    }
};

}  // namespace detail

// Vertical-spread conditions within one maturity.  Each side is tested with
// the quote combination a trader could actually execute, so widening spreads
// can only make the test easier and consistent mid prices never get flagged:
//   monotonicity  — sell K_{j-1} at bid? no: buy K_{j-1} at ask, sell K_j at
//                   bid; arbitrage iff bid(K_j) > ask(K_{j-1}), i.e.
//                   vs_lo = (ask(K_{j-1}) - bid(K_j)) / dk < 0;
//   slope >= -1   — sell K_{j-1} at bid, buy K_j at ask plus dk in bonds;
//                   arbitrage iff vs_hi = (bid(K_{j-1}) - ask(K_j)) / dk > 1.
// The reported value is the offending quantity when a side fails (vs_lo
// otherwise); the strictness condition vs_lo > 0 (when the left price is
// itself positive) is reported as a warning, not a failure.
[[nodiscard]] inline std::vector<VerticalCheck> check_slice(
    const WeightedSlice& ws, std::size_t slice_index = 0) {
    detail::AugmentedSlice aug{&ws, ws.slice.spot};
    const double slack = detail::spread_slack(ws.slice.spot);
    std::vector<VerticalCheck> out;
    for (std::size_t a = 1; a < aug.count(); ++a) {
        const double dk = aug.strike(a) - aug.strike(a - 1);
        const double vs_lo = (aug.ask(a - 1) - aug.bid(a)) / dk;
        const double vs_hi = (aug.bid(a - 1) - aug.ask(a)) / dk;
        VerticalCheck c;
        c.slice = slice_index;
        c.strike = a - 1;
        c.value = (vs_hi > 1.0 + slack) ? vs_hi : vs_lo;
        c.pass = (vs_lo >= -slack) && (vs_hi <= 1.0 + slack);
        c.strict_warning = c.pass && aug.bid(a - 1) > 0.0 && vs_lo <= slack;
        out.push_back(c);
    }
    return out;
}

// Calendar conditions across maturities.  CVS: for i1 < i2 and K1 >= K2,
// ask_{i2}(K2) - bid_{i1}(K1) >= 0.  CBS: for i <= i1, i <= i2 and K_lo <
// K_mid < K_hi, the two-sided slope difference
//   (ask_i(K_mid) - bid_{i1}(K_lo)) / (K_lo - K_mid)
//     - (bid_{i2}(K_hi) - ask_i(K_mid)) / (K_mid - K_hi)
// must be >= 0.  The synthetic strike-0 quote participates everywhere.
inline void check_calendar(
    const std::vector<WeightedSlice>& slices, SpreadReport& report) {
    const std::size_t n = slices.size();
    if (n == 0) return;
    const double spot = slices[0].slice.spot;
    const double slack = detail::spread_slack(spot);

    std::vector<detail::AugmentedSlice> aug;
    aug.reserve(n);
    for (const auto& ws : slices) aug.push_back({&ws, spot});

    for (std::size_t i1 = 0; i1 < n; ++i1) {
        for (std::size_t i2 = i1 + 1; i2 < n; ++i2) {
            for (std::size_t a1 = 0; a1 < aug[i1].count(); ++a1) {
                for (std::size_t a2 = 0; a2 < aug[i2].count(); ++a2) {
                    const double k1 = aug[i1].strike(a1);
                    const double k2 = aug[i2].strike(a2);
                    if (!(k1 >= k2)) continue;
                    CalendarCheck c;
                    c.slice1 = i1;
                    c.slice2 = i2;
                    if (a1 > 0) c.strike1 = a1 - 1;
                    if (a2 > 0) c.strike2 = a2 - 1;
                    c.k1 = k1;
                    c.k2 = k2;
                    c.value = aug[i2].ask(a2) - aug[i1].bid(a1);
                    c.pass = c.value >= -slack;
                    c.strict_warning = c.pass && k1 > k2 &&
                                       aug[i1].bid(a1) > 0.0 &&
                                       c.value <= slack;
                    report.calendar.push_back(c);
                    report.fold(c.pass);
                }
            }
        }
    }

    // Butterflies: sell the middle leg at maturity i (bid), buy the wings at
    // maturities i1, i2 (asks), i <= i1 and i <= i2 — the executable fly, so
    // failures are genuine convexity arbitrage net of spreads.
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t i1 = i; i1 < n; ++i1) {
            for (std::size_t i2 = i; i2 < n; ++i2) {
                for (std::size_t am = 0; am < aug[i].count(); ++am) {
                    const double km = aug[i].strike(am);
                    const double bidm = aug[i].bid(am);
                    for (std::size_t al = 0; al < aug[i1].count(); ++al) {
                        const double kl = aug[i1].strike(al);
                        if (!(kl < km)) continue;
                        for (std::size_t ah = 0; ah < aug[i2].count(); ++ah) {
                            const double kh = aug[i2].strike(ah);
                            if (!(km < kh)) continue;
                            ButterflyCheck c;
                            c.slice_mid = i;
                            c.slice_lo = i1;
                            c.slice_hi = i2;
                            c.k_lo = kl;
                            c.k_mid = km;
                            c.k_hi = kh;
                            c.value = (bidm - aug[i1].ask(al)) / (kl - km) -
                                      (aug[i2].ask(ah) - bidm) / (km - kh);
                            c.pass = c.value >= -slack;
                            report.butterfly.push_back(c);
                            report.fold(c.pass);
                        }
                    }
                }
            }
        }
    }
}

// Full static-arbitrage report over a set of maturity slices.
[[nodiscard]] inline SpreadReport check_quotes(
    const std::vector<WeightedSlice>& slices) {
    SpreadReport report;
    for (std::size_t i = 0; i < slices.size(); ++i) {
        auto vs = check_slice(slices[i], i);
        for (const auto& c : vs) report.fold(c.pass);
        report.vertical.insert(report.vertical.end(), vs.begin(), vs.end());
    }
    check_calendar(slices, report);
    return report;
}

inline void write_report_text(const SpreadReport& r, std::ostream& os) {
    os << "vertical checks: " << r.vertical.size() << "\n";
    for (const auto& c : r.vertical)
        if (!c.pass || c.strict_warning)
            os << "  slice " << c.slice << " strike " << c.strike
               << " VS=" << c.value << (c.pass ? " WARN(strict)" : " FAIL")
               << "\n";
    os << "calendar checks: " << r.calendar.size() << "\n";
    for (const auto& c : r.calendar)
        if (!c.pass || c.strict_warning)
            os << "  slices (" << c.slice1 << "," << c.slice2 << ") strikes ("
               << c.k1 << "," << c.k2 << ") CVS=" << c.value
               << (c.pass ? " WARN(strict)" : " FAIL") << "\n";
    os << "butterfly checks: " << r.butterfly.size() << "\n";
    for (const auto& c : r.butterfly)
        if (!c.pass)
            os << "  slices (" << c.slice_mid << "," << c.slice_lo << ","
               << c.slice_hi << ") strikes (" << c.k_lo << "," << c.k_mid
               << "," << c.k_hi << ") CBS=" << c.value << " FAIL\n";
    os << (r.overall_pass ? "PASS" : "FAIL") << "\n";
}

inline void write_report_csv(const SpreadReport& r, std::ostream& os) {
    os << "kind,slice,slice1,slice2,k_lo,k_mid,k_hi,value,pass\n";
    for (const auto& c : r.vertical)
        os << "vertical," << c.slice << ",,," << "," << c.strike << ",,"
           << c.value << "," << (c.pass ? 1 : 0) << "\n";
    for (const auto& c : r.calendar)
        os << "calendar," << "," << c.slice1 << "," << c.slice2 << "," << c.k2
           << "," << "," << c.k1 << "," << c.value << "," << (c.pass ? 1 : 0)
           << "\n";
    for (const auto& c : r.butterfly)
        os << "butterfly," << c.slice_mid << "," << c.slice_lo << ","
           << c.slice_hi << "," << c.k_lo << "," << c.k_mid << "," << c.k_hi
           << "," << c.value << "," << (c.pass ? 1 : 0) << "\n";
}

// ---------------------------------------------------------------------------
// Non-degeneracy probe.
// ---------------------------------------------------------------------------

// Matrix of elementary call payoffs ((K_j - K_i)^+) over the augmented strike
// set {0 = K_0, K_1, ..., K_k} plus one boundary node: row k+1 and column k+1
// are set to 1 (the boundary convention), with the (k+1, k+1) corner kept at
// (K - K)^+ = 0 so that the linear system reproduces exact discrete prices
// with positive coordinates (the all-ones corner would make the system
// infeasible for every single-strike market).
class CallMatrix {
public:
    explicit CallMatrix(const std::vector<double>& strikes) {
        const std::size_t k = strikes.size();
        std::vector<double> nodes(k + 1);
        nodes[0] = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            if (!(strikes[j] > (j == 0 ? 0.0 : strikes[j - 1])))
                throw std::invalid_argument(
                    "CallMatrix: strikes must be positive, strictly increasing");
            nodes[j + 1] = strikes[j];
        }
        const auto n = static_cast<Eigen::Index>(k + 2);
        m_.resize(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j) {
                if (i == n - 1 && j == n - 1)
                    m_(i, j) = 0.0;
                else if (i == n - 1 || j == n - 1)
                    m_(i, j) = 1.0;
                else
                    m_(i, j) = std::max(
                        nodes[static_cast<std::size_t>(j)] -
                            nodes[static_cast<std::size_t>(i)],
                        0.0);
            }
        lu_.compute(m_);
        if (!lu_.isInvertible())
            throw std::invalid_argument("CallMatrix: singular (degenerate strikes)");
    }

    [[nodiscard]] const Eigen::MatrixXd& matrix() const { return m_; }

    [[nodiscard]] Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
        return lu_.solve(rhs);
    }

private:
    Eigen::MatrixXd m_;
    Eigen::FullPivLU<Eigen::MatrixXd> lu_;
};

struct ProbeResult {
    bool pass = false;
    std::string detail;
};

struct ProbeConfig {
    int max_probes = 32;       // random bid-ask box points tried after mid
    unsigned long seed = 20240801UL;
};

// Feasibility probe for calibrating `ws` on top of `prev`: at a candidate
// price vector C (mid first, then random points of the bid-ask box) it checks
// (a) the elementary-payoff decomposition M_call^{-1} C is strictly positive
// and (b) each candidate price strictly dominates the previous marginal's
// intrinsic value E[(S - K)^+].  Pass certifies feasibility at that candidate;
// Inconclusive means no tried candidate worked — the solver's divergence
// detector is then the authority.
[[nodiscard]] inline ProbeResult non_degeneracy_probe(
    const WeightedSlice& ws, const DiscreteMarginal& prev,
    const ProbeConfig& cfg = {}) {
    if (prev.grid.empty())
        return {false, "previous marginal has empty support"};
    const std::size_t k = ws.size();
    if (k == 0) return {true, "no quotes to constrain"};

    CallMatrix mc(ws.strikes());
    const double mean_prev = marginal_mean(prev);

    std::vector<double> intrinsic(k);
    for (std::size_t j = 0; j < k; ++j)
        intrinsic[j] = marginal_call(prev, ws.strike(j));

    std::string first_fail;
    auto try_candidate = [&](const std::vector<double>& c) -> bool {
        std::string why;
        for (std::size_t j = 0; j < k; ++j) {
            if (!(c[j] > intrinsic[j])) {
                why = "price at strike " + std::to_string(ws.strike(j)) +
                      " does not strictly dominate the previous marginal's "
                      "intrinsic value";
                break;
            }
        }
        if (why.empty()) {
            Eigen::VectorXd rhs(static_cast<Eigen::Index>(k + 2));
            rhs(0) = mean_prev;
            for (std::size_t j = 0; j < k; ++j)
                rhs(static_cast<Eigen::Index>(j + 1)) = c[j];
            rhs(static_cast<Eigen::Index>(k + 1)) = 1.0;
            Eigen::VectorXd x = mc.solve(rhs);
            for (Eigen::Index i = 0; i < x.size(); ++i)
                if (!(x(i) > 0.0)) {
                    why = "elementary-payoff decomposition has a non-positive "
                          "component at index " + std::to_string(i);
                    break;
                }
        }
        if (why.empty()) return true;
        if (first_fail.empty()) first_fail = why;
        return false;
    };

    if (try_candidate(ws.mid)) return {true, "feasible at mid"};

    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> c(k);
    for (int p = 0; p < cfg.max_probes; ++p) {
        for (std::size_t j = 0; j < k; ++j) {
            const Quote& q = ws.slice.quotes[j];
            c[j] = q.bid + (q.ask - q.bid) * unit(rng);
        }
        if (try_candidate(c))
            return {true, "feasible at a perturbed box point"};
    }
    return {false, "no feasible candidate found (" + first_fail + ")"};
}

}  // namespace volcal
