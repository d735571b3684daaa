#pragma once
// Discrete marginal laws on a sorted support grid, with the small set of
// functionals the calibration chain needs: mean, call prices, validation, and
// the Wasserstein-1 distance used to certify discretization error.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace volcal {

struct DiscreteMarginal {
    double maturity = 0.0;
    std::vector<double> grid;  // strictly increasing support
    std::vector<double> mass;  // nonnegative, sums to 1

    [[nodiscard]] std::size_t size() const { return grid.size(); }
};

[[nodiscard]] inline DiscreteMarginal dirac_marginal(double point,
                                                     double maturity = 0.0) {
    return {maturity, {point}, {1.0}};
}

inline void validate_marginal(const DiscreteMarginal& m, double mass_tol = 1e-12) {
    if (m.grid.empty()) throw std::invalid_argument("marginal: empty grid");
    if (m.grid.size() != m.mass.size())
        throw std::invalid_argument("marginal: grid/mass size mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < m.grid.size(); ++i) {
        if (i > 0 && !(m.grid[i - 1] < m.grid[i]))
            throw std::invalid_argument("marginal: grid not strictly increasing");
        if (m.mass[i] < 0.0)
            throw std::invalid_argument("marginal: negative mass");
        total += m.mass[i];
    }
    if (std::fabs(total - 1.0) > mass_tol)
        throw std::invalid_argument("marginal: mass does not sum to 1");
}

[[nodiscard]] inline double marginal_mean(const DiscreteMarginal& m) {
    double s = 0.0;
    for (std::size_t i = 0; i < m.grid.size(); ++i) s += m.mass[i] * m.grid[i];
    return s;
}

// E[(S - strike)^+] under the discrete law.
[[nodiscard]] inline double marginal_call(const DiscreteMarginal& m,
                                          double strike) {
    double s = 0.0;
    for (std::size_t i = 0; i < m.grid.size(); ++i)
        if (m.grid[i] > strike) s += m.mass[i] * (m.grid[i] - strike);
    return s;
}

// W1 distance between two discrete laws: the integral of |F_a - F_b| over the
// merged support, computed exactly (the CDFs are step functions).
[[nodiscard]] inline double w1_distance(const DiscreteMarginal& a,
                                        const DiscreteMarginal& b) {
    std::vector<double> pts;
    pts.reserve(a.grid.size() + b.grid.size());
    pts.insert(pts.end(), a.grid.begin(), a.grid.end());
    pts.insert(pts.end(), b.grid.begin(), b.grid.end());
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());

    double dist = 0.0;
    double fa = 0.0, fb = 0.0;
    std::size_t ia = 0, ib = 0;
    for (std::size_t p = 0; p + 1 < pts.size(); ++p) {
        while (ia < a.grid.size() && a.grid[ia] <= pts[p]) fa += a.mass[ia++];
        while (ib < b.grid.size() && b.grid[ib] <= pts[p]) fb += b.mass[ib++];
        dist += std::fabs(fa - fb) * (pts[p + 1] - pts[p]);
    }
    return dist;
}

}  // namespace volcal
