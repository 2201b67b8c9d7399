// SPDX-License-Identifier: Apache-2.0
#pragma once

// Lowest eigenvalues of a diagonal matrix minus a rank-one term,
//   H = diag(d) - w z z^T,   w >= 0,
// grouped by distinct diagonal value. A level j with value d_j, coupling
// weight c_j = sum of z_s^2 over its entries and `multiplicity` n_j
// contributes one secular root and n_j - 1 copies of d_j to the spectrum.
// Roots solve 1 = w * sum_j c_j / (d_j - E); they interlace as
//   r_1 < d_1 < r_2 < d_2 < ...

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace saqc {

struct SecularLevel {
    double value = 0.0;
    double weight = 0.0;
    std::size_t multiplicity = 1;
};

struct SecularLowest {
    double e0 = 0.0;
    double e1 = std::numeric_limits<double>::infinity();
    /// e1 - e0 computed without cancellation.
    double gap = std::numeric_limits<double>::infinity();
    /// d_1 - e0 >= 0; the ground vector is z_s / (d_s - e0).
    double ground_shift = 0.0;
};

namespace detail {

/// Finds t in (lo, hi) with f(t) = 0 for f increasing; bisects to the last
/// representable midpoint.
template <typename F>
double bisect_increasing(F&& f, double lo, double hi)
{
    for (int it = 0; it < 2000; ++it) {
        const double mid = lo + 0.5 * (hi - lo);
        if (mid <= lo || mid >= hi)
            break;
        if (f(mid) < 0.0)
            lo = mid;
        else
            hi = mid;
    }
    return lo + 0.5 * (hi - lo);
}

} // namespace detail

/// `levels` must be sorted by strictly increasing value, with positive weights.
inline SecularLowest secular_lowest(std::span<const SecularLevel> levels, double w)
{
    SecularLowest out;
    if (levels.empty())
        return out;
    const double d1 = levels[0].value;
    if (w <= 0.0) {
        out.e0 = d1;
        out.ground_shift = 0.0;
        if (levels[0].multiplicity >= 2)
            out.e1 = d1;
        else if (levels.size() >= 2)
            out.e1 = levels[1].value;
        out.gap = out.e1 - out.e0;
        return out;
    }

    double total = 0.0;
    for (const auto& l : levels)
        total += l.weight;

    // Lowest root: E = d1 - t with t in (0, w * total].
    auto below = [&](double t) {
        double s = 0.0;
        for (const auto& l : levels)
            s += l.weight / ((l.value - d1) + t);
        return 1.0 - w * s;
    };
    const double t0 = detail::bisect_increasing(below, 0.0, w * total);
    out.ground_shift = t0;
    out.e0 = d1 - t0;

    if (levels[0].multiplicity >= 2) {
        out.e1 = d1;
        out.gap = t0;
        return out;
    }
    if (levels.size() < 2)
        return out; // one-dimensional coupled space, no second level

    // Second root: E = d1 + t with t in (0, d2 - d1); the function is
    // decreasing in t, so bisect its negative.
    const double delta = levels[1].value - d1;
    auto above = [&](double t) {
        double s = -levels[0].weight / t;
        for (std::size_t j = 1; j < levels.size(); ++j)
            s += levels[j].weight / ((levels[j].value - d1) - t);
        return -(1.0 - w * s);
    };
    const double t1 = detail::bisect_increasing(above, 0.0, delta);
    out.e1 = d1 + t1;
    out.gap = t0 + t1;
    return out;
}

} // namespace saqc
