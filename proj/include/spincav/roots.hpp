#pragma once

#include "spincav/common.hpp"

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace spincav::roots {

inline std::vector<double> log_grid(double lo, double hi, std::size_t n) {
    require(lo > 0.0 && hi > lo && n >= 2, "log grid needs 0 < lo < hi and n >= 2");
    std::vector<double> g(n);
    const double llo = std::log(lo), lhi = std::log(hi);
    for (std::size_t i = 0; i < n; ++i)
        g[i] = std::exp(llo + (lhi - llo) * static_cast<double>(i) / static_cast<double>(n - 1));
    g.front() = lo;
    g.back() = hi;
    return g;
}

inline std::vector<double> linear_grid(double lo, double hi, std::size_t n) {
    require(hi > lo && n >= 2, "linear grid needs lo < hi and n >= 2");
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i)
        g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    return g;
}

struct Bracket {
    double lo, hi;
    double f_lo, f_hi;
};

/// Adjacent grid intervals over which f changes sign (exact zeros included).
template <class F>
std::vector<Bracket> sign_changes(F&& f, const std::vector<double>& grid) {
    std::vector<Bracket> out;
    if (grid.empty()) return out;
    double x0 = grid[0], f0 = f(x0);
    for (std::size_t i = 1; i < grid.size(); ++i) {
        const double x1 = grid[i], f1 = f(x1);
        // a zero on a grid node is reported once, in the interval ending there
        const bool crosses = f1 == 0.0 || (f0 != 0.0 && (f0 < 0.0) != (f1 < 0.0)) || (i == 1 && f0 == 0.0);
        if (crosses) out.push_back({x0, x1, f0, f1});
        x0 = x1;
        f0 = f1;
    }
    return out;
}

/// Newton-Raphson safeguarded by bisection on a sign-changing bracket.
/// Converges to |dx| <= xtol_rel * |x| (or f == 0).
template <class F, class DF>
double safeguarded_newton(F&& f, DF&& df, double lo, double hi, double xtol_rel = 1e-14,
                          int max_iter = 200) {
    double flo = f(lo), fhi = f(hi);
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if ((flo < 0.0) == (fhi < 0.0)) throw NumericalError("safeguarded_newton: bracket does not change sign");
    if (flo > 0.0) std::swap(lo, hi);  // f(lo) < 0 < f(hi)
    double x = 0.5 * (lo + hi);
    double dx_old = std::abs(hi - lo), dx = dx_old;
    double fx = f(x), dfx = df(x);
    for (int it = 0; it < max_iter; ++it) {
        const bool newton_leaves = ((x - hi) * dfx - fx) * ((x - lo) * dfx - fx) > 0.0;
        const bool newton_slow = std::abs(2.0 * fx) > std::abs(dx_old * dfx);
        dx_old = dx;
        if (newton_leaves || newton_slow || dfx == 0.0) {
            dx = 0.5 * (hi - lo);
            x = lo + dx;
        } else {
            dx = fx / dfx;
            x -= dx;
        }
        if (std::abs(dx) <= xtol_rel * std::abs(x) || std::abs(dx) <= std::numeric_limits<double>::min())
            return x;
        fx = f(x);
        if (fx == 0.0) return x;
        dfx = df(x);
        if (fx < 0.0) lo = x;
        else hi = x;
        if (std::abs(hi - lo) <= xtol_rel * std::abs(x)) return x;
    }
    throw NumericalError("safeguarded_newton: no convergence after " + std::to_string(max_iter) +
                         " iterations near x = " + std::to_string(x));
}

/// Plain bisection; used where only sign information is trusted.
template <class F>
double bisect(F&& f, double lo, double hi, double xtol_rel = 1e-14, int max_iter = 400) {
    double flo = f(lo);
    if (flo == 0.0) return lo;
    for (int it = 0; it < max_iter; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (std::abs(hi - lo) <= xtol_rel * std::abs(mid)) return mid;
        const double fm = f(mid);
        if (fm == 0.0) return mid;
        if ((fm < 0.0) == (flo < 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

/// Golden-section minimization on [lo, hi] (f unimodal there).
template <class F>
std::pair<double, double> golden_min(F&& f, double lo, double hi, double xtol_rel = 1e-12,
                                     int max_iter = 300) {
    const double r = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = hi - r * (hi - lo), d = lo + r * (hi - lo);
    double fc = f(c), fd = f(d);
    for (int it = 0; it < max_iter && std::abs(hi - lo) > xtol_rel * std::abs(0.5 * (hi + lo)); ++it) {
        if (fc < fd) {
            hi = d;
            d = c;
            fd = fc;
            c = hi - r * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + r * (hi - lo);
            fd = f(d);
        }
    }
    const double x = 0.5 * (lo + hi);
    return {x, f(x)};
}

}  // namespace spincav::roots
