// steady.hpp: stationary Maxwell-Bloch problem on resonance.
//
// With a real, non-negative cavity amplitude a0 the stationary equations collapse to
//
//     eta = kappa * a0 * (1 + sum_k C_k / (1 + a0^2 / n_k)),
//
// which is single-valued in a0. Roots for a given drive are found by splitting the
// a0 axis at the critical points of eta(a0) and bracketing once per monotone piece.

#pragma once

#include "spincav/common.hpp"
#include "spincav/roots.hpp"
#include "spincav/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

namespace spincav {

struct CavityDrive {
    double kappa = 0.0;    // rad/s
    double omega_c = 0.0;  // rad/s
    double omega_p = 0.0;  // rad/s
    double eta = 0.0;      // same units as kappa * a

    double cavity_detuning() const noexcept { return omega_c - omega_p; }

    void validate() const {
        require(std::isfinite(kappa) && kappa > 0.0, "cavity decay rate kappa must be positive");
        require(std::isfinite(eta) && eta >= 0.0, "drive amplitude eta must be non-negative");
    }
};

/// Resonant cavity and drive centered on the ensemble.
inline CavityDrive resonant_cavity(double kappa, double omega_s, double eta = 0.0) {
    return CavityDrive{kappa, omega_s, omega_s, eta};
}

struct CooperativityTable {
    std::vector<double> cooperativity;  // C_k
    std::vector<double> saturation;     // n_k; +inf for uncoupled clusters
    double total = 0.0;                 // C = sum_k C_k

    std::size_t size() const noexcept { return cooperativity.size(); }

    double min_saturation() const {
        double m = std::numeric_limits<double>::infinity();
        for (double n : saturation) m = std::min(m, n);
        return m;
    }
    double max_finite_saturation() const {
        double m = 0.0;
        for (double n : saturation)
            if (std::isfinite(n)) m = std::max(m, n);
        return m;
    }
};

inline CooperativityTable cooperativities(const Ensemble& ens, const CavityDrive& cav) {
    cav.validate();
    require(ens.gamma_perp > 0.0 && ens.gamma_par > 0.0, "spin relaxation rates must be positive");
    CooperativityTable tab;
    tab.cooperativity.resize(ens.size());
    tab.saturation.resize(ens.size());
    for (std::size_t k = 0; k < ens.size(); ++k) {
        const double g = ens.clusters[k].coupling;
        const double d = ens.detuning(k, cav.omega_p) / ens.gamma_perp;
        const double lor = 1.0 + d * d;
        tab.cooperativity[k] = g * g / (ens.gamma_perp * cav.kappa * lor);
        tab.saturation[k] = g > 0.0 ? ens.gamma_perp * ens.gamma_par * lor / (4.0 * g * g)
                                    : std::numeric_limits<double>::infinity();
        tab.total += tab.cooperativity[k];
    }
    return tab;
}

/// Single resonant cluster with prescribed cooperativity C and saturation number n.
inline CooperativityTable homogeneous_table(double cooperativity, double saturation) {
    require(cooperativity >= 0.0 && saturation > 0.0, "homogeneous table needs C >= 0 and n > 0");
    return CooperativityTable{{cooperativity}, {saturation}, cooperativity};
}

inline double eta_of_a0(double a0, const CooperativityTable& tab, double kappa) {
    const double a2 = a0 * a0;
    double s = 1.0;
    for (std::size_t k = 0; k < tab.size(); ++k) s += tab.cooperativity[k] / (1.0 + a2 / tab.saturation[k]);
    return kappa * a0 * s;
}

/// d eta / d a0 = kappa * (1 + sum_k C_k (1 - s_k) / (1 + s_k)^2), s_k = a0^2 / n_k.
inline double d_eta_d_a0(double a0, const CooperativityTable& tab, double kappa) {
    const double a2 = a0 * a0;
    double s = 1.0;
    for (std::size_t k = 0; k < tab.size(); ++k) {
        const double x = a2 / tab.saturation[k];
        s += tab.cooperativity[k] * (1.0 - x) / ((1.0 + x) * (1.0 + x));
    }
    return kappa * s;
}

inline double d2_eta_d_a02(double a0, const CooperativityTable& tab, double kappa) {
    const double a2 = a0 * a0;
    double s = 0.0;
    for (std::size_t k = 0; k < tab.size(); ++k) {
        const double n = tab.saturation[k];
        if (!std::isfinite(n)) continue;
        const double x = a2 / n;
        s += tab.cooperativity[k] * (x - 3.0) / ((1.0 + x) * (1.0 + x) * (1.0 + x)) * 2.0 * a0 / n;
    }
    return kappa * s;
}

inline std::vector<double> sigma_z0(double a0, const CooperativityTable& tab) {
    std::vector<double> out(tab.size());
    for (std::size_t k = 0; k < tab.size(); ++k) out[k] = -1.0 / (1.0 + a0 * a0 / tab.saturation[k]);
    return out;
}

// ---------------------------------------------------------------------------
// Critical points of eta(a0), i.e. zeros of d eta / d a0.

struct CriticalScan {
    std::vector<double> roots;  // ascending a0 with d eta/d a0 = 0 (sign changes)
    double min_slope_a0 = 0.0;  // location of the smallest slope on the scan
    double min_slope = 0.0;     // its value (units of kappa)
};

inline constexpr std::size_t default_critical_grid = 4000;

/// a0 range that contains every feature of the slope: all s_k = a0^2/n_k in [1e-4, 1e4].
inline std::pair<double, double> critical_range(const CooperativityTable& tab) {
    const double nmin = tab.min_saturation();
    const double nmax = tab.max_finite_saturation();
    if (!std::isfinite(nmin) || nmax <= 0.0) return {0.0, 0.0};
    const double lo = std::sqrt(nmin * 1e-4);
    const double hi = std::sqrt(std::min(nmax, nmin * 1e24) * 1e4);
    return {lo, hi};
}

inline CriticalScan scan_critical_points(const CooperativityTable& tab, double kappa,
                                         std::size_t grid_points = default_critical_grid) {
    CriticalScan out;
    const auto [lo, hi] = critical_range(tab);
    if (!(hi > lo)) {
        out.min_slope = 1.0;
        return out;
    }
    const auto grid = roots::log_grid(lo, hi, grid_points);
    auto slope = [&](double a) { return d_eta_d_a0(a, tab, kappa) / kappa; };
    auto curvature = [&](double a) { return d2_eta_d_a02(a, tab, kappa) / kappa; };

    std::size_t imin = 0;
    double vmin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double v = slope(grid[i]);
        if (v < vmin) {
            vmin = v;
            imin = i;
        }
    }
    const double l = grid[imin == 0 ? 0 : imin - 1], r = grid[std::min(imin + 1, grid.size() - 1)];
    const auto [xm, fm] = roots::golden_min(slope, l, r, 1e-13);
    out.min_slope_a0 = fm < vmin ? xm : grid[imin];
    out.min_slope = std::min(fm, vmin);

    for (const auto& b : roots::sign_changes(slope, grid))
        out.roots.push_back(roots::safeguarded_newton(slope, curvature, b.lo, b.hi, 1e-15));
    // The dip may hide between grid nodes; the refined minimum reveals it.
    if (out.roots.empty() && out.min_slope < 0.0) {
        out.roots.push_back(roots::safeguarded_newton(slope, curvature, l, out.min_slope_a0, 1e-15));
        out.roots.push_back(roots::safeguarded_newton(slope, curvature, out.min_slope_a0, r, 1e-15));
    }
    std::sort(out.roots.begin(), out.roots.end());
    return out;
}

// ---------------------------------------------------------------------------

struct StationaryRoot {
    double a0 = 0.0;
    bool stable = true;
};

/// All stationary amplitudes a0 >= 0 for the drive eta, ascending.
inline std::vector<StationaryRoot> solve_a0(double eta, const CooperativityTable& tab, double kappa) {
    require(eta >= 0.0 && std::isfinite(eta), "drive amplitude must be non-negative");
    require(kappa > 0.0, "kappa must be positive");
    if (eta == 0.0) return {{0.0, true}};

    // eta(a0) / (kappa a0) lies in [1, 1 + C], so every root sits in this interval.
    const double lo = eta / (kappa * (1.0 + tab.total));
    const double hi = eta / kappa;
    auto f = [&](double a) { return eta_of_a0(a, tab, kappa) - eta; };
    auto df = [&](double a) { return d_eta_d_a0(a, tab, kappa); };

    std::vector<double> nodes{lo};
    for (double c : scan_critical_points(tab, kappa).roots)
        if (c > lo && c < hi) nodes.push_back(c);
    nodes.push_back(hi);

    std::vector<StationaryRoot> out;
    for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
        const double a = nodes[i], b = nodes[i + 1];
        const double fa = f(a), fb = f(b);
        double r;
        if (fa == 0.0) r = a;
        else if (fb == 0.0) r = b;
        else if ((fa < 0.0) != (fb < 0.0)) r = roots::safeguarded_newton(f, df, a, b, 1e-15);
        else continue;
        if (!out.empty() && std::abs(out.back().a0 - r) <= 1e-12 * r) continue;
        out.push_back({r, df(r) > 0.0});
    }
    if (out.empty())
        throw NumericalError("solve_a0: no stationary root bracketed for eta = " + std::to_string(eta) +
                             " on [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return out;
}

// ---------------------------------------------------------------------------

enum class Branch { Lower, Unstable, Upper, Unique };

inline std::string to_string(Branch b) {
    switch (b) {
        case Branch::Lower: return "lower";
        case Branch::Unstable: return "unstable";
        case Branch::Upper: return "upper";
        case Branch::Unique: return "unique";
    }
    return "unknown";
}

inline Branch parse_branch(const std::string& s) {
    if (s == "lower") return Branch::Lower;
    if (s == "upper") return Branch::Upper;
    if (s == "unstable") return Branch::Unstable;
    if (s == "unique") return Branch::Unique;
    throw ParameterError("unknown branch '" + s + "'");
}

struct SCurvePoint {
    double eta = 0.0;
    double a0 = 0.0;
    double a0_sq = 0.0;
    Branch branch = Branch::Unique;
    bool stable = true;
};

struct SCurve {
    std::vector<SCurvePoint> points;
    bool bistable = false;
};

/// S-curve parametrized by a0 on a log grid. Points before the first negative
/// slope are the lower branch, the negative-slope run is the unstable branch,
/// and the rest is the upper branch. Monotone curves are labeled unique.
inline SCurve s_curve(const CooperativityTable& tab, double kappa, double a0_min, double a0_max,
                      std::size_t n_points) {
    require(a0_min > 0.0 && a0_max > a0_min && n_points >= 2, "s_curve needs 0 < a0_min < a0_max and >= 2 points");
    SCurve curve;
    const auto grid = roots::log_grid(a0_min, a0_max, n_points);
    curve.points.reserve(grid.size());
    bool seen_unstable = false;
    for (double a : grid) {
        SCurvePoint p;
        p.a0 = a;
        p.a0_sq = a * a;
        p.eta = eta_of_a0(a, tab, kappa);
        p.stable = d_eta_d_a0(a, tab, kappa) > 0.0;
        if (!p.stable) seen_unstable = true;
        p.branch = p.stable ? (seen_unstable ? Branch::Upper : Branch::Lower) : Branch::Unstable;
        curve.points.push_back(p);
    }
    curve.bistable = seen_unstable;
    if (!curve.bistable)
        for (auto& p : curve.points) p.branch = Branch::Unique;
    return curve;
}

/// Default a0 span for plotting: two decades around the saturation scale.
inline std::pair<double, double> default_a0_range(const CooperativityTable& tab, double kappa) {
    (void)kappa;
    const double nmin = tab.min_saturation();
    const double ref = std::isfinite(nmin) ? std::sqrt(nmin) : 1.0;
    return {1e-2 * ref, 1e2 * ref * std::sqrt(1.0 + tab.total)};
}

}  // namespace spincav
