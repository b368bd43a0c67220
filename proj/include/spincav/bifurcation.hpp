// bifurcation.hpp: saddle-node pairs of the stationary S-curve, the onset
// coupling of bistability, and sweeps over the collective coupling.

#pragma once

#include "spincav/common.hpp"
#include "spincav/parallel.hpp"
#include "spincav/roots.hpp"
#include "spincav/spectral.hpp"
#include "spincav/steady.hpp"

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace spincav {

/// Everything needed to rebuild the discretized ensemble for a given collective coupling.
struct EnsembleRecipe {
    SpectralShape shape;
    std::size_t clusters = 201;
    double window_mult = 4.0;
    SpinRates rates;
    CavityDrive cavity;

    Ensemble ensemble(double omega_coll) const {
        return discretize(shape, omega_coll, clusters, default_window(shape, window_mult), rates);
    }
    CooperativityTable table(double omega_coll) const { return cooperativities(ensemble(omega_coll), cavity); }
};

struct SnPair {
    double eta_up = 0.0;    // upper-branch endpoint (smaller drive)
    double eta_down = 0.0;  // lower-branch endpoint (larger drive)
    double a0_up = 0.0;
    double a0_down = 0.0;

    double eta_mid() const noexcept { return 0.5 * (eta_up + eta_down); }
    bool degenerate() const noexcept { return eta_up == eta_down; }
};

/// Returns the SN pair, or nullopt when the S-curve is monotone.
inline std::optional<SnPair> find_sn_pair(const CooperativityTable& tab, double kappa) {
    const auto scan = scan_critical_points(tab, kappa);
    if (scan.roots.empty()) {
        // tangency within round-off: the cusp itself
        if (std::abs(scan.min_slope) <= 1e-12 && scan.min_slope_a0 > 0.0) {
            const double a = scan.min_slope_a0;
            const double e = eta_of_a0(a, tab, kappa);
            return SnPair{e, e, a, a};
        }
        return std::nullopt;
    }
    if (scan.roots.size() == 1) {
        const double a = scan.roots.front();
        const double e = eta_of_a0(a, tab, kappa);
        return SnPair{e, e, a, a};
    }
    // first negative-slope interval
    SnPair p;
    p.a0_down = scan.roots[0];
    p.a0_up = scan.roots[1];
    p.eta_down = eta_of_a0(p.a0_down, tab, kappa);
    p.eta_up = eta_of_a0(p.a0_up, tab, kappa);
    return p;
}

/// Reference drive for normalized-eta outputs: the SN midpoint when bistable,
/// otherwise the drive at the steepest point of a0(eta).
inline double eta_reference(const CooperativityTable& tab, double kappa) {
    if (auto p = find_sn_pair(tab, kappa)) return p->eta_mid();
    const auto scan = scan_critical_points(tab, kappa);
    if (scan.min_slope_a0 > 0.0) return eta_of_a0(scan.min_slope_a0, tab, kappa);
    return kappa;
}

struct Threshold {
    double omega_coll = 0.0;   // rad/s
    double cooperativity = 0.0;
};

/// Onset coupling of bistability by bisection on Omega (relative tolerance rel_tol).
inline Threshold threshold_coupling(const EnsembleRecipe& recipe, double omega_lo, double omega_hi,
                                    double rel_tol = 1e-4) {
    require(omega_lo > 0.0 && omega_hi > omega_lo, "threshold search needs 0 < omega_lo < omega_hi");
    auto bistable = [&](double om) {
        const auto tab = recipe.table(om);
        const auto scan = scan_critical_points(tab, recipe.cavity.kappa);
        return scan.min_slope < 0.0;
    };
    if (bistable(omega_lo)) throw ParameterError("threshold bracket invalid: bistable at the lower end");
    if (!bistable(omega_hi)) throw ParameterError("threshold bracket invalid: monostable at the upper end");
    double lo = omega_lo, hi = omega_hi;
    // 0.01 rel_tol keeps the reported midpoint well inside the requested tolerance
    while ((hi - lo) > 0.01 * rel_tol * hi) {
        const double mid = 0.5 * (lo + hi);
        (bistable(mid) ? hi : lo) = mid;
    }
    const double om = 0.5 * (lo + hi);
    return {om, recipe.table(om).total};
}

/// Closed form for one resonant cluster: C_th = 8, reached at a0^2 = 3n.
inline constexpr double homogeneous_threshold_cooperativity = 8.0;

struct SweepRow {
    double omega_coll = 0.0;  // rad/s
    double cooperativity = 0.0;
    std::optional<SnPair> pair;
};

struct ShapeSweep {
    SpectralFamily family{};
    std::vector<SweepRow> rows;
};

/// SN pairs over a grid of Omega for several families of equal FWHM.
inline std::vector<ShapeSweep> sweep_omega(const EnsembleRecipe& base, const std::vector<SpectralFamily>& families,
                                           const std::vector<double>& omegas, std::size_t workers = 0) {
    std::vector<ShapeSweep> out;
    for (auto fam : families) {
        EnsembleRecipe r = base;
        r.shape.family = fam;
        ShapeSweep sw;
        sw.family = fam;
        sw.rows.resize(omegas.size());
        parallel_for(omegas.size(), workers, [&](std::size_t i) {
            const auto tab = r.table(omegas[i]);
            sw.rows[i] = SweepRow{omegas[i], tab.total, find_sn_pair(tab, r.cavity.kappa)};
        });
        out.push_back(std::move(sw));
    }
    return out;
}

}  // namespace spincav
