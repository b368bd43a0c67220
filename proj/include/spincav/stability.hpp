// stability.hpp: asymptotic decay rate toward a stationary state.
//
// Linearizing around (a0, s_k0, z_k0) with perturbations ~ exp(-zeta t) gives
//
//   f(zeta) = zeta - kappa - sum_k N_k / D_k = 0,
//   N_k = g_k^2 z_k0 (zeta - gamma_par + 4 kappa a0^2 C_k)(zeta - gamma_perp),
//   D_k = ((zeta - gamma_perp)^2 + Delta_k^2)(zeta - gamma_par) + 4 g_k^2 a0^2 (zeta - gamma_perp).
//
// The smallest positive real root is the rate that survives at long times.

#pragma once

#include "spincav/bifurcation.hpp"
#include "spincav/common.hpp"
#include "spincav/dynamics.hpp"
#include "spincav/parallel.hpp"
#include "spincav/roots.hpp"
#include "spincav/spectral.hpp"
#include "spincav/steady.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace spincav {

/// Precomputed per-cluster data of the characteristic function at one stationary state.
class CharacteristicFunction {
public:
    CharacteristicFunction(double a0, const Ensemble& ens, const CavityDrive& cav)
        : kappa_(cav.kappa), gperp_(ens.gamma_perp), gpar_(ens.gamma_par), a0_(a0) {
        const auto tab = cooperativities(ens, cav);
        const auto z = sigma_z0(a0, tab);
        for (std::size_t k = 0; k < ens.size(); ++k) {
            const double g = ens.clusters[k].coupling;
            if (g == 0.0) continue;
            Term t;
            t.g2z = g * g * z[k];
            t.shift = 4.0 * kappa_ * a0 * a0 * tab.cooperativity[k];
            t.det2 = ens.detuning(k, cav.omega_p) * ens.detuning(k, cav.omega_p);
            t.sat = 4.0 * g * g * a0 * a0;
            terms_.push_back(t);
        }
    }

    double kappa() const noexcept { return kappa_; }
    double gamma_par() const noexcept { return gpar_; }
    double gamma_perp() const noexcept { return gperp_; }
    double a0() const noexcept { return a0_; }

    double operator()(double zeta) const {
        double s = 0.0;
        for (const auto& t : terms_) s += numer(t, zeta) / denom(t, zeta);
        return zeta - kappa_ - s;
    }

    double derivative(double zeta) const {
        double s = 0.0;
        for (const auto& t : terms_) {
            const double u = zeta - gperp_, v = zeta - gpar_;
            const double n = numer(t, zeta), d = denom(t, zeta);
            const double dn = t.g2z * (u + (v + t.shift));
            const double dd = 2.0 * u * v + (u * u + t.det2) + t.sat;
            s += (dn * d - n * dd) / (d * d);
        }
        return 1.0 - s;
    }

    /// Number of summands with a negative denominator; changes only across a pole.
    std::size_t negative_denominators(double zeta) const {
        std::size_t c = 0;
        for (const auto& t : terms_)
            if (denom(t, zeta) < 0.0) ++c;
        return c;
    }

    /// Real poles in (lo, hi), ascending. Each denominator is a cubic in zeta.
    std::vector<double> poles(double lo, double hi) const {
        std::vector<double> out;
        const double c = gperp_ - gpar_;
        for (const auto& t : terms_) {
            // u = zeta - gamma_perp: u^3 + c u^2 + (det2 + sat) u + c det2
            for (double u : cubic_real_roots(c, t.det2 + t.sat, c * t.det2)) {
                double z = u + gperp_;
                for (int it = 0; it < 3; ++it) {
                    const double uu = z - gperp_, v = z - gpar_;
                    const double dd = 2.0 * uu * v + (uu * uu + t.det2) + t.sat;
                    if (dd == 0.0) break;
                    z -= denom(t, z) / dd;
                }
                if (z > lo && z < hi) out.push_back(z);
            }
        }
        std::sort(out.begin(), out.end());
        return out;
    }

private:
    struct Term {
        double g2z, shift, det2, sat;
    };
    double numer(const Term& t, double zeta) const {
        return t.g2z * (zeta - gpar_ + t.shift) * (zeta - gperp_);
    }
    double denom(const Term& t, double zeta) const {
        const double u = zeta - gperp_;
        return (u * u + t.det2) * (zeta - gpar_) + t.sat * u;
    }

    // real roots of x^3 + b x^2 + c x + d
    static std::vector<double> cubic_real_roots(double b, double c, double d) {
        const double p = c - b * b / 3.0, q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;
        const double disc = q * q / 4.0 + p * p * p / 27.0;
        std::vector<double> r;
        if (disc > 0.0) {
            const double sq = std::sqrt(disc);
            r.push_back(std::cbrt(-q / 2.0 + sq) + std::cbrt(-q / 2.0 - sq) - b / 3.0);
        } else {
            const double m = 2.0 * std::sqrt(-p / 3.0);
            const double arg = m == 0.0 ? 0.0 : std::clamp(3.0 * q / (p * m), -1.0, 1.0);
            const double th = std::acos(arg) / 3.0;
            for (int k = 0; k < 3; ++k) r.push_back(m * std::cos(th - 2.0 * std::numbers::pi * k / 3.0) - b / 3.0);
        }
        return r;
    }

    double kappa_, gperp_, gpar_, a0_;
    std::vector<Term> terms_;
};

inline double char_fn(double zeta, double a0, const Ensemble& ens, const CavityDrive& cav) {
    return CharacteristicFunction(a0, ens, cav)(zeta);
}

struct DecayRoot {
    double zeta = 0.0;
    double residual = 0.0;  // f(zeta) / max(kappa, zeta |f'(zeta)|)
    double bracket_lo = 0.0;
    double bracket_hi = 0.0;
};

inline constexpr std::size_t decay_grid_points = 400;

/// Smallest positive real root of the characteristic function. Scans a log grid
/// upward from 1e-10 gamma_par: [.., 1e-4 gamma_par], [.., 10 gamma_par], then on
/// to 2 kappa. Poles are located exactly and the grid is split at them, so a root
/// hugging a pole is not lost.
inline DecayRoot smallest_decay_rate(const CharacteristicFunction& f) {
    const double gp = f.gamma_par();
    std::vector<std::pair<double, double>> ranges{{gp * 1e-10, gp * 1e-4}, {gp * 1e-4, gp * 10.0}};
    if (2.0 * f.kappa() > gp * 10.0) ranges.push_back({gp * 10.0, 2.0 * f.kappa()});

    // roots of weakly coupled clusters can sit within ~1e-10 of their pole
    constexpr double pole_gaps[] = {1e-13, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6};
    std::ostringstream trace;
    for (const auto& [lo, hi] : ranges) {
        const auto poles = f.poles(lo, hi);
        auto grid = roots::log_grid(lo, hi, decay_grid_points);
        for (double p : poles)
            for (double g : pole_gaps) {
                grid.push_back(p * (1.0 - g));
                grid.push_back(p * (1.0 + g));
            }
        std::sort(grid.begin(), grid.end());
        auto pole_between = [&](double a, double b) {
            const auto it = std::upper_bound(poles.begin(), poles.end(), a);
            return it != poles.end() && *it < b;
        };
        double x0 = grid[0], f0 = f(x0);
        trace << "[" << lo << ", " << hi << "]: " << poles.size() << " poles, f(lo) = " << f0;
        for (std::size_t i = 1; i < grid.size(); ++i) {
            const double x1 = grid[i], f1 = f(x1);
            if (x1 > lo && x1 <= hi && !pole_between(x0, x1) && std::isfinite(f0) && std::isfinite(f1)) {
                if (f0 == 0.0) return {x0, 0.0, x0, x0};
                if ((f0 < 0.0) != (f1 < 0.0)) {
                    auto fn = [&](double z) { return f(z); };
                    auto dfn = [&](double z) { return f.derivative(z); };
                    const double r = roots::safeguarded_newton(fn, dfn, x0, x1, 1e-13);
                    // a sign flip from rounding right next to a pole is not a root
                    // next to a pole f is too steep for |f| ~ eps kappa, so scale by the slope
                    const double res = f(r) / std::max(f.kappa(), r * std::abs(f.derivative(r)));
                    if (std::abs(res) <= 1e-10) return {r, res, x0, x1};
                    trace << ", rejected bracket [" << x0 << ", " << x1 << "]";
                }
            }
            x0 = x1;
            f0 = f1;
        }
        trace << ", f(hi) = " << f0 << "; ";
    }
    throw NumericalError("no sign change of the characteristic function found: " + trace.str());
}

inline double smallest_decay_rate(double a0, const Ensemble& ens, const CavityDrive& cav) {
    return smallest_decay_rate(CharacteristicFunction(a0, ens, cav)).zeta;
}

// ---------------------------------------------------------------------------

struct DecaySpectrumPoint {
    double eta = 0.0;  // absolute, same units as kappa * a
    double eta_normalized = 0.0;
    double a0 = 0.0;
    Branch branch = Branch::Unique;
    double zeta = 0.0;  // rad/s
    double residual = 0.0;
};

struct DecaySweep {
    double omega_coll = 0.0;
    double eta_reference = 0.0;
    std::optional<SnPair> pair;
    std::vector<DecaySpectrumPoint> points;  // ordered by eta, then branch
};

/// Stable stationary states at eta with branch labels.
inline std::vector<std::pair<double, Branch>> stable_states(double eta, const CooperativityTable& tab, double kappa,
                                                            const std::optional<SnPair>& pair) {
    const auto rs = solve_a0(eta, tab, kappa);
    std::vector<std::pair<double, Branch>> out;
    if (rs.size() >= 3) {
        out.push_back({rs.front().a0, Branch::Lower});
        out.push_back({rs.back().a0, Branch::Upper});
        return out;
    }
    for (const auto& r : rs) {
        if (!r.stable) continue;
        Branch b = Branch::Unique;
        if (pair && !pair->degenerate()) b = r.a0 <= pair->a0_down ? Branch::Lower : Branch::Upper;
        out.push_back({r.a0, b});
    }
    return out;
}

/// Decay rates over eta grids (eta in absolute units, one grid per Omega).
inline std::vector<DecaySweep> zeta_sweep(const EnsembleRecipe& recipe, const std::vector<double>& omegas,
                                          const std::vector<std::vector<double>>& eta_grids, std::size_t workers = 0) {
    require(omegas.size() == eta_grids.size(), "zeta_sweep needs one eta grid per Omega");
    std::vector<DecaySweep> out(omegas.size());
    for (std::size_t w = 0; w < omegas.size(); ++w) {
        const auto ens = recipe.ensemble(omegas[w]);
        const auto tab = cooperativities(ens, recipe.cavity);
        const double kappa = recipe.cavity.kappa;
        auto& sw = out[w];
        sw.omega_coll = omegas[w];
        sw.pair = find_sn_pair(tab, kappa);
        sw.eta_reference = eta_reference(tab, kappa);
        const auto& etas = eta_grids[w];
        std::vector<std::vector<DecaySpectrumPoint>> slots(etas.size());
        parallel_for(etas.size(), workers, [&](std::size_t i) {
            for (const auto& [a0, br] : stable_states(etas[i], tab, kappa, sw.pair)) {
                const CharacteristicFunction f(a0, ens, recipe.cavity);
                const auto r = smallest_decay_rate(f);
                slots[i].push_back({etas[i], etas[i] / sw.eta_reference, a0, br, r.zeta, r.residual});
            }
        });
        for (auto& s : slots)
            for (auto& p : s) sw.points.push_back(p);
    }
    return out;
}

// ---------------------------------------------------------------------------

/// Real Jacobian of the Maxwell-Bloch system (flat layout of FullModel) at the stationary state a0.
inline Eigen::MatrixXd stationary_jacobian(double a0, const Ensemble& ens, const CavityDrive& cav) {
    const auto tab = cooperativities(ens, cav);
    const auto z = sigma_z0(a0, tab);
    const std::size_t m = ens.size(), n = 2 + 3 * m;
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
    const double ar = a0, ai = 0.0, dc = cav.cavity_detuning();
    j(0, 0) = -cav.kappa;
    j(0, 1) = dc;
    j(1, 0) = -dc;
    j(1, 1) = -cav.kappa;
    for (std::size_t k = 0; k < m; ++k) {
        const double g = ens.clusters[k].coupling, det = ens.detuning(k, cav.omega_p);
        const std::complex<double> s =
            std::complex<double>{0.0, 1.0} * g * z[k] * a0 / std::complex<double>{ens.gamma_perp, det};
        const double sr = s.real(), si = s.imag();
        const std::size_t r = 2 + 3 * k, i = r + 1, zz = r + 2;
        j(0, i) = g;
        j(1, r) = -g;
        j(r, r) = -ens.gamma_perp;
        j(r, i) = det;
        j(r, zz) = -g * ai;
        j(r, 1) = -g * z[k];
        j(i, i) = -ens.gamma_perp;
        j(i, r) = -det;
        j(i, zz) = g * ar;
        j(i, 0) = g * z[k];
        j(zz, zz) = -ens.gamma_par;
        j(zz, i) = -4.0 * g * ar;
        j(zz, 0) = -4.0 * g * si;
        j(zz, r) = 4.0 * g * ai;
        j(zz, 1) = 4.0 * g * sr;
    }
    return j;
}

/// Eigenvalues of the stationary Jacobian, sorted by decreasing real part (slowest first).
inline std::vector<std::complex<double>> jacobian_cross_check(double a0, const Ensemble& ens, const CavityDrive& cav) {
    require(ens.size() <= 20, "jacobian_cross_check is limited to M <= 20");
    const Eigen::EigenSolver<Eigen::MatrixXd> es(stationary_jacobian(a0, ens, cav), false);
    std::vector<std::complex<double>> ev(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
    std::sort(ev.begin(), ev.end(), [](auto x, auto y) { return x.real() > y.real(); });
    return ev;
}

/// Jacobian restricted to the invariant subspace of real amplitude and mirror-symmetric
/// spins (layout of RealModeModel). The characteristic function describes exactly this
/// sector, so its real roots are the negated real eigenvalues here. For odd M the
/// central x row is dropped.
inline Eigen::MatrixXd in_phase_jacobian(double a0, const Ensemble& ens, const CavityDrive& cav) {
    const RealModeModel model(ens, cav);
    const auto y0 = model.pack(stationary_state(a0, ens, cav));
    const std::size_t m = ens.size(), first = m / 2, n = model.dimension();
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
    j(0, 0) = -cav.kappa;
    for (std::size_t p = 0; first + p < m; ++p) {
        const std::size_t k = first + p, x = 1 + 3 * p, y = x + 1, z = x + 2;
        const double g = ens.clusters[k].coupling, det = ens.detuning(k, cav.omega_p);
        const double w = (m % 2 == 1 && k == first) ? 1.0 : 2.0;
        j(0, y) = -0.5 * w * g;
        j(x, x) = -ens.gamma_perp;
        j(x, y) = -det;
        j(y, x) = det;
        j(y, y) = -ens.gamma_perp;
        j(y, z) = -2.0 * g * a0;
        j(y, 0) = -2.0 * g * y0[z];
        j(z, y) = 2.0 * g * a0;
        j(z, z) = -ens.gamma_par;
        j(z, 0) = 2.0 * g * y0[y];
    }
    if (m % 2 == 0) return j;
    // the central cluster is its own mirror image, so its x vanishes identically
    Eigen::MatrixXd r(n - 1, n - 1);
    for (std::size_t a = 0, ra = 0; a < n; ++a) {
        if (a == 1) continue;
        for (std::size_t b = 0, rb = 0; b < n; ++b) {
            if (b == 1) continue;
            r(ra, rb++) = j(a, b);
        }
        ++ra;
    }
    return r;
}

/// Eigenvalues of in_phase_jacobian, slowest first.
inline std::vector<std::complex<double>> in_phase_spectrum(double a0, const Ensemble& ens, const CavityDrive& cav) {
    require(ens.size() <= 41, "in_phase_spectrum is limited to M <= 41");
    const Eigen::EigenSolver<Eigen::MatrixXd> es(in_phase_jacobian(a0, ens, cav), false);
    std::vector<std::complex<double>> ev(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
    std::sort(ev.begin(), ev.end(), [](auto x, auto y) { return x.real() > y.real(); });
    return ev;
}

/// Decay rate of the slowest mode (-max Re lambda).
inline double slowest_jacobian_rate(const std::vector<std::complex<double>>& ev) {
    require(!ev.empty(), "empty spectrum");
    return -ev.front().real();
}

}  // namespace spincav
