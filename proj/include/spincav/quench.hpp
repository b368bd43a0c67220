// quench.hpp: quenches across a saddle-node, transit times through the
// bottleneck and the power-law fit T = T0 + beta |eta - eta_c|^-alpha.
//
// The slowing-down window is the gap of a^2 between the two SN amplitudes,
// (a0_down^2, a0_up^2), where no stable stationary state exists. T is the time
// a^2(t) spends inside it, with a^2 interpolated linearly between samples of a
// fixed time grid.

#pragma once

#include "spincav/adiabatic.hpp"
#include "spincav/bifurcation.hpp"
#include "spincav/common.hpp"
#include "spincav/dynamics.hpp"
#include "spincav/ode.hpp"
#include "spincav/parallel.hpp"
#include "spincav/steady.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace spincav {

enum class QuenchModel { Full, Adiabatic };

inline std::string to_string(QuenchModel m) { return m == QuenchModel::Full ? "full" : "adiabatic"; }

struct SlowingWindow {
    double lo = 0.0;  // a^2
    double hi = 0.0;
    bool contains(double v) const noexcept { return v > lo && v < hi; }
};

/// Time a piecewise-linear signal spends inside (lo, hi) over one sample interval.
inline double time_inside(double v0, double v1, double dt, const SlowingWindow& w) {
    if (v0 == v1) return w.contains(v0) ? dt : 0.0;
    const double a = std::min(v0, v1), b = std::max(v0, v1);
    const double overlap = std::max(0.0, std::min(b, w.hi) - std::max(a, w.lo));
    return dt * overlap / (b - a);
}

struct QuenchOptions {
    QuenchModel model = QuenchModel::Adiabatic;
    double sample_dt = 0.0;      // seconds; 0 selects 0.005 / gamma_par
    double settle_tol = 0.01;    // relative distance of a^2 to the destination state
    ode::SolverOptions solver;
    bool real_mode = true;       // full model: use the reduced real system when allowed
};

struct QuenchRun {
    Branch source = Branch::Upper;
    QuenchModel model = QuenchModel::Adiabatic;
    double eta_initial = 0.0;
    double eta_quench = 0.0;
    double eta_c = 0.0;
    double a0_initial = 0.0;
    double a0_destination = 0.0;
    SlowingWindow window;
    std::vector<double> t;     // seconds
    std::vector<double> a_sq;
    std::vector<double> sigma_z_central;
    std::vector<double> max_bloch;  // full model only
    double transit_time = 0.0;  // seconds
    bool entered = false;
    bool exited = false;
    bool settled = false;
    bool partial = false;       // t_max reached before settling
};

namespace detail {

/// Picks the stationary amplitude on the requested side of the bistable window.
inline double branch_root(double eta, const CooperativityTable& tab, double kappa, Branch source) {
    const auto rs = solve_a0(eta, tab, kappa);
    const auto& r = source == Branch::Upper ? rs.back() : rs.front();
    if (!r.stable) throw NumericalError("initial stationary state is not stable");
    return r.a0;
}

}  // namespace detail

/// Quench from the stationary state at eta_initial (on the source branch) to eta_quench at t = 0.
inline QuenchRun run_quench(const Ensemble& ens, const CavityDrive& cav, Branch source, double eta_initial,
                            double eta_quench, double t_max, const QuenchOptions& opt = {}) {
    require(source == Branch::Upper || source == Branch::Lower, "quench source must be the upper or lower branch");
    require(t_max > 0.0, "t_max must be positive");
    const auto tab = cooperativities(ens, cav);
    const double kappa = cav.kappa;
    const auto pair = find_sn_pair(tab, kappa);
    if (!pair || pair->degenerate()) throw ParameterError("quench needs a bistable ensemble");

    QuenchRun run;
    run.source = source;
    run.model = opt.model;
    run.eta_initial = eta_initial;
    run.eta_quench = eta_quench;
    run.window = {pair->a0_down * pair->a0_down, pair->a0_up * pair->a0_up};
    if (source == Branch::Upper) {
        run.eta_c = pair->eta_up;
        require(eta_quench < pair->eta_up, "upper-branch quench must end below the upper SN drive");
        require(eta_initial > pair->eta_up, "upper-branch quench must start above the upper SN drive");
    } else {
        run.eta_c = pair->eta_down;
        require(eta_quench > pair->eta_down, "lower-branch quench must end above the lower SN drive");
        require(eta_initial < pair->eta_down, "lower-branch quench must start below the lower SN drive");
    }
    run.a0_initial = detail::branch_root(eta_initial, tab, kappa, source);
    const auto dest = solve_a0(eta_quench, tab, kappa);
    run.a0_destination = dest.size() == 1 ? dest.front().a0 : (source == Branch::Upper ? dest.front().a0 : dest.back().a0);
    const double dest_sq = run.a0_destination * run.a0_destination;

    const double dt = opt.sample_dt > 0.0 ? opt.sample_dt : 0.005 / ens.gamma_par;
    const std::size_t n = static_cast<std::size_t>(std::ceil(t_max / dt));
    std::vector<double> samples(n);
    for (std::size_t i = 0; i < n; ++i) samples[i] = static_cast<double>(i + 1) * dt;
    samples.back() = std::min(samples.back(), t_max);

    const auto central = ens.central_index();
    double prev_t = 0.0, prev_v = run.a0_initial * run.a0_initial;
    bool inside = run.window.contains(prev_v);
    run.t.push_back(0.0);
    run.a_sq.push_back(prev_v);
    // accumulates window time; returns true once the destination is reached
    auto observe = [&](double t, double v) {
        run.transit_time += time_inside(prev_v, v, t - prev_t, run.window);
        const bool now = run.window.contains(v);
        if (now && !inside) run.entered = true;
        if (!now && inside) run.exited = true;
        // crossed the whole window between two samples
        if (!now && !inside && std::min(prev_v, v) <= run.window.lo && std::max(prev_v, v) >= run.window.hi)
            run.entered = run.exited = true;
        inside = now;
        prev_t = t;
        prev_v = v;
        run.t.push_back(t);
        run.a_sq.push_back(v);
        const bool dest_side = source == Branch::Upper ? v <= run.window.lo : v >= run.window.hi;
        if (run.exited && dest_side && std::abs(v - dest_sq) <= opt.settle_tol * dest_sq) {
            run.settled = true;
            return true;
        }
        return false;
    };

    if (opt.model == QuenchModel::Adiabatic) {
        run.sigma_z_central.push_back(central ? sigma_z0(run.a0_initial, tab)[*central] : 0.0);
        std::vector<double> taus(samples);
        for (auto& s : taus) s *= ens.gamma_par;
        SlowOptions so;
        so.solver = opt.solver;
        so.central = central;
        integrate_slow(slow_stationary(run.a0_initial, tab), tab, eta_quench, kappa, t_max * ens.gamma_par, taus, so,
                       [&](double tau, double a, std::span<const double> z) {
                           run.sigma_z_central.push_back(central ? z[*central] : 0.0);
                           return !observe(tau / ens.gamma_par, a * a);
                       });
    } else {
        const auto init = stationary_state(run.a0_initial, ens, cav);
        run.sigma_z_central.push_back(central ? init.sigma_z[*central] : 0.0);
        run.max_bloch.push_back(init.max_bloch_norm());
        IntegrateOptions io;
        io.solver = opt.solver;
        io.stop = [&](double t, cplx a) { return observe(t, std::norm(a)); };
        const StepDrive drive{eta_quench, 0.0};
        const bool reduced = opt.real_mode && cav.omega_c == cav.omega_p && cav.omega_p == ens.omega_s &&
                             ens.is_symmetric();
        const auto traj = reduced ? real_mode_integrate(init, ens, cav, drive, t_max, samples, io)
                                  : integrate(init, ens, cav, drive, t_max, samples, io);
        run.sigma_z_central.insert(run.sigma_z_central.end(), traj.sigma_z_central.begin(),
                                   traj.sigma_z_central.end());
        run.max_bloch.insert(run.max_bloch.end(), traj.max_bloch.begin(), traj.max_bloch.end());
    }
    run.partial = !run.settled;
    return run;
}

// ---------------------------------------------------------------------------

struct PhasePoint {
    double a_sq = 0.0;
    double da_sq_dt = 0.0;  // 1/s
};

/// Centered differences of a^2 along the sampled run (one-sided at the ends).
inline std::vector<PhasePoint> phase_portrait(const QuenchRun& run) {
    const auto& t = run.t;
    const auto& v = run.a_sq;
    std::vector<PhasePoint> out(v.size());
    if (v.size() < 2) return out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const std::size_t l = i == 0 ? 0 : i - 1, r = i + 1 == v.size() ? i : i + 1;
        out[i] = {v[i], (v[r] - v[l]) / (t[r] - t[l])};
    }
    return out;
}

struct PortraitDip {
    bool found = false;       // local minimum of |da^2/dt| strictly inside the window
    double a_sq = 0.0;
    double speed = 0.0;       // |da^2/dt| at the minimum, 1/s
};

inline PortraitDip portrait_dip(const std::vector<PhasePoint>& pp, const SlowingWindow& w) {
    // the speed also falls toward the window edge when a itself gets small, so only
    // interior local minima count; the slowest of them is the ghost
    PortraitDip d;
    d.speed = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i + 1 < pp.size(); ++i) {
        if (!w.contains(pp[i - 1].a_sq) || !w.contains(pp[i].a_sq) || !w.contains(pp[i + 1].a_sq)) continue;
        const double s = std::abs(pp[i].da_sq_dt);
        if (s < std::abs(pp[i - 1].da_sq_dt) && s <= std::abs(pp[i + 1].da_sq_dt) && s < d.speed) {
            d.found = true;
            d.speed = s;
            d.a_sq = pp[i].a_sq;
        }
    }
    if (!d.found) d.speed = 0.0;
    return d;
}

// ---------------------------------------------------------------------------

struct TransitPoint {
    double eta = 0.0;
    double abs_deta = 0.0;
    double transit_time = 0.0;  // seconds
    bool partial = false;
};

struct TransitScan {
    Branch source = Branch::Upper;
    double eta_c = 0.0;
    double eta_initial = 0.0;
    std::vector<TransitPoint> points;
};

/// Default starting drive well away from the SN on the source branch.
inline double default_initial_eta(const SnPair& p, Branch source) {
    return source == Branch::Upper ? 1.2 * p.eta_down : 0.8 * p.eta_up;
}

inline TransitScan transit_time_scan(const Ensemble& ens, const CavityDrive& cav, Branch source,
                                     const std::vector<double>& etas, double t_max, const QuenchOptions& opt = {},
                                     std::optional<double> eta_initial = std::nullopt, std::size_t workers = 0) {
    const auto tab = cooperativities(ens, cav);
    const auto pair = find_sn_pair(tab, cav.kappa);
    if (!pair || pair->degenerate()) throw ParameterError("transit-time scan needs a bistable ensemble");
    TransitScan scan;
    scan.source = source;
    scan.eta_c = source == Branch::Upper ? pair->eta_up : pair->eta_down;
    scan.eta_initial = eta_initial.value_or(default_initial_eta(*pair, source));
    scan.points.resize(etas.size());
    parallel_for(etas.size(), workers, [&](std::size_t i) {
        const auto run = run_quench(ens, cav, source, scan.eta_initial, etas[i], t_max, opt);
        scan.points[i] = {etas[i], std::abs(etas[i] - scan.eta_c), run.transit_time, run.partial};
    });
    return scan;
}

/// Drives approaching eta_c from the monostable side, log-spaced in |eta - eta_c|/eta_c.
inline std::vector<double> approach_etas(double eta_c, Branch source, double rel_min, double rel_max, std::size_t n) {
    std::vector<double> out;
    for (double r : roots::log_grid(rel_min, rel_max, n))
        out.push_back(source == Branch::Upper ? eta_c * (1.0 - r) : eta_c * (1.0 + r));
    return out;
}

// ---------------------------------------------------------------------------

struct PowerLawFit {
    double alpha = 0.0;
    double beta = 0.0;  // time units of T times (units of x)^alpha
    double t0 = 0.0;
    double residual = 0.0;  // sqrt of the residual sum of squares
    std::size_t n_points = 0;
    double sd_alpha = 0.0, sd_beta = 0.0, sd_t0 = 0.0;  // square roots of the covariance diagonal
    std::size_t iterations = 0;
};

/// Levenberg-Marquardt fit of T = T0 + beta x^-alpha, started from a log-log line with T0 = 0.
inline PowerLawFit fit_power_law(const std::vector<double>& x, const std::vector<double>& t) {
    require(x.size() == t.size(), "fit_power_law: x and T differ in length");
    require(x.size() >= 6, "fit_power_law needs at least 6 points");
    for (double v : x) require(v > 0.0 && std::isfinite(v), "fit_power_law needs |eta - eta_c| > 0");
    for (double v : t) require(v > 0.0 && std::isfinite(v), "fit_power_law needs positive transit times");
    const std::size_t n = x.size();

    // geometric mean of x as the scale keeps the prefactor well conditioned
    double lx = 0.0;
    for (double v : x) lx += std::log(v);
    const double xref = std::exp(lx / n);

    Eigen::MatrixXd a(n, 2);
    Eigen::VectorXd b(n);
    for (std::size_t i = 0; i < n; ++i) {
        a(i, 0) = 1.0;
        a(i, 1) = std::log(x[i] / xref);
        b(i) = std::log(t[i]);
    }
    const Eigen::Vector2d line = a.colPivHouseholderQr().solve(b);
    Eigen::Vector3d p{-line(1), std::exp(line(0)), 0.0};  // alpha, b (scaled prefactor), T0

    auto residuals = [&](const Eigen::Vector3d& q, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
        r.resize(n);
        if (jac) jac->resize(n, 3);
        for (std::size_t i = 0; i < n; ++i) {
            const double u = x[i] / xref, pw = std::pow(u, -q(0));
            r(i) = q(2) + q(1) * pw - t[i];
            if (jac) {
                (*jac)(i, 0) = -q(1) * pw * std::log(u);
                (*jac)(i, 1) = pw;
                (*jac)(i, 2) = 1.0;
            }
        }
    };

    Eigen::VectorXd r;
    Eigen::MatrixXd jac;
    residuals(p, r, &jac);
    double cost = r.squaredNorm();
    double lambda = 1e-3;
    PowerLawFit fit;
    bool converged = false;
    for (std::size_t it = 0; it < 500; ++it) {
        fit.iterations = it + 1;
        const Eigen::Matrix3d jtj = jac.transpose() * jac;
        const Eigen::Vector3d g = jac.transpose() * r;
        Eigen::Matrix3d damped = jtj;
        for (int k = 0; k < 3; ++k) damped(k, k) += lambda * std::max(jtj(k, k), 1e-300);
        const Eigen::Vector3d step = damped.ldlt().solve(-g);
        const Eigen::Vector3d trial = p + step;
        Eigen::VectorXd rt;
        residuals(trial, rt, nullptr);
        const double ct = rt.squaredNorm();
        if (std::isfinite(ct) && ct < cost) {
            const bool small = step.cwiseAbs().maxCoeff() <= 1e-12 * (p.cwiseAbs().maxCoeff() + 1e-12) ||
                               (cost - ct) <= 1e-15 * cost;
            p = trial;
            cost = ct;
            residuals(p, r, &jac);
            lambda = std::max(lambda * 0.3, 1e-12);
            if (small) {
                converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if (lambda > 1e12) {
                converged = true;  // no further descent possible: stationary point
                break;
            }
        }
    }
    fit.alpha = p(0);
    fit.beta = p(1) * std::pow(xref, p(0));
    fit.t0 = p(2);
    fit.residual = std::sqrt(cost);
    fit.n_points = n;
    if (!converged || !std::isfinite(cost))
        throw NumericalError("power-law fit did not converge; best iterate alpha = " + std::to_string(fit.alpha) +
                             ", beta = " + std::to_string(fit.beta) + ", T0 = " + std::to_string(fit.t0));

    if (n > 3) {
        const double s2 = cost / static_cast<double>(n - 3);
        const Eigen::Matrix3d cov = s2 * (jac.transpose() * jac).inverse();
        // beta = b xref^alpha
        Eigen::RowVector3d gb{fit.beta * std::log(xref), std::pow(xref, p(0)), 0.0};
        fit.sd_alpha = std::sqrt(std::max(0.0, cov(0, 0)));
        fit.sd_beta = std::sqrt(std::max(0.0, double(gb * cov * gb.transpose())));
        fit.sd_t0 = std::sqrt(std::max(0.0, cov(2, 2)));
    }
    return fit;
}

/// Keeps the scan points inside the asymptotic regime (T >= t_min) that finished.
inline std::pair<std::vector<double>, std::vector<double>> fit_domain(const TransitScan& scan, double t_min) {
    std::vector<double> x, t;
    for (const auto& p : scan.points)
        if (!p.partial && p.transit_time >= t_min && p.abs_deta > 0.0) {
            x.push_back(p.abs_deta);
            t.push_back(p.transit_time);
        }
    return {x, t};
}

// ---------------------------------------------------------------------------

/// Transit time of dx/dt = r + x^2 through (-L, L), L = half_width_mult * sqrt(r),
/// measured with the same window bookkeeping as the quench runs. Tends to pi/sqrt(r).
inline double normal_form_transit_time(double r, double half_width_mult = 1e3, std::size_t samples_per_transit = 20000) {
    require(r > 0.0, "normal form needs r > 0");
    const double sr = std::sqrt(r), l = half_width_mult * sr;
    const double t_ref = std::numbers::pi / sr;
    const double dt = t_ref / static_cast<double>(samples_per_transit);
    const SlowingWindow w{-l, l};
    std::vector<double> y{-l};
    std::vector<double> samples;
    for (std::size_t i = 1; i <= 2 * samples_per_transit; ++i) samples.push_back(static_cast<double>(i) * dt);
    double prev_t = 0.0, prev_v = -l, total = 0.0;
    ode::SolverOptions so;
    so.rtol = 1e-10;
    so.atol = 1e-12 * l;
    auto f = [r](double, const double* x, double* dx) { dx[0] = r + x[0] * x[0]; };
    ode::integrate(f, y, 0.0, samples.back(), std::span<const double>(samples),
                   [&](double t, std::span<const double> x) {
                       total += time_inside(prev_v, x[0], t - prev_t, w);
                       prev_t = t;
                       prev_v = x[0];
                       return x[0] < l;
                   },
                   so);
    return total;
}

// ---------------------------------------------------------------------------

struct Plateau {
    double t_start = 0.0;
    double t_end = 0.0;
    double level = 0.0;  // mean value over the plateau
};

/// Intervals where |d ln y / d ln t| stays below max_log_slope for at least min_decades of t.
inline std::vector<Plateau> find_plateaus(const std::vector<double>& t, const std::vector<double>& y,
                                          double max_log_slope = 0.05, double min_decades = 0.5) {
    require(t.size() == y.size(), "find_plateaus: length mismatch");
    std::vector<Plateau> out;
    std::size_t start = 0;
    bool open = false;
    double sum = 0.0;
    std::size_t cnt = 0;
    auto close = [&](std::size_t end) {
        if (open && std::log10(t[end] / t[start]) >= min_decades) out.push_back({t[start], t[end], sum / cnt});
        open = false;
    };
    for (std::size_t i = 1; i < t.size(); ++i) {
        if (!(t[i - 1] > 0.0 && y[i - 1] > 0.0 && y[i] > 0.0)) {
            close(i - 1);
            continue;
        }
        const double s = std::log(y[i] / y[i - 1]) / std::log(t[i] / t[i - 1]);
        if (std::abs(s) <= max_log_slope) {
            if (!open) {
                open = true;
                start = i - 1;
                sum = y[i - 1];
                cnt = 1;
            }
            sum += y[i];
            ++cnt;
        } else {
            close(i - 1);
        }
    }
    close(t.size() - 1);
    return out;
}

}  // namespace spincav
