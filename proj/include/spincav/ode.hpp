// ode.hpp: adaptive integrators over flat std::vector<double> states.
//
// DormandPrince45: explicit 5(4) pair, FSAL, PI step control and the 4th-order
// continuous extension for output at arbitrary sample times.
// Rosenbrock23: linearly implicit 2(3) pair with a finite-difference Jacobian,
// the fallback for runs where the explicit pair's step collapses.
//
// The right-hand side has signature void(double t, const double* y, double* dydt)
// and must be autonomous within one call of integrate(); piecewise drives are
// integrated segment by segment by the caller.

#pragma once

#include "spincav/common.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace spincav::ode {

enum class OdeMethod { DormandPrince45, Rosenbrock23 };

struct SolverOptions {
    double rtol = 1e-8;
    double atol = 1e-10;
    double h_init = 0.0;  // 0 selects the starting-step heuristic
    double h_max = std::numeric_limits<double>::infinity();
    double h_min = 0.0;   // below max(h_min, 16 eps |t|) the run fails with StiffnessError
    std::size_t max_steps = 200'000'000;
    OdeMethod method = OdeMethod::DormandPrince45;
};

struct OdeStats {
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::size_t rhs_evals = 0;
    double t_final = 0.0;
    double last_step = 0.0;
    bool stopped_by_observer = false;
};

namespace detail {

inline double scaled_rms(std::span<const double> v, std::span<const double> y0, std::span<const double> y1,
                         double atol, double rtol) {
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double sc = atol + rtol * std::max(std::abs(y0[i]), std::abs(y1[i]));
        const double r = v[i] / sc;
        s += r * r;
    }
    return std::sqrt(s / static_cast<double>(std::max<std::size_t>(v.size(), 1)));
}

template <class Rhs>
double initial_step(Rhs& f, double t, const std::vector<double>& y, const std::vector<double>& f0, double dir,
                    int order, const SolverOptions& opt, std::size_t& evals) {
    const std::size_t n = y.size();
    double d0 = 0.0, d1 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double sc = opt.atol + opt.rtol * std::abs(y[i]);
        d0 += (y[i] / sc) * (y[i] / sc);
        d1 += (f0[i] / sc) * (f0[i] / sc);
    }
    d0 = std::sqrt(d0 / n);
    d1 = std::sqrt(d1 / n);
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h0 = std::min(h0, opt.h_max);
    std::vector<double> y1(n), f1(n);
    for (std::size_t i = 0; i < n; ++i) y1[i] = y[i] + dir * h0 * f0[i];
    f(t + dir * h0, y1.data(), f1.data());
    ++evals;
    double d2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double sc = opt.atol + opt.rtol * std::abs(y[i]);
        d2 += ((f1[i] - f0[i]) / sc) * ((f1[i] - f0[i]) / sc);
    }
    d2 = std::sqrt(d2 / n) / h0;
    const double dm = std::max(d1, d2);
    const double h1 = dm <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dm, 1.0 / (order + 1));
    return std::min({100.0 * h0, h1, opt.h_max});
}

inline void check_step(double t, double h, const SolverOptions& opt) {
    const double floor = std::max(opt.h_min, 16.0 * std::numeric_limits<double>::epsilon() * std::abs(t));
    if (std::abs(h) <= floor)
        throw StiffnessError("step size underflow at t = " + std::to_string(t) + " (h = " + std::to_string(h) +
                                 "); the system is too stiff for the chosen method. Use the Rosenbrock23 "
                                 "fallback or a larger longitudinal rate gamma_par for desk-scale runs",
                             t, h);
}

}  // namespace detail

/// Integrates y from t0 to t1. For every sample time s (ascending, inside
/// [t0, t1]) the observer is called as obs(s, span<const double>); returning
/// false stops the run and leaves y at that sample. Otherwise y ends at t1.
template <class Rhs, class Observer>
OdeStats integrate(Rhs&& f, std::vector<double>& y, double t0, double t1, std::span<const double> samples,
                   Observer&& obs, const SolverOptions& opt = {});

namespace detail {

template <class Rhs, class Observer>
OdeStats integrate_dopri(Rhs& f, std::vector<double>& y, double t0, double t1, std::span<const double> samples,
                         Observer& obs, const SolverOptions& opt) {
    constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    constexpr double a21 = 1.0 / 5;
    constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                     a65 = -5103.0 / 18656;
    constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                     a76 = 11.0 / 84;
    constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                     e6 = 22.0 / 525, e7 = -1.0 / 40;
    constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                     d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                     d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

    const std::size_t n = y.size();
    OdeStats st;
    std::vector<double> k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), yt(n), ynew(n), err(n);
    std::vector<double> r1(n), r2(n), r3(n), r4(n), r5(n), ys(n);

    double t = t0;
    std::size_t next = 0;
    while (next < samples.size() && samples[next] <= t0) {
        ++next;
        if (!obs(t0, std::span<const double>(y))) {
            st.t_final = t0;
            st.stopped_by_observer = true;
            return st;
        }
    }
    if (t1 <= t0) {
        st.t_final = t0;
        return st;
    }

    f(t, y.data(), k1.data());
    ++st.rhs_evals;
    double h = opt.h_init > 0.0 ? opt.h_init : initial_step(f, t, y, k1, 1.0, 5, opt, st.rhs_evals);
    double facold = 1e-4;
    constexpr double beta = 0.04, expo1 = 0.2 - beta * 0.75, safe = 0.9, facc1 = 5.0, facc2 = 0.1;
    bool last_rejected = false;

    while (t < t1) {
        if (st.accepted + st.rejected >= opt.max_steps)
            throw NumericalError("integrator exceeded max_steps = " + std::to_string(opt.max_steps) +
                                 " at t = " + std::to_string(t));
        h = std::min(h, opt.h_max);
        const bool final_step = t + 1.01 * h >= t1;
        if (final_step) h = t1 - t;
        check_step(t, h, opt);

        for (std::size_t i = 0; i < n; ++i) yt[i] = y[i] + h * a21 * k1[i];
        f(t + c2 * h, yt.data(), k2.data());
        for (std::size_t i = 0; i < n; ++i) yt[i] = y[i] + h * (a31 * k1[i] + a32 * k2[i]);
        f(t + c3 * h, yt.data(), k3.data());
        for (std::size_t i = 0; i < n; ++i) yt[i] = y[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
        f(t + c4 * h, yt.data(), k4.data());
        for (std::size_t i = 0; i < n; ++i)
            yt[i] = y[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
        f(t + c5 * h, yt.data(), k5.data());
        for (std::size_t i = 0; i < n; ++i)
            yt[i] = y[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
        f(t + h, yt.data(), k6.data());
        for (std::size_t i = 0; i < n; ++i)
            ynew[i] = y[i] + h * (a71 * k1[i] + a73 * k3[i] + a74 * k4[i] + a75 * k5[i] + a76 * k6[i]);
        f(t + h, ynew.data(), k7.data());
        st.rhs_evals += 6;

        for (std::size_t i = 0; i < n; ++i)
            err[i] = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
        const double e = scaled_rms(err, y, ynew, opt.atol, opt.rtol);
        if (!std::isfinite(e)) {
            h *= 0.1;
            ++st.rejected;
            last_rejected = true;
            continue;
        }
        const double fac11 = std::pow(e, expo1);
        if (e <= 1.0) {
            double fac = fac11 / std::pow(facold, beta);
            fac = std::max(facc2, std::min(facc1, fac / safe));
            double hnew = h / fac;
            facold = std::max(e, 1e-4);
            ++st.accepted;

            // dense output for samples inside (t, t + h]
            const double tn = final_step ? t1 : t + h;
            if (next < samples.size() && samples[next] <= tn) {
                for (std::size_t i = 0; i < n; ++i) {
                    const double ydiff = ynew[i] - y[i];
                    const double bspl = h * k1[i] - ydiff;
                    r1[i] = y[i];
                    r2[i] = ydiff;
                    r3[i] = bspl;
                    r4[i] = ydiff - h * k7[i] - bspl;
                    r5[i] = h * (d1 * k1[i] + d3 * k3[i] + d4 * k4[i] + d5 * k5[i] + d6 * k6[i] + d7 * k7[i]);
                }
                while (next < samples.size() && samples[next] <= tn) {
                    const double s = samples[next++];
                    const double th = (s - t) / h, th1 = 1.0 - th;
                    for (std::size_t i = 0; i < n; ++i)
                        ys[i] = r1[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i])));
                    if (!obs(s, std::span<const double>(ys))) {
                        y = ys;
                        st.t_final = s;
                        st.last_step = h;
                        st.stopped_by_observer = true;
                        return st;
                    }
                }
            }
            y.swap(ynew);
            k1.swap(k7);
            t = tn;
            if (last_rejected) hnew = std::min(hnew, h);
            last_rejected = false;
            st.last_step = h;
            h = hnew;
        } else {
            h /= std::min(facc1, fac11 / safe);
            ++st.rejected;
            last_rejected = true;
        }
    }
    st.t_final = t1;
    return st;
}

template <class Rhs, class Observer>
OdeStats integrate_rosenbrock(Rhs& f, std::vector<double>& y, double t0, double t1, std::span<const double> samples,
                              Observer& obs, const SolverOptions& opt) {
    const std::size_t n = y.size();
    const double d = 1.0 / (2.0 + std::sqrt(2.0));
    const double e32 = 6.0 + std::sqrt(2.0);
    OdeStats st;
    std::vector<double> f0(n), f1(n), f2(n), yt(n), ynew(n), ys(n), fp(n);
    Eigen::MatrixXd jac(n, n);
    Eigen::VectorXd rhs(n), k1(n), k2(n), k3(n);

    double t = t0;
    std::size_t next = 0;
    while (next < samples.size() && samples[next] <= t0) {
        ++next;
        if (!obs(t0, std::span<const double>(y))) {
            st.t_final = t0;
            st.stopped_by_observer = true;
            return st;
        }
    }
    if (t1 <= t0) {
        st.t_final = t0;
        return st;
    }
    f(t, y.data(), f0.data());
    ++st.rhs_evals;
    double h = opt.h_init > 0.0 ? opt.h_init : initial_step(f, t, y, f0, 1.0, 2, opt, st.rhs_evals);

    auto fd_jacobian = [&]() {
        for (std::size_t j = 0; j < n; ++j) {
            const double yj = y[j];
            const double dy = std::sqrt(std::numeric_limits<double>::epsilon()) * std::max(std::abs(yj), opt.atol * 1e3 + 1e-300);
            y[j] = yj + dy;
            f(t, y.data(), fp.data());
            y[j] = yj;
            for (std::size_t i = 0; i < n; ++i) jac(i, j) = (fp[i] - f0[i]) / dy;
        }
        st.rhs_evals += n;
    };
    fd_jacobian();

    while (t < t1) {
        if (st.accepted + st.rejected >= opt.max_steps)
            throw NumericalError("integrator exceeded max_steps at t = " + std::to_string(t));
        h = std::min(h, opt.h_max);
        const bool final_step = t + 1.01 * h >= t1;
        if (final_step) h = t1 - t;
        check_step(t, h, opt);

        const Eigen::MatrixXd w = Eigen::MatrixXd::Identity(n, n) - h * d * jac;
        const Eigen::PartialPivLU<Eigen::MatrixXd> lu(w);
        for (std::size_t i = 0; i < n; ++i) rhs[i] = f0[i];
        k1 = lu.solve(rhs);
        for (std::size_t i = 0; i < n; ++i) yt[i] = y[i] + 0.5 * h * k1[i];
        f(t + 0.5 * h, yt.data(), f1.data());
        for (std::size_t i = 0; i < n; ++i) rhs[i] = f1[i] - k1[i];
        k2 = lu.solve(rhs) + k1;
        for (std::size_t i = 0; i < n; ++i) ynew[i] = y[i] + h * k2[i];
        f(t + h, ynew.data(), f2.data());
        for (std::size_t i = 0; i < n; ++i) rhs[i] = f2[i] - e32 * (k2[i] - f1[i]) - 2.0 * (k1[i] - f0[i]);
        k3 = lu.solve(rhs);
        st.rhs_evals += 2;

        std::vector<double> errv(n);
        for (std::size_t i = 0; i < n; ++i) errv[i] = h / 6.0 * (k1[i] - 2.0 * k2[i] + k3[i]);
        const double e = scaled_rms(errv, y, ynew, opt.atol, opt.rtol);
        if (!std::isfinite(e) || e > 1.0) {
            h *= std::isfinite(e) ? std::max(0.2, 0.8 * std::pow(e, -1.0 / 3.0)) : 0.1;
            ++st.rejected;
            continue;
        }
        ++st.accepted;
        const double tn = final_step ? t1 : t + h;
        while (next < samples.size() && samples[next] <= tn) {
            const double s = samples[next++];
            const double th = (s - t) / h;
            const double w1 = th * (1.0 - th) / (1.0 - 2.0 * d), w2 = th * (th - 2.0 * d) / (1.0 - 2.0 * d);
            for (std::size_t i = 0; i < n; ++i) ys[i] = y[i] + h * (w1 * k1[i] + w2 * k2[i]);
            if (!obs(s, std::span<const double>(ys))) {
                y = ys;
                st.t_final = s;
                st.last_step = h;
                st.stopped_by_observer = true;
                return st;
            }
        }
        y.swap(ynew);
        f0.swap(f2);
        t = tn;
        st.last_step = h;
        h *= std::min(5.0, 0.8 * std::pow(std::max(e, 1e-10), -1.0 / 3.0));
        fd_jacobian();
    }
    st.t_final = t1;
    return st;
}

}  // namespace detail

template <class Rhs, class Observer>
OdeStats integrate(Rhs&& f, std::vector<double>& y, double t0, double t1, std::span<const double> samples,
                   Observer&& obs, const SolverOptions& opt) {
    require(opt.rtol > 0.0 && opt.atol > 0.0, "integrator tolerances must be positive");
    require(std::is_sorted(samples.begin(), samples.end()), "sample times must be ascending");
    if (opt.method == OdeMethod::Rosenbrock23) return detail::integrate_rosenbrock(f, y, t0, t1, samples, obs, opt);
    return detail::integrate_dopri(f, y, t0, t1, samples, obs, opt);
}

}  // namespace spincav::ode
