// dynamics.hpp: full Maxwell-Bloch equations for a cavity coupled to M spin clusters.
//
//   da/dt      = -(kappa + i Delta_c) a - i sum_k g_k s_k + eta(t)
//   ds_k/dt    = -(gamma_perp + i Delta_k) s_k + i g_k z_k a
//   dz_k/dt    = -gamma_par (1 + z_k) + 2 i g_k (s_k a* - s_k* a)
//
// with s_k = sigma_k^- and z_k = sigma_k^z. The flat layout used by the
// integrator is [Re a, Im a, (Re s_k, Im s_k, z_k) for k = 0..M-1].
//
// On resonance with a mirror-symmetric ensemble the amplitude stays real and
// mirrored clusters carry (x, y, z) -> (-x, y, z); RealModeModel integrates only
// the non-negative-offset half in the real Bloch components.

#pragma once

#include "spincav/common.hpp"
#include "spincav/ode.hpp"
#include "spincav/roots.hpp"
#include "spincav/spectral.hpp"
#include "spincav/steady.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace spincav {

using cplx = std::complex<double>;

struct SystemState {
    cplx a{0.0, 0.0};
    std::vector<cplx> sigma_minus;
    std::vector<double> sigma_z;
    double t = 0.0;

    std::size_t size() const noexcept { return sigma_z.size(); }

    /// South pole of every Bloch sphere, empty cavity.
    static SystemState ground(std::size_t m, double t0 = 0.0) {
        SystemState s;
        s.sigma_minus.assign(m, cplx{0.0, 0.0});
        s.sigma_z.assign(m, -1.0);
        s.t = t0;
        return s;
    }

    /// Largest Bloch vector length; sigma^x = 2 Re s, sigma^y = -2 Im s.
    double max_bloch_norm() const {
        double m = 0.0;
        for (std::size_t k = 0; k < size(); ++k) {
            const double x = 2.0 * sigma_minus[k].real(), y = -2.0 * sigma_minus[k].imag();
            m = std::max(m, std::sqrt(x * x + y * y + sigma_z[k] * sigma_z[k]));
        }
        return m;
    }
};

/// Stationary state for the real amplitude a0: sigma_k^-0 = i g_k z_k a0 / (gamma_perp + i Delta_k).
inline SystemState stationary_state(double a0, const Ensemble& ens, const CavityDrive& cav) {
    const auto tab = cooperativities(ens, cav);
    const auto z = sigma_z0(a0, tab);
    SystemState s;
    s.a = cplx{a0, 0.0};
    s.sigma_z = z;
    s.sigma_minus.resize(ens.size());
    for (std::size_t k = 0; k < ens.size(); ++k) {
        const double g = ens.clusters[k].coupling;
        s.sigma_minus[k] = cplx{0.0, 1.0} * g * z[k] * a0 / cplx{ens.gamma_perp, ens.detuning(k, cav.omega_p)};
    }
    return s;
}

/// Heaviside drive eta(t) = eta for t >= t_on.
struct StepDrive {
    double eta = 0.0;
    double t_on = 0.0;
    double at(double t) const noexcept { return t >= t_on ? eta : 0.0; }
};

// ---------------------------------------------------------------------------

class FullModel {
public:
    FullModel(const Ensemble& ens, const CavityDrive& cav)
        : kappa_(cav.kappa), delta_c_(cav.cavity_detuning()), gperp_(ens.gamma_perp), gpar_(ens.gamma_par) {
        ens.validate();
        cav.validate();
        g_.resize(ens.size());
        det_.resize(ens.size());
        for (std::size_t k = 0; k < ens.size(); ++k) {
            g_[k] = ens.clusters[k].coupling;
            det_[k] = ens.detuning(k, cav.omega_p);
        }
    }

    std::size_t clusters() const noexcept { return g_.size(); }
    std::size_t dimension() const noexcept { return 2 + 3 * g_.size(); }

    void operator()(double eta, const double* y, double* dy) const {
        const double ar = y[0], ai = y[1];
        double sum_gsr = 0.0, sum_gsi = 0.0;
        const std::size_t m = g_.size();
        for (std::size_t k = 0; k < m; ++k) {
            const double* c = y + 2 + 3 * k;
            double* d = dy + 2 + 3 * k;
            const double sr = c[0], si = c[1], z = c[2], g = g_[k], det = det_[k];
            sum_gsr += g * sr;
            sum_gsi += g * si;
            d[0] = -gperp_ * sr + det * si - g * z * ai;
            d[1] = -gperp_ * si - det * sr + g * z * ar;
            d[2] = -gpar_ * (1.0 + z) - 4.0 * g * (si * ar - sr * ai);
        }
        dy[0] = -kappa_ * ar + delta_c_ * ai + sum_gsi + eta;
        dy[1] = -kappa_ * ai - delta_c_ * ar - sum_gsr;
    }

    std::vector<double> pack(const SystemState& s) const {
        require(s.size() == clusters() && s.sigma_minus.size() == clusters(), "state dimension does not match ensemble");
        std::vector<double> y(dimension());
        y[0] = s.a.real();
        y[1] = s.a.imag();
        for (std::size_t k = 0; k < clusters(); ++k) {
            y[2 + 3 * k] = s.sigma_minus[k].real();
            y[3 + 3 * k] = s.sigma_minus[k].imag();
            y[4 + 3 * k] = s.sigma_z[k];
        }
        return y;
    }

    SystemState unpack(std::span<const double> y, double t) const {
        SystemState s;
        s.t = t;
        s.a = cplx{y[0], y[1]};
        s.sigma_minus.resize(clusters());
        s.sigma_z.resize(clusters());
        for (std::size_t k = 0; k < clusters(); ++k) {
            s.sigma_minus[k] = cplx{y[2 + 3 * k], y[3 + 3 * k]};
            s.sigma_z[k] = y[4 + 3 * k];
        }
        return s;
    }

    cplx amplitude(std::span<const double> y) const { return {y[0], y[1]}; }
    double sigma_z(std::span<const double> y, std::size_t k) const { return y[4 + 3 * k]; }

    double max_bloch_norm(std::span<const double> y) const {
        double m = 0.0;
        for (std::size_t k = 0; k < clusters(); ++k) {
            const double x = 2.0 * y[2 + 3 * k], yy = 2.0 * y[3 + 3 * k], z = y[4 + 3 * k];
            m = std::max(m, std::sqrt(x * x + yy * yy + z * z));
        }
        return m;
    }

private:
    double kappa_, delta_c_, gperp_, gpar_;
    std::vector<double> g_, det_;
};

/// Right-hand side of the Maxwell-Bloch equations at drive value eta_t.
inline SystemState rhs(const SystemState& state, const Ensemble& ens, const CavityDrive& cav, double eta_t) {
    const FullModel model(ens, cav);
    const auto y = model.pack(state);
    std::vector<double> dy(y.size());
    model(eta_t, y.data(), dy.data());
    return model.unpack(dy, state.t);
}

// ---------------------------------------------------------------------------

class RealModeModel {
public:
    RealModeModel(const Ensemble& ens, const CavityDrive& cav)
        : kappa_(cav.kappa), gperp_(ens.gamma_perp), gpar_(ens.gamma_par), m_(ens.size()) {
        ens.validate();
        cav.validate();
        if (cav.omega_c != cav.omega_p || cav.omega_p != ens.omega_s)
            throw ParameterError("real-mode integration requires omega_c = omega_p = omega_s");
        if (!ens.is_symmetric())
            throw ParameterError("real-mode integration requires a mirror-symmetric ensemble");
        // representatives: clusters with offset >= 0, i.e. indices (m-1)/2 .. m-1 (m odd) or m/2 .. m-1
        first_ = m_ / 2;
        for (std::size_t j = first_; j < m_; ++j) {
            g_.push_back(ens.clusters[j].coupling);
            det_.push_back(ens.detuning(j, cav.omega_p));
            weight_.push_back((m_ % 2 == 1 && j == first_) ? 1.0 : 2.0);
        }
    }

    std::size_t dimension() const noexcept { return 1 + 3 * g_.size(); }

    void operator()(double eta, const double* y, double* dy) const {
        const double a = y[0];
        double sum = 0.0;
        for (std::size_t p = 0; p < g_.size(); ++p) {
            const double* c = y + 1 + 3 * p;
            double* d = dy + 1 + 3 * p;
            const double x = c[0], yy = c[1], z = c[2], g = g_[p], det = det_[p];
            sum += weight_[p] * g * yy;
            d[0] = -gperp_ * x - det * yy;
            d[1] = -gperp_ * yy + det * x - 2.0 * g * z * a;
            d[2] = -gpar_ * (1.0 + z) + 2.0 * g * yy * a;
        }
        dy[0] = -kappa_ * a - 0.5 * sum + eta;
    }

    std::vector<double> pack(const SystemState& s) const {
        require(s.size() == m_, "state dimension does not match ensemble");
        const double scale = std::max(1.0, std::abs(s.a));
        auto bad = [&](double v, double ref) { return std::abs(v) > 1e-9 * std::max(1.0, std::abs(ref)); };
        if (bad(s.a.imag(), scale)) throw ParameterError("real-mode integration requires a real cavity amplitude");
        std::vector<double> y(dimension());
        y[0] = s.a.real();
        for (std::size_t p = 0; p < g_.size(); ++p) {
            const std::size_t j = first_ + p, mirror = m_ - 1 - j;
            const double x = 2.0 * s.sigma_minus[j].real(), yy = -2.0 * s.sigma_minus[j].imag();
            const double xm = 2.0 * s.sigma_minus[mirror].real(), ym = -2.0 * s.sigma_minus[mirror].imag();
            if (bad(x + xm, 1.0) || bad(yy - ym, 1.0) || bad(s.sigma_z[j] - s.sigma_z[mirror], 1.0))
                throw ParameterError("initial state is not mirror-symmetric; use the complex integrator");
            y[1 + 3 * p] = x;
            y[2 + 3 * p] = yy;
            y[3 + 3 * p] = s.sigma_z[j];
        }
        return y;
    }

    SystemState unpack(std::span<const double> y, double t) const {
        SystemState s;
        s.t = t;
        s.a = cplx{y[0], 0.0};
        s.sigma_minus.resize(m_);
        s.sigma_z.resize(m_);
        for (std::size_t p = 0; p < g_.size(); ++p) {
            const std::size_t j = first_ + p, mirror = m_ - 1 - j;
            const double x = y[1 + 3 * p], yy = y[2 + 3 * p], z = y[3 + 3 * p];
            s.sigma_minus[j] = cplx{0.5 * x, -0.5 * yy};
            s.sigma_minus[mirror] = cplx{-0.5 * x, -0.5 * yy};
            s.sigma_z[j] = s.sigma_z[mirror] = z;
        }
        return s;
    }

    cplx amplitude(std::span<const double> y) const { return {y[0], 0.0}; }

    double sigma_z(std::span<const double> y, std::size_t k) const {
        const std::size_t j = k >= first_ ? k : m_ - 1 - k;
        return y[3 + 3 * (j - first_)];
    }

    double max_bloch_norm(std::span<const double> y) const {
        double m = 0.0;
        for (std::size_t p = 0; p < g_.size(); ++p) {
            const double x = y[1 + 3 * p], yy = y[2 + 3 * p], z = y[3 + 3 * p];
            m = std::max(m, std::sqrt(x * x + yy * yy + z * z));
        }
        return m;
    }

private:
    double kappa_, gperp_, gpar_;
    std::size_t m_, first_ = 0;
    std::vector<double> g_, det_, weight_;
};

// ---------------------------------------------------------------------------

enum class SampleSpacing { Log, Linear };

/// n sample times in (t0, t_end]; log spacing starts at t0 + first (default span * 1e-6).
inline std::vector<double> sample_times(double t0, double t_end, std::size_t n, SampleSpacing spacing,
                                        double first = 0.0) {
    require(t_end > t0 && n >= 1, "sample grid needs t_end > t0 and n >= 1");
    const double span = t_end - t0;
    if (n == 1) return {t_end};
    if (spacing == SampleSpacing::Linear) {
        auto g = roots::linear_grid(t0, t_end, n + 1);
        g.erase(g.begin());
        return g;
    }
    const double lo = first > 0.0 ? first : span * 1e-6;
    auto g = roots::log_grid(lo, span, n);
    for (auto& v : g) v += t0;
    g.back() = t_end;
    return g;
}

struct IntegrateOptions {
    ode::SolverOptions solver;
    bool keep_snapshots = false;  // full per-cluster state at every sample
    std::function<bool(double t, cplx a)> stop;  // checked at samples; true ends the run there
};

struct Trajectory {
    std::vector<double> t;
    std::vector<cplx> a;
    std::vector<double> sigma_z_central;
    std::vector<double> max_bloch;       // Bloch-vector length, worst cluster, per sample
    std::vector<double> sigma_z_min;     // per sample
    std::vector<double> sigma_z_max;     // per sample
    std::vector<SystemState> snapshots;  // only with keep_snapshots
    std::optional<std::size_t> central;
    SystemState final_state;
    ode::OdeStats stats;

    std::size_t size() const noexcept { return t.size(); }

    std::vector<double> a_sq() const {
        std::vector<double> out(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::norm(a[i]);
        return out;
    }
};

namespace detail {

template <class Model>
Trajectory run_model(const Model& model, const SystemState& init, const Ensemble& ens, const StepDrive& drive,
                     double t_end, const std::vector<double>& samples, const IntegrateOptions& opt) {
    require(t_end > init.t, "t_end must lie after the initial time");
    Trajectory traj;
    traj.central = ens.central_index();
    auto y = model.pack(init);

    auto record = [&](double t, std::span<const double> ys) {
        traj.t.push_back(t);
        traj.a.push_back(model.amplitude(ys));
        traj.sigma_z_central.push_back(traj.central ? model.sigma_z(ys, *traj.central) : 0.0);
        traj.max_bloch.push_back(model.max_bloch_norm(ys));
        double zmin = 0.0, zmax = -1.0;
        for (std::size_t k = 0; k < ens.size(); ++k) {
            const double z = model.sigma_z(ys, k);
            zmin = std::min(zmin, z);
            zmax = std::max(zmax, z);
        }
        traj.sigma_z_min.push_back(zmin);
        traj.sigma_z_max.push_back(zmax);
        if (opt.keep_snapshots) traj.snapshots.push_back(model.unpack(ys, t));
        return !(opt.stop && opt.stop(t, traj.a.back()));
    };

    // piecewise-constant drive: integrate up to the switch-on time, then beyond
    std::vector<std::pair<double, double>> segments;  // (t_stop, eta)
    if (drive.t_on > init.t && drive.t_on < t_end) segments.push_back({drive.t_on, 0.0});
    segments.push_back({t_end, drive.t_on < t_end ? drive.eta : 0.0});

    double t = init.t;
    std::size_t s0 = 0;
    for (const auto& [t_stop, eta] : segments) {
        std::size_t s1 = s0;
        while (s1 < samples.size() && samples[s1] <= t_stop) ++s1;
        auto f = [&model, eta = eta](double, const double* yy, double* dy) { model(eta, yy, dy); };
        const auto st = ode::integrate(f, y, t, t_stop,
                                       std::span<const double>(samples.data() + s0, s1 - s0), record, opt.solver);
        traj.stats.accepted += st.accepted;
        traj.stats.rejected += st.rejected;
        traj.stats.rhs_evals += st.rhs_evals;
        traj.stats.last_step = st.last_step;
        if (st.stopped_by_observer) {
            traj.stats.stopped_by_observer = true;
            t = st.t_final;
            break;
        }
        t = t_stop;
        s0 = s1;
    }
    traj.stats.t_final = t;
    traj.final_state = model.unpack(y, t);
    return traj;
}

}  // namespace detail

/// Adaptive integration of the complex Maxwell-Bloch system under a step drive.
inline Trajectory integrate(const SystemState& init, const Ensemble& ens, const CavityDrive& cav,
                            const StepDrive& drive, double t_end, const std::vector<double>& samples,
                            const IntegrateOptions& opt = {}) {
    const FullModel model(ens, cav);
    return detail::run_model(model, init, ens, drive, t_end, samples, opt);
}

/// Same trajectory from the reduced real system (resonant, mirror-symmetric only).
inline Trajectory real_mode_integrate(const SystemState& init, const Ensemble& ens, const CavityDrive& cav,
                                      const StepDrive& drive, double t_end, const std::vector<double>& samples,
                                      const IntegrateOptions& opt = {}) {
    const RealModeModel model(ens, cav);
    return detail::run_model(model, init, ens, drive, t_end, samples, opt);
}

}  // namespace spincav
