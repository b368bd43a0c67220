// adiabatic.hpp: slow dynamics after eliminating the cavity and the spin coherences.
//
// In tau = gamma_par * t the inversions obey
//
//     d z_k / d tau = -(1 + z_k) - (eta/kappa)^2 z_k / (n_k (1 - sum_l C_l z_l)^2)
//
// and the amplitude is slaved to them, a = eta / (kappa (1 - sum_l C_l z_l)).

#pragma once

#include "spincav/common.hpp"
#include "spincav/ode.hpp"
#include "spincav/steady.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace spincav {

struct SlowState {
    std::vector<double> sigma_z;
    double tau = 0.0;
};

inline double slow_denominator(std::span<const double> z, const CooperativityTable& tab) {
    double d = 1.0;
    for (std::size_t k = 0; k < tab.size(); ++k) d -= tab.cooperativity[k] * z[k];
    return d;
}

inline void slow_rhs(std::span<const double> z, const CooperativityTable& tab, double eta, double kappa, double* dz) {
    const double d = slow_denominator(z, tab);
    const double drive = (eta / kappa) * (eta / kappa) / (d * d);
    for (std::size_t k = 0; k < tab.size(); ++k) {
        const double n = tab.saturation[k];
        dz[k] = -(1.0 + z[k]) - (std::isfinite(n) ? drive * z[k] / n : 0.0);
    }
}

inline std::vector<double> slow_rhs(const SlowState& s, const CooperativityTable& tab, double eta, double kappa) {
    require(s.sigma_z.size() == tab.size(), "slow state dimension does not match ensemble");
    std::vector<double> dz(tab.size());
    slow_rhs(s.sigma_z, tab, eta, kappa, dz.data());
    return dz;
}

inline double enslaved_a(std::span<const double> z, const CooperativityTable& tab, double eta, double kappa) {
    return eta / (kappa * slow_denominator(z, tab));
}

inline double enslaved_a(const SlowState& s, const CooperativityTable& tab, double eta, double kappa) {
    return enslaved_a(std::span<const double>(s.sigma_z), tab, eta, kappa);
}

/// da/dtau = (kappa a^2 / eta) sum_l C_l dz_l/dtau along a slow trajectory.
inline double da_dtau(const SlowState& s, const CooperativityTable& tab, double eta, double kappa) {
    const auto dz = slow_rhs(s, tab, eta, kappa);
    const double a = enslaved_a(s, tab, eta, kappa);
    double sum = 0.0;
    for (std::size_t k = 0; k < tab.size(); ++k) sum += tab.cooperativity[k] * dz[k];
    return kappa * a * a / eta * sum;
}

/// Single ODE for N identical resonant spins. Only the branch a > 0 reached from
/// enslaved initial data is physical; a = 0 is a spurious root of the polynomial.
inline double homogeneous_rhs(double a, double cooperativity, double n_spins, double gamma_par, double kappa,
                              double eta) {
    require(eta > 0.0, "homogeneous slow equation needs eta > 0");
    const double c3 = 4.0 * kappa * cooperativity / (n_spins * gamma_par);
    return a - (kappa / eta) * (1.0 + cooperativity) * a * a + c3 * a * a * a - c3 * (kappa / eta) * a * a * a * a;
}

struct SlowTrajectory {
    std::vector<double> tau;
    std::vector<double> a;
    std::vector<double> sigma_z_central;
    std::vector<double> sigma_z_min;
    std::vector<double> sigma_z_max;
    std::vector<std::vector<double>> snapshots;  // per-cluster sigma_z, only with keep_snapshots
    SlowState final_state;
    ode::OdeStats stats;

    std::size_t size() const noexcept { return tau.size(); }
};

struct SlowOptions {
    ode::SolverOptions solver;
    bool keep_snapshots = false;
    std::optional<std::size_t> central;  // cluster reported as sigma_z_central
};

/// Integrates the slow system from init to tau_end, sampling at tau_samples.
/// The observer (tau, a, z) may stop the run early by returning false.
template <class Observer>
SlowTrajectory integrate_slow(const SlowState& init, const CooperativityTable& tab, double eta, double kappa,
                              double tau_end, const std::vector<double>& tau_samples, const SlowOptions& opt,
                              Observer&& stop_obs) {
    require(init.sigma_z.size() == tab.size(), "slow state dimension does not match ensemble");
    require(tau_end > init.tau, "tau_end must lie after the initial time");
    SlowTrajectory tr;
    std::vector<double> y = init.sigma_z;
    auto f = [&](double, const double* z, double* dz) { slow_rhs(std::span<const double>(z, tab.size()), tab, eta, kappa, dz); };
    auto obs = [&](double tau, std::span<const double> z) {
        const double a = enslaved_a(z, tab, eta, kappa);
        tr.tau.push_back(tau);
        tr.a.push_back(a);
        tr.sigma_z_central.push_back(opt.central ? z[*opt.central] : 0.0);
        const auto [mn, mx] = std::minmax_element(z.begin(), z.end());
        tr.sigma_z_min.push_back(z.empty() ? 0.0 : *mn);
        tr.sigma_z_max.push_back(z.empty() ? 0.0 : *mx);
        if (opt.keep_snapshots) tr.snapshots.emplace_back(z.begin(), z.end());
        return stop_obs(tau, a, z);
    };
    tr.stats = ode::integrate(f, y, init.tau, tau_end, std::span<const double>(tau_samples), obs, opt.solver);
    tr.final_state = SlowState{y, tr.stats.t_final};
    return tr;
}

inline SlowTrajectory integrate_slow(const SlowState& init, const CooperativityTable& tab, double eta, double kappa,
                                     double tau_end, const std::vector<double>& tau_samples,
                                     const SlowOptions& opt = {}) {
    return integrate_slow(init, tab, eta, kappa, tau_end, tau_samples, opt,
                          [](double, double, std::span<const double>) { return true; });
}

/// Ground state (all inversions at -1).
inline SlowState slow_ground(std::size_t m, double tau0 = 0.0) { return SlowState{std::vector<double>(m, -1.0), tau0}; }

/// Slow state of the stationary solution with amplitude a0.
inline SlowState slow_stationary(double a0, const CooperativityTable& tab) { return SlowState{sigma_z0(a0, tab), 0.0}; }

}  // namespace spincav
