#include "spincav/bifurcation.hpp"
#include "spincav/dynamics.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <cmath>

using namespace spincav;

namespace {

EnsembleRecipe reference_recipe(std::size_t m = 201) {
    EnsembleRecipe r;
    r.shape = {SpectralFamily::QGaussian, 1.39, hz_to_rad(2.87e9), hz_to_rad(9.4e6)};
    r.clusters = m;
    r.rates = {hz_to_rad(250e3), hz_to_rad(1e3)};
    r.cavity = resonant_cavity(hz_to_rad(0.8e6), r.shape.omega_s);
    return r;
}

double max_abs_diff(const Trajectory& a, const Trajectory& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.a[i] - b.a[i]));
    return m;
}

double max_abs(const Trajectory& a) {
    double m = 0.0;
    for (const auto& v : a.a) m = std::max(m, std::abs(v));
    return m;
}

}  // namespace

TEST(Rhs, GroundStateIsFixedPoint) {
    const auto r = reference_recipe(21);
    const auto ens = r.ensemble(hz_to_rad(12e6));
    const auto d = rhs(SystemState::ground(ens.size()), ens, r.cavity, 0.0);
    EXPECT_EQ(d.a, cplx(0.0, 0.0));
    for (std::size_t k = 0; k < ens.size(); ++k) {
        EXPECT_EQ(d.sigma_minus[k], cplx(0.0, 0.0));
        EXPECT_EQ(d.sigma_z[k], 0.0);
    }
}

TEST(Rhs, EmptyCavity) {
    const auto r = reference_recipe(5);
    const auto ens = r.ensemble(0.0);
    SystemState s = SystemState::ground(ens.size());
    s.a = {0.3, -0.1};
    const auto d = rhs(s, ens, r.cavity, 2.0);
    EXPECT_DOUBLE_EQ(d.a.real(), -r.cavity.kappa * 0.3 + 2.0);
    EXPECT_DOUBLE_EQ(d.a.imag(), r.cavity.kappa * 0.1);
}

TEST(Rhs, StationaryStateResidual) {
    const auto r = reference_recipe();
    const auto ens = r.ensemble(hz_to_rad(12e6));
    const auto tab = cooperativities(ens, r.cavity);
    const auto p = find_sn_pair(tab, r.cavity.kappa);
    ASSERT_TRUE(p);
    const double eta = p->eta_mid();
    for (const auto& root : solve_a0(eta, tab, r.cavity.kappa)) {
        const auto d = rhs(stationary_state(root.a0, ens, r.cavity), ens, r.cavity, eta);
        double n = std::norm(d.a) / (eta * eta);
        for (std::size_t k = 0; k < ens.size(); ++k) {
            const double sc = ens.gamma_perp;
            n += std::norm(d.sigma_minus[k]) / (sc * sc) + d.sigma_z[k] * d.sigma_z[k] / (sc * sc);
        }
        EXPECT_LE(std::sqrt(n), 1e-9);
    }
}

TEST(Integrate, EmptyCavityClosedForm) {
    const auto r = reference_recipe(3);
    const auto ens = r.ensemble(0.0);
    const double k = r.cavity.kappa, eta = 0.7 * k;
    const double t_end = 20.0 / k;
    const auto samples = sample_times(0.0, t_end, 400, SampleSpacing::Log, 1e-4 / k);
    const auto tr = integrate(SystemState::ground(ens.size()), ens, r.cavity, {eta, 0.0}, t_end, samples);
    ASSERT_EQ(tr.size(), samples.size());
    for (std::size_t i = 0; i < tr.size(); ++i) {
        const double exact = eta / k * (1.0 - std::exp(-k * tr.t[i]));
        EXPECT_NEAR(tr.a[i].real() / exact, 1.0, 1e-6) << tr.t[i];
        EXPECT_EQ(tr.a[i].imag(), 0.0);
    }
}

TEST(Integrate, StepDriveSwitchesOnLate) {
    const auto r = reference_recipe(3);
    const auto ens = r.ensemble(0.0);
    const double k = r.cavity.kappa, eta = k, t_on = 3.0 / k;
    const auto samples = sample_times(0.0, 10.0 / k, 100, SampleSpacing::Linear);
    const auto tr = integrate(SystemState::ground(ens.size()), ens, r.cavity, {eta, t_on}, 10.0 / k, samples);
    for (std::size_t i = 0; i < tr.size(); ++i) {
        const double exact = tr.t[i] < t_on ? 0.0 : (1.0 - std::exp(-k * (tr.t[i] - t_on)));
        EXPECT_NEAR(tr.a[i].real(), exact, 1e-7);
    }
}

TEST(Integrate, AmplitudeStaysRealOnResonance) {
    const auto r = reference_recipe(41);
    const auto ens = r.ensemble(hz_to_rad(12e6));
    const double eta = eta_reference(r.table(hz_to_rad(12e6)), r.cavity.kappa);
    const double t_end = 2.0 / ens.gamma_par;
    const auto tr = integrate(SystemState::ground(ens.size()), ens, r.cavity, {eta, 0.0}, t_end,
                              sample_times(0.0, t_end, 300, SampleSpacing::Log));
    double im = 0.0;
    for (const auto& a : tr.a) im = std::max(im, std::abs(a.imag()));
    EXPECT_LE(im, 1e-10 * max_abs(tr));
}

TEST(Integrate, RealModeMatchesComplexAndIsFaster) {
    const auto r = reference_recipe(201);
    const auto ens = r.ensemble(hz_to_rad(12e6));
    const double eta = 0.6 * eta_reference(r.table(hz_to_rad(12e6)), r.cavity.kappa);
    const double t_end = 5.0 / ens.gamma_par;
    const auto samples = sample_times(0.0, t_end, 200, SampleSpacing::Log);
    const auto init = SystemState::ground(ens.size());

    auto t0 = std::chrono::steady_clock::now();
    const auto full = integrate(init, ens, r.cavity, {eta, 0.0}, t_end, samples);
    const double t_full = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    t0 = std::chrono::steady_clock::now();
    const auto real = real_mode_integrate(init, ens, r.cavity, {eta, 0.0}, t_end, samples);
    const double t_real = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    EXPECT_LE(max_abs_diff(full, real), 1e-6 * max_abs(full));
    for (std::size_t k = 0; k < ens.size(); k += 10) {
        EXPECT_NEAR(full.final_state.sigma_z[k], real.final_state.sigma_z[k], 1e-6);
        EXPECT_NEAR(std::abs(full.final_state.sigma_minus[k]), std::abs(real.final_state.sigma_minus[k]), 1e-6);
    }
    EXPECT_GE(t_full / t_real, 1.5) << "complex " << t_full << " s, real " << t_real << " s";
}

TEST(Integrate, RealModeRefusesAsymmetricInput) {
    auto r = reference_recipe(11);
    auto ens = r.ensemble(hz_to_rad(12e6));
    ens.clusters[0].coupling *= 1.01;
    EXPECT_THROW(real_mode_integrate(SystemState::ground(ens.size()), ens, r.cavity, {1.0, 0.0}, 1e-6, {1e-6}),
                 ParameterError);
    auto off = r.cavity;
    off.omega_p += 1.0;
    const auto ok = r.ensemble(hz_to_rad(12e6));
    EXPECT_THROW(real_mode_integrate(SystemState::ground(ok.size()), ok, off, {1.0, 0.0}, 1e-6, {1e-6}),
                 ParameterError);
}

TEST(Integrate, SettlesOnStableRoot) {
    const auto r = reference_recipe(41);
    const auto ens = r.ensemble(hz_to_rad(12e6));
    const auto tab = cooperativities(ens, r.cavity);
    const double ref = eta_reference(tab, r.cavity.kappa);
    for (double f : {0.4, 2.0}) {
        const double eta = f * ref, t_end = 15.0 / ens.gamma_par;
        const auto tr = real_mode_integrate(SystemState::ground(ens.size()), ens, r.cavity, {eta, 0.0}, t_end,
                                            sample_times(0.0, t_end, 100, SampleSpacing::Log));
        const auto roots = solve_a0(eta, tab, r.cavity.kappa);
        ASSERT_EQ(roots.size(), 1u);
        EXPECT_NEAR(tr.a.back().real() / roots[0].a0, 1.0, 1e-3) << f;
    }
}

TEST(Integrate, FixedPointPreserved) {
    const auto r = reference_recipe(41);
    const auto ens = r.ensemble(hz_to_rad(12e6));
    const auto tab = cooperativities(ens, r.cavity);
    const double eta = 1.5 * eta_reference(tab, r.cavity.kappa);
    const double a0 = solve_a0(eta, tab, r.cavity.kappa).back().a0;
    const double t_end = 10.0 / ens.gamma_par;
    const auto tr = integrate(stationary_state(a0, ens, r.cavity), ens, r.cavity, {eta, 0.0}, t_end,
                              sample_times(0.0, t_end, 50, SampleSpacing::Log));
    for (const auto& a : tr.a) EXPECT_LE(std::abs(a - cplx(a0, 0.0)) / a0, 1e-6);
}

TEST(Integrate, BlochBallContainment) {
    const auto r = reference_recipe(41);
    const auto ens = r.ensemble(hz_to_rad(12e6));
    const double eta = 3.0 * eta_reference(r.table(hz_to_rad(12e6)), r.cavity.kappa);
    const double t_end = 5.0 / ens.gamma_par;
    const auto tr = integrate(SystemState::ground(ens.size()), ens, r.cavity, {eta, 0.0}, t_end,
                              sample_times(0.0, t_end, 400, SampleSpacing::Log));
    for (std::size_t i = 0; i < tr.size(); ++i) {
        EXPECT_LE(tr.max_bloch[i], 1.0 + 1e-6);
        EXPECT_GE(tr.sigma_z_min[i], -1.0 - 1e-6);
    }
}

TEST(Integrate, EarlyRabiOscillations) {
    const auto r = reference_recipe();
    const auto ens = r.ensemble(hz_to_rad(12e6));
    const double eta = 0.3 * eta_reference(r.table(hz_to_rad(12e6)), r.cavity.kappa);
    const double t_end = 3e-6;
    const auto tr = real_mode_integrate(SystemState::ground(ens.size()), ens, r.cavity, {eta, 0.0}, t_end,
                                        sample_times(0.0, t_end, 3000, SampleSpacing::Linear));
    std::vector<double> peaks;
    std::vector<double> heights;
    for (std::size_t i = 1; i + 1 < tr.size(); ++i)
        if (tr.a[i].real() > tr.a[i - 1].real() && tr.a[i].real() > tr.a[i + 1].real()) {
            peaks.push_back(tr.t[i]);
            heights.push_back(tr.a[i].real());
        }
    ASSERT_GE(peaks.size(), 4u);
    const double period = (peaks[3] - peaks[0]) / 3.0;
    EXPECT_NEAR(period / (two_pi / ens.omega_coll), 1.0, 0.15);
    // damped toward a transient plateau
    EXPECT_GT(heights[0], heights[3]);
}

TEST(Integrate, StepCollapseReportsStiffness) {
    const auto r = reference_recipe(21);
    const auto ens = r.ensemble(hz_to_rad(12e6));
    IntegrateOptions o;
    o.solver.h_min = 1.0;  // absurd floor forces the diagnostic
    EXPECT_THROW(integrate(SystemState::ground(ens.size()), ens, r.cavity, {1e6, 0.0}, 1e-3, {1e-3}, o),
                 StiffnessError);
}

TEST(Integrate, RosenbrockFallbackAgrees) {
    const auto r = reference_recipe(9);
    const auto ens = r.ensemble(hz_to_rad(12e6));
    const double eta = eta_reference(r.table(hz_to_rad(12e6)), r.cavity.kappa);
    const double t_end = 2e-6;
    const auto s = sample_times(0.0, t_end, 20, SampleSpacing::Linear);
    IntegrateOptions ro;
    ro.solver.method = ode::OdeMethod::Rosenbrock23;
    ro.solver.rtol = 1e-7;
    const auto a = integrate(SystemState::ground(ens.size()), ens, r.cavity, {eta, 0.0}, t_end, s);
    const auto b = integrate(SystemState::ground(ens.size()), ens, r.cavity, {eta, 0.0}, t_end, s, ro);
    EXPECT_LE(max_abs_diff(a, b), 1e-3 * max_abs(a));
}

TEST(Integrate, HysteresisUnderSlowSweeps) {
    const auto r = reference_recipe(41);
    const auto ens = r.ensemble(hz_to_rad(12e6));
    const auto tab = cooperativities(ens, r.cavity);
    const auto p = find_sn_pair(tab, r.cavity.kappa);
    ASSERT_TRUE(p);
    const double mid = p->eta_mid(), dt = 8.0 / ens.gamma_par;
    auto sweep = [&](std::vector<double> etas) {
        auto s = SystemState::ground(ens.size());
        for (double eta : etas) {
            const double t1 = s.t + dt;
            s = real_mode_integrate(s, ens, r.cavity, {eta, s.t}, t1, {t1}).final_state;
        }
        return s.a.real();
    };
    const double up = sweep({0.5 * mid, 0.9 * mid, mid});
    const double down = sweep({2.0 * mid, 1.1 * mid, mid});
    const auto roots = solve_a0(mid, tab, r.cavity.kappa);
    ASSERT_EQ(roots.size(), 3u);
    EXPECT_NEAR(up / roots.front().a0, 1.0, 1e-2);
    EXPECT_NEAR(down / roots.back().a0, 1.0, 1e-2);
}

TEST(Samples, LogAndLinearGrids) {
    const auto lg = sample_times(1.0, 11.0, 50, SampleSpacing::Log);
    const auto ln = sample_times(1.0, 11.0, 50, SampleSpacing::Linear);
    EXPECT_EQ(lg.back(), 11.0);
    EXPECT_DOUBLE_EQ(ln.front(), 1.2);
    for (std::size_t i = 1; i < lg.size(); ++i) {
        EXPECT_GT(lg[i], lg[i - 1]);
        EXPECT_GT(ln[i], ln[i - 1]);
    }
}
