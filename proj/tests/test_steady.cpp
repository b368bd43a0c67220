#include "spincav/dynamics.hpp"
#include "spincav/spectral.hpp"
#include "spincav/steady.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace spincav;

namespace {

struct Reference {
    SpectralShape shape{SpectralFamily::QGaussian, 1.39, hz_to_rad(2.87e9), hz_to_rad(9.4e6)};
    SpinRates rates{hz_to_rad(250e3), hz_to_rad(1e3)};
    CavityDrive cav = resonant_cavity(hz_to_rad(0.8e6), hz_to_rad(2.87e9));
    Ensemble ensemble(double omega_hz, std::size_t m = 201) const {
        return discretize(shape, hz_to_rad(omega_hz), m, default_window(shape), rates);
    }
};

}  // namespace

TEST(Cooperativity, SingleResonantCluster) {
    Ensemble e;
    e.omega_s = 1.0;
    e.clusters = {{0.0, 3.0}};
    e.gamma_perp = 2.0;
    e.gamma_par = 0.5;
    e.omega_coll = 3.0;
    const auto t = cooperativities(e, resonant_cavity(4.0, 1.0));
    EXPECT_DOUBLE_EQ(t.cooperativity[0], 9.0 / (2.0 * 4.0));
    EXPECT_DOUBLE_EQ(t.saturation[0], 2.0 * 0.5 / (4.0 * 9.0));
}

TEST(Cooperativity, FarDetunedClusterDecouples) {
    Ensemble e;
    e.omega_s = 0.0;
    e.clusters = {{1e12, 3.0}};
    e.gamma_perp = 2.0;
    e.gamma_par = 0.5;
    e.omega_coll = 3.0;
    const auto t = cooperativities(e, resonant_cavity(4.0, 0.0));
    EXPECT_LT(t.cooperativity[0], 1e-20);
    EXPECT_GT(t.saturation[0], 1e20);
}

TEST(Cooperativity, ZeroRatesRejected) {
    Ensemble e;
    e.clusters = {{0.0, 1.0}};
    e.gamma_perp = 0.0;
    e.gamma_par = 1.0;
    EXPECT_THROW(cooperativities(e, resonant_cavity(1.0, 0.0)), ParameterError);
    EXPECT_THROW(cooperativities(e, resonant_cavity(0.0, 0.0)), ParameterError);
}

TEST(EtaOfA0, Limits) {
    const auto t = homogeneous_table(20.0, 4.0);
    EXPECT_EQ(eta_of_a0(0.0, t, 2.0), 0.0);
    EXPECT_NEAR(eta_of_a0(1e-3, t, 2.0) / (2.0 * 21.0 * 1e-3), 1.0, 0.01);
    EXPECT_NEAR(eta_of_a0(1e4, t, 2.0) / (2.0 * 1e4), 1.0, 0.01);
}

TEST(SigmaZ0, Values) {
    const auto t = homogeneous_table(5.0, 9.0);
    EXPECT_EQ(sigma_z0(0.0, t)[0], -1.0);
    EXPECT_DOUBLE_EQ(sigma_z0(3.0, t)[0], -0.5);
    EXPECT_GT(sigma_z0(1e6, t)[0], -1e-9);
}

TEST(SolveA0, ZeroDrive) {
    const auto r = solve_a0(0.0, homogeneous_table(20.0, 1.0), 1.0);
    ASSERT_EQ(r.size(), 1u);
    EXPECT_EQ(r[0].a0, 0.0);
    EXPECT_TRUE(r[0].stable);
}

TEST(SolveA0, SubThresholdHomogeneousAlwaysSingleRoot) {
    // oracle: eta(a0) monotone on a dense grid for C = 4
    const auto t = homogeneous_table(4.0, 1.0);
    double prev = 0.0;
    for (int i = 1; i <= 200000; ++i) {
        const double a = 1e-3 * i;
        const double e = eta_of_a0(a, t, 1.0);
        ASSERT_GT(e, prev);
        prev = e;
    }
    for (double eta = 0.01; eta < 500.0; eta *= 1.07) {
        const auto r = solve_a0(eta, t, 1.0);
        ASSERT_EQ(r.size(), 1u) << eta;
        EXPECT_TRUE(r[0].stable);
        EXPECT_LE(std::abs(eta_of_a0(r[0].a0, t, 1.0) - eta) / eta, 1e-10);
    }
}

TEST(SolveA0, ReferenceEnsembleThreeRootsInWindow) {
    Reference p;
    const auto tab = cooperativities(p.ensemble(12e6), p.cav);
    const double k = p.cav.kappa;
    // find a drive between the SN points by scanning
    const auto scan = scan_critical_points(tab, k);
    ASSERT_EQ(scan.roots.size(), 2u);
    const double e1 = eta_of_a0(scan.roots[1], tab, k), e2 = eta_of_a0(scan.roots[0], tab, k);
    ASSERT_LT(e1, e2);
    for (double f : {0.1, 0.5, 0.9}) {
        const double eta = e1 + f * (e2 - e1);
        const auto r = solve_a0(eta, tab, k);
        ASSERT_EQ(r.size(), 3u);
        EXPECT_TRUE(r[0].stable);
        EXPECT_FALSE(r[1].stable);
        EXPECT_TRUE(r[2].stable);
        EXPECT_LT(r[0].a0, r[1].a0);
        EXPECT_LT(r[1].a0, r[2].a0);
        for (const auto& x : r) EXPECT_LE(std::abs(eta_of_a0(x.a0, tab, k) - eta) / eta, 1e-10);
    }
}

TEST(SolveA0, MatchesSCurveInversion) {
    Reference p;
    const auto tab = cooperativities(p.ensemble(12e6, 51), p.cav);
    const double k = p.cav.kappa;
    const auto [lo, hi] = default_a0_range(tab, k);
    const auto curve = s_curve(tab, k, lo, hi, 300);
    for (std::size_t i = 0; i < curve.points.size(); i += 7) {
        const auto& pt = curve.points[i];
        const auto r = solve_a0(pt.eta, tab, k);
        double best = 1e300;
        for (const auto& x : r) best = std::min(best, std::abs(x.a0 - pt.a0) / pt.a0);
        EXPECT_LT(best, 1e-10) << pt.a0;
    }
}

TEST(SCurve, SubThresholdMonotone) {
    Reference p;
    const auto tab = cooperativities(p.ensemble(7e6), p.cav);
    const auto [lo, hi] = default_a0_range(tab, p.cav.kappa);
    const auto c = s_curve(tab, p.cav.kappa, lo, hi, 500);
    EXPECT_FALSE(c.bistable);
    for (const auto& pt : c.points) {
        EXPECT_TRUE(pt.stable);
        EXPECT_EQ(pt.branch, Branch::Unique);
    }
}

TEST(SCurve, ReferenceEnsembleHasContiguousUnstableSegment) {
    Reference p;
    const auto tab = cooperativities(p.ensemble(12e6), p.cav);
    const auto [lo, hi] = default_a0_range(tab, p.cav.kappa);
    const auto c = s_curve(tab, p.cav.kappa, lo, hi, 2000);
    EXPECT_TRUE(c.bistable);
    int transitions = 0;
    for (std::size_t i = 1; i < c.points.size(); ++i) {
        if (c.points[i].branch != c.points[i - 1].branch) ++transitions;
        EXPECT_EQ(c.points[i].stable, c.points[i].branch != Branch::Unstable);
    }
    EXPECT_EQ(transitions, 2);
    EXPECT_EQ(c.points.front().branch, Branch::Lower);
    EXPECT_EQ(c.points.back().branch, Branch::Upper);
}

TEST(SCurve, EmptyCavityIsStraightLine) {
    const CooperativityTable empty{{0.0}, {std::numeric_limits<double>::infinity()}, 0.0};
    const auto c = s_curve(empty, 3.0, 0.1, 100.0, 50);
    for (const auto& pt : c.points) EXPECT_DOUBLE_EQ(pt.eta, 3.0 * pt.a0);
}

TEST(Stationary, ResidualOfFullEquations) {
    // substituting the stationary solution into the Maxwell-Bloch right-hand side
    Reference p;
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        const double om = 4e6 + 12e6 * u(rng);
        const auto ens = p.ensemble(om, 41);
        const auto tab = cooperativities(ens, p.cav);
        const double eta = p.cav.kappa * (1.0 + tab.total) * std::sqrt(tab.min_saturation()) * (0.2 + 3.0 * u(rng));
        for (const auto& r : solve_a0(eta, tab, p.cav.kappa)) {
            const auto s = stationary_state(r.a0, ens, p.cav);
            const auto d = rhs(s, ens, p.cav, eta);
            EXPECT_LE(std::abs(d.a) / eta, 1e-9);
            for (std::size_t k = 0; k < ens.size(); ++k) {
                const double scale = ens.gamma_perp + ens.clusters[k].coupling * r.a0;
                EXPECT_LE(std::abs(d.sigma_minus[k]) / scale, 1e-9);
                EXPECT_LE(std::abs(d.sigma_z[k]) / scale, 1e-9);
            }
        }
    }
}
