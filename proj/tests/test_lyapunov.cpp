#include <ekmeta/lyapunov.hpp>
#include <ekmeta/measures.hpp>
#include <ekmeta/oracle1d.hpp>

#include <gtest/gtest.h>

using namespace ekm;

namespace {

Potential dw() { return parse_potential("(x1^2 - 1)^2", 1); }
Potential dw2d() { return parse_potential("(x1^2-1)^2 + 2*x2^2", 2); }
std::vector<CriticalPoint> cps_of(const Potential& p) { return find_critical_points(p, Box::cube(p.dim(), -2.5, 2.5)); }
Box right_basin() { return Box{vec1(0.0), vec1(2.5)}; }

}  // namespace

TEST(XiProfile, Constraints) {
    XiProfile xi{0.25, 1.0};
    EXPECT_EQ(xi(0.1)[1], -1.0);
    EXPECT_EQ(xi(1.0)[0], 0.0);
    EXPECT_EQ(xi(1.5)[2], 0.0);
    double h = 1e-6;
    for (double u = 0.0; u < 1.2; u += 0.01) {
        auto v = xi(u);
        EXPECT_GE(v[1], -1.0);
        EXPECT_LE(v[1], 0.0);
        EXPECT_LE(std::abs(v[2]), xi.sup_second() * (1 + 1e-12));
        if (u > h) {
            EXPECT_NEAR((xi(u + h)[0] - xi(u - h)[0]) / (2 * h), v[1], 1e-6);
            EXPECT_NEAR((xi(u + h)[1] - xi(u - h)[1]) / (2 * h), v[2], 1e-4);
        }
    }
    // C2 joins at both knots
    for (double u : {0.25, 1.0}) {
        auto l = xi(u - 1e-9), r = xi(u + 1e-9);
        EXPECT_NEAR(l[0], r[0], 1e-8);
        EXPECT_NEAR(l[1], r[1], 1e-7);
        EXPECT_NEAR(l[2], r[2], 1e-6);
    }
}

TEST(Modification, PureMinimumIsIdentity) {
    auto p = parse_potential("x1^2/2 + x2^2", 2);
    auto m = build_eps_modification(p, cps_of(p), 0.1);
    EXPECT_TRUE(m.patches.empty());
    EXPECT_EQ(m.C_H_tilde, 0.0);
    for (double x = -2; x <= 2; x += 0.37) {
        Vec v = vec2(x, 0.5 * x);
        EXPECT_EQ(m.value(v), p.value(v));
    }
}

TEST(Modification, DoubleWellSaddle1D) {
    const double eps = 0.05, a = 6.0;
    auto m = build_eps_modification(dw(), cps_of(dw()), eps, a);
    ASSERT_EQ(m.patches.size(), 1u);
    const auto& s = m.patches[0];
    EXPECT_NEAR(s.center[0], 0.0, 1e-10);
    EXPECT_EQ(s.index, 1);
    double tilde_delta = -((1 - 2) * s.delta + s.lambda[0]);
    EXPECT_GT(tilde_delta, 0.0);
    EXPECT_NEAR(tilde_delta, s.delta + 4.0, 1e-8);
    EXPECT_GT(m.patch_value(vec1(0.0)), 0.0);
    EXPECT_GT(m.patch_value(vec1(0.5 * a * std::sqrt(eps))), 0.0);
}

TEST(Modification, TwoDimensionalAutoDelta) {
    auto m = build_eps_modification(dw2d(), cps_of(dw2d()), 0.1);
    ASSERT_EQ(m.patches.size(), 1u);
    EXPECT_NEAR(m.patches[0].delta, 1.8, 1e-8);
    EXPECT_THROW(build_eps_modification(dw2d(), cps_of(dw2d()), 0.1, 6.0, 3.0), Error);
    EXPECT_NO_THROW(build_eps_modification(dw2d(), cps_of(dw2d()), 0.1, 6.0, 1.0));
}

TEST(Modification, JetMatchesFiniteDifferences) {
    const double eps = 0.1;
    auto m = build_eps_modification(dw2d(), cps_of(dw2d()), eps, 2.0);
    const double h = 1e-5;
    for (double r = 0.0; r < 1.2; r += 0.05) {
        Vec x = vec2(0.7 * r, 0.3 * r);
        Jet2 j = m.jet(x);
        EXPECT_NEAR(j.value, m.value(x), 1e-12);
        for (int k = 0; k < 2; ++k) {
            Vec e = Vec::Unit(2, k) * h;
            EXPECT_NEAR((m.value(x + e) - m.value(x - e)) / (2 * h), j.gradient[k], 1e-6);
            Vec dg = (m.jet(x + e).gradient - m.jet(x - e).gradient) / (2 * h);
            for (int l = 0; l < 2; ++l) EXPECT_NEAR(dg[l], j.hessian(l, k), 1e-5);
        }
    }
}

TEST(Modification, LaplacianShiftInsideInnerBall) {
    const double eps = 0.1;
    auto m = build_eps_modification(dw2d(), cps_of(dw2d()), eps, 2.0);
    const auto& s = m.patches[0];
    Vec x = vec2(0.01, -0.02);
    double shift = m.jet(x).hessian.trace() - dw2d().jet(x).hessian.trace();
    EXPECT_NEAR(shift, -4.0 + (2 - 2) * s.delta, 1e-10);
}

TEST(Modification, PatchLocalityAndClosenessOnGrid) {
    std::vector<double> closeness;
    for (double eps : {0.2, 0.1, 0.05}) {
        auto p = dw2d();
        auto m = build_eps_modification(p, cps_of(p), eps, 2.0);
        Grid g(Box::cube(2, -2.5, 2.5), 200);
        double worst = 0.0;
        for (std::size_t k = 0; k < g.size(); ++k) {
            Vec x = g.point(k);
            double d = m.value(x) - p.value(x);
            bool in_patch = false;
            for (const auto& s : m.patches) in_patch |= (x - s.center).norm() < s.euclidean_radius;
            if (!in_patch) EXPECT_EQ(d, 0.0);
            worst = std::max(worst, std::abs(d));
        }
        EXPECT_LE(worst, m.C_H_tilde * eps * (1 + 1e-12));
        closeness.push_back(m.C_H_tilde);
    }
    EXPECT_EQ(closeness[0], closeness[1]);
    EXPECT_EQ(closeness[1], closeness[2]);
}

TEST(Drift, ConvexQuadratic) {
    auto p = parse_potential("x1^2/2", 1);
    for (double eps : {0.1, 0.05, 0.01}) {
        const double a = 4.0;
        auto m = build_eps_modification(p, cps_of(p), eps, a);
        auto r = verify_drift(m, eps, a, Box::cube(1, -3, 3), 6000);
        EXPECT_GE(r.lambda0, a * a / 4 - 0.5 - 1e-12);
        EXPECT_NEAR(r.lambda0, a * a / 4 - 0.5, 0.05);
        EXPECT_LE(r.drift_margin_grid, 0.0);
        EXPECT_GT(r.b0, 0.0);
    }
}

TEST(Drift, DoubleWellWithPatchPasses) {
    const double eps = 0.05;
    auto m = build_eps_modification(dw(), cps_of(dw()), eps, 6.0);
    auto r = verify_drift(m, eps, 6.0, Box::cube(1, -2.5, 2.5), 4000);
    EXPECT_LE(r.drift_margin_grid, 0.0);
    EXPECT_GT(r.lambda0, 0.0);
    EXPECT_GT(r.b0, 0.0);
    EXPECT_TRUE(std::isfinite(r.K_H_tilde));
    EXPECT_NEAR(r.holley_stroock_factor, std::exp(-2 * m.C_H_tilde), 1e-15);
}

TEST(Drift, SmallRadiusViolates) {
    const double eps = 0.05;
    auto m = build_eps_modification(dw(), cps_of(dw()), eps, 0.25);
    EXPECT_THROW(verify_drift(m, eps, 0.25, Box::cube(1, -2.5, 2.5), 4000), Error);
    auto r = verify_drift(m, eps, 0.25, Box::cube(1, -2.5, 2.5), 4000, false);
    ASSERT_FALSE(r.violations.empty());
    // violations on the saddle patch shell and on the shells around the minima
    double patch = m.patches[0].euclidean_radius;
    int near_saddle = 0, near_minima = 0;
    for (const auto& x : r.violations) {
        if (std::abs(x[0]) <= patch) ++near_saddle;
        else if (std::abs(std::abs(x[0]) - 1.0) < 0.25) ++near_minima;
        else ADD_FAILURE() << "violation away from both shells at " << x[0];
    }
    EXPECT_GT(near_saddle, 0);
    EXPECT_GT(near_minima, 0);
    try {
        verify_drift(m, eps, 0.25, Box::cube(1, -2.5, 2.5), 4000);
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), "DriftViolated");
    }
}

TEST(Drift, TwoDimensionalEscalation) {
    auto p = dw2d();
    auto r = verify_drift_escalating(p, cps_of(p), 0.1, Box::cube(2, -2.5, 2.5), 120, 0.5, 48.0);
    ASSERT_FALSE(r.tried.empty());
    EXPECT_DOUBLE_EQ(r.tried.back(), 2.0);
    EXPECT_GT(r.report.lambda0, 0.0);
    EXPECT_TRUE(r.report.violations.empty());
}

TEST(Drift, RegimeThresholdReported) {
    auto m = build_eps_modification(dw(), cps_of(dw()), 0.1, 1.0);
    auto r = verify_drift(m, 0.1, 1.0, Box::cube(1, -2.5, 2.5), 2000);
    EXPECT_GT(r.regime_eps, 0.0);
    EXPECT_TRUE(r.in_regime);
    auto m2 = build_eps_modification(dw(), cps_of(dw()), 0.4, 1.0);
    auto r2 = verify_drift(m2, 0.4, 1.0, Box::cube(1, -2.5, 2.5), 2000, false);
    EXPECT_FALSE(r2.in_regime);
    EXPECT_FALSE(r2.warnings.empty());
}

TEST(PiFromLyapunov, DisplayedQuotient) {
    EXPECT_NEAR(pi_from_lyapunov(10.0, 1.0, 5.0), 50.0 / 6.0, 1e-12);
    EXPECT_NEAR(pi_from_lyapunov(10.0, 1e-12, 5.0), 10.0, 1e-10);
    EXPECT_THROW(pi_from_lyapunov(0.0, 1.0, 5.0), Error);
    EXPECT_THROW(pi_from_lyapunov(1.0, 1.0, -5.0), Error);
}

TEST(PiFromLyapunov, EpsilonSweep) {
    auto p = dw();
    auto cps = cps_of(p);
    const auto& minimum = cps[0].morse_index == 0 && cps[0].location[0] > 0 ? cps[0] : cps.back();
    ASSERT_GT(minimum.location[0], 0.0);
    std::vector<double> scaled;
    for (double eps : {0.2, 0.1, 0.05}) {
        auto m = build_eps_modification(p, cps, eps, 2.0);
        auto r = verify_drift(m, eps, 2.0, right_basin(), 4000);
        double rho = pi_from_lyapunov(r, eps, bakry_emery_rho(minimum, eps));
        scaled.push_back((1.0 / rho) / eps);
    }
    for (double s : scaled) EXPECT_LT(s, 1.0);
    EXPECT_LT(*std::max_element(scaled.begin(), scaled.end()) / *std::min_element(scaled.begin(), scaled.end()), 2.0);
}

TEST(LsiFromLyapunov, DisplayArithmetic) {
    auto r = lsi_from_lyapunov(10.0, 1.0, 1.0, 0.0, 1.0, 0.0);
    EXPECT_NEAR(r.inv_alpha, 2 * std::sqrt(0.15) + 2.0, 1e-12);
    EXPECT_NEAR(r.inv_alpha, 2.7746, 1e-4);
    EXPECT_NEAR(r.inv_alpha, 2 * r.tau + r.c2, 1e-15);
    EXPECT_NEAR(r.tau * r.tau, r.c1, 1e-15);
    EXPECT_NEAR(lsi_from_lyapunov(1e12, 0.0, 3.0, 0.0, 0.5, 0.0).inv_alpha, 2.0 / 3.0, 1e-5);
    EXPECT_THROW(lsi_from_lyapunov(1.0, -1.0, 1.0, 0.0, 1.0, 0.0), Error);
    EXPECT_THROW(lsi_from_lyapunov(1.0, 1.0, 0.0, 0.0, 1.0, 0.0), Error);
}

TEST(LsiFromLyapunov, DoubleWellPipeline) {
    auto p = dw();
    auto cps = cps_of(p);
    Vec m1 = vec1(1.0);
    std::vector<double> inv_alpha;
    for (double eps : {0.2, 0.1, 0.05}) {
        auto mod = build_eps_modification(p, cps, eps, 2.0);
        auto r = verify_drift(mod, eps, 2.0, right_basin(), 4000);
        double rho = fd_spectral_gap(p, eps, right_basin(), 2048).gap / eps;
        Grid g(right_basin(), 8192);
        double z = 0, m2 = 0;
        for (std::size_t k = 0; k < g.size(); ++k) {
            Vec x = g.point(k);
            double w = std::exp(-p.value(x) / eps);
            z += w;
            m2 += w * (x - m1).squaredNorm();
        }
        m2 /= z;
        auto b = lsi_from_lyapunov(r.lambda0 / eps, r.b0 / eps, rho, r.K_H_tilde, eps, m2);
        inv_alpha.push_back(b.inv_alpha);
        // second moment against the Lyapunov bound with the Holley-Stroock factor
        EXPECT_LE(m2, std::exp(2 * mod.C_H_tilde) * second_moment_bound(r.lambda0 / eps, r.b0 / eps, r.R));
    }
    for (double v : inv_alpha) EXPECT_LT(v, 10.0);
    EXPECT_LT(*std::max_element(inv_alpha.begin(), inv_alpha.end()) / *std::min_element(inv_alpha.begin(), inv_alpha.end()), 1.5);
}

TEST(SecondMoment, Bound) {
    EXPECT_NEAR(second_moment_bound(10.0, 1.0, 0.5), 0.125, 1e-15);
    EXPECT_NEAR(second_moment_bound(4.0, 0.0, 7.0), 0.25, 1e-15);
    EXPECT_THROW(second_moment_bound(0.0, 1.0, 1.0), Error);
}

TEST(SecondMoment, ScalesLikeEpsilon) {
    auto p = dw();
    auto cps = cps_of(p);
    std::vector<double> ratio;
    for (double eps : {0.2, 0.1, 0.05}) {
        auto mod = build_eps_modification(p, cps, eps, 2.0);
        auto r = verify_drift(mod, eps, 2.0, right_basin(), 4000);
        ratio.push_back(second_moment_bound(r.lambda0 / eps, r.b0 / eps, r.R) / eps);
    }
    EXPECT_LT(*std::max_element(ratio.begin(), ratio.end()) / *std::min_element(ratio.begin(), ratio.end()), 3.0);
}
