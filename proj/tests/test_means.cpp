#include <ekmeta/means.hpp>

#include <gtest/gtest.h>

#include <random>

using namespace ekm;

TEST(LogMean, Examples) {
    EXPECT_DOUBLE_EQ(log_mean(1, 1), 1.0);
    EXPECT_NEAR(log_mean(2, 1), 1.0 / std::log(2.0), 1e-15);
    EXPECT_NEAR(log_mean(2, 1), 1.442695, 1e-6);
    EXPECT_NEAR(log_mean(4, 2), 2.885390, 1e-6);
    EXPECT_NEAR(log_mean(4, 2), 2 * log_mean(2, 1), 1e-14);
    EXPECT_THROW(log_mean(0, 1), Error);
    EXPECT_THROW(log_mean(1, -1), Error);
}

TEST(LogMean, NearEqualBranchIsSmooth) {
    double a = 1.0, b = 1.0 + 5e-13;
    EXPECT_NEAR(log_mean(a, b), 1.0 + 2.5e-13, 1e-15);
    EXPECT_NEAR(log_mean(3.0, 3.0 * (1 + 1e-9)), 3.0 * (1 + 0.5e-9), 1e-13);
}

TEST(LogMeanBounds, Examples) {
    auto t = log_mean_bounds(1, 1);
    EXPECT_DOUBLE_EQ(t.geometric, 1);
    EXPECT_DOUBLE_EQ(t.logarithmic, 1);
    EXPECT_DOUBLE_EQ(t.arithmetic, 1);
    t = log_mean_bounds(1, 4);
    EXPECT_DOUBLE_EQ(t.geometric, 2.0);
    EXPECT_NEAR(t.logarithmic, 3.0 / std::log(4.0), 1e-15);
    EXPECT_NEAR(t.logarithmic, 2.1640, 1e-4);
    EXPECT_DOUBLE_EQ(t.arithmetic, 2.5);
    t = log_mean_bounds(1e-6, 1);
    EXPECT_LT(t.geometric, t.logarithmic);
    EXPECT_LT(t.logarithmic, t.arithmetic);
    EXPECT_NEAR(t.logarithmic, (1 - 1e-6) / (6 * std::log(10.0)), 1e-12);
    EXPECT_NEAR(t.logarithmic, 0.07238, 1e-5);
}

TEST(HP, SymmetricValue) { EXPECT_NEAR(h_p(0.5, 0.5), 2.0, 1e-6); }

TEST(HP, GridArgminAtOneMinusP) {
    const double p = 0.2;
    double best = inf, arg = 0;
    for (int k = 1; k < 100000; ++k) {
        double t = k / 100000.0;
        double v = h_p(p, t);
        if (v < best) best = v, arg = t;
    }
    EXPECT_NEAR(arg, 0.8, 1e-3);
    EXPECT_NEAR(best, log_mean(0.2, 0.8) / 0.16, 1e-9);
}

TEST(HP, BoundaryLimits) {
    for (double p : {0.1, 0.3, 0.7}) {
        EXPECT_NEAR(h_p(p, 1e-9), h_p_limit_t0(p), 1e-3 * h_p_limit_t0(p));
        EXPECT_NEAR(h_p(p, 1 - 1e-9), h_p_limit_t1(p), 1e-3 * h_p_limit_t1(p));
    }
    EXPECT_THROW(h_p(0, 0.5), Error);
    EXPECT_THROW(h_p(0.5, 1), Error);
}

TEST(UpperBound, Examples) {
    EXPECT_TRUE(upper_bound_check(0.5));
    EXPECT_NEAR(log_mean(0.5, 0.5) / 0.25 * 0.5 * std::log(2.0), std::log(2.0), 1e-15);
    EXPECT_TRUE(upper_bound_check(0.01));
    EXPECT_TRUE(upper_bound_check(0.99));
    EXPECT_THROW(upper_bound_check(1.0), Error);
}

TEST(LogMeanProperty, SymmetryMonotonicityBetweenness) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-8.0, 8.0);
    int fails = 0;
    for (int k = 0; k < 10000; ++k) {
        double a = std::exp(u(rng)), b = std::exp(u(rng));
        double l = log_mean(a, b);
        if (l != log_mean(b, a)) ++fails;
        if (l < std::min(a, b) * (1 - 1e-14) || l > std::max(a, b) * (1 + 1e-14)) ++fails;
        auto t = log_mean_bounds(a, b);
        if (t.geometric > l * (1 + 1e-14) || l > t.arithmetic * (1 + 1e-14)) ++fails;
        if (!(log_mean(a, b * 1.01) > l)) ++fails;
        if (!(log_mean(a * 1.01, b) > l)) ++fails;
    }
    EXPECT_EQ(fails, 0);
}

TEST(LogMeanProperty, IntegralRepresentations) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int k = 0; k < 50; ++k) {
        double a = std::exp(u(rng)), b = std::exp(u(rng));
        // Gauss-Legendre-free check: composite Simpson on [0,1] with many panels
        const int n = 20000;
        double s1 = 0, s2 = 0;
        for (int i = 0; i <= n; ++i) {
            double s = static_cast<double>(i) / n, w = (i == 0 || i == n) ? 1 : (i % 2 ? 4 : 2);
            s1 += w * std::pow(a, s) * std::pow(b, 1 - s);
            s2 += w / (s * a + (1 - s) * b);
        }
        s1 /= 3.0 * n;
        s2 /= 3.0 * n;
        EXPECT_NEAR(s1, log_mean(a, b), 1e-10 * log_mean(a, b));
        EXPECT_NEAR(s2, 1.0 / log_mean(a, b), 1e-10 / log_mean(a, b));
    }
}

TEST(HPProperty, ArgminAndValueForRandomP) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.02, 0.98);
    int fails = 0;
    for (int k = 0; k < 100; ++k) {
        double p = u(rng);
        const int n = 20000;
        double best = inf, arg = 0;
        for (int i = 1; i < n; ++i) {
            double t = static_cast<double>(i) / n;
            double v = h_p(p, t);
            if (v < best) best = v, arg = t;
        }
        if (std::abs(arg - (1 - p)) > 1.0 / n + 1e-12 && std::abs(p - 0.5) > 1e-3) ++fails;
        if (std::abs(h_p(p, 1 - p) - log_mean(p, 1 - p) / (p * (1 - p))) > 1e-10 * h_p(p, 1 - p)) ++fails;
    }
    EXPECT_EQ(fails, 0);
}
