#pragma once

#include "common.hpp"
#include "means.hpp"

namespace ekm {

struct DiscreteMeasure {
    Vec weights;

    explicit DiscreteMeasure(Vec z) : weights(std::move(z)) {
        if (weights.size() == 0) throw Error("DimensionMismatch", "empty discrete measure");
        for (Eigen::Index i = 0; i < weights.size(); ++i)
            if (!(weights[i] > 0.0)) throw Error("NonPositive", "discrete weights must be positive");
        if (std::abs(weights.sum() - 1.0) > 1e-12) throw Error("NotNormalized", "weights must sum to one");
    }
    Eigen::Index size() const { return weights.size(); }
};

struct ComponentStats {
    Vec mean;           // E_{mu_i} f
    Vec second_moment;  // E_{mu_i} f^2
    Vec local_variance;
    Vec local_entropy;  // Ent_{mu_i}(f) for the entropy splitting

    static ComponentStats from_mean_variance(const Vec& mean, const Vec& var) {
        Vec m2 = var + mean.cwiseProduct(mean);
        return {mean, m2, var, Vec::Zero(mean.size())};
    }
};

inline double xlogy_safe(double x, double y) { return x == 0.0 ? 0.0 : x * std::log(y); }

// Ent_mu(f) = sum_k w_k f_k log(f_k / sum_j w_j f_j)
inline double entropy(const Vec& w, const Vec& f) {
    double m = w.dot(f);
    if (m <= 0.0) return 0.0;
    double e = 0.0;
    for (Eigen::Index k = 0; k < w.size(); ++k) {
        if (f[k] < 0.0) throw Error("NegativeFunction", "entropy of a negative function");
        e += w[k] * xlogy_safe(f[k], f[k] / m);
    }
    return e;
}

inline double variance(const Vec& w, const Vec& f) {
    double m = w.dot(f);
    return w.dot((f.array() - m).square().matrix());
}

struct VarianceSplit {
    double total, local_part, mean_difference_part;
};

inline VarianceSplit split_variance(const DiscreteMeasure& z, const ComponentStats& s) {
    const auto m = z.size();
    if (s.mean.size() != m || s.local_variance.size() != m)
        throw Error("DimensionMismatch", "component stats do not match the measure");
    double local = z.weights.dot(s.local_variance), md = 0.0;
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = i + 1; j < m; ++j) {
            double d = s.mean[i] - s.mean[j];
            md += z.weights[i] * z.weights[j] * d * d;
        }
    return {local + md, local, md};
}

struct EntropySplit {
    double total, local_part, coarse_grained;
};

// With f-bar = component means of f (f >= 0).
inline EntropySplit split_entropy(const DiscreteMeasure& z, const ComponentStats& s) {
    const auto m = z.size();
    if (s.mean.size() != m || s.local_entropy.size() != m)
        throw Error("DimensionMismatch", "component stats do not match the measure");
    for (Eigen::Index i = 0; i < m; ++i)
        if (s.mean[i] < 0.0 || s.local_entropy[i] < -1e-14) throw Error("NegativeFunction", "split_entropy needs f >= 0");
    double local = z.weights.dot(s.local_entropy);
    double coarse = entropy(z.weights, s.mean);
    return {local + coarse, local, coarse};
}

inline double two_point_lsi_constant(double p) {
    if (!(p > 0.0 && p < 1.0)) throw Error("OutOfRange", "two_point_lsi_constant needs p in (0,1)");
    double q = 1.0 - p;
    return p * q / log_mean(p, q);
}

struct InequalitySides {
    double lhs, rhs;
};

// Ent_Z(f^2) <= sum_{i<j} Z_i Z_j / Lambda(Z_i,Z_j) (f_i - f_j)^2
inline InequalitySides weighted_lsi_rhs(const DiscreteMeasure& z, const Vec& f) {
    if (f.size() != z.size()) throw Error("DimensionMismatch", "f does not match the measure");
    for (Eigen::Index i = 0; i < f.size(); ++i)
        if (f[i] < 0.0) throw Error("NegativeFunction", "weighted_lsi_rhs needs f >= 0");
    double lhs = entropy(z.weights, f.cwiseProduct(f)), rhs = 0.0;
    for (Eigen::Index i = 0; i < f.size(); ++i)
        for (Eigen::Index j = i + 1; j < f.size(); ++j) {
            double zi = z.weights[i], zj = z.weights[j], d = f[i] - f[j];
            rhs += zi * zj / log_mean(zi, zj) * d * d;
        }
    return {lhs, rhs};
}

// Ent_Z(bar{f^2}) against the variance/mean-difference bound.
inline InequalitySides coarse_entropy_bound(const DiscreteMeasure& z, const ComponentStats& s) {
    const auto m = z.size();
    if (s.mean.size() != m || s.local_variance.size() != m)
        throw Error("DimensionMismatch", "component stats do not match the measure");
    Vec f2 = s.local_variance + s.mean.cwiseProduct(s.mean);
    double lhs = entropy(z.weights, f2), rhs = 0.0;
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j) {
            if (i == j) continue;
            double zi = z.weights[i], zj = z.weights[j], c = zi * zj / log_mean(zi, zj);
            rhs += c * s.local_variance[i];
            if (j > i) {
                double d = s.mean[i] - s.mean[j];
                rhs += c * d * d;
            }
        }
    return {lhs, rhs};
}

inline double tighten_defective_lsi(double alpha_d, double B, double rho) {
    if (!(alpha_d > 0.0) || !(rho > 0.0) || !(B >= 0.0)) throw Error("NonPositive", "tighten_defective_lsi inputs");
    return 1.0 / (1.0 / alpha_d + (B + 2.0) / rho);
}

// Component statistics of a grid function given per-node weights and labels.
inline ComponentStats grid_component_stats(const Vec& w, const std::vector<int>& labels, const Vec& f, int m) {
    Vec mass = Vec::Zero(m), mean = Vec::Zero(m), m2 = Vec::Zero(m), ent = Vec::Zero(m);
    for (Eigen::Index k = 0; k < w.size(); ++k) {
        int i = labels[static_cast<std::size_t>(k)];
        mass[i] += w[k];
        mean[i] += w[k] * f[k];
        m2[i] += w[k] * f[k] * f[k];
    }
    mean = mean.cwiseQuotient(mass);
    m2 = m2.cwiseQuotient(mass);
    for (Eigen::Index k = 0; k < w.size(); ++k) {
        int i = labels[static_cast<std::size_t>(k)];
        if (mean[i] > 0.0) ent[i] += w[k] / mass[i] * xlogy_safe(f[k], f[k] / mean[i]);
    }
    Vec var = Vec::Zero(m);
    for (Eigen::Index k = 0; k < w.size(); ++k) {
        int i = labels[static_cast<std::size_t>(k)];
        double d = f[k] - mean[i];
        var[i] += w[k] / mass[i] * d * d;
    }
    return {mean, m2, var, ent};
}

}  // namespace ekm
