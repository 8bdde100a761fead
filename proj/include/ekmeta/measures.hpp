#pragma once

#include "common.hpp"
#include "expr.hpp"
#include "landscape.hpp"

namespace ekm {

struct GibbsSpec {
    Potential potential;
    double epsilon = 0.0;
    Box box;
    LandscapeGraph graph;

    int dim() const { return potential.dim(); }

    // Box margin around every critical point against 3 sqrt(eps C_Sigma).
    bool margin_ok() const {
        double cs = 1.0;
        for (const auto& m : graph.minima)
            cs = std::max(cs, m.hessian_eigenvalues[m.hessian_eigenvalues.size() - 1] / m.hessian_eigenvalues[0]);
        double need = 3.0 * std::sqrt(epsilon * cs);
        auto check = [&](const CriticalPoint& c) {
            for (int k = 0; k < dim(); ++k)
                if (c.location[k] - box.lo[k] < need || box.hi[k] - c.location[k] < need) return false;
            return true;
        };
        for (const auto& m : graph.minima)
            if (!check(m)) return false;
        for (const auto& s : graph.saddles)
            if (!check(s)) return false;
        return true;
    }
};

inline GibbsSpec make_gibbs(const Potential& p, double eps, const Box& box, int graph_resolution = 0) {
    if (!(eps > 0.0)) throw Error("NonPositive", "epsilon must be positive");
    auto cps = find_critical_points(p, box);
    GibbsSpec g{p, eps, box, {}};
    auto mins = minima_of(cps);
    if (mins.size() >= 2) {
        int res = graph_resolution > 0 ? graph_resolution : (p.dim() == 1 ? 2048 : 128);
        g.graph = saddle_graph(p, cps, box, res);
    } else {
        g.graph.minima = mins;
    }
    return g;
}

struct PartitionData {
    double Z_mu_quadrature = 0.0;
    double Z_mu_laplace = 0.0;
    Vec Z_i;
    Vec Z_i_laplace;
    double quadrature_error = 0.0;  // relative Richardson estimate
    double ambiguous_fraction = 0.0;
};

inline PartitionData laplace_partition(const GibbsSpec& g) {
    const int n = g.dim();
    const auto m = static_cast<Eigen::Index>(g.graph.minima.size());
    PartitionData pd;
    pd.Z_i_laplace.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const auto& c = g.graph.minima[static_cast<std::size_t>(i)];
        pd.Z_i_laplace[i] = std::pow(2.0 * pi * g.epsilon, 0.5 * n) / std::sqrt(c.det_hessian()) * std::exp(-c.energy / g.epsilon);
    }
    pd.Z_mu_laplace = pd.Z_i_laplace.sum();
    pd.Z_i_laplace /= pd.Z_mu_laplace;
    return pd;
}

// Gibbs weights on a midpoint grid with basin labels.
struct GridGibbs {
    Grid grid;
    double epsilon = 0.0;
    std::vector<double> H;
    Vec density;  // normalized mu density at nodes
    Vec mass;     // density * cell volume, sums to one
    double Z_mu = 0.0;
    std::vector<int> label;
    Vec Z_i;
    double ambiguous_fraction = 0.0;

    int components() const { return static_cast<int>(Z_i.size()); }
};

inline double grid_partition_sum(const Potential& p, const Grid& grid, double eps) {
    double s = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) s += std::exp(-p.value(grid.point(k)) / eps);
    return s * grid.cell_volume();
}

inline GridGibbs grid_gibbs(const GibbsSpec& g, int res, bool with_labels = true) {
    if (g.dim() > 2) throw Error("DimensionMismatch", "grid quadrature supports dim <= 2");
    GridGibbs gg;
    gg.grid = Grid(g.box, res);
    gg.epsilon = g.epsilon;
    const std::size_t N = gg.grid.size();
    gg.H.resize(N);
    for (std::size_t k = 0; k < N; ++k) gg.H[k] = g.potential.value(gg.grid.point(k));
    gg.density.resize(static_cast<Eigen::Index>(N));
    double sum = 0.0;
    for (std::size_t k = 0; k < N; ++k) {
        double w = std::exp(-gg.H[k] / g.epsilon);
        gg.density[static_cast<Eigen::Index>(k)] = w;
        sum += w;
    }
    gg.Z_mu = sum * gg.grid.cell_volume();
    gg.density /= gg.Z_mu;
    gg.mass = gg.density * gg.grid.cell_volume();
    const int m = std::max<int>(1, static_cast<int>(g.graph.minima.size()));
    gg.Z_i = Vec::Zero(m);
    gg.label.assign(N, 0);
    if (with_labels && g.graph.minima.size() >= 2) {
        std::vector<CriticalPoint> cps = g.graph.minima;
        cps.insert(cps.end(), g.graph.saddles.begin(), g.graph.saddles.end());
        auto lab = label_grid(g.potential, cps, gg.grid);
        gg.label = lab.label;
        gg.ambiguous_fraction = lab.ambiguous_fraction;
    }
    for (std::size_t k = 0; k < N; ++k) gg.Z_i[gg.label[k]] += gg.mass[static_cast<Eigen::Index>(k)];
    return gg;
}

inline PartitionData quadrature_partition(const GibbsSpec& g, int res, bool throw_on_error = true) {
    PartitionData pd = laplace_partition(g);
    GridGibbs gg = grid_gibbs(g, res);
    double coarse = grid_partition_sum(g.potential, Grid(g.box, res / 2), g.epsilon);
    pd.Z_mu_quadrature = gg.Z_mu;
    pd.quadrature_error = std::abs(gg.Z_mu - coarse) / 3.0 / gg.Z_mu;
    pd.Z_i = gg.Z_i / gg.Z_i.sum();
    pd.ambiguous_fraction = gg.ambiguous_fraction;
    if (throw_on_error && pd.quadrature_error > 1e-3)
        throw Error("QuadratureUnderResolved", "Richardson estimate exceeds 1e-3");
    return pd;
}

inline double omega_of(double eps) { return std::sqrt(std::abs(std::log(eps))); }

struct TruncatedGaussian {
    Vec center;
    Mat covariance_inverse;
    double truncation_radius_factor = 0.0;  // omega(eps)
    double epsilon = 0.0;
    double Z_nu = 0.0;
    double tail = 0.0;
    bool epsilon_too_large = false;

    double quadratic(const Vec& x) const {
        Vec d = x - center;
        return d.dot(covariance_inverse * d);
    }
    bool in_support(const Vec& x) const {
        double w = truncation_radius_factor;
        return quadratic(x) <= 2.0 * epsilon * w * w;
    }
    double density(const Vec& x) const {
        double q = quadratic(x), w = truncation_radius_factor;
        if (q > 2.0 * epsilon * w * w) return 0.0;
        return std::exp(-q / (2.0 * epsilon)) / Z_nu;
    }
};

inline TruncatedGaussian truncated_gaussian(const Vec& center, const Mat& sigma_inv, double eps, double omega) {
    const int n = static_cast<int>(center.size());
    if (!is_spd(sigma_inv)) throw Error("NotSPD", "covariance inverse must be SPD");
    TruncatedGaussian t;
    t.center = center;
    t.covariance_inverse = sigma_inv;
    t.truncation_radius_factor = omega;
    t.epsilon = eps;
    t.tail = std::isfinite(omega) ? gamma_q(0.5 * n, omega * omega) : 0.0;
    t.Z_nu = std::pow(2.0 * pi * eps, 0.5 * n) / std::sqrt(sigma_inv.determinant()) * (1.0 - t.tail);
    t.epsilon_too_large = omega * omega < n;
    return t;
}

inline TruncatedGaussian build_truncated_gaussian(const GibbsSpec& g, int i) {
    const auto& m = g.graph.minima.at(static_cast<std::size_t>(i));
    Mat h = m.hessian_eigenvectors * m.hessian_eigenvalues.asDiagonal() * m.hessian_eigenvectors.transpose();
    return truncated_gaussian(m.location, h, g.epsilon, omega_of(g.epsilon));
}

// Var_{mu_i}(d nu_i / d mu_i) by quadrature over the support of nu_i.
inline double relative_density_variance(const GibbsSpec& g, int i, int res = 0) {
    if (g.dim() > 2) throw Error("DimensionMismatch", "relative_density_variance supports dim <= 2");
    TruncatedGaussian nu = build_truncated_gaussian(g, i);
    const int n = g.dim();
    if (res <= 0) res = n == 1 ? 8192 : 512;
    // Z_i Z_mu = integral of exp(-H/eps) over the basin
    GridGibbs gg = grid_gibbs(g, n == 1 ? 8192 : 256);
    double zizmu = gg.Z_i[i] * gg.Z_mu;
    Mat cov = nu.covariance_inverse.inverse();
    double w = nu.truncation_radius_factor;
    Vec half(n);
    for (int k = 0; k < n; ++k) half[k] = std::sqrt(2.0 * g.epsilon * w * w * cov(k, k)) * (1.0 + 1e-9);
    Grid local(Box{nu.center - half, nu.center + half}, res);
    std::vector<CriticalPoint> cps = g.graph.minima;
    cps.insert(cps.end(), g.graph.saddles.begin(), g.graph.saddles.end());
    std::optional<BasinFlow<Potential>> flow;
    if (g.graph.minima.size() >= 2) flow.emplace(g.potential, cps, g.box);
    double acc = 0.0;
    for (std::size_t k = 0; k < local.size(); ++k) {
        Vec x = local.point(k);
        if (!nu.in_support(x)) continue;
        if (flow && (*flow)(x) != i) continue;
        double lr = -nu.quadratic(x) / g.epsilon + g.potential.value(x) / g.epsilon;
        acc += std::exp(lr) * zizmu / (nu.Z_nu * nu.Z_nu);
    }
    return acc * local.cell_volume() - 1.0;
}

struct GaussianConcentration {
    double variance, entropy;
};

inline GaussianConcentration gaussian_concentration_check(double sigma, int n) {
    if (!(sigma > 0.0)) throw Error("NonPositive", "sigma must be positive");
    double var = sigma < 2.0 ? std::pow(1.0 / (sigma * (2.0 - sigma)), 0.5 * n) - 1.0 : inf;
    return {var, 0.5 * n * (sigma - 1.0 - std::log(sigma))};
}

}  // namespace ekm
