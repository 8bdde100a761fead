#pragma once

#include "common.hpp"
#include "means.hpp"
#include "measures.hpp"

namespace ekm {

enum class ZSource { Laplace, Quadrature };

struct EKResult {
    double epsilon = 0.0;
    double inv_rho = 0.0;
    double inv_alpha_times2 = 0.0;
    double inv_alpha_times2_ratio_form = 0.0;  // (1/Lambda(Z1,Z2)) * inv_rho
    std::pair<int, int> dominant_pair{0, 1};
    std::map<std::pair<int, int>, double> per_pair_terms;
    bool no_metastability = false;
    double error_envelope = 0.0;  // sqrt(eps) |log eps|^{3/2}
};

namespace detail {

inline std::pair<Vec, double> pick_z(const PartitionData& pd, ZSource src) {
    if (src == ZSource::Quadrature) {
        if (pd.Z_i.size() == 0) throw Error("MissingQuadrature", "quadrature partition data not computed");
        return {pd.Z_i, pd.Z_mu_quadrature};
    }
    return {pd.Z_i_laplace, pd.Z_mu_laplace};
}

// Z_mu/(2 pi eps)^{n/2} * 2 pi eps sqrt|det Hess(s)| / |lambda^-| * exp(H(s)/eps)
inline double saddle_factor(const GibbsSpec& g, double z_mu, const CriticalPoint& s) {
    const int n = g.dim();
    double eps = g.epsilon;
    return z_mu / std::pow(2.0 * pi * eps, 0.5 * n) * 2.0 * pi * eps * std::sqrt(std::abs(s.det_hessian())) /
           std::abs(s.lambda_minus()) * std::exp(s.energy / eps);
}

}  // namespace detail

inline EKResult ek_pi(const GibbsSpec& g, const PartitionData& pd, ZSource src = ZSource::Laplace) {
    EKResult r;
    r.epsilon = g.epsilon;
    r.error_envelope = std::sqrt(g.epsilon) * std::pow(std::abs(std::log(g.epsilon)), 1.5);
    const int m = static_cast<int>(g.graph.minima.size());
    if (m < 2) {
        r.no_metastability = true;
        return r;
    }
    auto [z, zmu] = detail::pick_z(pd, src);
    double best = -inf;
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) {
            double t = z[i] * z[j] * detail::saddle_factor(g, zmu, g.graph.saddle(i, j));
            r.per_pair_terms[{i, j}] = t;
            if (t > best) best = t, r.dominant_pair = {i, j};
        }
    r.inv_rho = best;
    return r;
}

inline EKResult ek_lsi(const GibbsSpec& g, const PartitionData& pd, ZSource src = ZSource::Laplace) {
    EKResult r = ek_pi(g, pd, src);
    if (r.no_metastability) return r;
    auto [z, zmu] = detail::pick_z(pd, src);
    auto [i, j] = r.dominant_pair;
    double lam = log_mean(z[i], z[j]);
    r.inv_alpha_times2 = z[i] * z[j] / lam * detail::saddle_factor(g, zmu, g.graph.saddle(i, j));
    r.inv_alpha_times2_ratio_form = r.inv_rho / lam;
    return r;
}

struct SpecialCaseReport {
    bool symmetric = false;
    bool warning_near_symmetric = false;
    double kappa1 = 0.0, kappa2 = 0.0;
    double inv_rho = 0.0;         // matching display for the case
    double inv_alpha_times2 = 0.0;
    double mean_quotient = 1.0;   // ((k1+k2)/2) / Lambda(k1,k2)
    double gap_over_eps = 0.0;    // (H(m2)-H(m1))/eps
};

inline SpecialCaseReport ek_special_cases(const GibbsSpec& g, double sym_tol = 1e-9) {
    if (g.graph.minima.size() != 2) throw Error("NotTwoWells", "special cases need exactly two minima");
    const auto& m1 = g.graph.minima[0];
    const auto& m2 = g.graph.minima[1];
    const auto& s = g.graph.saddle(0, 1);
    double eps = g.epsilon;
    SpecialCaseReport r;
    r.kappa1 = std::sqrt(m1.det_hessian());
    r.kappa2 = std::sqrt(m2.det_hessian());
    double gap = m2.energy - m1.energy;
    r.gap_over_eps = gap / eps;
    r.symmetric = std::abs(gap) <= sym_tol;
    r.warning_near_symmetric = r.symmetric && gap != 0.0;
    double core = 2.0 * pi * eps * std::sqrt(std::abs(s.det_hessian())) / std::abs(s.lambda_minus());
    r.mean_quotient = 0.5 * (r.kappa1 + r.kappa2) / log_mean(r.kappa1, r.kappa2);
    if (r.symmetric) {
        double e = std::exp((s.energy - m1.energy) / eps);
        r.inv_rho = core / (r.kappa1 + r.kappa2) * e;
        r.inv_alpha_times2 = core / log_mean(r.kappa1, r.kappa2) * e;
    } else {
        double e = std::exp((s.energy - m2.energy) / eps);
        r.inv_rho = core / r.kappa2 * e;
        r.inv_alpha_times2 = (gap / eps + std::log(r.kappa1 / r.kappa2)) * r.inv_rho;
    }
    return r;
}

}  // namespace ekm
