#pragma once

#include "common.hpp"
#include "expr.hpp"
#include "landscape.hpp"

#include <array>
#include <sstream>

namespace ekm {

// xi on the argument u = |x - y|_delta^2: xi' = -1 on [0, u1], quintic smoothstep up to 0 at u2, xi = 0 beyond.
struct XiProfile {
    double u1 = 0.0, u2 = 0.0;

    double L() const { return u2 - u1; }
    // value, first and second derivative
    std::array<double, 3> operator()(double u) const {
        if (u >= u2) return {0.0, 0.0, 0.0};
        if (u <= u1) return {u1 - u + 0.5 * L(), -1.0, 0.0};
        double t = (u - u1) / L();
        double S = t * t * t * (t * (6.0 * t - 15.0) + 10.0);
        double dS = 30.0 * t * t * (t - 1.0) * (t - 1.0);
        double S_int = t * t * t * t * (t * t - 3.0 * t + 2.5);
        double v = L() * ((1.0 - t) - 0.5 + S_int);
        return {v, S - 1.0, dS / L()};
    }
    double sup_second() const { return 1.875 / L(); }
};

struct SaddlePatch {
    Vec center;
    Vec lambda;  // Hessian eigenvalues, ascending
    Mat frame;   // eigenvectors as columns
    int index = 0;
    double delta = 0.0;
    Mat M;  // |z|_delta^2 = z^T M z
    double euclidean_radius = 0.0;
};

class EpsModification {
public:
    Potential base;
    std::vector<SaddlePatch> patches;
    std::vector<Vec> minima;
    XiProfile xi;
    double epsilon = 0.0;
    double a = 0.0;
    double C_xi = 0.0;       // sqrt(eps) sup |xi''|
    double C_H_tilde = 0.0;  // sup |H~ - H| / eps

    int dim() const { return base.dim(); }
    double value(const Vec& x) const {
        double v = base.value(x);
        for (const auto& p : patches) {
            Vec z = x - p.center;
            v += xi(z.dot(p.M * z))[0];
        }
        return v;
    }
    Jet2 jet(const Vec& x) const {
        Jet2 j = base.jet(x);
        for (const auto& p : patches) {
            Vec z = x - p.center;
            Vec Mz = p.M * z;
            auto [v, d1, d2] = xi(z.dot(Mz));
            if (v == 0.0 && d1 == 0.0) continue;
            j.value += v;
            j.gradient += 2.0 * d1 * Mz;
            j.hessian += 2.0 * d1 * p.M + 4.0 * d2 * Mz * Mz.transpose();
        }
        return j;
    }
    double patch_value(const Vec& x) const { return value(x) - base.value(x); }
};

// Largest delta allowed by (n - 2l) delta + sum_{neg} lambda < 0 and delta <= min_{pos} lambda / 2.
inline double delta_bound(const Vec& lambda) {
    const int n = static_cast<int>(lambda.size());
    int l = 0;
    double neg = 0.0, pos_min = inf, abs_min = inf;
    for (int i = 0; i < n; ++i) {
        abs_min = std::min(abs_min, std::abs(lambda[i]));
        if (lambda[i] < 0) {
            ++l;
            neg += lambda[i];
        } else {
            pos_min = std::min(pos_min, lambda[i]);
        }
    }
    double bound = 0.5 * pos_min;
    if (n - 2 * l > 0) bound = std::min(bound, -neg / (n - 2 * l));
    if (!std::isfinite(bound)) bound = 0.5 * abs_min;  // no constraint binds
    return bound;
}

inline bool delta_feasible(const Vec& lambda, double delta) {
    const int n = static_cast<int>(lambda.size());
    int l = 0;
    double neg = 0.0, pos_min = inf;
    for (int i = 0; i < n; ++i) {
        if (lambda[i] < 0) {
            ++l;
            neg += lambda[i];
        } else {
            pos_min = std::min(pos_min, lambda[i]);
        }
    }
    return delta > 0.0 && (n - 2 * l) * delta + neg < 0.0 && delta <= 0.5 * pos_min;
}

// delta <= 0 selects 0.9 times the binding bound per saddle.
inline EpsModification build_eps_modification(const Potential& p, const std::vector<CriticalPoint>& cps, double epsilon,
                                              double a = 6.0, double delta = 0.0) {
    if (!(epsilon > 0.0) || !(a > 0.0)) throw Error("NonPositive", "epsilon and a must be positive");
    EpsModification m;
    m.base = p;
    m.epsilon = epsilon;
    m.a = a;
    m.xi = XiProfile{0.25 * a * a * epsilon, a * a * epsilon};
    m.C_xi = std::sqrt(epsilon) * m.xi.sup_second();
    for (const auto& c : cps) {
        if (c.morse_index == 0) {
            m.minima.push_back(c.location);
            continue;
        }
        SaddlePatch s;
        s.center = c.location;
        s.lambda = c.hessian_eigenvalues;
        s.frame = c.hessian_eigenvectors;
        s.index = c.morse_index;
        double bound = delta_bound(s.lambda);
        s.delta = delta > 0.0 ? delta : 0.9 * bound;
        if (delta > 0.0 ? !delta_feasible(s.lambda, s.delta) : !(bound > 0.0))
            throw Error("DeltaInfeasible", "no delta satisfies the saddle constraints");
        const Eigen::Index n = s.lambda.size();
        Vec w(n);
        for (Eigen::Index i = 0; i < n; ++i) w[i] = 0.5 * (s.lambda[i] < 0 ? s.delta : s.lambda[i] - s.delta);
        if (w.minCoeff() <= 0.0) throw Error("DeltaInfeasible", "delta norm is degenerate");
        s.M = s.frame * w.asDiagonal() * s.frame.transpose();
        s.euclidean_radius = a * std::sqrt(epsilon / w.minCoeff());
        m.patches.push_back(std::move(s));
    }
    m.C_H_tilde = m.patches.empty() ? 0.0 : m.xi(0.0)[0] / epsilon;
    return m;
}

struct LyapunovReport {
    double lambda0 = 0.0;
    double b0 = 0.0;
    double a = 0.0;
    double R = 0.0;
    double drift_margin_grid = 0.0;  // max drift outside the minimum balls
    double max_drift_inside = -inf;
    double K_H_tilde = 0.0;  // -min Hessian eigenvalue of H~ on the grid, clipped at 0
    double K_H = 0.0;
    double C_H = 0.0;
    double regime_eps = 0.0;  // eps <= C_H^2 / (4 (C_H^2 + 8 K_H))
    bool in_regime = true;
    double C_H_tilde = 0.0;
    double holley_stroock_factor = 1.0;  // exp(-2 C_H~)
    std::size_t points_checked = 0;
    std::vector<Vec> violations;
    std::vector<std::string> warnings;
};

// (1/(2 eps)) Lap H~ - (1/(4 eps^2)) |grad H~|^2
inline double drift_value(const Jet2& j, double eps) {
    return j.hessian.trace() / (2.0 * eps) - j.gradient.squaredNorm() / (4.0 * eps * eps);
}

inline LyapunovReport verify_drift(const EpsModification& mod, double epsilon, double a, const Box& box,
                                   int grid_resolution, bool throw_on_violation = true) {
    if (box.dim() != static_cast<std::size_t>(mod.dim())) throw Error("DimensionMismatch", "box dimension");
    LyapunovReport r;
    r.a = a;
    r.R = a * std::sqrt(epsilon);
    r.C_H_tilde = mod.C_H_tilde;
    r.holley_stroock_factor = std::exp(-2.0 * mod.C_H_tilde);
    Grid grid(box, grid_resolution);
    double worst = -inf, min_hess = inf, min_hess_base = inf, shell_grad = inf;
    Vec worst_point;
    const double R2 = r.R * r.R;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        Vec x = grid.point(k);
        Jet2 j = mod.jet(x);
        double d = drift_value(j, epsilon);
        min_hess = std::min(min_hess, jacobi_eigh(j.hessian).values[0]);
        Jet2 jb = mod.base.jet(x);
        min_hess_base = std::min(min_hess_base, jacobi_eigh(jb.hessian).values[0]);
        auto m = grid.multi(k);
        for (int ax = 0; ax < grid.dim(); ++ax) {
            int mi = m[static_cast<std::size_t>(ax)];
            if (mi < 2 || mi >= grid.res - 2) {
                shell_grad = std::min(shell_grad, jb.gradient.norm());
                break;
            }
        }
        bool inside = false;
        for (const auto& y : mod.minima)
            if ((x - y).squaredNorm() < R2) inside = true;
        if (inside) {
            r.max_drift_inside = std::max(r.max_drift_inside, d);
            continue;
        }
        ++r.points_checked;
        if (d > worst) worst = d, worst_point = x;
        if (d > 0.0) r.violations.push_back(x);
    }
    r.drift_margin_grid = worst;
    r.K_H_tilde = std::max(0.0, -min_hess);
    r.K_H = std::max(0.0, -min_hess_base);
    r.C_H = 2.0 * shell_grad;
    r.regime_eps = r.C_H * r.C_H / (4.0 * (r.C_H * r.C_H + 8.0 * r.K_H));
    r.in_regime = epsilon <= r.regime_eps;
    if (!r.in_regime) r.warnings.push_back("epsilon above the outer-region threshold");
    if (r.points_checked == 0) r.warnings.push_back("no grid points outside the minimum balls");
    if (!r.violations.empty()) {
        if (throw_on_violation) {
            std::ostringstream os;
            os << r.violations.size() << " grid points with positive drift, worst " << worst << " at (";
            for (Eigen::Index i = 0; i < worst_point.size(); ++i) os << (i ? ", " : "") << worst_point[i];
            os << ")";
            throw Error("DriftViolated", os.str());
        }
        return r;
    }
    r.lambda0 = r.points_checked ? -epsilon * worst : 0.0;
    // inside the balls L W / (eps W) equals the drift, so b >= drift + lambda there
    r.b0 = std::max(0.0, epsilon * r.max_drift_inside + r.lambda0);
    return r;
}

struct EscalationResult {
    EpsModification modification;
    LyapunovReport report;
    std::vector<double> tried;
};

// Doubles a from a_start until the drift check passes or a exceeds a_max.
inline EscalationResult verify_drift_escalating(const Potential& p, const std::vector<CriticalPoint>& cps, double epsilon,
                                                const Box& box, int grid_resolution, double a_start = 6.0,
                                                double a_max = 48.0, double delta = 0.0) {
    EscalationResult out;
    for (double a = a_start; a <= a_max * (1 + 1e-12); a *= 2.0) {
        out.tried.push_back(a);
        out.modification = build_eps_modification(p, cps, epsilon, a, delta);
        out.report = verify_drift(out.modification, epsilon, a, box, grid_resolution, false);
        if (out.report.violations.empty()) return out;
    }
    throw Error("DriftViolated", "drift inequality fails for every a up to the escalation limit");
}

inline void require_positive(std::initializer_list<double> v) {
    for (double x : v)
        if (!(x > 0.0)) throw Error("NonPositive", "argument must be positive");
}

// rho >= lambda rho_R / (b + rho_R)
inline double pi_from_lyapunov(double lambda, double b, double rho_R) {
    require_positive({lambda, rho_R});
    if (b < 0.0) throw Error("NonPositive", "b must be non-negative");
    return lambda * rho_R / (b + rho_R);
}

inline double pi_from_lyapunov(const LyapunovReport& rep, double epsilon, double rho_R) {
    require_positive({rep.lambda0, epsilon});
    return pi_from_lyapunov(rep.lambda0 / epsilon, rep.b0 / epsilon, rho_R);
}

struct LsiBound {
    double inv_alpha = 0.0;
    double c1 = 0.0;  // 1/alpha = 2 sqrt(c1) + c2
    double c2 = 0.0;
    double tau = 0.0;
};

inline LsiBound lsi_from_lyapunov(double lambda, double b, double rho, double K_H, double eps, double second_moment) {
    require_positive({lambda, rho, eps});
    if (b < 0.0 || K_H < 0.0 || second_moment < 0.0) throw Error("NonPositive", "b, K_H and the second moment must be non-negative");
    LsiBound r;
    double m = b + lambda * second_moment;
    r.c1 = (1.0 / lambda) * (0.5 + m / rho);
    r.c2 = K_H / (2.0 * eps * lambda) + (K_H * m + 2.0 * eps * lambda) / (rho * eps * lambda);
    r.tau = std::sqrt(r.c1);
    r.inv_alpha = 2.0 * r.tau + r.c2;
    return r;
}

inline double second_moment_bound(double lambda, double b, double R) {
    require_positive({lambda});
    if (b < 0.0) throw Error("NonPositive", "b must be non-negative");
    return (1.0 + b * R * R) / lambda;
}

// rho_R from the Bakry-Emery criterion at the minimum: lambda_min(Hess H(m)) / eps.
inline double bakry_emery_rho(const CriticalPoint& minimum, double epsilon) {
    require_positive({epsilon});
    double l = minimum.hessian_eigenvalues[0];
    if (!(l > 0.0)) throw Error("NonPositive", "minimum Hessian must be positive definite");
    return l / epsilon;
}

}  // namespace ekm
