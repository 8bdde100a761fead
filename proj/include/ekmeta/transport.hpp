#pragma once

#include "common.hpp"
#include "ek.hpp"
#include "measures.hpp"

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <functional>
#include <memory>

namespace ekm {

// Affine transport interpolation: gamma_s a unit-speed curve from m_i through s_ij to m_j,
// sigma_s = Sigma_s^{1/2} piecewise linear in s with a quintic slope blend at the saddle time.
class AffineInterpolation {
public:
    int dim = 0;
    double T = 0.0;         // path length (times time_scale)
    double saddle_time = 0.0;
    double time_scale = 1.0;
    double epsilon = 0.0;
    double omega = 0.0;
    Vec start, saddle, end;
    Vec saddle_direction;  // unstable eigenvector, oriented along the path
    Mat sigma0, sigma_star, sigma1;  // square roots of Sigma at 0, tau*, T
    Mat slope_left, slope_right;     // d sigma / ds away from the blend window (unit time scale)
    double blend = 0.1;
    double C_Sigma = 1.0;
    double c_gamma = inf;  // global radius of curvature
    double speed_error = 0.0;

    Vec gamma(double s) const {
        double u = s / time_scale;
        Vec x(dim);
        for (int d = 0; d < dim; ++d) x[d] = splines_[static_cast<std::size_t>(d)](clamp_u(u));
        return x;
    }
    Vec gamma_dot(double s) const {
        double u = s / time_scale;
        Vec v(dim);
        for (int d = 0; d < dim; ++d) v[d] = splines_[static_cast<std::size_t>(d)].prime(clamp_u(u));
        return v / time_scale;
    }
    Mat sigma(double s) const {
        double u = s / time_scale, tau = saddle_time / time_scale;
        // J(u) = int_tau^u S((v - tau + blend) / (2 blend)) dv, S the quintic smoothstep
        auto S_int = [](double w) {
            w = std::clamp(w, 0.0, 1.0);
            return w * w * w * w * (w * w - 3.0 * w + 2.5);
        };
        double w = (u - tau + blend) / (2.0 * blend);
        double J = 2.0 * blend * (S_int(w) - S_int(0.5));
        if (w > 1.0) J += u - (tau + blend);
        return sigma_star + (u - tau) * slope_left + (slope_right - slope_left) * J;
    }
    Mat sigma_dot(double s) const {
        double u = s / time_scale, tau = saddle_time / time_scale;
        double w = std::clamp((u - tau + blend) / (2.0 * blend), 0.0, 1.0);
        double S = w * w * w * (w * (6.0 * w - 15.0) + 10.0);
        return (slope_left + (slope_right - slope_left) * S) / time_scale;
    }
    Mat Sigma(double s) const {
        Mat m = sigma(s);
        return m * m;
    }

    // Same interpolation run at a different speed: s -> s * factor.
    AffineInterpolation rescaled(double factor) const {
        AffineInterpolation r = *this;
        r.time_scale = time_scale * factor;
        r.T = T * factor;
        r.saddle_time = saddle_time * factor;
        return r;
    }

    void set_path(std::vector<std::vector<double>> coords, double h) {
        splines_.clear();
        knots_ = static_cast<double>(coords.front().size() - 1) * h;
        for (auto& c : coords) splines_.emplace_back(c.begin(), c.end(), 0.0, h);
    }

private:
    std::vector<boost::math::interpolators::cardinal_cubic_b_spline<double>> splines_;
    double knots_ = 0.0;
    double clamp_u(double u) const { return std::clamp(u, 0.0, knots_); }
};

namespace detail {

// Normalized steepest descent from x until within reach of a minimum.
inline std::vector<Vec> descend(const Potential& p, Vec x, const std::vector<CriticalPoint>& minima, double ds,
                                int& reached) {
    std::vector<Vec> pts{x};
    auto field = [&](const Vec& y) {
        Vec g = p.jet(y).gradient;
        double n = g.norm();
        return n > 0.0 ? Vec(-g / n) : Vec(Vec::Zero(y.size()));
    };
    for (int it = 0; it < 2000000; ++it) {
        for (std::size_t i = 0; i < minima.size(); ++i)
            if ((x - minima[i].location).norm() < 3.0 * ds) {
                reached = static_cast<int>(i);
                pts.push_back(minima[i].location);
                return pts;
            }
        Vec k1 = field(x), k2 = field(x + 0.5 * ds * k1), k3 = field(x + 0.5 * ds * k2), k4 = field(x + ds * k3);
        x += ds / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
        pts.push_back(x);
    }
    throw Error("SaddleTangentMismatch", "descent from the saddle did not reach a minimum");
}

inline double circumradius(const Vec& a, const Vec& b, const Vec& c) {
    double ab = (a - b).norm(), bc = (b - c).norm(), ca = (c - a).norm();
    Vec u = b - a, v = c - a;
    double cross2 = u.squaredNorm() * v.squaredNorm() - std::pow(u.dot(v), 2);
    if (cross2 <= 1e-300) return inf;
    return ab * bc * ca / (2.0 * std::sqrt(cross2));
}

}  // namespace detail

inline AffineInterpolation build_interpolation(const GibbsSpec& g, int i, int j, double ds = 1e-3,
                                               bool check_tube = true) {
    const int n = g.dim();
    const auto& mi = g.graph.minima.at(static_cast<std::size_t>(i));
    const auto& mj = g.graph.minima.at(static_cast<std::size_t>(j));
    const auto& sd = g.graph.saddle(i, j);
    Vec eta = sd.unstable_direction();

    // descend from the saddle in both unstable directions
    const auto& all = g.graph.minima;
    double step0 = 1e-4;
    int ra = -1, rb = -1;
    auto pa = detail::descend(g.potential, sd.location + step0 * eta, all, ds, ra);
    auto pb = detail::descend(g.potential, sd.location - step0 * eta, all, ds, rb);
    if (ra == rb) throw Error("SaddleTangentMismatch", "both descents reach the same minimum");
    if (!((ra == i && rb == j) || (ra == j && rb == i)))
        throw Error("SaddleTangentMismatch", "saddle does not connect minima " + std::to_string(i) + " and " + std::to_string(j));
    ra = ra == i ? 0 : 1;
    if (ra == 0) {
        std::swap(pa, pb);
        eta = -eta;
    }
    // pb runs saddle -> m_i, pa runs saddle -> m_j
    std::vector<Vec> poly(pb.rbegin(), pb.rend());
    poly.push_back(sd.location);
    poly.insert(poly.end(), pa.begin(), pa.end());
    std::vector<double> arc(poly.size(), 0.0);
    for (std::size_t k = 1; k < poly.size(); ++k) arc[k] = arc[k - 1] + (poly[k] - poly[k - 1]).norm();
    const double T = arc.back();
    const double tau = arc[pb.size()];

    // uniform resampling by linear interpolation, then cubic B-splines per coordinate
    const int N = std::max(64, static_cast<int>(std::ceil(T / ds)));
    const double h = T / N;
    std::vector<std::vector<double>> coords(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(N + 1)));
    std::size_t seg = 0;
    for (int k = 0; k <= N; ++k) {
        double s = k * h;
        while (seg + 2 < poly.size() && arc[seg + 1] < s) ++seg;
        double len = arc[seg + 1] - arc[seg];
        double t = len > 0 ? std::clamp((s - arc[seg]) / len, 0.0, 1.0) : 0.0;
        Vec x = (1 - t) * poly[seg] + t * poly[seg + 1];
        for (int d = 0; d < n; ++d) coords[static_cast<std::size_t>(d)][static_cast<std::size_t>(k)] = x[d];
    }

    AffineInterpolation a;
    a.dim = n;
    a.T = T;
    a.saddle_time = tau;
    a.epsilon = g.epsilon;
    a.omega = omega_of(g.epsilon);
    a.start = mi.location;
    a.end = mj.location;
    a.saddle = sd.location;
    a.saddle_direction = eta;
    a.set_path(coords, h);

    Vec td = a.gamma_dot(tau);
    if ((td - eta).norm() > 1e-2) throw Error("SaddleTangentMismatch", "path tangent at the saddle is not the unstable direction");

    // covariances
    auto hess = [](const CriticalPoint& c) {
        return Mat(c.hessian_eigenvectors * c.hessian_eigenvalues.asDiagonal() * c.hessian_eigenvectors.transpose());
    };
    Mat S0 = hess(mi).inverse(), S1 = hess(mj).inverse();
    double c = 0.5 * (eta.dot(S0 * eta) + eta.dot(S1 * eta));
    Mat Sstar = c * eta * eta.transpose();
    if (n > 1) {
        Mat Q = householder_completion(eta);
        Mat Qp = Q.rightCols(n - 1);
        Mat Hp = Qp.transpose() * hess(sd) * Qp;
        if (!is_spd(Hp)) throw Error("SaddleTangentMismatch", "saddle Hessian is not positive on the stable directions");
        Sstar += Qp * Hp.inverse() * Qp.transpose();
    }
    a.sigma0 = spd_sqrt(S0);
    a.sigma1 = spd_sqrt(S1);
    a.sigma_star = spd_sqrt(Sstar);
    a.blend = std::min(0.1, 0.25 * std::min(tau, T - tau));
    const double k = 5.0 * a.blend / 32.0, aa = tau, bb = T - tau;
    Mat D0 = a.sigma_star - a.sigma0, D1 = a.sigma1 - a.sigma_star;
    double det = (aa - k) * (bb - k) - k * k;
    a.slope_left = ((bb - k) * D0 - k * D1) / det;
    a.slope_right = ((aa - k) * D1 - k * D0) / det;

    // regularity constants
    double cs = 1.0, speed = 0.0;
    const int samples = 400;
    for (int q = 0; q <= samples; ++q) {
        double s = T * q / samples;
        Eigh e = jacobi_eigh(a.Sigma(s));
        if (!(e.values[0] > 0.0)) throw Error("NotSPD", "interpolated covariance lost positivity");
        Mat sig = a.sigma(s), sd_ = a.sigma_dot(s);
        Mat Sd = sd_ * sig + sig * sd_;
        cs = std::max({cs, e.values[n - 1], 1.0 / e.values[0], Sd.norm()});
        speed = std::max(speed, std::abs(a.gamma_dot(s).norm() - 1.0));
    }
    a.C_Sigma = cs;
    a.speed_error = speed;
    if (n > 1) {
        const int m = 120;
        std::vector<Vec> pts;
        for (int q = 0; q <= m; ++q) pts.push_back(a.gamma(T * q / m));
        for (int p = 0; p <= m; ++p)
            for (int q = p + 1; q <= m; ++q)
                for (int r = q + 1; r <= m; ++r) a.c_gamma = std::min(a.c_gamma, detail::circumradius(pts[p], pts[q], pts[r]));
    }
    if (check_tube && a.c_gamma < 4.0 * std::sqrt(2.0 * g.epsilon * cs) * a.omega)
        throw Error("PathSelfIntersecting", "global radius of curvature below the tube threshold");
    return a;
}

// Per-time data of the interpolation sampled on midpoints.
struct InterpolationSamples {
    double ds = 0.0;
    std::vector<Vec> gamma, gamma_dot;
    std::vector<Mat> Sinv, drift;  // Sigma_s^{-1}, sigma_dot sigma^{-1}
    std::vector<double> Z, reach2;  // partition sum, squared support radius bound
    double eps = 0.0, omega2 = 0.0;
};

inline InterpolationSamples sample_interpolation(const AffineInterpolation& a, int s_steps) {
    InterpolationSamples r;
    r.ds = a.T / s_steps;
    r.eps = a.epsilon;
    r.omega2 = a.omega * a.omega;
    const int n = a.dim;
    const double tail = gamma_q(0.5 * n, r.omega2);
    for (int k = 0; k < s_steps; ++k) {
        double s = (k + 0.5) * r.ds;
        Mat sig = a.sigma(s);
        Mat sinv = sig.inverse();
        Mat S = sig * sig;
        r.gamma.push_back(a.gamma(s));
        r.gamma_dot.push_back(a.gamma_dot(s));
        r.Sinv.push_back(sinv * sinv);
        r.drift.push_back(a.sigma_dot(s) * sinv);
        r.Z.push_back(std::pow(2.0 * pi * a.epsilon, 0.5 * n) * std::sqrt(S.determinant()) * (1.0 - tail));
        r.reach2.push_back(2.0 * a.epsilon * r.omega2 * jacobi_eigh(S).values[n - 1]);
    }
    return r;
}

// A(x) = int_0^T |sigma_dot sigma^{-1}(x - gamma_s) + gamma_dot_s| nu_s(x) ds (midpoint rule).
inline double cost_density(const InterpolationSamples& smp, const Vec& x) {
    double acc = 0.0;
    const double lim = 2.0 * smp.eps * smp.omega2;
    for (std::size_t k = 0; k < smp.gamma.size(); ++k) {
        Vec d = x - smp.gamma[k];
        double d2 = d.squaredNorm();
        if (d2 > smp.reach2[k]) continue;
        double q = d.dot(smp.Sinv[k] * d);
        if (q > lim) continue;
        Vec v = smp.drift[k] * d + smp.gamma_dot[k];
        acc += v.norm() * std::exp(-q / (2.0 * smp.eps)) / smp.Z[k];
    }
    return acc * smp.ds;
}

inline double cost_density(const AffineInterpolation& a, const Vec& x, int s_steps = 4000) {
    return cost_density(sample_interpolation(a, s_steps), x);
}

// Bounding box of the tube swept by the supports of nu_s.
inline Box tube_box(const InterpolationSamples& smp) {
    const Eigen::Index n = smp.gamma.front().size();
    Box b{Vec::Constant(n, inf), Vec::Constant(n, -inf)};
    for (std::size_t k = 0; k < smp.gamma.size(); ++k) {
        double r = std::sqrt(smp.reach2[k]);
        b.lo = b.lo.cwiseMin((smp.gamma[k].array() - r).matrix());
        b.hi = b.hi.cwiseMax((smp.gamma[k].array() + r).matrix());
    }
    return b;
}

struct CostField {
    Grid grid;
    std::vector<double> A, weighted;  // A and A^2 / mu
};

struct TransportCost {
    double total = 0.0;
    double saddle_part = 0.0;      // H >= H(s) - eps omega^2
    double complement_part = 0.0;
    double Z_mu = 0.0;
    double integral_A = 0.0;
    double sup_A = 0.0;
    double refinement_change = 0.0;
    CostField field;
};

namespace detail {

inline TransportCost transport_cost_at(const AffineInterpolation& a, const GibbsSpec& g, int res, int s_steps,
                                       double z_mu, bool keep_field) {
    auto smp = sample_interpolation(a, s_steps);
    Grid grid(tube_box(smp), res);
    const double cut = g.potential.value(a.saddle) - g.epsilon * smp.omega2;
    TransportCost r;
    r.Z_mu = z_mu;
    if (keep_field) {
        r.field.grid = grid;
        r.field.A.assign(grid.size(), 0.0);
        r.field.weighted.assign(grid.size(), 0.0);
    }
    const double vol = grid.cell_volume();
    for (std::size_t k = 0; k < grid.size(); ++k) {
        Vec x = grid.point(k);
        double A = cost_density(smp, x);
        if (A == 0.0) continue;
        double hx = g.potential.value(x);
        double w = A * A * z_mu * std::exp(hx / g.epsilon);
        r.integral_A += A * vol;
        r.sup_A = std::max(r.sup_A, A);
        (hx >= cut ? r.saddle_part : r.complement_part) += w * vol;
        if (keep_field) {
            r.field.A[k] = A;
            r.field.weighted[k] = w;
        }
    }
    r.total = r.saddle_part + r.complement_part;
    return r;
}

}  // namespace detail

// T^2 = int A^2 / mu dx over the tube with the quadrature Z_mu.
inline TransportCost transport_cost(const AffineInterpolation& a, const GibbsSpec& g, int res = 0, int s_steps = 0,
                                    bool check_resolution = true, bool keep_field = false) {
    if (g.dim() > 2) throw Error("DimensionMismatch", "transport_cost supports dim <= 2");
    const int n = g.dim();
    if (res <= 0) res = n == 1 ? 4000 : 160;
    if (s_steps <= 0) s_steps = n == 1 ? 4000 : 1000;
    double z_mu = grid_partition_sum(g.potential, Grid(g.box, n == 1 ? 16384 : 512), g.epsilon);
    TransportCost r = detail::transport_cost_at(a, g, res, s_steps, z_mu, keep_field);
    if (check_resolution) {
        TransportCost c = detail::transport_cost_at(a, g, res / 2, s_steps / 2, z_mu, false);
        r.refinement_change = std::abs(r.total - c.total) / r.total;
        if (r.refinement_change > 5e-2) throw Error("QuadratureUnderResolved", "transport cost changes by more than 5% under refinement");
    }
    return r;
}

// Z_mu/(2 pi eps)^{n/2} * 2 pi eps sqrt|det Hess(s)|/|lambda^-| * exp(H(s)/eps), Laplace Z_mu.
inline double transport_bound(const GibbsSpec& g, int i, int j) {
    const auto& s = g.graph.saddle(i, j);
    return detail::saddle_factor(g, laplace_partition(g).Z_mu_laplace, s);
}

struct TildeResult {
    Mat tilde;
    double identity_residual = 0.0;
    double subdet = 0.0;            // det_{1,1}(Q^T tilde Q)
    bool positive_on_complement = false;
};

inline void require_unit(const Vec& eta) {
    if (std::abs(eta.norm() - 1.0) > 1e-12) throw Error("NotUnit", "eta must be a unit vector");
}

// A~ = A - (A eta)(A eta)^T / A[eta] and det A = A[eta] det_{1,1}(Q^T A~ Q).
inline TildeResult tilde_matrix_and_subdet(const Mat& A, const Vec& eta) {
    if (!is_spd(A)) throw Error("NotSPD", "tilde_matrix_and_subdet needs an SPD matrix");
    require_unit(eta);
    const Eigen::Index n = A.rows();
    Vec Ae = A * eta;
    double aeta = eta.dot(Ae);
    TildeResult r;
    r.tilde = A - Ae * Ae.transpose() / aeta;
    Mat Q = householder_completion(eta);
    Mat B = Q.transpose() * r.tilde * Q;
    if (n == 1) {
        r.subdet = 1.0;
        r.positive_on_complement = true;
    } else {
        Mat blk = B.bottomRightCorner(n - 1, n - 1);
        r.subdet = blk.determinant();
        r.positive_on_complement = jacobi_eigh(0.5 * (blk + blk.transpose())).values[0] > 0.0;
    }
    r.identity_residual = std::abs(A.determinant() - aeta * r.subdet);
    return r;
}

struct PartialGaussian {
    double closed_form = 0.0;
    double quadrature = 0.0;
};

// int_R exp(-1/2 SigmaInv[r eta + z]) dr = sqrt(2 pi / SigmaInv[eta]) exp(-1/2 SigmaInv~[z]).
inline PartialGaussian partial_gaussian(const Mat& Sinv, const Vec& eta, const Vec& z) {
    if (!is_spd(Sinv)) throw Error("NotSPD", "partial_gaussian needs an SPD matrix");
    require_unit(eta);
    if (std::abs(z.dot(eta)) > 1e-12 * std::max(1.0, z.norm())) throw Error("NotOrthogonal", "z must be orthogonal to eta");
    double a = eta.dot(Sinv * eta), b = eta.dot(Sinv * z), c = z.dot(Sinv * z);
    Vec Se = Sinv * eta;
    Mat tilde = Sinv - Se * Se.transpose() / a;
    PartialGaussian r;
    r.closed_form = std::sqrt(2.0 * pi / a) * std::exp(-0.5 * z.dot(tilde * z));
    double center = -b / a, width = 1.0 / std::sqrt(a);
    auto f = [&](double t) {
        double rr = center + t * width;
        return std::exp(-0.5 * (a * rr * rr + 2.0 * b * rr + c)) * width;
    };
    double err = 0.0;
    r.quadrature = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, -40.0, 40.0, 15, 1e-14, &err);
    return r;
}

struct MatrixOpt {
    double inf_value = 0.0;  // sqrt(det B)
    Mat argmin;
    double numeric_value = 0.0;
    Mat numeric_argmin;
    int iterations = 0;
};

// inf over SPD A with 2A > B of det A / sqrt(det(2A - B)).
inline MatrixOpt matrix_opt_value(const Mat& B, const Mat* start = nullptr) {
    if (!is_spd(B)) throw Error("NotSPD", "matrix_opt_value needs an SPD matrix");
    const Eigen::Index n = B.rows();
    MatrixOpt r;
    r.inf_value = std::sqrt(B.determinant());
    r.argmin = B;
    auto objective = [&](const Mat& A) {
        Mat C = 2.0 * A - B;
        if (!is_spd(A) || !is_spd(C)) return inf;
        return std::log(A.determinant()) - 0.5 * std::log(C.determinant());
    };
    Mat A = start ? *start : Mat(B + 0.3 * Mat::Identity(n, n) * B.trace() / static_cast<double>(n));
    double f = objective(A);
    if (!std::isfinite(f)) throw Error("NotSPD", "start point violates 2A > B");
    for (int it = 0; it < 10000; ++it) {
        // Riemannian gradient A G A with G = A^{-1} - (2A - B)^{-1}
        Mat C = 2.0 * A - B;
        Mat step = A - A * C.inverse() * A;
        step = 0.5 * (step + step.transpose());
        r.iterations = it + 1;
        if (step.norm() < 1e-13 * (1.0 + A.norm())) break;
        double t = 1.0;
        bool moved = false;
        for (int k = 0; k < 60; ++k) {
            Mat trial = A - t * step;
            double ft = objective(trial);
            if (ft < f) {
                A = trial;
                f = ft;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if (!moved) break;
    }
    r.numeric_argmin = A;
    r.numeric_value = std::exp(f);
    return r;
}

// max over samples of |d/dt log|det Phi_t| - tr(Phi_t^{-1} Phi_dot_t)|, both derivatives by central FD.
inline double jacobi_formula_check(const std::function<Mat(double)>& phi, double t0, double t1, int samples = 50,
                                   double h = 1e-5) {
    double worst = 0.0;
    double prev_sign = 0.0;
    for (int k = 0; k <= samples; ++k) {
        double t = t0 + (t1 - t0) * k / samples;
        Mat P = phi(t);
        double det = P.determinant();
        double sign = det > 0 ? 1.0 : -1.0;
        if (std::abs(det) < 1e-12 || (prev_sign != 0.0 && sign != prev_sign))
            throw Error("Singular", "matrix path is not invertible on the interval");
        prev_sign = sign;
        Mat Pp = phi(t + h), Pm = phi(t - h);
        double dp = Pp.determinant(), dm = Pm.determinant();
        if (dp * det <= 0 || dm * det <= 0) throw Error("Singular", "matrix path is not invertible on the interval");
        double lhs = (std::log(std::abs(dp)) - std::log(std::abs(dm))) / (2.0 * h);
        Mat Pdot = (Pp - Pm) / (2.0 * h);
        double rhs = P.lu().solve(Pdot).trace();
        worst = std::max(worst, std::abs(lhs - rhs));
    }
    return worst;
}

// Gaussian-profile bound P_tau exp(-Sigma~^{-1}[z]/(2 eps)) at the nearest path point.
struct PointwiseBound {
    double tau = 0.0;
    double value = 0.0;
    double prefactor = 0.0;
    Vec z;
};

inline PointwiseBound pointwise_bound(const AffineInterpolation& a, const Vec& x, int samples = 4000) {
    PointwiseBound r;
    double best = inf;
    for (int k = 0; k <= samples; ++k) {
        double s = a.T * k / samples;
        double d = (x - a.gamma(s)).squaredNorm();
        if (d < best) best = d, r.tau = s;
    }
    // refine by golden section on the squared distance
    double lo = std::max(0.0, r.tau - a.T / samples), hi = std::min(a.T, r.tau + a.T / samples);
    for (int it = 0; it < 60; ++it) {
        double m1 = lo + 0.382 * (hi - lo), m2 = lo + 0.618 * (hi - lo);
        if ((x - a.gamma(m1)).squaredNorm() < (x - a.gamma(m2)).squaredNorm())
            hi = m2;
        else
            lo = m1;
    }
    r.tau = 0.5 * (lo + hi);
    Vec eta = a.gamma_dot(r.tau);
    eta.normalize();
    Mat S = a.Sigma(r.tau);
    Mat Sinv = S.inverse();
    r.z = x - a.gamma(r.tau);
    r.z -= r.z.dot(eta) * eta;
    const int n = a.dim;
    TildeResult t = tilde_matrix_and_subdet(Sinv, eta);
    r.prefactor = std::pow(2.0 * pi * a.epsilon, -0.5 * (n - 1)) * std::sqrt(t.subdet);
    r.value = r.prefactor * std::exp(-r.z.dot(t.tilde * r.z) / (2.0 * a.epsilon));
    return r;
}

}  // namespace ekm
