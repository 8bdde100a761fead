#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ekm {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double pi = std::numbers::pi;
inline constexpr double inf = std::numeric_limits<double>::infinity();

// All library failures carry a stable kind string (e.g. "SyntaxError").
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& what)
        : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}
    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

struct Box {
    Vec lo, hi;

    std::size_t dim() const { return static_cast<std::size_t>(lo.size()); }
    bool contains(const Vec& x, double margin = 0.0) const {
        for (Eigen::Index k = 0; k < lo.size(); ++k)
            if (x[k] < lo[k] - margin || x[k] > hi[k] + margin) return false;
        return true;
    }
    Box enlarged(double factor) const {
        Vec c = 0.5 * (lo + hi), r = 0.5 * (hi - lo) * factor;
        return {c - r, c + r};
    }
    static Box cube(std::size_t n, double a, double b) {
        return {Vec::Constant(static_cast<Eigen::Index>(n), a),
                Vec::Constant(static_cast<Eigen::Index>(n), b)};
    }
};

struct Eigh {
    Vec values;   // ascending
    Mat vectors;  // columns, orthonormal
};

// Cyclic Jacobi rotations for symmetric matrices.
inline Eigh jacobi_eigh(Mat a, double tol = 1e-12, int max_sweeps = 100) {
    const Eigen::Index n = a.rows();
    if (a.cols() != n) throw Error("DimensionMismatch", "jacobi_eigh needs a square matrix");
    Mat v = Mat::Identity(n, n);
    const double scale = std::max(1.0, a.norm());
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (std::sqrt(off) <= tol * scale) break;
        for (Eigen::Index p = 0; p < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                if (a(p, q) == 0.0) continue;
                double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (Eigen::Index k = 0; k < n; ++k) {
                    double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    for (Eigen::Index k = 0; k < n; ++k) idx[static_cast<std::size_t>(k)] = k;
    std::sort(idx.begin(), idx.end(), [&](auto i, auto j) { return a(i, i) < a(j, j); });
    Eigh out{Vec(n), Mat(n, n)};
    for (Eigen::Index k = 0; k < n; ++k) {
        auto src = idx[static_cast<std::size_t>(k)];
        out.values[k] = a(src, src);
        Vec col = v.col(src);
        // deterministic sign: largest-magnitude entry positive
        Eigen::Index imax = 0;
        col.cwiseAbs().maxCoeff(&imax);
        if (col[imax] < 0) col = -col;
        out.vectors.col(k) = col;
    }
    return out;
}

inline Mat spd_sqrt(const Mat& a) {
    auto e = jacobi_eigh(a);
    for (Eigen::Index k = 0; k < e.values.size(); ++k) {
        if (e.values[k] <= 0) throw Error("NotSPD", "matrix square root of non-SPD matrix");
        e.values[k] = std::sqrt(e.values[k]);
    }
    return e.vectors * e.values.asDiagonal() * e.vectors.transpose();
}

inline bool is_spd(const Mat& a) {
    if (a.rows() != a.cols() || (a - a.transpose()).norm() > 1e-12 * (1.0 + a.norm())) return false;
    return jacobi_eigh(a).values[0] > 0.0;
}

// Orthogonal matrix whose first column is the unit vector eta (Householder).
inline Mat householder_completion(const Vec& eta) {
    const Eigen::Index n = eta.size();
    Vec e1 = Vec::Zero(n);
    e1[0] = 1.0;
    Vec v = eta - e1;
    if (v.norm() < 1e-14) return Mat::Identity(n, n);
    v.normalize();
    return Mat::Identity(n, n) - 2.0 * v * v.transpose();
}

// Regularized upper incomplete gamma Q(a,x) = Gamma(a,x)/Gamma(a).
inline double gamma_q(double a, double x) {
    if (x <= 0.0) return 1.0;
    const double lg = std::lgamma(a);
    if (x < a + 1.0) {
        double sum = 1.0 / a, term = sum, ap = a;
        for (int k = 0; k < 1000; ++k) {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if (std::abs(term) < std::abs(sum) * 1e-16) break;
        }
        return 1.0 - sum * std::exp(-x + a * std::log(x) - lg);
    }
    const double tiny = 1e-300;
    double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
    for (int k = 1; k < 1000; ++k) {
        double an = -k * (k - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-16) break;
    }
    return std::exp(-x + a * std::log(x) - lg) * h;
}

inline double log_sum_exp(const std::vector<double>& v) {
    double m = -inf;
    for (double x : v) m = std::max(m, x);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

}  // namespace ekm

namespace ekm {

// Midpoint tensor grid with res cells per axis (dim <= 3).
struct Grid {
    Box box;
    int res = 0;

    Grid() = default;
    Grid(Box b, int r) : box(std::move(b)), res(r) {
        if (r < 2) throw Error("GridTooCoarse", "grid resolution must be at least 2");
    }
    int dim() const { return static_cast<int>(box.dim()); }
    std::size_t size() const {
        std::size_t s = 1;
        for (int k = 0; k < dim(); ++k) s *= static_cast<std::size_t>(res);
        return s;
    }
    double h(int axis) const { return (box.hi[axis] - box.lo[axis]) / res; }
    double cell_volume() const {
        double v = 1.0;
        for (int k = 0; k < dim(); ++k) v *= h(k);
        return v;
    }
    // multi-index of flat index, axis 0 fastest
    std::vector<int> multi(std::size_t flat) const {
        std::vector<int> m(static_cast<std::size_t>(dim()));
        for (int k = 0; k < dim(); ++k) {
            m[static_cast<std::size_t>(k)] = static_cast<int>(flat % static_cast<std::size_t>(res));
            flat /= static_cast<std::size_t>(res);
        }
        return m;
    }
    std::size_t flat(const std::vector<int>& m) const {
        std::size_t f = 0;
        for (int k = dim() - 1; k >= 0; --k) f = f * static_cast<std::size_t>(res) + static_cast<std::size_t>(m[static_cast<std::size_t>(k)]);
        return f;
    }
    Vec point(std::size_t flat_index) const {
        auto m = multi(flat_index);
        Vec x(dim());
        for (int k = 0; k < dim(); ++k) x[k] = box.lo[k] + (m[static_cast<std::size_t>(k)] + 0.5) * h(k);
        return x;
    }
    std::size_t nearest(const Vec& x) const {
        std::vector<int> m(static_cast<std::size_t>(dim()));
        for (int k = 0; k < dim(); ++k) {
            int i = static_cast<int>(std::floor((x[k] - box.lo[k]) / h(k)));
            m[static_cast<std::size_t>(k)] = std::clamp(i, 0, res - 1);
        }
        return flat(m);
    }
};

}  // namespace ekm
