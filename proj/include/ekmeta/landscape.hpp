#pragma once

#include "common.hpp"
#include "expr.hpp"

#include <concepts>
#include <functional>
#include <map>
#include <optional>
#include <queue>

namespace ekm {

template <class F>
concept Field = requires(const F& f, const Vec& x) {
    { f.dim() } -> std::convertible_to<int>;
    { f.value(x) } -> std::convertible_to<double>;
    { f.jet(x) } -> std::same_as<Jet2>;
};

struct CriticalPoint {
    Vec location;
    double energy = 0.0;
    Vec hessian_eigenvalues;
    Mat hessian_eigenvectors;
    int morse_index = 0;

    double det_hessian() const { return hessian_eigenvalues.prod(); }
    double lambda_minus() const { return hessian_eigenvalues[0]; }
    Vec unstable_direction() const { return hessian_eigenvectors.col(0); }
};

struct Tolerances {
    double newton = 1e-10;
    double degenerate = 1e-8;
    double merge = 1e-6;
    int newton_iterations = 100;
};

template <Field F>
std::optional<Vec> newton_critical(const F& f, Vec x, const Box& box, const Tolerances& tol = {}) {
    Box outer = box.enlarged(1.5);
    bool converged = false;
    for (int it = 0; it < tol.newton_iterations; ++it) {
        Jet2 j;
        try {
            j = f.jet(x);
        } catch (const Error&) {
            return std::nullopt;
        }
        double g = j.gradient.norm();
        if (g == 0.0) {
            converged = true;
            break;
        }
        if (g <= tol.newton * (1.0 + j.hessian.norm())) converged = true;
        Vec step = j.hessian.completeOrthogonalDecomposition().solve(-j.gradient);
        if (!step.allFinite()) return std::nullopt;
        if (converged && step.norm() <= 1e-15 * (1.0 + x.norm())) break;
        double t = 1.0;
        Vec trial = x + step;
        for (int k = 0; k < 20; ++k) {
            try {
                if (f.jet(trial).gradient.norm() <= g || converged) break;
            } catch (const Error&) {
            }
            t *= 0.5;
            trial = x + t * step;
        }
        x = trial;
        if (!outer.contains(x)) return std::nullopt;
    }
    if (!converged) {
        Jet2 j = f.jet(x);
        if (j.gradient.norm() > tol.newton * (1.0 + j.hessian.norm())) return std::nullopt;
    }
    return x;
}

template <Field F>
CriticalPoint classify(const F& f, const Vec& x, const Tolerances& tol = {}) {
    Jet2 j = f.jet(x);
    Eigh e = jacobi_eigh(j.hessian);
    for (Eigen::Index k = 0; k < e.values.size(); ++k)
        if (std::abs(e.values[k]) < tol.degenerate)
            throw Error("DegenerateCriticalPoint", "Hessian eigenvalue near zero at a critical point");
    int idx = 0;
    for (Eigen::Index k = 0; k < e.values.size(); ++k) idx += e.values[k] < 0 ? 1 : 0;
    return {x, j.value, e.values, e.vectors, idx};
}

inline bool lex_less(const Vec& a, const Vec& b) {
    for (Eigen::Index k = 0; k < a.size(); ++k) {
        if (a[k] < b[k] - 1e-12) return true;
        if (a[k] > b[k] + 1e-12) return false;
    }
    return false;
}

template <Field F>
std::vector<Vec> default_seeds(const F& f, const Box& box) {
    const int n = f.dim();
    if (n > 3) throw Error("DimensionMismatch", "automatic seeding supports dim <= 3; pass explicit seeds");
    const int res = n == 1 ? 401 : (n == 2 ? 81 : 25);
    Grid g(box, res);
    std::vector<double> r(g.size(), inf);
    for (std::size_t k = 0; k < g.size(); ++k) {
        try {
            r[k] = f.jet(g.point(k)).gradient.squaredNorm();
        } catch (const Error&) {
        }
    }
    std::vector<Vec> seeds;
    for (std::size_t k = 0; k < g.size(); ++k) {
        if (!std::isfinite(r[k])) continue;
        auto m = g.multi(k);
        bool is_min = true;
        // compare with all neighbors in the 3^n stencil
        int total = 1;
        for (int d = 0; d < n; ++d) total *= 3;
        for (int c = 0; c < total && is_min; ++c) {
            int cc = c;
            auto mm = m;
            bool self = true, inside = true;
            for (int d = 0; d < n; ++d) {
                int off = cc % 3 - 1;
                cc /= 3;
                if (off != 0) self = false;
                mm[static_cast<std::size_t>(d)] += off;
                if (mm[static_cast<std::size_t>(d)] < 0 || mm[static_cast<std::size_t>(d)] >= res) inside = false;
            }
            if (self || !inside) continue;
            if (r[g.flat(mm)] < r[k]) is_min = false;
        }
        if (is_min) seeds.push_back(g.point(k));
    }
    return seeds;
}

template <Field F>
std::vector<CriticalPoint> find_critical_points(const F& f, const Box& box, std::vector<Vec> seeds = {},
                                                const Tolerances& tol = {}) {
    if (box.dim() != static_cast<std::size_t>(f.dim())) throw Error("DimensionMismatch", "box dimension");
    for (int k = 0; k < f.dim(); ++k)
        if (!(box.hi[k] > box.lo[k])) throw Error("DimensionMismatch", "box must have positive volume");
    if (seeds.empty()) seeds = default_seeds(f, box);
    std::vector<Vec> found;
    for (const Vec& s : seeds) {
        auto x = newton_critical(f, s, box, tol);
        if (!x || !box.contains(*x, 1e-9)) continue;
        bool dup = false;
        for (const Vec& y : found)
            if ((y - *x).norm() < tol.merge) dup = true;
        if (!dup) found.push_back(*x);
    }
    if (found.empty()) throw Error("NoConvergence", "Newton failed from all seeds");
    std::sort(found.begin(), found.end(), lex_less);
    std::vector<CriticalPoint> out;
    for (const Vec& x : found) out.push_back(classify(f, x, tol));
    return out;
}

inline std::vector<CriticalPoint> minima_of(const std::vector<CriticalPoint>& cps) {
    std::vector<CriticalPoint> m;
    for (const auto& c : cps)
        if (c.morse_index == 0) m.push_back(c);
    return m;
}

namespace detail {

inline std::vector<std::size_t> stencil(const Grid& g, std::size_t k) {
    std::vector<std::size_t> out;
    auto m = g.multi(k);
    const int n = g.dim();
    int total = 1;
    for (int d = 0; d < n; ++d) total *= 3;
    for (int c = 0; c < total; ++c) {
        int cc = c;
        auto mm = m;
        bool self = true, inside = true;
        for (int d = 0; d < n; ++d) {
            int off = cc % 3 - 1;
            cc /= 3;
            if (off != 0) self = false;
            mm[static_cast<std::size_t>(d)] += off;
            if (mm[static_cast<std::size_t>(d)] < 0 || mm[static_cast<std::size_t>(d)] >= g.res) inside = false;
        }
        if (!self && inside) out.push_back(g.flat(mm));
    }
    return out;
}

}  // namespace detail

// Gradient-flow basin assignment with adaptive RK4.
template <Field F>
class BasinFlow {
public:
    BasinFlow(const F& f, std::vector<CriticalPoint> cps, Box box) : f_(f), cps_(std::move(cps)), box_(std::move(box)) {
        for (std::size_t k = 0; k < cps_.size(); ++k)
            if (cps_[k].morse_index == 0) min_idx_.push_back(k);
        if (min_idx_.empty()) throw Error("DimensionMismatch", "no minima supplied");
        level_ = inf;
        for (const auto& c : cps_)
            if (c.morse_index > 0) level_ = std::min(level_, c.energy);
    }

    // Index into the minima list.
    // shortcut(x) may return a known label for x, or -1
    int operator()(Vec x, const std::function<int(const Vec&)>& shortcut = {}) const {
        Box outer = box_.enlarged(2.0);
        double dt = 1e-2;
        for (int perturb = 0; perturb < 8; ++perturb) {
            for (int it = 0; it < 200000; ++it) {
                if (int c = captured(x); c >= 0) return c;
                if (shortcut && it > 0)
                    if (int c = shortcut(x); c >= 0) return c;
                Jet2 jx = f_.jet(x);
                const Vec& g = jx.gradient;
                if (g.norm() < 1e-8) break;
                // RK4 stability limit on the linearized flow
                dt = std::min(dt, 2.0 / std::max(1.0, jx.hessian.norm()));
                Vec k1 = -g;
                Vec k2 = -f_.jet(x + 0.5 * dt * k1).gradient;
                Vec k3 = -f_.jet(x + 0.5 * dt * k2).gradient;
                Vec k4 = -f_.jet(x + dt * k3).gradient;
                Vec full = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
                // step-doubling error estimate via two Euler half steps vs full Euler step
                Vec half = x + 0.5 * dt * k1;
                Vec two = half - 0.5 * dt * f_.jet(half).gradient;
                Vec one = x + dt * k1;
                double err = (two - one).norm();
                if (err > 1e-3 && dt > 1e-8) {
                    dt *= 0.5;
                    continue;
                }
                x = full;
                if (err < 1e-5) dt = std::min(dt * 1.5, 1.0);
                if (!outer.contains(x)) throw Error("FlowDiverged", "gradient flow left the enlarged box");
            }
            // snap to the nearest critical point
            std::size_t best = 0;
            double bd = inf;
            for (std::size_t k = 0; k < cps_.size(); ++k) {
                double d = (cps_[k].location - x).norm();
                if (d < bd) bd = d, best = k;
            }
            if (bd > 1e-3) throw Error("NoConvergence", "flow terminated away from known critical points");
            const auto& c = cps_[best];
            if (c.morse_index == 0) return minimum_slot(best);
            x = c.location + 1e-6 * c.unstable_direction();
        }
        throw Error("StagnatedAtSaddle", "flow repeatedly stagnated at a saddle");
    }

    std::size_t minimum_count() const { return min_idx_.size(); }

private:
    const F& f_;
    std::vector<CriticalPoint> cps_;
    std::vector<std::size_t> min_idx_;
    Box box_;
    double level_;

    int minimum_slot(std::size_t cp) const {
        for (std::size_t i = 0; i < min_idx_.size(); ++i)
            if (min_idx_[i] == cp) return static_cast<int>(i);
        return -1;
    }

    // Below every non-minimum critical value, the sublevel component is flow invariant.
    int captured(const Vec& x) const {
        double hx = f_.value(x);
        if (!(hx < level_)) return -1;
        std::vector<std::size_t> order(min_idx_.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return (cps_[min_idx_[a]].location - x).norm() < (cps_[min_idx_[b]].location - x).norm();
        });
        for (std::size_t i : order) {
            const Vec& m = cps_[min_idx_[i]].location;
            if ((x - m).norm() < 1e-3) return static_cast<int>(i);
            bool ok = true;
            for (int s = 1; s <= 128 && ok; ++s) {
                double t = s / 128.0;
                if (!(f_.value(x + t * (m - x)) < level_)) ok = false;
            }
            if (ok) return static_cast<int>(i);
        }
        return -1;
    }
};

template <Field F>
int assign_basin(const F& f, const Vec& x, const std::vector<CriticalPoint>& cps, const Box& box) {
    return BasinFlow<F>(f, cps, box)(x);
}

struct BasinLabels {
    Grid grid;
    std::vector<int> label;
    double ambiguous_fraction = 0.0;  // cells touching a label change
};

template <Field F>
BasinLabels label_grid(const F& f, const std::vector<CriticalPoint>& cps, const Grid& grid) {
    BasinFlow<F> flow(f, cps, grid.box);
    BasinLabels out{grid, std::vector<int>(grid.size(), -1), 0.0};
    // Nodes in increasing energy; a descending trajectory that enters a cell whose whole stencil
    // already carries one label inherits it.
    std::vector<double> h(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) h[k] = f.value(grid.point(k));
    std::vector<std::size_t> order(grid.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return h[a] < h[b]; });
    auto interior_label = [&](const Vec& x) -> int {
        for (int d = 0; d < grid.dim(); ++d)
            if (x[d] < grid.box.lo[d] || x[d] > grid.box.hi[d]) return -1;
        std::size_t c = grid.nearest(x);
        int l = out.label[c];
        if (l < 0) return -1;
        for (std::size_t q : detail::stencil(grid, c))
            if (out.label[q] != l) return -1;
        return l;
    };
    std::function<int(const Vec&)> sc = interior_label;
    for (std::size_t k : order) out.label[k] = flow(grid.point(k), sc);
    std::size_t amb = 0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        auto m = grid.multi(k);
        bool diff = false;
        for (int d = 0; d < grid.dim() && !diff; ++d) {
            auto mm = m;
            if (++mm[static_cast<std::size_t>(d)] >= grid.res) continue;
            if (out.label[grid.flat(mm)] != out.label[k]) diff = true;
        }
        amb += diff ? 1 : 0;
    }
    out.ambiguous_fraction = static_cast<double>(amb) / static_cast<double>(grid.size());
    return out;
}

struct SaddleEdge {
    int saddle = -1;  // index into LandscapeGraph::saddles
    double height = 0.0;
};

struct LandscapeGraph {
    std::vector<CriticalPoint> minima;  // ordered: m_1 global minimum, m_2 dominant partner
    std::vector<CriticalPoint> saddles;
    std::map<std::pair<int, int>, SaddleEdge> edges;  // keys with i < j, indices into minima
    double delta_gap = inf;
    bool non_degeneracy_violation = false;
    bool non_unique_saddle = false;
    std::vector<std::string> warnings;

    const SaddleEdge& edge(int i, int j) const {
        auto it = edges.find({std::min(i, j), std::max(i, j)});
        if (it == edges.end()) throw Error("MissingSaddle", "no communicating saddle for the pair");
        return it->second;
    }
    const CriticalPoint& saddle(int i, int j) const { return saddles[static_cast<std::size_t>(edge(i, j).saddle)]; }
    double height(int i, int j) const { return edge(i, j).height; }
};

namespace detail {

// Bottleneck (minimax) path between two nodes on the grid graph.
inline std::vector<std::size_t> minimax_path(const Grid& g, const std::vector<double>& h,
                                             const std::vector<std::vector<std::size_t>>& nbr, std::size_t src,
                                             std::size_t dst) {
    std::vector<double> best(g.size(), inf);
    std::vector<std::size_t> prev(g.size(), static_cast<std::size_t>(-1));
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    best[src] = h[src];
    pq.push({h[src], src});
    while (!pq.empty()) {
        auto [c, k] = pq.top();
        pq.pop();
        if (c > best[k]) continue;
        if (k == dst) break;
        for (std::size_t q : nbr[k]) {
            double nc = std::max(c, h[q]);
            if (nc < best[q]) {
                best[q] = nc;
                prev[q] = k;
                pq.push({nc, q});
            }
        }
    }
    std::vector<std::size_t> path;
    for (std::size_t k = dst; k != static_cast<std::size_t>(-1); k = prev[k]) path.push_back(k);
    std::reverse(path.begin(), path.end());
    return path;
}

}  // namespace detail

// Orders minima: global minimum first, then by decreasing H(s_{1,i}) - H(m_i).
inline void order_minima(LandscapeGraph& g) {
    const int m = static_cast<int>(g.minima.size());
    int first = 0;
    for (int i = 1; i < m; ++i) {
        double ei = g.minima[static_cast<std::size_t>(i)].energy, ef = g.minima[static_cast<std::size_t>(first)].energy;
        if (ei < ef - 1e-9) first = i;
    }
    std::vector<int> rest;
    for (int i = 0; i < m; ++i)
        if (i != first) rest.push_back(i);
    auto depth = [&](int i) { return g.height(first, i) - g.minima[static_cast<std::size_t>(i)].energy; };
    std::stable_sort(rest.begin(), rest.end(), [&](int a, int b) { return depth(a) > depth(b) + 1e-12; });
    std::vector<int> order{first};
    order.insert(order.end(), rest.begin(), rest.end());
    if (rest.size() >= 2) {
        g.delta_gap = depth(rest[0]) - depth(rest[1]);
        g.non_degeneracy_violation = !(g.delta_gap > 0.0);
    } else {
        g.delta_gap = inf;
        g.non_degeneracy_violation = false;
    }
    std::vector<CriticalPoint> mins;
    for (int i : order) mins.push_back(g.minima[static_cast<std::size_t>(i)]);
    std::map<std::pair<int, int>, SaddleEdge> edges;
    for (int a = 0; a < m; ++a)
        for (int b = a + 1; b < m; ++b) edges[{a, b}] = g.edge(order[static_cast<std::size_t>(a)], order[static_cast<std::size_t>(b)]);
    g.minima = std::move(mins);
    g.edges = std::move(edges);
}

template <Field F>
LandscapeGraph saddle_graph(const F& f, const std::vector<CriticalPoint>& cps, const Box& box, int grid_resolution,
                            const Tolerances& tol = {}) {
    const int n = f.dim();
    LandscapeGraph out;
    out.minima = minima_of(cps);
    if (out.minima.size() < 2) throw Error("NotTwoWells", "saddle_graph needs at least two minima");
    if (n > 2) {
        // unambiguous case only: two minima and a single index-one point
        std::vector<CriticalPoint> ones;
        for (const auto& c : cps)
            if (c.morse_index == 1) ones.push_back(c);
        if (out.minima.size() != 2 || ones.size() != 1)
            throw Error("DimensionMismatch", "grid minimax supports dim <= 2; supply saddle assignments");
        out.saddles = ones;
        out.edges[{0, 1}] = {0, ones[0].energy};
        out.warnings.push_back("saddle assigned without minimax search (dim > 2)");
        order_minima(out);
        return out;
    }
    Grid g(box, grid_resolution);
    std::vector<double> h(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) h[k] = f.value(g.point(k));
    std::vector<std::vector<std::size_t>> nbr(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) nbr[k] = detail::stencil(g, k);

    const int m = static_cast<int>(out.minima.size());
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) {
            auto path = detail::minimax_path(g, h, nbr, g.nearest(out.minima[static_cast<std::size_t>(i)].location),
                                             g.nearest(out.minima[static_cast<std::size_t>(j)].location));
            std::size_t arg = path.front();
            for (std::size_t k : path)
                if (h[k] > h[arg]) arg = k;
            auto x = newton_critical(f, g.point(arg), box, tol);
            if (!x) throw Error("SaddleRefinementFailed", "Newton refinement of the minimax point failed");
            CriticalPoint s = classify(f, *x, tol);
            if (s.morse_index != 1) throw Error("SaddleRefinementFailed", "refined minimax point is not index one");
            int sid = -1;
            for (std::size_t q = 0; q < out.saddles.size(); ++q)
                if ((out.saddles[q].location - s.location).norm() < tol.merge) sid = static_cast<int>(q);
            if (sid < 0) {
                out.saddles.push_back(s);
                sid = static_cast<int>(out.saddles.size()) - 1;
            }
            // other index-one points at the same height lying on the path
            int twins = 0;
            for (const auto& c : cps) {
                if (c.morse_index != 1 || std::abs(c.energy - s.energy) > 1e-9) continue;
                for (std::size_t k : path)
                    if ((g.point(k) - c.location).norm() < 2.0 * g.h(0) * std::sqrt(double(n))) {
                        ++twins;
                        break;
                    }
            }
            if (twins > 1) {
                out.non_unique_saddle = true;
                out.warnings.push_back("NonUniqueSaddle between minima " + std::to_string(i) + " and " + std::to_string(j));
            }
            out.edges[{i, j}] = {sid, s.energy};
        }
    order_minima(out);
    return out;
}

struct AssumptionReport {
    double C_H_A1_PI = 0.0, K_H_A2_PI = 0.0, C_H_A1_LSI = 0.0, K_H_A2_LSI = 0.0;
    bool A1_PI = false, A2_PI = false, A1_LSI = false, A2_LSI = false;
    std::string evidence = "boundary-shell evidence";
};

// Necessary-condition checks on the annulus between box and 3x box.
template <Field F>
AssumptionReport check_assumptions(const F& f, const Box& box) {
    const int n = f.dim();
    AssumptionReport r;
    double min_grad = inf, min_pi = inf, min_lsi = inf, min_hess = inf;
    Vec c = 0.5 * (box.lo + box.hi);
    auto visit = [&](const Vec& x, bool shell) {
        Jet2 j;
        try {
            j = f.jet(x);
        } catch (const Error&) {
            return;
        }
        double lam = jacobi_eigh(j.hessian).values[0];
        min_hess = std::min(min_hess, lam);
        if (!shell) return;
        double gn = j.gradient.norm(), lap = j.hessian.trace();
        min_grad = std::min(min_grad, gn);
        min_pi = std::min(min_pi, gn * gn - lap);
        min_lsi = std::min(min_lsi, (gn * gn - lap) / std::max(x.squaredNorm(), 1e-300));
    };
    const int res = n == 1 ? 4000 : (n == 2 ? 240 : 40);
    Grid outer(box.enlarged(3.0), res);
    for (std::size_t k = 0; k < outer.size(); ++k) {
        Vec x = outer.point(k);
        visit(x, !box.contains(x));
    }
    Grid inner(box, n == 1 ? 2000 : (n == 2 ? 120 : 24));
    for (std::size_t k = 0; k < inner.size(); ++k) visit(inner.point(k), false);
    (void)c;
    r.C_H_A1_PI = min_grad;
    r.A1_PI = std::isfinite(min_grad) && min_grad > 1e-2;
    r.K_H_A2_PI = std::max(0.0, -min_pi);
    r.A2_PI = std::isfinite(min_pi);
    r.C_H_A1_LSI = min_lsi;
    r.A1_LSI = std::isfinite(min_lsi) && min_lsi > 0.0;
    r.K_H_A2_LSI = std::max(0.0, -min_hess);
    r.A2_LSI = std::isfinite(min_hess);
    return r;
}

}  // namespace ekm
