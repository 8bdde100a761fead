#pragma once

#include "common.hpp"
#include "discrete.hpp"
#include "ek.hpp"
#include "means.hpp"
#include "measures.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <boost/math/special_functions/erf.hpp>

#include <cstdint>

namespace ekm {

// Weighted graph Laplacian K (Dirichlet form eps*int|grad f|^2 dmu) and mass M on the active grid nodes.
struct GeneratorMatrix {
    Grid grid;
    std::vector<std::size_t> nodes;  // active grid indices
    Eigen::SparseMatrix<double> dirichlet_form_matrix;
    Vec mass_vector;
};

inline GeneratorMatrix assemble_generator(const Potential& p, double eps, const Grid& grid) {
    const std::size_t N = grid.size();
    std::vector<double> h(N);
    double hmin = inf;
    for (std::size_t k = 0; k < N; ++k) {
        h[k] = p.value(grid.point(k));
        hmin = std::min(hmin, h[k]);
    }
    GeneratorMatrix g;
    g.grid = grid;
    std::vector<long> slot(N, -1);
    for (std::size_t k = 0; k < N; ++k)
        if ((h[k] - hmin) / eps < 700.0) {
            slot[k] = static_cast<long>(g.nodes.size());
            g.nodes.push_back(k);
        }
    const auto n = static_cast<Eigen::Index>(g.nodes.size());
    const double vol = grid.cell_volume();
    g.mass_vector.resize(n);
    std::vector<Eigen::Triplet<double>> trip;
    Vec diag = Vec::Zero(n);
    for (Eigen::Index a = 0; a < n; ++a) {
        std::size_t k = g.nodes[static_cast<std::size_t>(a)];
        g.mass_vector[a] = std::exp(-(h[k] - hmin) / eps) * vol;
        auto m = grid.multi(k);
        for (int d = 0; d < grid.dim(); ++d) {
            auto mm = m;
            if (++mm[static_cast<std::size_t>(d)] >= grid.res) continue;
            std::size_t q = grid.flat(mm);
            if (slot[q] < 0) continue;
            double hd = grid.h(d);
            double c = eps * std::exp(-(0.5 * (h[k] + h[q]) - hmin) / eps) * vol / (hd * hd);
            Eigen::Index b = slot[q];
            trip.emplace_back(a, b, -c);
            trip.emplace_back(b, a, -c);
            diag[a] += c;
            diag[b] += c;
        }
    }
    for (Eigen::Index a = 0; a < n; ++a) trip.emplace_back(a, a, diag[a]);
    g.dirichlet_form_matrix.resize(n, n);
    g.dirichlet_form_matrix.setFromTriplets(trip.begin(), trip.end());
    return g;
}

struct FDGap {
    double gap = 0.0;  // smallest nonzero eigenvalue of -L
    Vec eigenvector;   // on active nodes, M-normalized, M-mean zero
    int iterations = 0;
    double residual = 0.0;
    double refinement_ratio = 1.0;
};

inline FDGap fd_gap_of(const GeneratorMatrix& g, double tol = 1e-10, int max_iter = 2000) {
    const auto n = static_cast<Eigen::Index>(g.nodes.size());
    if (n < 3) throw Error("GridTooCoarse", "too few active nodes");
    const Vec& M = g.mass_vector;
    const double mtot = M.sum();
    Eigen::Index ground = 0;
    M.maxCoeff(&ground);
    // grounded Laplacian: drop row/column `ground`
    std::vector<Eigen::Index> map(static_cast<std::size_t>(n), -1);
    Eigen::Index r = 0;
    for (Eigen::Index a = 0; a < n; ++a)
        if (a != ground) map[static_cast<std::size_t>(a)] = r++;
    std::vector<Eigen::Triplet<double>> trip;
    for (int k = 0; k < g.dirichlet_form_matrix.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(g.dirichlet_form_matrix, k); it; ++it) {
            auto a = map[static_cast<std::size_t>(it.row())], b = map[static_cast<std::size_t>(it.col())];
            if (a >= 0 && b >= 0) trip.emplace_back(a, b, it.value());
        }
    Eigen::SparseMatrix<double> Kg(n - 1, n - 1);
    Kg.setFromTriplets(trip.begin(), trip.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(Kg);
    if (solver.info() != Eigen::Success) throw Error("EigensolveFailed", "factorization of the grounded Laplacian failed");

    auto project = [&](Vec& v) { v.array() -= M.dot(v) / mtot; };
    auto mnorm = [&](const Vec& v) { return std::sqrt(v.dot(M.cwiseProduct(v))); };
    Vec v(n);
    for (Eigen::Index a = 0; a < n; ++a) v[a] = std::sin(1.0 + 0.37 * static_cast<double>(a)) + 1e-3 * a / double(n);
    // start from a coordinate-like profile to overlap with the slow mode
    for (Eigen::Index a = 0; a < n; ++a) v[a] += g.grid.point(g.nodes[static_cast<std::size_t>(a)])[0];
    project(v);
    v /= mnorm(v);
    FDGap out;
    double lam_old = inf;
    for (int it = 0; it < max_iter; ++it) {
        Vec rhs = M.cwiseProduct(v);
        Vec rr(n - 1);
        for (Eigen::Index a = 0; a < n; ++a)
            if (a != ground) rr[map[static_cast<std::size_t>(a)]] = rhs[a];
        Vec y = solver.solve(rr);
        Vec w(n);
        for (Eigen::Index a = 0; a < n; ++a) w[a] = a == ground ? 0.0 : y[map[static_cast<std::size_t>(a)]];
        project(w);
        double nm = mnorm(w);
        if (!(nm > 0.0) || !std::isfinite(nm)) throw Error("EigensolveFailed", "inverse iteration broke down");
        v = w / nm;
        double lam = v.dot(g.dirichlet_form_matrix * v);
        out.iterations = it + 1;
        if (std::abs(lam - lam_old) <= tol * std::abs(lam)) {
            lam_old = lam;
            break;
        }
        lam_old = lam;
    }
    out.gap = lam_old;
    out.eigenvector = v;
    Vec res = g.dirichlet_form_matrix * v - out.gap * M.cwiseProduct(v);
    out.residual = res.norm() / std::max(1e-300, (M.cwiseProduct(v)).norm() * out.gap);
    return out;
}

inline FDGap fd_spectral_gap(const Potential& p, double eps, const Box& box, int res, bool check_refinement = false) {
    if (p.dim() > 2) throw Error("DimensionMismatch", "fd_spectral_gap supports dim <= 2");
    FDGap fine = fd_gap_of(assemble_generator(p, eps, Grid(box, res)));
    if (check_refinement) {
        FDGap coarse = fd_gap_of(assemble_generator(p, eps, Grid(box, res / 2)));
        fine.refinement_ratio = fine.gap / coarse.gap;
        if (std::abs(fine.refinement_ratio - 1.0) > 0.05)
            throw Error("GridTooCoarse", "gap changes by more than 5% under refinement");
    }
    return fine;
}

inline FDGap fd_spectral_gap(const GibbsSpec& g, int res, bool check_refinement = false) {
    return fd_spectral_gap(g.potential, g.epsilon, g.box, res, check_refinement);
}

// ---- one-dimensional functionals -------------------------------------------------

struct Line1D {
    double h = 0.0;
    std::vector<double> x, H;
    Vec p;  // normalized density
    double Z_mu = 0.0;
};

inline Line1D line_of(const Potential& pot, double eps, const Box& box, int res) {
    if (pot.dim() != 1) throw Error("DimensionMismatch", "one-dimensional oracle");
    Grid g(box, res);
    Line1D l;
    l.h = g.h(0);
    l.x.resize(g.size());
    l.H.resize(g.size());
    l.p.resize(static_cast<Eigen::Index>(g.size()));
    for (std::size_t k = 0; k < g.size(); ++k) {
        l.x[k] = g.point(k)[0];
        l.H[k] = pot.value(g.point(k));
        l.p[static_cast<Eigen::Index>(k)] = std::exp(-l.H[k] / eps);
    }
    l.Z_mu = l.p.sum() * l.h;
    l.p /= l.Z_mu;
    return l;
}

struct Sandwich {
    double B_plus = 0.0, B_minus = 0.0;
    double lower = 0.0, upper = 0.0;  // bounds on the optimal constant
    double split = 0.0;
    double split_mass_left = 0.0;
};

namespace detail {

// sup over x beyond the split of w(tail(x)) * int_split^x 1/p
template <class W>
std::pair<double, double> hardy_functionals(const Line1D& l, std::size_t s, W weight) {
    const std::size_t n = l.x.size();
    std::vector<double> tail_r(n + 1, 0.0), tail_l(n + 1, 0.0);
    for (std::size_t k = n; k-- > 0;) tail_r[k] = tail_r[k + 1] + l.p[static_cast<Eigen::Index>(k)] * l.h;
    for (std::size_t k = 0; k < n; ++k) tail_l[k + 1] = tail_l[k] + l.p[static_cast<Eigen::Index>(k)] * l.h;
    double bp = 0.0, bm = 0.0, acc = 0.0;
    for (std::size_t k = s; k < n; ++k) {
        acc += l.h / l.p[static_cast<Eigen::Index>(k)];
        double t = tail_r[k];
        if (t > 0.0) bp = std::max(bp, weight(t) * acc);
    }
    acc = 0.0;
    for (std::size_t k = s + 1; k-- > 0;) {
        acc += l.h / l.p[static_cast<Eigen::Index>(k)];
        double t = tail_l[k + 1];
        if (t > 0.0) bm = std::max(bm, weight(t) * acc);
    }
    return {bp, bm};
}

inline std::size_t split_index(const Line1D& l, const GibbsSpec& g, bool at_saddle) {
    if (at_saddle && !g.graph.saddles.empty()) {
        double s = g.graph.saddle(0, 1).location[0];
        std::size_t best = 0;
        for (std::size_t k = 0; k < l.x.size(); ++k)
            if (std::abs(l.x[k] - s) < std::abs(l.x[best] - s)) best = k;
        return best;
    }
    double c = 0.0;
    for (std::size_t k = 0; k < l.x.size(); ++k) {
        c += l.p[static_cast<Eigen::Index>(k)] * l.h;
        if (c >= 0.5) return k;
    }
    return l.x.size() - 1;
}

}  // namespace detail

// Sandwich for the optimal 1/rho in Var <= (1/rho) int |f'|^2 dmu.
inline Sandwich muckenhoupt_pi(const GibbsSpec& g, int res = 8192, bool split_at_saddle = true) {
    Line1D l = line_of(g.potential, g.epsilon, g.box, res);
    std::size_t s = detail::split_index(l, g, split_at_saddle);
    auto [bp, bm] = detail::hardy_functionals(l, s, [](double t) { return t; });
    double left = 0.0;
    for (std::size_t k = 0; k < s; ++k) left += l.p[static_cast<Eigen::Index>(k)] * l.h;
    Sandwich r;
    r.B_plus = bp;
    r.B_minus = bm;
    r.split = l.x[s];
    r.split_mass_left = left;
    r.lower = std::max(left * bp, (1.0 - left) * bm);
    r.upper = 4.0 * std::max(bp, bm);
    return r;
}

// Sandwich for 1/alpha; the functional bounds C in Ent(f^2) <= C int |f'|^2 dmu with C = 2/alpha.
inline Sandwich bobkov_gotze_lsi(const GibbsSpec& g, int res = 8192) {
    Line1D l = line_of(g.potential, g.epsilon, g.box, res);
    std::size_t s = detail::split_index(l, g, false);
    auto [bp, bm] = detail::hardy_functionals(l, s, [](double t) { return t * std::log(1.0 / t); });
    Sandwich pi_part = muckenhoupt_pi(g, res, false);
    Sandwich r;
    r.B_plus = bp;
    r.B_minus = bm;
    r.split = l.x[s];
    r.split_mass_left = pi_part.split_mass_left;
    double d = std::max(bp, bm);
    // C >= 2 C_P (LSI implies PI) and the universal factors of the functional
    double c_lower = std::max(d / 150.0, 2.0 * pi_part.lower);
    double c_upper = 468.0 * d;
    r.lower = 0.5 * c_lower;
    r.upper = 0.5 * c_upper;
    return r;
}

namespace detail {

// C* = int (F_i - F_j)^2 / p for cumulative masses built from cell masses mi, mj (each summing to 1).
inline double mean_difference_from_masses(const std::vector<double>& mi, const std::vector<double>& mj, const Vec& p,
                                          double h, std::size_t split) {
    const std::size_t n = mi.size();
    std::vector<double> fwd(n), bwd(n);
    double ci = 0.0, cj = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        fwd[k] = (ci + 0.5 * mi[k]) - (cj + 0.5 * mj[k]);
        ci += mi[k];
        cj += mj[k];
    }
    ci = cj = 0.0;
    for (std::size_t k = n; k-- > 0;) {
        bwd[k] = (cj + 0.5 * mj[k]) - (ci + 0.5 * mi[k]);
        ci += mi[k];
        cj += mj[k];
    }
    double c = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        double d = k <= split ? fwd[k] : bwd[k];
        double pk = p[static_cast<Eigen::Index>(k)];
        if (d != 0.0) c += d * d / pk * h;
    }
    return c;
}

}  // namespace detail

inline double mean_difference_constant_1d(const std::vector<double>& mass_i, const std::vector<double>& mass_j,
                                          const Vec& density, double h, std::size_t split) {
    return detail::mean_difference_from_masses(mass_i, mass_j, density, h, split);
}

// Sharp C* in (E_i f - E_j f)^2 <= C* int |f'|^2 dmu (1D, by CDF quadrature).
inline double exact_mean_difference_constant(const GibbsSpec& g, int i, int j, int res = 8192) {
    if (g.dim() != 1) throw Error("DimensionMismatch", "exact_mean_difference_constant is one-dimensional");
    if (i == j) return 0.0;
    GridGibbs gg = grid_gibbs(g, res);
    const std::size_t n = gg.grid.size();
    std::vector<double> mi(n, 0.0), mj(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        double m = gg.mass[static_cast<Eigen::Index>(k)];
        if (gg.label[k] == i) mi[k] = m / gg.Z_i[i];
        if (gg.label[k] == j) mj[k] = m / gg.Z_i[j];
    }
    double s = g.graph.saddle(i, j).location[0];
    std::size_t split = gg.grid.nearest(vec1(s));
    return detail::mean_difference_from_masses(mi, mj, gg.density, gg.grid.h(0), split);
}

struct TestFunctionResult {
    double entropy = 0.0;    // Ent_mu(g^2), int g^2 dmu = 1
    double dirichlet = 0.0;  // int g'^2 dmu
    double ratio = 0.0;      // entropy / dirichlet
    double tau = 0.0;
    double entropy_display = 0.0;
    double dirichlet_display = 0.0;
};

inline TestFunctionResult optimal_test_function(const GibbsSpec& g, int res = 16384, double tau_offset = 1e-2) {
    if (g.dim() != 1 || g.graph.minima.size() != 2) throw Error("NotTwoWells", "1D two-well landscape required");
    GridGibbs gg = grid_gibbs(g, res);
    const double eps = g.epsilon;
    const auto& sd = g.graph.saddle(0, 1);
    const double s = sd.location[0], hs = std::abs(sd.hessian_eigenvalues[0]);
    const double z1 = gg.Z_i[0] / gg.Z_i.sum(), z2 = gg.Z_i[1] / gg.Z_i.sum();
    TestFunctionResult r;
    r.tau = std::abs(z1 - z2) < tau_offset ? z2 + tau_offset : z2;
    const double a = std::sqrt(r.tau / z1), b = std::sqrt((1.0 - r.tau) / z2);
    const double side = g.graph.minima[0].location[0] < s ? 1.0 : -1.0;  // +1 when m1 is on the left
    const double sig = std::sqrt(eps / hs);
    const std::size_t n = gg.grid.size();
    Vec gv(static_cast<Eigen::Index>(n)), dg(static_cast<Eigen::Index>(n));
    for (std::size_t k = 0; k < n; ++k) {
        double y = side * (gg.grid.point(k)[0] - s) / sig;
        double phi = 0.5 * std::erfc(-y / std::sqrt(2.0));
        gv[static_cast<Eigen::Index>(k)] = a + (b - a) * phi;
        dg[static_cast<Eigen::Index>(k)] = (b - a) * side * std::exp(-0.5 * y * y) / (std::sqrt(2.0 * pi) * sig);
    }
    double norm = gg.mass.dot(gv.cwiseProduct(gv));
    gv /= std::sqrt(norm);
    dg /= std::sqrt(norm);
    Vec g2 = gv.cwiseProduct(gv);
    r.entropy = entropy(gg.mass, g2);
    r.dirichlet = gg.mass.dot(dg.cwiseProduct(dg));
    r.ratio = r.entropy / r.dirichlet;
    r.entropy_display = r.tau * std::log(r.tau / z1) + (1.0 - r.tau) * std::log((1.0 - r.tau) / z2);
    double d = a - b;
    r.dirichlet_display = d * d * std::sqrt(2.0 * pi * eps) / gg.Z_mu * std::sqrt(hs) / (2.0 * pi * eps) *
                          std::exp(-sd.energy / eps);
    return r;
}

// ---- Langevin ----------------------------------------------------------------------

// Counter-based uniform variates (splitmix64 finalizer of seed and counter).
inline double counter_uniform(std::uint64_t seed, std::uint64_t counter) {
    std::uint64_t z = seed * 0x9E3779B97F4A7C15ULL + counter + 0x632BE59BD9B4E019ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return (static_cast<double>(z >> 11) + 0.5) * 0x1.0p-53;
}

inline double counter_normal(std::uint64_t seed, std::uint64_t counter) {
    return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * counter_uniform(seed, counter));
}

struct LangevinStats {
    Vec occupation;
    long transitions = 0;
    double autocorrelation_rate = 0.0;
    Vec final_state;
    double time = 0.0;
};

inline LangevinStats simulate_langevin(const GibbsSpec& g, const Vec& x0, double dt, long n_steps, std::uint64_t seed,
                                       bool check_step = true) {
    const int n = g.dim();
    double hmax = 0.0;
    if (check_step) {
        Grid grid(g.box, n == 1 ? 512 : 64);
        for (std::size_t k = 0; k < grid.size(); ++k)
            hmax = std::max(hmax, g.potential.jet(grid.point(k)).hessian.norm());
        if (dt > 0.01 * std::max(g.epsilon, 1e-300) / hmax && g.epsilon > 0.0)
            throw Error("StepSizeTooLarge", "dt exceeds 0.01 eps / max|Hess H|");
    }
    const auto m = static_cast<Eigen::Index>(g.graph.minima.size());
    LangevinStats st;
    st.occupation = Vec::Zero(std::max<Eigen::Index>(m, 1));
    // core-set labelling: state changes when a ball around another minimum is entered
    std::vector<double> core(static_cast<std::size_t>(m), inf);
    for (Eigen::Index i = 0; i < m; ++i)
        for (const auto& s : g.graph.saddles)
            core[static_cast<std::size_t>(i)] =
                std::min(core[static_cast<std::size_t>(i)], 0.5 * (s.location - g.graph.minima[static_cast<std::size_t>(i)].location).norm());
    auto nearest_core = [&](const Vec& x) {
        for (Eigen::Index i = 0; i < m; ++i)
            if ((x - g.graph.minima[static_cast<std::size_t>(i)].location).norm() < core[static_cast<std::size_t>(i)])
                return static_cast<int>(i);
        return -1;
    };
    double s1 = g.graph.saddles.empty() ? 0.0 : g.graph.saddle(0, 1).location[0];
    Box outer = g.box.enlarged(2.0);
    Vec x = x0;
    int state = nearest_core(x);
    if (state < 0) {
        double bd = inf;
        for (Eigen::Index i = 0; i < m; ++i) {
            double d = (x - g.graph.minima[static_cast<std::size_t>(i)].location).norm();
            if (d < bd) bd = d, state = static_cast<int>(i);
        }
    }
    const double amp = std::sqrt(2.0 * g.epsilon * dt);
    // observable sign(x1 - s1) sampled on a coarse time lattice
    const long stride = std::max<long>(1, n_steps / 200000);
    std::vector<double> obs;
    obs.reserve(static_cast<std::size_t>(n_steps / stride + 1));
    std::uint64_t counter = 0;
    for (long t = 0; t < n_steps; ++t) {
        Vec gr = g.potential.jet(x).gradient;
        for (int d = 0; d < n; ++d) x[d] += -gr[d] * dt + amp * counter_normal(seed, counter++);
        if (!outer.contains(x)) throw Error("Escape", "trajectory left the enlarged box");
        int c = nearest_core(x);
        if (c >= 0 && c != state) {
            ++st.transitions;
            state = c;
        }
        if (state >= 0) st.occupation[state] += 1.0;
        if (t % stride == 0) obs.push_back(x[0] > s1 ? 1.0 : -1.0);
    }
    st.occupation /= static_cast<double>(n_steps);
    st.final_state = x;
    st.time = dt * static_cast<double>(n_steps);
    // exponential fit of the autocorrelation over lags where it stays above 0.2
    const std::size_t N = obs.size();
    double mean = 0.0;
    for (double o : obs) mean += o;
    mean /= static_cast<double>(N);
    double var = 0.0;
    for (double o : obs) var += (o - mean) * (o - mean);
    var /= static_cast<double>(N);
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int cnt = 0;
    if (var > 0.0) {
        for (std::size_t lag = 1; lag < N / 4; lag = lag < 8 ? lag + 1 : lag * 5 / 4) {
            double c = 0.0;
            for (std::size_t k = 0; k + lag < N; ++k) c += (obs[k] - mean) * (obs[k + lag] - mean);
            c /= static_cast<double>(N - lag) * var;
            if (c < 0.2) break;
            double tl = static_cast<double>(lag) * stride * dt;
            sx += tl, sy += std::log(c), sxx += tl * tl, sxy += tl * std::log(c);
            ++cnt;
        }
    }
    if (cnt >= 2) st.autocorrelation_rate = -(cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
    return st;
}

}  // namespace ekm
