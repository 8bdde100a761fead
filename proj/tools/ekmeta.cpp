#include <ekmeta/ekmeta.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <random>

using namespace ekm;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string num(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

std::string short_num(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

json vec_json(const Vec& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

Potential load_potential(const RunConfig& c) {
    try {
        return parse_potential(c.source, c.dim, c.name);
    } catch (const Error& e) {
        throw Error("ConfigError", c.origin + ":" + std::to_string(c.source_line) + ": " + e.what());
    }
}

void write_file(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) throw Error("IOError", "cannot write " + p.string());
    f << text;
}

// ---------------------------------------------------------------- analyze

int cmd_analyze(const RunConfig& c) {
    Potential p = load_potential(c);
    auto cps = find_critical_points(p, c.box);
    json j;
    j["name"] = c.name;
    j["potential"] = c.source;
    j["dim"] = c.dim;
    j["box"] = {{"lo", vec_json(c.box.lo)}, {"hi", vec_json(c.box.hi)}};
    json jc = json::array();
    for (const auto& cp : cps)
        jc.push_back({{"location", vec_json(cp.location)},
                      {"energy", cp.energy},
                      {"index", cp.morse_index},
                      {"hessian_eigenvalues", vec_json(cp.hessian_eigenvalues)}});
    j["critical_points"] = jc;
    std::vector<std::string> warnings;
    LandscapeGraph graph;
    auto mins = minima_of(cps);
    if (mins.size() >= 2) {
        try {
            graph = make_gibbs(p, c.eps.front(), c.box).graph;
        } catch (const Error& e) {
            warnings.push_back(std::string("saddle graph skipped: ") + e.what());
            graph.minima = mins;
        }
    } else {
        graph.minima = mins;
    }
    json jm = json::array();
    for (const auto& m : graph.minima) jm.push_back({{"location", vec_json(m.location)}, {"energy", m.energy}});
    j["minima_ordered"] = jm;
    json je = json::array();
    for (const auto& [key, edge] : graph.edges) {
        const auto& s = graph.saddles[static_cast<std::size_t>(edge.saddle)];
        je.push_back({{"i", key.first}, {"j", key.second}, {"saddle", vec_json(s.location)}, {"height", edge.height}});
    }
    j["edges"] = je;
    j["delta_gap"] = std::isfinite(graph.delta_gap) ? json(graph.delta_gap) : json(nullptr);
    j["non_degeneracy_violation"] = graph.non_degeneracy_violation;
    for (const auto& w : graph.warnings) warnings.push_back(w);
    auto a = check_assumptions(p, c.box);
    j["assumptions"] = {{"A1_PI", a.A1_PI}, {"A2_PI", a.A2_PI}, {"A1_LSI", a.A1_LSI}, {"A2_LSI", a.A2_LSI},
                        {"C_H_A1_PI", a.C_H_A1_PI}, {"K_H_A2_PI", a.K_H_A2_PI}, {"C_H_A1_LSI", a.C_H_A1_LSI},
                        {"K_H_A2_LSI", a.K_H_A2_LSI}, {"evidence", a.evidence}};
    j["warnings"] = warnings;
    fs::path out = fs::path(c.out_dir) / "landscape.json";
    write_file(out, j.dump(2) + "\n");

    std::cout << "landscape: " << c.name << " (dim " << c.dim << ")\n";
    std::cout << std::left << std::setw(6) << "index" << std::setw(14) << "energy" << "location\n";
    for (const auto& cp : cps) {
        std::cout << std::setw(6) << cp.morse_index << std::setw(14) << num(cp.energy).substr(0, 12);
        for (Eigen::Index i = 0; i < cp.location.size(); ++i) std::cout << (i ? " " : "") << cp.location[i];
        std::cout << "\n";
    }
    std::cout << "critical points: " << cps.size() << ", minima: " << graph.minima.size() << ", edges: " << graph.edges.size()
              << "\n";
    if (std::isfinite(graph.delta_gap)) std::cout << "delta_gap: " << graph.delta_gap << "\n";
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
    std::cout << "wrote " << out.string() << "\n";
    return 0;
}

// ---------------------------------------------------------------- constants

int cmd_constants(const RunConfig& c) {
    Potential p = load_potential(c);
    bool oracle = c.oracle;
    if (oracle && c.dim > 2) {
        std::cerr << "warning: finite-difference oracle needs dim <= 2; oracle skipped\n";
        oracle = false;
    }
    std::ostringstream csv;
    csv << "epsilon,Z1,Z2,inv_rho_ek,inv_alpha2_ek,ek_gap";
    if (oracle) csv << ",fd_gap,gap_ratio";
    csv << "\n";
    for (double eps : c.eps) {
        auto g = make_gibbs(p, eps, c.box);
        auto pd = laplace_partition(g);
        auto pi = ek_pi(g, pd);
        auto lsi = ek_lsi(g, pd);
        if (pi.no_metastability) throw Error("NotTwoWells", "constants need at least two minima");
        auto [i, j] = pi.dominant_pair;
        double ek_gap = eps / pi.inv_rho;
        csv << num(eps) << "," << num(pd.Z_i_laplace[i]) << "," << num(pd.Z_i_laplace[j]) << "," << num(pi.inv_rho) << ","
            << num(lsi.inv_alpha_times2) << "," << num(ek_gap);
        if (oracle) {
            double fd = fd_spectral_gap(g, c.grid_for_dim()).gap;
            csv << "," << num(fd) << "," << num(fd / ek_gap);
        }
        csv << "\n";
    }
    fs::path out = fs::path(c.out_dir) / "constants.csv";
    write_file(out, csv.str());
    std::cout << csv.str();
    std::cerr << "wrote " << out.string() << "\n";
    return 0;
}

// ---------------------------------------------------------------- validate

struct CheckRow {
    std::string suite, check;
    long cases = 0, failures = 0;
    double worst_margin = inf;  // smallest slack; negative means failure
    bool skipped = false;
    std::string note;

    void record(double margin) {
        ++cases;
        worst_margin = std::min(worst_margin, margin);
        if (!(margin >= 0.0)) ++failures;
    }
};

struct Suite {
    std::string name;
    std::function<std::vector<CheckRow>(const RunConfig&, const Potential&)> run;
};

CheckRow skipped(const std::string& suite, const std::string& check, const std::string& why) {
    CheckRow r{suite, check};
    r.skipped = true;
    r.note = why;
    return r;
}

std::vector<CheckRow> suite_means(const RunConfig& c, const Potential&) {
    std::mt19937_64 rng(c.seed);
    std::uniform_real_distribution<double> U(-6.0, 6.0), P(1e-6, 1.0 - 1e-6);
    CheckRow order{"means", "geometric <= log-mean <= arithmetic"}, sym{"means", "log-mean symmetry"},
        upper{"means", "two-point upper bound"};
    for (int k = 0; k < 4000; ++k) {
        double a = std::pow(10.0, U(rng)), b = std::pow(10.0, U(rng));
        auto t = log_mean_bounds(a, b);
        double tol = 1e-12 * t.logarithmic;
        order.record(std::min(t.logarithmic - t.geometric, t.arithmetic - t.logarithmic) + tol);
        sym.record(1e-14 * t.logarithmic - std::abs(log_mean(a, b) - log_mean(b, a)));
    }
    for (int k = 0; k < 2000; ++k) upper.record(upper_bound_check(P(rng)) ? 1.0 : -1.0);
    return {order, sym, upper};
}

std::vector<CheckRow> suite_discrete(const RunConfig& c, const Potential&) {
    std::mt19937_64 rng(c.seed + 1);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    CheckRow var{"discrete", "variance splitting identity"}, ent{"discrete", "entropy splitting identity"},
        wlsi{"discrete", "weighted LSI"}, coarse{"discrete", "coarse-grained entropy bound"},
        two{"discrete", "two-point LSI sharpness"};
    for (int trial = 0; trial < 2000; ++trial) {
        int m = 2 + static_cast<int>(U(rng) * 4), N = 40;
        Vec w(N), f(N);
        std::vector<int> labels(static_cast<std::size_t>(N));
        for (int k = 0; k < N; ++k) {
            w[k] = 0.05 + U(rng);
            f[k] = 0.1 + 2.0 * U(rng);
            labels[static_cast<std::size_t>(k)] = k % m;
        }
        w /= w.sum();
        auto s = grid_component_stats(w, labels, f, m);
        Vec Z = Vec::Zero(m);
        for (int k = 0; k < N; ++k) Z[labels[static_cast<std::size_t>(k)]] += w[k];
        DiscreteMeasure dm(Z / Z.sum());
        auto sv = split_variance(dm, s);
        var.record(1e-10 - std::abs(sv.total - variance(w, f)));
        auto se = split_entropy(dm, s);
        ent.record(1e-10 - std::abs(se.total - entropy(w, f)));
        Vec g(m);
        for (int i = 0; i < m; ++i) g[i] = U(rng) * 3.0;
        auto wl = weighted_lsi_rhs(dm, g);
        wlsi.record(wl.rhs - wl.lhs + 1e-12);
        auto cb = coarse_entropy_bound(dm, s);
        coarse.record(cb.rhs - cb.lhs + 1e-12);
    }
    // sharpness: sup over f = (1, t) of Ent(f^2) / (f0 - f1)^2 equals the two-point constant
    for (int k = 0; k < 1000; ++k) {
        double p = 0.02 + 0.96 * U(rng), best = 0.0, lo = -12.0, hi = 12.0;
        Vec w(2);
        w << p, 1.0 - p;
        for (int round = 0; round < 10; ++round) {
            double arg = lo;
            for (int q = 0; q <= 400; ++q) {
                double t = std::exp(lo + (hi - lo) * q / 400);
                if (std::abs(t - 1.0) < 1e-6) continue;
                Vec f(2);
                f << 1.0, t * t;
                double v = entropy(w, f) / ((1.0 - t) * (1.0 - t));
                if (v > best) best = v, arg = std::log(t);
            }
            double span = (hi - lo) / 50;
            lo = arg - span, hi = arg + span;
        }
        two.record(1e-4 - std::abs(best - two_point_lsi_constant(p)));
    }
    return {var, ent, wlsi, coarse, two};
}

bool two_wells(const RunConfig& c, const Potential& p) {
    if (c.dim > 2) return false;
    return minima_of(find_critical_points(p, c.box)).size() >= 2;
}

std::vector<CheckRow> suite_ek(const RunConfig& c, const Potential& p) {
    if (!two_wells(c, p)) return {skipped("ek", "EK vs finite-difference gap", "needs dim <= 2 and two minima")};
    if (!c.oracle) return {skipped("ek", "EK vs finite-difference gap", "oracle disabled")};
    CheckRow r{"ek", "EK vs finite-difference gap in [0.5, 1.5]"};
    double eps = *std::min_element(c.eps.begin(), c.eps.end());
    auto g = make_gibbs(p, eps, c.box);
    auto pd = laplace_partition(g);
    auto ek = ek_pi(g, pd);
    double inv_rho = ek.inv_rho;
    if (c.fault == "lambda_minus_sign") {
        // fixture: prefactor evaluated with the signed unstable eigenvalue
        const auto& s = g.graph.saddle(ek.dominant_pair.first, ek.dominant_pair.second);
        inv_rho *= std::abs(s.lambda_minus()) / s.lambda_minus();
    }
    double ratio = fd_spectral_gap(g, c.grid_for_dim()).gap / (eps / inv_rho);
    r.record(std::min(ratio - 0.5, 1.5 - ratio));
    r.note = "ratio " + num(ratio);
    return {r};
}

std::vector<CheckRow> suite_oracle1d(const RunConfig& c, const Potential& p) {
    if (c.dim != 1) return {skipped("oracle1d", "Muckenhoupt sandwich", "needs dim = 1")};
    CheckRow mk{"oracle1d", "Muckenhoupt sandwich contains FD 1/rho"}, bg{"oracle1d", "Bobkov-Goetze lower <= upper"};
    for (double eps : c.eps) {
        auto g = make_gibbs(p, eps, c.box);
        double fd = eps / fd_spectral_gap(g, c.grid_for_dim()).gap;
        auto s = muckenhoupt_pi(g);
        mk.record(std::min(fd - s.lower, s.upper - fd) / fd);
        auto b = bobkov_gotze_lsi(g);
        bg.record((b.upper - b.lower) / b.upper);
    }
    return {mk, bg};
}

std::vector<CheckRow> suite_transport(const RunConfig& c, const Potential& p) {
    std::mt19937_64 rng(c.seed + 2);
    std::normal_distribution<double> N;
    CheckRow pg{"transport", "partial Gaussian closed form vs quadrature"}, td{"transport", "determinant identity"};
    auto spd = [&](int n) {
        Mat M(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) M(i, j) = N(rng);
        return Mat(M * M.transpose() + 0.5 * Mat::Identity(n, n));
    };
    auto unit = [&](int n) {
        Vec v(n);
        for (int i = 0; i < n; ++i) v[i] = N(rng);
        return Vec(v.normalized());
    };
    for (int k = 0; k < 100; ++k) {
        Mat S = spd(3);
        Vec eta = unit(3), z = unit(3);
        z -= z.dot(eta) * eta;
        auto r = partial_gaussian(S, eta, z);
        pg.record(1e-8 - std::abs(r.closed_form / r.quadrature - 1.0));
        Mat A = spd(4);
        auto t = tilde_matrix_and_subdet(A, unit(4));
        td.record(1e-10 * A.determinant() - t.identity_residual);
    }
    std::vector<CheckRow> rows{pg, td};
    if (!two_wells(c, p)) {
        rows.push_back(skipped("transport", "cost / bound", "needs dim <= 2 and two minima"));
        return rows;
    }
    CheckRow cb{"transport", "cost / bound <= 1 + 3 sqrt(eps) |log eps|^1.5"};
    double eps = *std::min_element(c.eps.begin(), c.eps.end());
    auto g = make_gibbs(p, eps, c.box);
    std::vector<std::pair<int, int>> pairs{ek_pi(g, laplace_partition(g)).dominant_pair};
    for (const auto& [key, edge] : g.graph.edges) pairs.push_back(key);
    for (auto [i, j] : pairs) {
        try {
            auto a = build_interpolation(g, i, j, 1e-3, false);
            double ratio = transport_cost(a, g).total / transport_bound(g, i, j);
            cb.record(1 + 3 * std::sqrt(eps) * std::pow(std::abs(std::log(eps)), 1.5) - ratio);
            cb.note = "pair (" + std::to_string(i) + "," + std::to_string(j) + ") ratio " + num(ratio);
            break;
        } catch (const Error& e) {
            if (e.kind() != "SaddleTangentMismatch") throw;
        }
    }
    if (cb.cases == 0) {
        rows.push_back(skipped("transport", "cost / bound", "no minimum pair joined by a single saddle"));
        return rows;
    }
    rows.push_back(cb);
    return rows;
}

std::vector<CheckRow> suite_lyapunov(const RunConfig& c, const Potential& p) {
    if (c.dim > 2) return {skipped("lyapunov", "drift inequality", "needs dim <= 2")};
    CheckRow dr{"lyapunov", "drift inequality with escalation"}, cl{"lyapunov", "closeness sup|H~ - H| <= C eps"};
    auto cps = find_critical_points(p, c.box);
    int res = c.dim == 1 ? 4000 : 120;
    for (double eps : c.eps) {
        try {
            auto e = verify_drift_escalating(p, cps, eps, c.box, res, 2.0, 48.0);
            if (e.report.points_checked == 0) {
                dr.note = "vacuous at eps " + short_num(eps) + " (minimum balls cover the box)";
                continue;
            }
            dr.record(e.report.lambda0);
            Grid grid(c.box, res);
            double worst = 0.0;
            for (std::size_t k = 0; k < grid.size(); ++k)
                worst = std::max(worst, std::abs(e.modification.patch_value(grid.point(k))));
            cl.record(e.modification.C_H_tilde * eps * (1 + 1e-12) - worst);
        } catch (const Error& err) {
            dr.record(-1.0);
            dr.note = err.what();
        }
    }
    return {dr, cl};
}

int cmd_validate(const RunConfig& c, const std::string& filter) {
    Potential p = load_potential(c);
    std::vector<Suite> suites{{"means", suite_means},         {"discrete", suite_discrete}, {"ek", suite_ek},
                              {"oracle1d", suite_oracle1d}, {"transport", suite_transport}, {"lyapunov", suite_lyapunov}};
    if (!filter.empty()) {
        bool known = false;
        for (const auto& s : suites) known |= s.name == filter;
        if (!known) throw Error("UsageError", "unknown suite '" + filter + "'");
    }
    std::vector<CheckRow> rows;
    for (const auto& s : suites) {
        if (!filter.empty() && s.name != filter) continue;
        for (auto& r : s.run(c, p)) rows.push_back(r);
    }
    std::ostringstream csv;
    csv << "suite,check,cases,failures,worst_margin,status\n";
    bool ok = true;
    std::cout << std::left << std::setw(11) << "suite" << std::setw(52) << "check" << std::setw(8) << "cases" << std::setw(9)
              << "failures" << std::setw(24) << "worst margin" << "status\n";
    for (const auto& r : rows) {
        std::string status = r.skipped ? "skip" : (r.failures == 0 ? "pass" : "FAIL");
        if (status == "FAIL") ok = false;
        std::string margin = r.skipped ? "" : num(r.worst_margin);
        csv << r.suite << ",\"" << r.check << "\"," << r.cases << "," << r.failures << "," << margin << "," << status << "\n";
        std::cout << std::setw(11) << r.suite << std::setw(52) << r.check << std::setw(8) << r.cases << std::setw(9)
                  << r.failures << std::setw(24) << margin << status;
        if (!r.note.empty()) std::cout << "  (" << r.note << ")";
        std::cout << "\n";
    }
    write_file(fs::path(c.out_dir) / "validate.csv", csv.str());
    std::cout << (ok ? "all checks passed\n" : "validation failed\n");
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Eyring-Kramers constants, transport bounds and oracles for metastable Gibbs measures"};
    app.require_subcommand(1);
    std::string config, eps_list, filter, out;
    int grid = 0;
    bool no_oracle = false;
    long long seed = -1;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config, "config file")->required();
        sub->add_option("--eps", eps_list, "comma-separated epsilon list");
        sub->add_option("--grid", grid, "grid resolution (power of two, 64..16384)");
        sub->add_flag("--no-oracle", no_oracle, "skip finite-difference oracles");
        sub->add_option("--out", out, "output directory");
        sub->add_option("--seed", seed, "random seed");
    };
    auto* analyze = app.add_subcommand("analyze", "critical points, saddle graph and assumption checks");
    auto* constants = app.add_subcommand("constants", "EK constants over the epsilon sweep");
    auto* validate = app.add_subcommand("validate", "property suites");
    add_common(analyze);
    add_common(constants);
    add_common(validate);
    validate->add_option("--filter", filter, "run a single suite");
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    RunConfig c;
    try {
        c = load_config(config);
        if (!eps_list.empty()) {
            c.eps = detail::parse_list(eps_list, "--eps");
            validate_eps(c.eps, "--eps");
        }
        if (grid != 0) {
            validate_grid(grid, "--grid");
            c.grid = grid;
        }
        if (no_oracle) c.oracle = false;
        if (!out.empty()) c.out_dir = out;
        if (seed >= 0) c.seed = static_cast<std::uint64_t>(seed);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    try {
        if (analyze->parsed()) return cmd_analyze(c);
        if (constants->parsed()) return cmd_constants(c);
        return cmd_validate(c, filter);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        bool usage = e.kind() == "ConfigError" || e.kind() == "UsageError" || e.kind() == "SyntaxError";
        return usage ? 2 : 1;
    }
}
