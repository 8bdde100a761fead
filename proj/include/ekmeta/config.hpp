#pragma once

#include "common.hpp"

#include <fstream>
#include <map>
#include <sstream>

namespace ekm {

// Flat key-value text with [sections]; '#' starts a comment.
struct RunConfig {
    std::string name;
    std::string source;
    int dim = 0;
    Box box;
    std::vector<double> eps{0.2, 0.1, 0.07, 0.05};
    int grid = 0;  // 0: per-dimension default
    bool oracle = true;
    std::string out_dir = "out";
    std::uint64_t seed = 1;
    std::string fault;  // test fixtures only
    std::string origin;
    int source_line = 0;

    int grid_for_dim() const {
        if (grid > 0) return grid;
        return dim == 1 ? 4096 : (dim == 2 ? 128 : 64);
    }
};

inline bool power_of_two_in_range(long v) { return v >= 64 && v <= 16384 && (v & (v - 1)) == 0; }

namespace detail {

inline std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<double> parse_list(const std::string& v, const std::string& where) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        std::size_t used = 0;
        double x = 0.0;
        try {
            x = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (item.empty() || used != item.size()) throw Error("ConfigError", where + ": not a number: '" + item + "'");
        out.push_back(x);
    }
    if (out.empty()) throw Error("ConfigError", where + ": empty list");
    return out;
}

inline long parse_int(const std::string& v, const std::string& where) {
    std::size_t used = 0;
    long x = 0;
    try {
        x = std::stol(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (v.empty() || used != v.size()) throw Error("ConfigError", where + ": not an integer: '" + v + "'");
    return x;
}

inline bool parse_bool(const std::string& v, const std::string& where) {
    if (v == "true" || v == "yes" || v == "1") return true;
    if (v == "false" || v == "no" || v == "0") return false;
    throw Error("ConfigError", where + ": not a boolean: '" + v + "'");
}

}  // namespace detail

inline void validate_eps(const std::vector<double>& eps, const std::string& where) {
    for (double e : eps)
        if (!(e > 0.0) || !std::isfinite(e)) throw Error("ConfigError", where + ": epsilon values must be positive");
}

inline void validate_grid(long g, const std::string& where) {
    if (!power_of_two_in_range(g)) throw Error("ConfigError", where + ": grid must be a power of two between 64 and 16384");
}

inline RunConfig parse_config(const std::string& text, const std::string& filename = "<config>") {
    RunConfig c;
    c.origin = filename;
    std::string section;
    std::vector<double> lo, hi;
    std::string lo_where, hi_where;
    std::map<std::string, int> seen;
    std::istringstream in(text);
    std::string line;
    int no = 0;
    while (std::getline(in, line)) {
        ++no;
        std::string where = filename + ":" + std::to_string(no);
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw Error("ConfigError", where + ": unterminated section header");
            section = detail::trim(line.substr(1, line.size() - 2));
            if (section != "potential" && section != "domain" && section != "sweep" && section != "output" && section != "fault")
                throw Error("ConfigError", where + ": unknown section [" + section + "]");
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos) throw Error("ConfigError", where + ": expected key = value");
        std::string key = detail::trim(line.substr(0, eq)), val = detail::trim(line.substr(eq + 1));
        if (section.empty()) throw Error("ConfigError", where + ": key outside of a section");
        std::string full = section + "." + key;
        if (seen.count(full)) throw Error("ConfigError", where + ": duplicate key '" + full + "'");
        seen[full] = no;
        if (full == "potential.name") c.name = val;
        else if (full == "potential.source") c.source = val, c.source_line = no;
        else if (full == "potential.dim") c.dim = static_cast<int>(detail::parse_int(val, where));
        else if (full == "domain.lo") lo = detail::parse_list(val, where), lo_where = where;
        else if (full == "domain.hi") hi = detail::parse_list(val, where), hi_where = where;
        else if (full == "sweep.eps") {
            c.eps = detail::parse_list(val, where);
            validate_eps(c.eps, where);
        } else if (full == "sweep.grid") {
            long g = detail::parse_int(val, where);
            validate_grid(g, where);
            c.grid = static_cast<int>(g);
        } else if (full == "sweep.oracle") c.oracle = detail::parse_bool(val, where);
        else if (full == "output.dir") c.out_dir = val;
        else if (full == "output.seed") c.seed = static_cast<std::uint64_t>(detail::parse_int(val, where));
        else if (full == "fault.inject") c.fault = val;
        else throw Error("ConfigError", where + ": unknown key '" + full + "'");
    }
    std::string end = filename + ":" + std::to_string(no);
    if (c.source.empty()) throw Error("ConfigError", end + ": missing potential.source");
    if (c.dim < 1 || c.dim > 16) throw Error("ConfigError", end + ": potential.dim must be in 1..16");
    if (lo.empty() || hi.empty()) throw Error("ConfigError", end + ": missing domain.lo or domain.hi");
    auto expand = [&](std::vector<double> v, const std::string& where) {
        if (v.size() == 1) v.assign(static_cast<std::size_t>(c.dim), v[0]);
        if (v.size() != static_cast<std::size_t>(c.dim)) throw Error("ConfigError", where + ": bound has the wrong length");
        return Vec(Eigen::Map<Vec>(v.data(), c.dim));
    };
    c.box = Box{expand(lo, lo_where), expand(hi, hi_where)};
    for (int k = 0; k < c.dim; ++k)
        if (!(c.box.lo[k] < c.box.hi[k])) throw Error("ConfigError", hi_where + ": domain.hi must exceed domain.lo");
    if (!c.fault.empty() && c.fault != "lambda_minus_sign")
        throw Error("ConfigError", filename + ":" + std::to_string(seen["fault.inject"]) + ": unknown fault '" + c.fault + "'");
    if (c.name.empty()) c.name = c.source;
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error("ConfigError", path + ": cannot open file");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str(), path);
}

}  // namespace ekm
