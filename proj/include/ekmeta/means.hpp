#pragma once

#include "common.hpp"

namespace ekm {

inline double log_mean(double a, double b) {
    if (!(a > 0.0) || !(b > 0.0)) throw Error("NonPositiveArgument", "log_mean needs a, b > 0");
    if (std::abs(a - b) <= 1e-12 * std::max(a, b)) {
        double u = (a - b) / (a + b);
        return 0.5 * (a + b) * (1.0 - u * u / 3.0);
    }
    double hi = std::max(a, b), lo = std::min(a, b);
    double r = lo / hi - 1.0;
    return hi * r / std::log1p(r);
}

struct MeanTriple {
    double geometric, logarithmic, arithmetic;
};

inline MeanTriple log_mean_bounds(double a, double b) {
    return {std::sqrt(a) * std::sqrt(b), log_mean(a, b), 0.5 * (a + b)};
}

namespace detail {
inline double h_raw(double p, double t) {
    double d = t - p;
    double f = (d / (p * (1.0 - p))) / (std::sqrt(t / p) + std::sqrt((1.0 - t) / (1.0 - p)));
    double g = t * std::log1p(d / p) + (1.0 - t) * std::log1p(-d / (1.0 - p));
    return f * f / g;
}
}  // namespace detail

// (sqrt(t/p) - sqrt((1-t)/(1-p)))^2 / (t log(t/p) + (1-t) log((1-t)/(1-p)))
inline double h_p(double p, double t) {
    if (!(p > 0.0 && p < 1.0) || !(t > 0.0 && t < 1.0)) throw Error("OutOfRange", "h_p needs p, t in (0,1)");
    const double off = 1e-7;
    if (std::abs(t - p) < off) {
        double lo = std::max(p - off, 0.5 * p), hi = std::min(p + off, 0.5 * (1.0 + p));
        return 0.5 * (detail::h_raw(p, lo) + detail::h_raw(p, hi));
    }
    return detail::h_raw(p, t);
}

inline double h_p_limit_t0(double p) { return 1.0 / ((1.0 - p) * std::log(1.0 / (1.0 - p))); }
inline double h_p_limit_t1(double p) { return 1.0 / (p * std::log(1.0 / p)); }

// Strict inequality Lambda(p,1-p)/(p(1-p)) < min(1/(p log 1/p), 1/((1-p) log 1/(1-p))).
inline bool upper_bound_check(double p) {
    if (!(p > 0.0 && p < 1.0)) throw Error("OutOfRange", "upper_bound_check needs p in (0,1)");
    double lhs = log_mean(p, 1.0 - p) / (p * (1.0 - p));
    return lhs < std::min(h_p_limit_t1(p), h_p_limit_t0(p));
}

}  // namespace ekm
