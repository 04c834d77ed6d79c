#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "ccmar/error.hpp"

namespace ccmar {

inline double expit(double x) {
    // Numerically safe logistic; split on sign so exp never overflows.
    if (x >= 0.0) {
        double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

inline double logit(double p) {
    if (!(p > 0.0 && p < 1.0)) throw domain_error("logit: argument must lie in (0,1)");
    return std::log(p / (1.0 - p));
}

// Digamma via upward recurrence into the asymptotic regime.
inline double digamma(double x) {
    if (!(x > 0.0)) throw domain_error("digamma: argument must be positive");
    double acc = 0.0;
    while (x < 6.0) {
        acc -= 1.0 / x;
        x += 1.0;
    }
    double inv = 1.0 / x, inv2 = inv * inv;
    // ln x - 1/(2x) - sum of Bernoulli-number correction terms.
    double series = inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0)))));
    return acc + std::log(x) - 0.5 * inv - series;
}

inline double trigamma(double x) {
    if (!(x > 0.0)) throw domain_error("trigamma: argument must be positive");
    double acc = 0.0;
    while (x < 6.0) {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    double inv = 1.0 / x, inv2 = inv * inv;
    double series = inv * (1.0 + 0.5 * inv + inv2 * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 / 30.0))));
    return acc + series;
}

inline double mean(const std::vector<double>& v) {
    if (v.empty()) throw domain_error("mean of empty sample");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

// Unbiased (n-1) sample standard deviation.
inline double sample_sd(const std::vector<double>& v) {
    std::size_t n = v.size();
    if (n < 2) return 0.0;
    double m = mean(v), ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(n - 1));
}

// Linear-interpolation quantile (the common "type 7" definition).
inline double quantile(std::vector<double> v, double p) {
    if (v.empty()) throw domain_error("quantile of empty sample");
    if (!(p >= 0.0 && p <= 1.0)) throw domain_error("quantile: p outside [0,1]");
    std::sort(v.begin(), v.end());
    double h = (static_cast<double>(v.size()) - 1.0) * p;
    std::size_t lo = static_cast<std::size_t>(std::floor(h));
    std::size_t hi = std::min(lo + 1, v.size() - 1);
    double frac = h - static_cast<double>(lo);
    return v[lo] + frac * (v[hi] - v[lo]);
}

inline double median(const std::vector<double>& v) { return quantile(v, 0.5); }

// Moment-based sample skewness m3 / m2^(3/2).
inline double sample_skewness(const std::vector<double>& v) {
    std::size_t n = v.size();
    if (n < 3) return 0.0;
    double m = mean(v), m2 = 0.0, m3 = 0.0;
    for (double x : v) {
        double d = x - m;
        m2 += d * d;
        m3 += d * d * d;
    }
    m2 /= static_cast<double>(n);
    m3 /= static_cast<double>(n);
    if (m2 <= 0.0) return 0.0;
    return m3 / std::pow(m2, 1.5);
}

}  // namespace ccmar
