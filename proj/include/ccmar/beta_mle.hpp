#pragma once

#include <cmath>
#include <vector>

#include "ccmar/error.hpp"
#include "ccmar/numeric.hpp"

namespace ccmar {

struct beta_law {
    double shape1 = 1.0;
    double shape2 = 1.0;
    bool converged = true;

    double mean() const { return shape1 / (shape1 + shape2); }
};

// Closed-form method-of-moments starting point.
inline beta_law beta_moment_start(double m, double v) {
    if (!(m > 0.0 && m < 1.0) || !(v > 0.0))
        throw domain_error("beta_moment_start: need mean in (0,1) and positive variance");
    double common = m * (1.0 - m) / v - 1.0;
    if (common <= 0.0) throw domain_error("beta_moment_start: variance too large for a beta law");
    return beta_law{m * common, (1.0 - m) * common};
}

// Two-parameter Newton iteration on the log likelihood, started at the
// moment estimate. Samples must lie strictly inside (0,1).
inline beta_law fit_beta_mle(const std::vector<double>& samples) {
    if (samples.size() < 10) throw domain_error("fit_beta_mle: need at least 10 samples");
    double slog = 0.0, slog1m = 0.0, m = 0.0;
    for (double x : samples) {
        if (!(x > 0.0 && x < 1.0))
            throw domain_error("fit_beta_mle: samples must lie strictly inside (0,1)");
        slog += std::log(x);
        slog1m += std::log1p(-x);
        m += x;
    }
    double n = static_cast<double>(samples.size());
    m /= n;
    double v = 0.0;
    for (double x : samples) v += (x - m) * (x - m);
    v /= (n - 1.0);
    slog /= n;
    slog1m /= n;

    beta_law est = beta_moment_start(m, v);
    double a = est.shape1, b = est.shape2;
    bool converged = false;
    for (int it = 0; it < 100; ++it) {
        double psi_ab = digamma(a + b);
        double ga = psi_ab - digamma(a) + slog;
        double gb = psi_ab - digamma(b) + slog1m;
        double tri_ab = trigamma(a + b);
        double haa = tri_ab - trigamma(a);
        double hbb = tri_ab - trigamma(b);
        double hab = tri_ab;
        double det = haa * hbb - hab * hab;
        if (std::abs(det) < 1e-300) break;
        double da = (hbb * ga - hab * gb) / det;
        double db = (haa * gb - hab * ga) / det;
        double step = 1.0;
        while ((a - step * da <= 0.0 || b - step * db <= 0.0) && step > 1e-8) step *= 0.5;
        a -= step * da;
        b -= step * db;
        if (std::sqrt(ga * ga + gb * gb) < 1e-8) {
            converged = true;
            break;
        }
    }
    // Re-check the exit gradient so callers can trust the flag.
    double psi_ab = digamma(a + b);
    double ga = psi_ab - digamma(a) + slog;
    double gb = psi_ab - digamma(b) + slog1m;
    converged = std::sqrt(ga * ga + gb * gb) < 1e-8;
    return beta_law{a, b, converged};
}

}  // namespace ccmar
