#pragma once

#include <cmath>
#include <cstdint>

#include "ccmar/error.hpp"

namespace ccmar {

// Counter-based splittable generator built on the splitmix64 finalizer.
// Streams are keyed by (master seed, replicate index, stage), so any
// replicate can be regenerated in isolation and results cannot depend on
// thread scheduling or worker count.

inline constexpr std::uint64_t golden_gamma = 0x9E3779B97F4A7C15ull;

inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

enum class rng_stage : std::uint64_t {
    generate = 1,
    estimate = 2,
    impute = 3,
    crossfit = 4,
    lasso_folds = 5,
    mc_nodes = 6,
    truth = 7,
};

inline std::uint64_t stream_seed(std::uint64_t master, std::uint64_t replicate, rng_stage stage) {
    std::uint64_t s = mix64(master + golden_gamma);
    s = mix64(s ^ (replicate * 0xD1B54A32D192ED03ull + golden_gamma));
    s = mix64(s ^ (static_cast<std::uint64_t>(stage) * 0x8CB92BA72F3D8DD7ull + golden_gamma));
    return s;
}

class rng_stream {
public:
    explicit rng_stream(std::uint64_t seed) : state_(seed) {}

    static rng_stream keyed(std::uint64_t master, std::uint64_t replicate, rng_stage stage) {
        return rng_stream(stream_seed(master, replicate, stage));
    }

    std::uint64_t next_u64() {
        state_ += golden_gamma;
        return mix64(state_);
    }

    // Uniform on [0,1) with 53 random bits.
    double u01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    int bernoulli(double p) { return u01() < p ? 1 : 0; }

    double normal(double m = 0.0, double s = 1.0) {
        // Box-Muller; the second deviate is cached.
        if (has_spare_) {
            has_spare_ = false;
            return m + s * spare_;
        }
        double u1 = 1.0 - u01();  // (0,1], keeps the log finite
        double u2 = u01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return m + s * r * std::cos(theta);
    }

    double truncated_normal(double m, double s, double lo, double hi) {
        if (!(lo < hi)) throw domain_error("truncated_normal: empty interval");
        for (;;) {
            double x = normal(m, s);
            if (x >= lo && x <= hi) return x;
        }
    }

    // Marsaglia-Tsang squeeze; sub-unit shapes are boosted through
    // Gamma(shape+1) and a power of a uniform.
    double gamma(double shape, double rate = 1.0) {
        if (!(shape > 0.0 && rate > 0.0)) throw domain_error("gamma: parameters must be positive");
        if (shape < 1.0) {
            double u = 1.0 - u01();
            return gamma(shape + 1.0, rate) * std::pow(u, 1.0 / shape);
        }
        double d = shape - 1.0 / 3.0;
        double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = normal();
            double t = 1.0 + c * x;
            if (t <= 0.0) continue;
            double v = t * t * t;
            double u = 1.0 - u01();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v / rate;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v / rate;
        }
    }

    double beta(double a, double b) {
        double x = gamma(a);
        double y = gamma(b);
        return x / (x + y);
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace ccmar
