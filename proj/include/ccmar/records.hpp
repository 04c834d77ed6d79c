#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ccmar/error.hpp"
#include "ccmar/rng.hpp"

namespace ccmar {

// One subject's coarsened observation. The always-observed covariates are
// l1 (binary), l2 (continuous, centered) and l3 (binary); a is the binary
// treatment, y the outcome and s the complete-case indicator. The partially
// missing confounders l4 (and optionally l5) are present exactly when s = 1,
// or after imputation.
struct coarsened_record {
    double l1 = 0.0;
    double l2 = 0.0;
    double l3 = 0.0;
    int a = 0;
    double y = 0.0;
    int s = 1;
    std::optional<double> l4;
    std::optional<double> l5;
};

// Content hash used for row-order-invariant fold assignment. Two records
// with identical field values always hash identically.
inline std::uint64_t record_hash(const coarsened_record& r, std::uint64_t salt) {
    auto mix_bits = [](std::uint64_t h, std::uint64_t v) {
        return mix64(h ^ (v + golden_gamma + (h << 6) + (h >> 2)));
    };
    auto dbl = [](double x) {
        std::uint64_t u;
        static_assert(sizeof(u) == sizeof(x));
        __builtin_memcpy(&u, &x, sizeof(u));
        return u;
    };
    std::uint64_t h = mix64(salt + golden_gamma);
    h = mix_bits(h, dbl(r.l1));
    h = mix_bits(h, dbl(r.l2));
    h = mix_bits(h, dbl(r.l3));
    h = mix_bits(h, static_cast<std::uint64_t>(r.a));
    h = mix_bits(h, dbl(r.y));
    h = mix_bits(h, static_cast<std::uint64_t>(r.s));
    h = mix_bits(h, r.l4 ? dbl(*r.l4) : 0x5851F42D4C957F2Dull);
    h = mix_bits(h, r.l5 ? dbl(*r.l5) : 0x14057B7EF767814Full);
    return h;
}

inline std::size_t count_complete(const std::vector<coarsened_record>& data) {
    std::size_t k = 0;
    for (const auto& r : data) k += (r.s == 1);
    return k;
}

}  // namespace ccmar
