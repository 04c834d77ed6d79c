#include "catch_amalgamated.hpp"

#include "ccmar/rng.hpp"

#include <cmath>
#include <vector>

using namespace ccmar;

TEST_CASE("identical seeds replay the same stream") {
    rng_stream a = rng_stream::keyed(42, 7, rng_stage::generate);
    rng_stream b = rng_stream::keyed(42, 7, rng_stage::generate);
    for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("stage and replicate keys give distinct streams") {
    rng_stream base = rng_stream::keyed(42, 7, rng_stage::generate);
    rng_stream other_stage = rng_stream::keyed(42, 7, rng_stage::estimate);
    rng_stream other_rep = rng_stream::keyed(42, 8, rng_stage::generate);
    std::uint64_t x = base.next_u64();
    REQUIRE(x != other_stage.next_u64());
    REQUIRE(x != other_rep.next_u64());
}

TEST_CASE("uniform doubles stay in the half-open unit interval") {
    rng_stream rng(1234);
    double acc = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        double u = rng.u01();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        acc += u;
    }
    REQUIRE(std::abs(acc / n - 0.5) < 0.004);
}

TEST_CASE("normal moments match the target distribution") {
    rng_stream rng(99);
    const int n = 200000;
    double s1 = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        double x = rng.normal(1.5, 2.0);
        s1 += x;
        s2 += x * x;
    }
    double m = s1 / n;
    double v = s2 / n - m * m;
    REQUIRE(std::abs(m - 1.5) < 0.02);
    REQUIRE(std::abs(v - 4.0) < 0.08);
}

TEST_CASE("gamma moments match shape over rate") {
    rng_stream rng(7);
    const int n = 200000;
    double s1 = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        double x = rng.gamma(3.2, 2.0);
        s1 += x;
        s2 += x * x;
    }
    double m = s1 / n;
    double v = s2 / n - m * m;
    REQUIRE(std::abs(m - 1.6) < 0.01);   // mean = shape/rate
    REQUIRE(std::abs(v - 0.8) < 0.03);   // var = shape/rate^2
}

TEST_CASE("sub-unit gamma shapes are handled") {
    rng_stream rng(8);
    const int n = 200000;
    double s1 = 0.0;
    for (int i = 0; i < n; ++i) {
        double x = rng.gamma(0.5, 1.0);
        REQUIRE(x > 0.0);
        s1 += x;
    }
    REQUIRE(std::abs(s1 / n - 0.5) < 0.01);
}

TEST_CASE("truncated normal respects its bounds") {
    rng_stream rng(21);
    double s1 = 0.0;
    const int n = 50000;
    for (int i = 0; i < n; ++i) {
        double x = rng.truncated_normal(15.0, 8.0, -10.0, 40.0);
        REQUIRE(x >= -10.0);
        REQUIRE(x <= 40.0);
        s1 += x;
    }
    // Mild truncation at 3-plus standard deviations barely moves the mean.
    REQUIRE(std::abs(s1 / n - 15.0) < 0.25);
    REQUIRE_THROWS_AS(rng.truncated_normal(0.0, 1.0, 2.0, 2.0), domain_error);
}

TEST_CASE("bernoulli frequency tracks its probability") {
    rng_stream rng(5);
    int hits = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) hits += rng.bernoulli(0.3);
    REQUIRE(std::abs(hits / static_cast<double>(n) - 0.3) < 0.006);
}
