#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <set>
#include <vector>

#include "hutk/rng.hpp"

using hutk::Rng;

TEST_CASE("identical seeds give identical streams, different seeds diverge") {
    Rng a(123);
    Rng b(123);
    Rng c(124);
    bool all_equal = true;
    bool any_differ = false;
    for (int i = 0; i < 1000; ++i) {
        const uint64_t va = a.next_u64();
        all_equal = all_equal && va == b.next_u64();
        any_differ = any_differ || va != c.next_u64();
    }
    CHECK(all_equal);
    CHECK(any_differ);
}

TEST_CASE("uniform doubles stay in the half-open unit interval") {
    Rng r(7);
    double lo = 1.0;
    double hi = 0.0;
    double sum = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double x = r.uniform();
        CHECK(x >= 0.0);
        CHECK(x < 1.0);
        lo = std::min(lo, x);
        hi = std::max(hi, x);
        sum += x;
    }
    // Mean of 20k draws concentrates around 1/2; the extremes approach the
    // interval edges.
    CHECK(sum / n == doctest::Approx(0.5).epsilon(0.02));
    CHECK(lo < 0.01);
    CHECK(hi > 0.99);
}

TEST_CASE("ranged uniform respects its endpoints") {
    Rng r(8);
    for (int i = 0; i < 1000; ++i) {
        const double x = r.uniform(-2.5, 4.0);
        CHECK(x >= -2.5);
        CHECK(x < 4.0);
    }
}

TEST_CASE("uniform integers cover exactly the requested range") {
    Rng r(9);
    std::vector<int> counts(10, 0);
    const int n = 50000;
    for (int i = 0; i < n; ++i) {
        const uint64_t x = r.uniform_int(10);
        REQUIRE(x < 10);
        ++counts[static_cast<size_t>(x)];
    }
    for (const int c : counts) {
        // Each bucket expects 5000 hits; a 10-sigma band is about +-700.
        CHECK(c > 4300);
        CHECK(c < 5700);
    }
    CHECK(r.uniform_int(1) == 0);
    CHECK(r.uniform_int(0) == 0);
}

TEST_CASE("gaussian draws have unit scale and both signs") {
    Rng r(10);
    const int n = 20000;
    double sum = 0.0;
    double sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = r.gaussian();
        sum += x;
        sumsq += x * x;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    CHECK(std::abs(mean) < 0.03);
    CHECK(var == doctest::Approx(1.0).epsilon(0.05));
    CHECK(r.gaussian(100.0, 0.0) == 100.0);
}

TEST_CASE("shuffle permutes without losing or inventing elements") {
    Rng r(11);
    std::vector<int> v(50);
    std::iota(v.begin(), v.end(), 0);
    const std::vector<int> original = v;
    r.shuffle(v);
    CHECK(v != original);  // 50! orderings; a fixed point here means a bug
    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == original);

    // Same seed, same permutation.
    Rng r2(11);
    std::vector<int> w(50);
    std::iota(w.begin(), w.end(), 0);
    r2.shuffle(w);
    CHECK(w == v);
}

TEST_CASE("the raw stream is pinned to the reference engine") {
    // The generator is std::mt19937_64 by contract; if the underlying engine
    // or seeding ever changed, every artifact in the pipeline would shift.
    std::mt19937_64 reference(42);
    Rng r(42);
    for (int i = 0; i < 10; ++i) {
        CHECK(r.next_u64() == reference());
    }
}
