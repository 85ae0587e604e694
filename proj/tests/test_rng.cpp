#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "embasin/rng.hpp"

using namespace embasin;

TEST_CASE("identical seed and stream reproduce the sequence exactly") {
    Philox a(42, 7);
    Philox b(42, 7);
    for (int i = 0; i < 1000; ++i) {
        CHECK(a.next_u64() == b.next_u64());
    }
    Philox c(42, 7), d(42, 7);
    for (int i = 0; i < 1000; ++i) {
        CHECK(c.normal() == d.normal());
        CHECK(c.uniform() == d.uniform());
    }
}

TEST_CASE("different seeds and different streams decorrelate") {
    Philox a(42, 0);
    Philox b(43, 0);
    Philox c(42, 1);
    int same_ab = 0;
    int same_ac = 0;
    for (int i = 0; i < 1000; ++i) {
        const std::uint64_t va = a.next_u64();
        if (va == b.next_u64()) ++same_ab;
        if (va == c.next_u64()) ++same_ac;
    }
    // Matching 64-bit words by chance is essentially impossible.
    CHECK(same_ab == 0);
    CHECK(same_ac == 0);
}

TEST_CASE("uniform lands in the half-open unit interval") {
    Philox gen(7, 0);
    for (int i = 0; i < 100000; ++i) {
        const double u = gen.uniform();
        CHECK(u > 0.0);
        CHECK(u <= 1.0);
    }
}

TEST_CASE("rademacher produces only plus and minus one at even rates") {
    Philox gen(11, 0);
    long plus = 0;
    const long n = 100000;
    for (long i = 0; i < n; ++i) {
        const double v = gen.rademacher();
        CHECK((v == 1.0 || v == -1.0));
        if (v == 1.0) ++plus;
    }
    // 5-sigma band around n/2 with sigma = sqrt(n)/2.
    CHECK(std::abs(plus - n / 2.0) <= 5.0 * std::sqrt(n) / 2.0);
}

TEST_CASE("normal sample moments match the standard normal") {
    Philox gen(3, 0);
    const long n = 200000;
    double sum = 0.0, sumsq = 0.0, sum4 = 0.0;
    for (long i = 0; i < n; ++i) {
        const double z = gen.normal();
        sum += z;
        sumsq += z * z;
        sum4 += z * z * z * z;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    const double kurt = sum4 / n;
    // Monte Carlo SEs: mean 1/sqrt(n) ~ 0.0022, var sqrt(2/n) ~ 0.0032,
    // fourth moment sqrt(96/n) ~ 0.022. Gates sit at 5 SE.
    CHECK(std::abs(mean) <= 0.012);
    CHECK(std::abs(var - 1.0) <= 0.016);
    CHECK(std::abs(kurt - 3.0) <= 0.11);
}

TEST_CASE("normal spare is per-instance state") {
    // Drawing one normal buffers its Box-Muller partner; a fresh generator
    // with the same seed must replay from the start, not from the spare.
    Philox a(9, 2);
    const double first = a.normal();
    const double second = a.normal();
    Philox b(9, 2);
    CHECK(b.normal() == first);
    CHECK(b.normal() == second);
    CHECK(first != second);
}
