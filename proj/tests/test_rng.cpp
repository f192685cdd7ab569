#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "erseg/rng.hpp"

using erseg::Rng;

TEST_CASE("identical seeds give identical streams") {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("different seeds diverge") {
    Rng a(1), b(2);
    int same = 0;
    for (int i = 0; i < 64; ++i) same += a.next_u64() == b.next_u64();
    REQUIRE(same < 4);
}

TEST_CASE("uniform stays in [0,1)") {
    Rng r(7);
    for (int i = 0; i < 20000; ++i) {
        const double u = r.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
    }
}

TEST_CASE("bounded uniform respects endpoints") {
    Rng r(11);
    for (int i = 0; i < 5000; ++i) {
        const double u = r.uniform(-2.5, 3.5);
        REQUIRE(u >= -2.5);
        REQUIRE(u < 3.5);
    }
}

TEST_CASE("uniform_int covers the whole range without bias artifacts") {
    Rng r(3);
    std::vector<int> counts(7, 0);
    for (int i = 0; i < 7000; ++i) {
        const auto v = r.uniform_int(7);
        REQUIRE(v >= 0);
        REQUIRE(v < 7);
        ++counts[static_cast<size_t>(v)];
    }
    for (int c : counts) REQUIRE(c > 700);  // expectation 1000 each
}

TEST_CASE("normal matches standard moments loosely") {
    Rng r(5);
    double sum = 0.0, sq = 0.0;
    const int n = 40000;
    for (int i = 0; i < n; ++i) {
        const double x = r.normal();
        sum += x;
        sq += x * x;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    REQUIRE(std::abs(mean) < 0.02);
    REQUIRE(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("shuffle permutes deterministically") {
    std::vector<int> v(50);
    for (int i = 0; i < 50; ++i) v[static_cast<size_t>(i)] = i;
    auto w = v;
    Rng r1(9), r2(9);
    r1.shuffle(v);
    r2.shuffle(w);
    REQUIRE(v == w);
    auto sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 50; ++i) REQUIRE(sorted[static_cast<size_t>(i)] == i);
}

TEST_CASE("sample_indices picks k distinct in-range values") {
    Rng r(13);
    for (int trial = 0; trial < 100; ++trial) {
        const auto idx = r.sample_indices(9, 5);
        REQUIRE(idx.size() == 5);
        std::set<int> seen(idx.begin(), idx.end());
        REQUIRE(seen.size() == 5);
        for (int i : idx) {
            REQUIRE(i >= 0);
            REQUIRE(i < 9);
        }
    }
}

TEST_CASE("state round-trips mid-stream") {
    Rng r(21);
    for (int i = 0; i < 137; ++i) r.next_u64();
    const std::string snap = r.state();
    Rng clone;
    clone.restore(snap);
    REQUIRE(clone == r);
    for (int i = 0; i < 500; ++i) REQUIRE(clone.next_u64() == r.next_u64());
}

TEST_CASE("child streams with distinct tags are independent") {
    Rng a = Rng::child(1, 1);
    Rng b = Rng::child(1, 2);
    Rng a2 = Rng::child(1, 1);
    REQUIRE(a == a2);
    int same = 0;
    for (int i = 0; i < 64; ++i) same += a.next_u64() == b.next_u64();
    REQUIRE(same < 4);
}
