#include <algorithm>
#include <numeric>

#include <catch2/catch_amalgamated.hpp>

#include "cdb/rng.hpp"

using cdb::Rng;

TEST_CASE("golden sequence for seed 42") {
    // frozen from tests/compute_expected_values.py
    Rng rng(42);
    REQUIRE(rng.next_u64() == 0x15780b2e0c2ec716ULL);
    REQUIRE(rng.next_u64() == 0x6104d9866d113a7eULL);
    REQUIRE(rng.next_u64() == 0xae17533239e499a1ULL);
    REQUIRE(rng.next_u64() == 0xecb8ad4703b360a1ULL);

    Rng again(42);
    REQUIRE(again.next_uniform() == 0.083862971059882163);
    REQUIRE(again.next_uniform() == 0.37898025066266861);
    REQUIRE(again.next_uniform() == 0.68004341102813937);
    REQUIRE(again.next_uniform() == 0.92469294532538759);
}

TEST_CASE("same seed reproduces the stream") {
    Rng a(123456789);
    Rng b(123456789);
    for (int i = 0; i < 1000; ++i) REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("uniform draws stay in [0,1)") {
    Rng rng(3);
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.next_uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
    }
}

TEST_CASE("zero-variance normal returns the mean exactly") {
    Rng rng(9);
    REQUIRE(rng.next_normal(5.0, 0.0) == 5.0);
    REQUIRE(rng.next_normal(5.0, 0.0) == 5.0);  // cached second draw path
    REQUIRE(rng.next_normal(-2.5, 0.0) == -2.5);
}

TEST_CASE("normal stream is deterministic") {
    Rng a(77);
    Rng b(77);
    for (int i = 0; i < 100; ++i) REQUIRE(a.next_normal(0.0, 1.0) == b.next_normal(0.0, 1.0));
}

TEST_CASE("shuffle of one element") {
    Rng rng(5);
    REQUIRE(rng.permutation(1) == std::vector<std::size_t>{0});
}

TEST_CASE("permutation really permutes") {
    Rng rng(6);
    for (std::size_t n : {2u, 5u, 17u, 100u}) {
        auto p = rng.permutation(n);
        std::sort(p.begin(), p.end());
        std::vector<std::size_t> expected(n);
        std::iota(expected.begin(), expected.end(), 0);
        REQUIRE(p == expected);
    }
}

TEST_CASE("jumped streams are disjoint from the parent") {
    Rng parent(42);
    Rng child1 = parent.nth_stream(1);
    Rng child2 = parent.nth_stream(2);
    std::vector<std::uint64_t> p, c1, c2;
    for (int i = 0; i < 50; ++i) {
        p.push_back(parent.next_u64());
        c1.push_back(child1.next_u64());
        c2.push_back(child2.next_u64());
    }
    REQUIRE(p != c1);
    REQUIRE(p != c2);
    REQUIRE(c1 != c2);
}

TEST_CASE("nth_stream is reproducible and independent of parent draws") {
    Rng a(42);
    a.next_u64();
    a.next_u64();
    Rng b(42);
    Rng sa = a.nth_stream(3);
    Rng sb = b.nth_stream(3);
    for (int i = 0; i < 20; ++i) REQUIRE(sa.next_u64() == sb.next_u64());
}
