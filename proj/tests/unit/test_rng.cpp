// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <set>
#include <vector>

#include "arc/rng.hpp"
#include "doctest.h"

using namespace arc;

TEST_CASE("philox4x32-10 known-answer vectors") {
    // Random123 kat_vectors.
    const auto zero = philox4x32({0, 0, 0, 0}, {0, 0});
    CHECK(zero == std::array<std::uint32_t, 4>{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
    const auto pi = philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                               {0xa4093822u, 0x299f31d0u});
    CHECK(pi == std::array<std::uint32_t, 4>{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("stream ids depend on every argument") {
    std::set<std::uint64_t> ids;
    for (std::uint64_t seed : {1u, 2u}) {
        for (const char* tag : {"a", "b"}) {
            for (std::uint64_t i : {0u, 1u}) {
                for (auto p : {StreamPurpose::noise, StreamPurpose::batch_x}) {
                    ids.insert(derive_stream_id(seed, tag, i, p));
                }
            }
        }
    }
    CHECK(ids.size() == 16);
    CHECK(derive_stream_id(7, "x", 3, StreamPurpose::noise) ==
          derive_stream_id(7, "x", 3, StreamPurpose::noise));
}

TEST_CASE("jump_to reproduces the sequence from any block") {
    RandomStream a(42);
    std::vector<std::uint64_t> seq;
    for (int i = 0; i < 40; ++i) seq.push_back(a.next_u64());
    RandomStream b(42);
    b.jump_to(4);
    // Each block holds two u64 draws.
    for (int i = 8; i < 40; ++i) CHECK(b.next_u64() == seq[i]);
}

TEST_CASE("uniform lies in (0, 1) and normal has unit moments") {
    RandomStream rng(9);
    double sum = 0.0, sum2 = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        REQUIRE(u > 0.0);
        REQUIRE(u < 1.0);
        const double z = rng.normal();
        sum += z;
        sum2 += z * z;
    }
    CHECK(std::abs(sum / n) < 3.0 / std::sqrt(n));
    // Var of z^2 is 2.
    CHECK(std::abs(sum2 / n - 1.0) < 3.0 * std::sqrt(2.0 / n));
}

TEST_CASE("uniform_index is unbiased on a small range") {
    RandomStream rng(5);
    std::array<int, 3> counts{};
    const int n = 90000;
    for (int i = 0; i < n; ++i) ++counts[rng.uniform_index(3)];
    for (int c : counts) CHECK(std::abs(c / double(n) - 1.0 / 3.0) < 0.01);
}
