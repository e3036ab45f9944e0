// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cmath>
#include <numbers>

#include "arc/numeric.hpp"
#include "doctest.h"

using namespace arc;

TEST_CASE("adaptive simpson on closed forms") {
    CHECK(adaptive_simpson([](double x) { return std::exp(x); }, 0.0, 1.0, 1e-13) ==
          doctest::Approx(std::numbers::e - 1.0).epsilon(1e-12));
    CHECK(adaptive_simpson([](double x) { return std::sin(x); }, 0.0, std::numbers::pi, 1e-13) ==
          doctest::Approx(2.0).epsilon(1e-12));
    CHECK(adaptive_simpson([](double) { return 1.0; }, 2.0, 2.0, 1e-12) == 0.0);
}

TEST_CASE("moments merge matches a single pass") {
    Moments all, left, right;
    for (int i = 0; i < 100; ++i) {
        const double x = std::sin(i * 0.7) * 3.0 + i * 0.01;
        all.add(x);
        (i < 37 ? left : right).add(x);
    }
    left.merge(right);
    CHECK(left.count == all.count);
    CHECK(left.mean == doctest::Approx(all.mean).epsilon(1e-14));
    CHECK(left.variance() == doctest::Approx(all.variance()).epsilon(1e-12));
}

TEST_CASE("two values 0 and 2 give mean 1 and sample variance 2") {
    Moments m;
    m.add(0.0);
    m.add(2.0);
    CHECK(m.mean == 1.0);
    CHECK(m.variance() == 2.0);
}

TEST_CASE("pairwise sum is exact on integers and independent of thread count") {
    std::vector<double> v(1000);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
    CHECK(pairwise_sum(v) == 499500.0);
}

TEST_CASE("format_real round-trips") {
    for (double x : {0.1, -1e-300, 1.0 / 3.0, 6.02214076e23}) {
        CHECK(std::stod(format_real(x)) == x);
    }
    CHECK(format_real(1.0) == "1.0000000000000000e+00");
}

TEST_CASE("parallel_for visits every index once and rethrows") {
    std::vector<std::atomic<int>> hits(257);
    parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i]++; });
    for (auto& h : hits) CHECK(h.load() == 1);
    CHECK_THROWS(parallel_for(10, 3, [](std::size_t i) {
        if (i == 5) throw std::runtime_error("boom");
    }));
}
