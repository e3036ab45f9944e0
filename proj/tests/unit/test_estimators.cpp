// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <vector>

#include "arc/eberle.hpp"
#include "arc/estimators.hpp"
#include "doctest.h"

using namespace arc;

TEST_CASE("mc_expectation") {
    std::vector<std::vector<double>> constant(50, std::vector<double>{1.0, 1.0});
    const auto c = mc_expectation(constant, {0.0, 1.0});
    CHECK(c.mean[1] == 1.0);
    CHECK(c.variance[1] == 0.0);
    CHECK(c.ci_halfwidth[1] == 0.0);
    CHECK(c.n_trajectories == 50);

    std::vector<std::vector<double>> two{{0.0}, {2.0}};
    const auto t = mc_expectation(two, {0.0});
    CHECK(t.mean[0] == 1.0);
    CHECK(t.variance[0] == 2.0);
    CHECK(t.ci_halfwidth[0] == doctest::Approx(1.96));

    RandomStream rng(5);
    std::vector<std::vector<double>> normal(100000);
    for (auto& v : normal) v = {rng.normal()};
    const auto n = mc_expectation(normal, {0.0});
    CHECK(std::abs(n.mean[0]) < 3.0 / std::sqrt(1e5));
    CHECK(n.variance[0] == doctest::Approx(1.0).epsilon(0.02));
    CHECK(ci_halfwidth(4.0, 16.0) == doctest::Approx(0.98));
}

TEST_CASE("ensemble accumulator is chunk-order deterministic") {
    auto fill = [](std::size_t b, std::size_t e, EnsembleAccumulator& acc) {
        for (std::size_t i = b; i < e; ++i) acc.add(0, std::sin(static_cast<double>(i)));
    };
    const auto a = run_ensemble(1000, 1, 1, fill, 64);
    const auto b = run_ensemble(1000, 1, 3, fill, 64);
    CHECK(a[0].mean == b[0].mean);
    CHECK(a[0].m2 == b[0].m2);
    CHECK(a[0].count == 1000.0);
}

TEST_CASE("fit_loglog_slope") {
    const std::vector<double> xs{1, 2, 4, 8, 16};
    const auto lin = fit_loglog_slope(xs, xs);
    CHECK(lin.slope == doctest::Approx(1.0));
    CHECK(lin.intercept == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(lin.r_squared == doctest::Approx(1.0));
    CHECK(lin.points == 5);

    std::vector<double> ys;
    for (double x : xs) ys.push_back(3.0 * std::sqrt(x));
    const auto sq = fit_loglog_slope(xs, ys);
    CHECK(sq.slope == doctest::Approx(0.5));
    CHECK(sq.intercept == doctest::Approx(std::log(3.0)));

    RandomStream rng(3);
    std::vector<double> xn, yn;
    for (int k = 0; k < 40; ++k) {
        const double x = std::pow(2.0, 0.25 * k);
        xn.push_back(x);
        yn.push_back(std::sqrt(x) * std::exp(0.05 * rng.normal()));
    }
    const auto noisy = fit_loglog_slope(xn, yn);
    CHECK(std::abs(noisy.slope - 0.5) < 4.0 * noisy.stderr_slope);
    CHECK(noisy.stderr_slope > 0.0);

    CHECK_THROWS(fit_loglog_slope(std::vector<double>{1, 2}, std::vector<double>{1, 2}));
    CHECK_THROWS(fit_loglog_slope(std::vector<double>{1, 2, 3}, std::vector<double>{1, 0, 2}));
}

TEST_CASE("binomial") {
    CHECK(binomial(5, 2) == 10.0);
    CHECK(binomial(12, 6) == 924.0);
    CHECK(binomial(3, 0) == 1.0);
    CHECK(binomial(3, 4) == 0.0);
}

TEST_CASE("minibatch variance") {
    const auto model = PotentialModel::quadratic(1, 1.0, 3.0);
    const auto data = Dataset::from_samples({{0.0}, {0.0}, {-3.0}});
    const Vector w{0.0};
    const auto full = check_minibatch_variance(model, data, w, 3);
    CHECK(full.closed_form == 0.0);
    CHECK(full.bound == 0.0);
    CHECK(full.passed);
    REQUIRE(full.enumerated);
    CHECK(*full.enumerated == 0.0);

    // Per-sample gradients (0, 0, 3): population variance 2 times (n - B)/(B (n - 1)) = 1/4.
    const auto two = check_minibatch_variance(model, data, w, 2);
    REQUIRE(two.enumerated);
    CHECK(*two.enumerated == doctest::Approx(0.5));
    CHECK(two.closed_form == doctest::Approx(0.5));
    CHECK(two.agree);
    CHECK(two.passed);
    CHECK(two.bound >= two.closed_form);

    // Direct enumeration of the three subsets of size 2.
    const auto gbar = empirical_grad(model, w, data);
    double direct = 0.0;
    for (auto idx : std::vector<std::vector<std::size_t>>{{0, 1}, {0, 2}, {1, 2}}) {
        const auto g = minibatch_grad(model, w, data, MiniBatchIndex{idx});
        direct += (g[0] - gbar[0]) * (g[0] - gbar[0]) / 3.0;
    }
    CHECK(*two.enumerated == doctest::Approx(direct));
}

TEST_CASE("moment bound on the Ornstein-Uhlenbeck process") {
    const double m0 = 2.0, y0 = 1.0, beta = 1.0;
    const EmpiricalLoss loss(PotentialModel::quadratic(1, m0, 1.0),
                             generate_dataset(DistributionSpec::origin(1), 1, 0));
    const auto drv = DriverSpec::continuous(loss, beta, 1e-3);
    MomentCheckOptions opt;
    opt.ensemble = 4000;
    opt.seed = 11;
    opt.threads = 1;
    const auto rep = check_moment_bound(drv, 2.0, TimeGrid{2.0, 1e-3, 100}, Vector{y0}, opt);
    CHECK(rep.passed);
    CHECK(rep.violations == 0);
    CHECK(rep.moment.mean.front() == y0 * y0);
    for (std::size_t i = 0; i < rep.moment.size(); ++i) {
        const double t = rep.moment.times[i];
        // Exact OU second moment.
        const double exact = std::exp(-2 * m0 * t) * y0 * y0 + (1 - std::exp(-2 * m0 * t)) / (m0 * beta);
        CHECK(exact <= rep.bound[i] + 1e-12);
        CHECK(std::abs(rep.moment.mean[i] - exact) <= 4.0 * rep.moment.ci_halfwidth[i] / 1.96 + 1e-3);
    }
}

TEST_CASE("one-step bound") {
    const EmpiricalLoss loss(PotentialModel::cosine_quadratic(2, 1.0, 1.0, 1.0),
                             generate_dataset(DistributionSpec::uniform_sphere(2, 1.0), 8, 2));
    const auto drv = DriverSpec::discretized(loss, 1.0, 0.05);
    MomentCheckOptions opt;
    opt.ensemble = 2000;
    opt.threads = 1;
    const auto on_grid = check_one_step_bound(drv, 1.0, Vector{1.0, 1.0}, opt);
    CHECK(on_grid.lhs == 0.0);
    CHECK(on_grid.passed);
    const auto mid = check_one_step_bound(drv, 1.025, Vector{1.0, 1.0}, opt);
    CHECK(mid.lhs > 0.0);
    CHECK(mid.passed);
}
