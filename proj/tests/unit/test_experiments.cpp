// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "arc/experiments.hpp"
#include "doctest.h"

using namespace arc;

namespace {

RunOptions opts(unsigned threads, std::uint64_t seed = 3) {
    RunOptions r;
    r.seed = seed;
    r.threads = threads;
    return r;
}

ContractionConfig small_contraction() {
    ContractionConfig c;
    c.ensemble = 64;
    c.horizon = 20.0;
    c.record_stride = 40;
    return c;
}

}  // namespace

TEST_CASE("model config factories") {
    const auto q = ModelConfig::quadratic_origin(3, 2.0).model();
    CHECK(q.dim() == 3);
    CHECK(q.constants().M == 2.0);
    auto bad = ModelConfig::cosine_sphere(2, 1.0, 1.0, 1.0, 4);
    bad.support_radius = 0.5;
    CHECK_THROWS(bad.model());
    const auto loss = ModelConfig::cosine_sphere(2, 1.0, 1.0, 1.0, 5).build(7);
    CHECK(loss.data->size() == 5);
    CHECK(loss.data->max_norm() == doctest::Approx(1.0));
}

TEST_CASE("contraction from coincident starts stays at zero") {
    auto c = small_contraction();
    c.y0 = c.x0;
    const auto rec = run_contraction(c, opts(1));
    for (double v : rec.measured.front().mean) CHECK(v == 0.0);
}

TEST_CASE("contraction record is independent of the thread count") {
    const auto c = small_contraction();
    const auto a = run_contraction(c, opts(1));
    const auto b = run_contraction(c, opts(3));
    CHECK(a.to_json() == b.to_json());
    CHECK(a.curves_csv() == b.curves_csv());
    CHECK(a.measured.front().mean.front() > 0.0);
    const auto other = run_contraction(c, opts(1, 4));
    CHECK(other.to_json() != a.to_json());
}

TEST_CASE("eta sweep validation and zero horizon") {
    EtaSweepConfig c;
    c.ensemble = 16;
    c.t_final = 0.0;
    c.eta_list = {0.2, 0.1, 0.05, 0.02};
    const auto rec = run_eta_sweep(c, opts(1));
    for (const auto& m : rec.measured) CHECK(m.mean.back() == 0.0);

    c.eta_list = {0.2, 0.1, 0.1, 0.02};
    CHECK_THROWS_WITH(run_eta_sweep(c, opts(1)), doctest::Contains("duplicate"));
    c.eta_list = {0.2, 0.1};
    CHECK_THROWS(run_eta_sweep(c, opts(1)));
    c.eta_list = {0.1, 0.05, 0.03};
    CHECK_THROWS_WITH(run_eta_sweep(c, opts(1)), doctest::Contains("decade"));
    c.eta_list = {0.9, 0.1, 0.01};
    CHECK_THROWS_WITH(run_eta_sweep(c, opts(1)), doctest::Contains("eta0"));
}

TEST_CASE("batch sweep validation") {
    BatchSweepConfig c;
    c.ensemble = 8;
    c.batch_list = {1, 2, 4};
    CHECK_THROWS_WITH(run_batch_sweep(c, opts(1)), doctest::Contains("B = n"));
    c.batch_list = {1, 2, 64, 65};
    CHECK_THROWS(run_batch_sweep(c, opts(1)));
}

TEST_CASE("batch sweep: B = n gives zero error") {
    BatchSweepConfig c;
    c.model = ModelConfig::cosine_sphere(2, 1.0, 1.0, 1.0, 8);
    c.batch_list = {1, 2, 4, 8};
    c.ensemble = 32;
    c.t_final = 0.5;
    const auto rec = run_batch_sweep(c, opts(1));
    CHECK(rec.measured.back().mean.back() == 0.0);
}

TEST_CASE("n sweep validation") {
    NSweepConfig c;
    c.replicas = 19;
    CHECK_THROWS_WITH(run_n_sweep(c, opts(1)), doctest::Contains("20"));
    c.replicas = 20;
    c.n_list = {16, 32};
    CHECK_THROWS(run_n_sweep(c, opts(1)));
}

TEST_CASE("eps convergence validation") {
    EpsConvergenceConfig c;
    c.eps_list = {0.4, 0.2, 0.3, 0.05};
    CHECK_THROWS_WITH(run_eps_convergence(c, opts(1)), doctest::Contains("decreasing"));
    c.eps_list = {0.4, 0.2, 0.1};
    CHECK_THROWS(run_eps_convergence(c, opts(1)));
}

TEST_CASE("gibbs gap on a shifted quadratic") {
    GibbsGapConfig c;
    c.ensemble = 2;
    c.horizon = 50.0;
    c.burn_in = 1.0;
    CHECK_THROWS_WITH(run_gibbs_gap(c, opts(1)), doctest::Contains("burn-in"));
    c.delta_list = {0.01, 0.01, 0.02};
    c.burn_in = 0.0;
    CHECK_THROWS(run_gibbs_gap(c, opts(1)));
    c.delta_list = {0.05, 0.1, 0.2};
    CHECK_THROWS_WITH(run_gibbs_gap(c, opts(1)), doctest::Contains("support radius"));
}

TEST_CASE("compare_marginals") {
    RandomStream rng(2);
    std::vector<double> a(2000);
    for (auto& v : a) v = rng.normal();
    const auto same = compare_marginals(a, a, 2);
    CHECK(same.worst_z == 0.0);
    CHECK(same.passed);
    auto shifted = a;
    for (std::size_t i = 0; i < shifted.size(); i += 2) shifted[i] += 1.0;
    CHECK_FALSE(compare_marginals(a, shifted, 2).passed);
    CHECK_THROWS(compare_marginals(std::vector<double>{1.0, 2.0, 3.0}, a, 2));
}

TEST_CASE("fit_decay_rate") {
    std::vector<double> t, m;
    for (int i = 0; i < 10; ++i) {
        t.push_back(i);
        m.push_back(2.0 * std::exp(-0.3 * i));
    }
    m.push_back(0.0);
    t.push_back(10.0);
    const auto f = fit_decay_rate(t, m);
    REQUIRE(f);
    CHECK(-f->slope == doctest::Approx(0.3));
}

TEST_CASE("minibatch checks all pass") {
    MinibatchSuiteConfig c;
    c.max_n = 6;
    c.model = ModelConfig::cosine_sphere(2, 1.0, 1.0, 1.0, 6);
    c.points = 10;
    const auto rec = run_minibatch_checks(c, opts(1));
    CHECK(rec.passed());
}

TEST_CASE("experiment ids and observables") {
    const auto& ids = experiment_ids();
    CHECK(std::find(ids.begin(), ids.end(), "contraction") != ids.end());
    CHECK(std::find(ids.begin(), ids.end(), "minibatch-variance") != ids.end());
    CHECK(parse_gibbs_observable(to_string(GibbsObservable::loss)) == GibbsObservable::loss);
    CHECK_THROWS(parse_gibbs_observable("energy"));
}

TEST_CASE("record JSON omits wall time") {
    auto rec = run_contraction(small_contraction(), opts(1));
    const auto before = rec.to_json();
    rec.wall_time = 123.0;
    CHECK(rec.to_json() == before);
    CHECK(before.find("wall") == std::string::npos);
}
