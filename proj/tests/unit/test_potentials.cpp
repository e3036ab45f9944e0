// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <sstream>

#include "arc/potentials.hpp"
#include "doctest.h"

using namespace arc;

namespace {

// Direct transcription of the family formulas.
double cosine_formula(double m0, double a, const Vector& w, const Vector& z) {
    double ww = 0.0, wz = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        ww += w[i] * w[i];
        wz += w[i] * z[i];
    }
    return 0.5 * m0 * ww + a * (1.0 + std::cos(wz));
}

}  // namespace

TEST_CASE("loss values at simple points") {
    const auto cq = PotentialModel::cosine_quadratic(2, 1.0, 0.7, 1.0);
    CHECK(eval_loss(cq, Vector{0.0, 0.0}, Vector{0.3, -0.4}) == doctest::Approx(1.4));
    const auto pure = PotentialModel::cosine_quadratic(2, 2.0, 0.0, 1.0);
    CHECK(eval_loss(pure, Vector{0.6, 0.8}, Vector{0.0, 1.0}) == doctest::Approx(1.0));
}

TEST_CASE("loss matches the formula and gradient matches central differences") {
    const double m0 = 1.3, a = 0.8;
    const auto model = PotentialModel::cosine_quadratic(3, m0, a, 2.0);
    RandomStream rng(11);
    for (int k = 0; k < 50; ++k) {
        Vector w(3), z(3);
        for (auto& v : w) v = 4.0 * rng.uniform() - 2.0;
        for (auto& v : z) v = 2.0 * rng.uniform() - 1.0;
        CHECK(eval_loss(model, w, z) == doctest::Approx(cosine_formula(m0, a, w, z)).epsilon(1e-14));
        const auto g = grad_loss(model, w, z);
        for (std::size_t i = 0; i < 3; ++i) {
            const double h = 1e-6;
            Vector wp = w, wm = w;
            wp[i] += h;
            wm[i] -= h;
            const double fd = (cosine_formula(m0, a, wp, z) - cosine_formula(m0, a, wm, z)) / (2 * h);
            CHECK(g[i] == doctest::Approx(fd).epsilon(1e-6).scale(1.0));
        }
    }
}

TEST_CASE("gradient at the origin vanishes for cosine-quadratic; pure quadratic is linear") {
    const auto cq = PotentialModel::cosine_quadratic(2, 1.0, 0.5, 1.0);
    const auto g0 = grad_loss(cq, Vector{0.0, 0.0}, Vector{0.6, 0.8});
    CHECK(g0[0] == 0.0);
    CHECK(g0[1] == 0.0);
    const auto pure = PotentialModel::cosine_quadratic(2, 1.5, 0.0, 1.0);
    const auto g = grad_loss(pure, Vector{2.0, -1.0}, Vector{0.6, 0.8});
    CHECK(g[0] == doctest::Approx(3.0));
    CHECK(g[1] == doctest::Approx(-1.5));
}

TEST_CASE("empirical and mini-batch gradients") {
    const auto model = PotentialModel::cosine_quadratic(2, 1.0, 0.9, 1.0);
    const auto data = Dataset::from_samples({{0.6, 0.8}, {1.0, 0.0}, {0.0, -1.0}});
    const Vector w{0.4, -1.2};
    const auto g = empirical_grad(model, w, data);
    for (std::size_t i = 0; i < 2; ++i) {
        const double explicit_mean = (grad_loss(model, w, data.sample(0))[i] +
                                      grad_loss(model, w, data.sample(1))[i] +
                                      grad_loss(model, w, data.sample(2))[i]) / 3.0;
        CHECK(g[i] == doctest::Approx(explicit_mean).epsilon(1e-15));
    }
    const auto full = minibatch_grad(model, w, data, MiniBatchIndex{{0, 1, 2}});
    CHECK(full == g);
    const auto single = minibatch_grad(model, w, data, MiniBatchIndex{{1}});
    CHECK(single == grad_loss(model, w, data.sample(1)));

    const auto one = Dataset::from_samples({{0.6, 0.8}});
    CHECK(empirical_grad(model, w, one) == grad_loss(model, w, one.sample(0)));
}

TEST_CASE("mini-batch mean of per-sample gradients (0, 0, 3), batch {0, 2}") {
    // Quadratic at w = 0 has gradient -z.
    const auto model = PotentialModel::quadratic(1, 1.0, 3.0);
    const auto data = Dataset::from_samples({{0.0}, {0.0}, {-3.0}});
    const auto g = minibatch_grad(model, Vector{0.0}, data, MiniBatchIndex{{0, 2}});
    CHECK(g[0] == doctest::Approx(1.5));
}

TEST_CASE("sample_minibatch") {
    RandomStream rng(3);
    const auto full = sample_minibatch(5, 5, rng);
    CHECK(full.indices == std::vector<std::size_t>{0, 1, 2, 3, 4});
    int zeros = 0;
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) zeros += sample_minibatch(2, 1, rng).indices[0] == 0;
    CHECK(std::abs(zeros / double(draws) - 0.5) < 0.01);
    RandomStream a(77), b(77);
    CHECK(sample_minibatch(20, 7, a).indices == sample_minibatch(20, 7, b).indices);
    const auto batch = sample_minibatch(20, 7, a);
    CHECK(std::is_sorted(batch.indices.begin(), batch.indices.end()));
    CHECK(std::adjacent_find(batch.indices.begin(), batch.indices.end()) == batch.indices.end());
}

TEST_CASE("certified constants") {
    RandomStream rng(1);
    const auto exact = PotentialModel::quadratic(2, 1.0, 0.0);
    CHECK(certify_constants(exact, DistributionSpec::origin(2), 2000, rng).passed());

    const auto cq = PotentialModel::cosine_quadratic(2, 1.0, 1.0, 1.0);
    const auto law = DistributionSpec::uniform_sphere(2, 1.0);
    CHECK(certify_constants(cq, law, 5000, rng).passed());
    auto k = cq.constants();
    // Analytic Lipschitz constant is m0 + a R^2 = 2; claim 1.2.
    k.M = 1.2;
    const auto report = certify_constants(cq.with_constants(k), law, 5000, rng);
    CHECK_FALSE(report.passed());
    CHECK(report.smoothness_margin < 0.0);
    CHECK_THROWS(certify_constants(cq, law, 0, rng));
}

TEST_CASE("generate_dataset") {
    const auto sphere = generate_dataset(DistributionSpec::uniform_sphere(3, 2.5), 200, 4);
    CHECK(sphere.size() == 200);
    for (std::size_t i = 0; i < sphere.size(); ++i) CHECK(std::abs(norm(sphere.sample(i)) - 2.5) < 1e-12);
    CHECK(generate_dataset(DistributionSpec::gaussian(2), 1, 4).size() == 1);

    const auto again = generate_dataset(DistributionSpec::uniform_sphere(3, 2.5), 200, 4);
    CHECK(again.values() == sphere.values());

    const std::size_t n = 100000;
    const auto g = generate_dataset(DistributionSpec::gaussian(2), n, 8);
    for (std::size_t j = 0; j < 2; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += g.sample(i)[j];
        CHECK(std::abs(s / n) < 3.0 / std::sqrt(double(n)));
    }
}

TEST_CASE("dataset csv and binary round-trip") {
    const auto d = generate_dataset(DistributionSpec::gaussian(2), 17, 2);
    std::stringstream csv, bin;
    write_dataset_csv(d, csv);
    CHECK(read_dataset_csv(csv).values() == d.values());
    write_dataset_binary(d, bin);
    CHECK(read_dataset_binary(bin).values() == d.values());
}
