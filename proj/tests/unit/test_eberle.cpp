// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "arc/eberle.hpp"
#include "doctest.h"

using namespace arc;

namespace {

// Cumulative trapezoid tables on [0, R]: Phi, then I(r) = int_0^r Phi/phi.
struct Tables {
    double h = 0.0;
    std::vector<double> r, phi, Phi, I;
};

Tables riemann_tables(double R, double M, double beta, double Q, std::size_t panels) {
    Tables t;
    t.h = R / static_cast<double>(panels);
    for (std::size_t i = 0; i <= panels; ++i) {
        const double r = t.h * static_cast<double>(i);
        t.r.push_back(r);
        t.phi.push_back(std::exp(-M * beta / 8.0 * r * r - 2.0 * Q * r));
    }
    t.Phi.assign(panels + 1, 0.0);
    t.I.assign(panels + 1, 0.0);
    for (std::size_t i = 1; i <= panels; ++i) {
        t.Phi[i] = t.Phi[i - 1] + 0.5 * t.h * (t.phi[i - 1] + t.phi[i]);
        t.I[i] = t.I[i - 1] + 0.5 * t.h * (t.Phi[i - 1] / t.phi[i - 1] + t.Phi[i] / t.phi[i]);
    }
    return t;
}

double interp(const Tables& t, const std::vector<double>& v, double r) {
    const auto i = std::min<std::size_t>(static_cast<std::size_t>(r / t.h), t.r.size() - 2);
    const double w = (r - t.r[i]) / t.h;
    return (1.0 - w) * v[i] + w * v[i + 1];
}

}  // namespace

TEST_CASE("lyapunov constants") {
    CHECK(lyapunov_constants(2.0, 1.0, 1.0, 1.0, 1).lambda == 1.0);
    const auto k = lyapunov_constants(2.0, 1.0, 1.0, 1.0, 2);
    CHECK(k.L == doctest::Approx(std::sqrt(6.0)));
    CHECK(k.C == doctest::Approx(6.0));
    const auto limit = lyapunov_constants(2.0, 2.0, 1e-12, 1e12, 1);
    CHECK(limit.L < 1e-5);
    CHECK(limit.C < 1e-10);
    CHECK_THROWS(lyapunov_constants(1.5, 1.0, 1.0, 1.0, 1));
}

TEST_CASE("region radii") {
    const auto r = region_radii(1.0, 1.0);
    CHECK(r.r1 == 0.0);
    CHECK(r.r2 == doctest::Approx(std::sqrt(12.0)));
    // sup ||x - y|| over ||x||^2 + ||y||^2 <= 6 by random search in d = 1..3.
    RandomStream rng(2);
    for (std::size_t d = 1; d <= 3; ++d) {
        double best = 0.0;
        for (int k = 0; k < 20000; ++k) {
            Vector x(d), y(d);
            double s = 0.0;
            for (auto& v : x) s += (v = rng.normal()) * v;
            for (auto& v : y) s += (v = rng.normal()) * v;
            const double scale = std::sqrt(6.0 / s);
            for (auto& v : x) v *= scale;
            for (auto& v : y) v *= scale;
            best = std::max(best, distance(x, y));
        }
        CHECK(best <= r.r2 + 1e-12);
        CHECK(best > 0.98 * r.r2);
    }
    for (double C : {0.5, 2.0, 30.0}) {
        for (double lam : {0.1, 1.0, 3.0}) {
            const auto rr = region_radii(C, lam);
            CHECK(rr.r1 <= rr.r2);
        }
    }
}

TEST_CASE("kappa and Q") {
    CHECK(choose_kappa(2.0, 1.0, 7.0, 0.0) == 0.5);
    const double e = std::exp(1.0);
    CHECK(choose_kappa(1.0, 1.0, 1.0, 1.0) ==
          doctest::Approx(std::min(0.5, 2.0 * std::exp(-0.125) / (e * e - 3.0))).epsilon(1e-14));
    const double big = choose_kappa(2.0, 1.0, 7.0, 40.0);
    CHECK(big > 0.0);
    CHECK(big < 1e-100);
    CHECK(q_of_kappa(0.5) == doctest::Approx(1.0));
    CHECK(q_of_kappa(0.2) == doctest::Approx(0.8));
    // sup_x 2x / max{1 + x^2, 1/kappa} on a grid.
    double sup = 0.0;
    for (int i = 0; i <= 200000; ++i) {
        const double x = i * 1e-4;
        sup = std::max(sup, 2.0 * x / std::max(1.0 + x * x, 1.0 / 0.2));
    }
    CHECK(sup == doctest::Approx(0.8).epsilon(1e-6));
    CHECK(q_of_kappa(1e-12) < 1e-5);
}

TEST_CASE("phi and Phi") {
    CHECK(phi(0.0, 2.0, 1.0, 0.3) == 1.0);
    CHECK(Phi(0.0, 2.0, 1.0, 0.3) == 0.0);
    CHECK(phi(3.0, 0.0, 1.0, 0.0) == 1.0);
    CHECK(Phi(2.5, 0.0, 1.0, 0.0) == doctest::Approx(2.5).epsilon(1e-12));
    const auto t = riemann_tables(3.0, 2.0, 1.0, 0.4, 1000000);
    CHECK(std::abs(Phi(3.0, 2.0, 1.0, 0.4, 1e-12) - t.Phi.back()) < 1e-9);
}

TEST_CASE("zeta and xi") {
    const auto flat = zeta_xi(1.0, 2.0, 0.0, 1.0, 0.0);
    CHECK(flat.zeta == doctest::Approx(2.0 / 4.0).epsilon(1e-10));
    CHECK(flat.xi == doctest::Approx(2.0).epsilon(1e-10));
    const auto same = zeta_xi(2.0, 2.0, 1.0, 1.0, 0.5);
    CHECK(same.zeta == same.xi);
    const double M = 1.5, beta = 1.2, Q = 0.6, r1 = 1.3, r2 = 3.1;
    const auto zx = zeta_xi(r1, r2, M, beta, Q);
    const auto t = riemann_tables(r2, M, beta, Q, 400000);
    CHECK(zx.zeta == doctest::Approx(1.0 / t.I.back()).epsilon(1e-6));
    CHECK(zx.xi == doctest::Approx(1.0 / interp(t, t.I, r1)).epsilon(1e-6));
    CHECK(zx.xi >= zx.zeta);
}

TEST_CASE("calibration for (m, b, M, beta, d) = (1, 1, 2, 1, 2) against an independent chain") {
    const auto cal = EberleCalibration::build({1.0, 1.0, 2.0, 1.0, 2});
    const double lambda = 1.0;
    const double C = lambda * 6.0 + lambda;
    const double r1 = std::sqrt(2.0) * std::sqrt(2.0 * C / lambda - 2.0);
    const double r2 = std::sqrt(2.0) * std::sqrt(4.0 * C * (1.0 + 1.0 / lambda) - 2.0);
    const double kappa = std::min(0.5, 2.0 * std::exp(-2.0 * r1 * r1 / 8.0) /
                                           (C * (std::exp(2.0 * r1) - 1.0 - 2.0 * r1)));
    const double Q = 2.0 * std::sqrt(kappa - kappa * kappa);
    const auto t = riemann_tables(r2, 2.0, 1.0, Q, 400000);
    const double zeta = 1.0 / t.I.back();
    const double xi = 1.0 / interp(t, t.I, r1);
    const double c = std::min({zeta / 1.0, lambda / 2.0, 2.0 * C * lambda * kappa});

    CHECK(cal.lambda() == lambda);
    CHECK(cal.C() == doctest::Approx(C));
    CHECK(cal.r1() == doctest::Approx(r1).epsilon(1e-14));
    CHECK(cal.r2() == doctest::Approx(r2).epsilon(1e-14));
    CHECK(cal.kappa() == doctest::Approx(kappa).epsilon(1e-10));
    CHECK(cal.Q() == doctest::Approx(Q).epsilon(1e-10));
    CHECK(cal.zeta() == doctest::Approx(zeta).epsilon(1e-6));
    CHECK(cal.xi() == doctest::Approx(xi).epsilon(1e-6));
    CHECK(cal.rate() == doctest::Approx(c).epsilon(1e-6));
    CHECK(contraction_rate(cal.zeta(), 10.0, cal.lambda(), cal.C(), cal.kappa()) ==
          doctest::Approx(std::min({cal.zeta() / 10.0, 0.5, 2.0 * C * kappa})));
    // kappa inequality: 1/(2 C beta kappa) >= 1/xi.
    CHECK(1.0 / (2.0 * C * kappa) >= 1.0 / cal.xi());
    CHECK(cal.r1() <= cal.r2());
    CHECK(cal.xi() >= cal.zeta());
}

TEST_CASE("profile f, its derivatives and rho_2") {
    const auto cal = EberleCalibration::build({1.0, 1.0, 2.0, 1.0, 2});
    CHECK(cal.f(0.0) == 0.0);
    CHECK(cal.g(0.0) == 1.0);
    CHECK(cal.f_prime(0.0) == doctest::Approx(1.0));
    CHECK(cal.f(-0.3) == -0.3);

    // f by nested trapezoid sums of the defining integrals.
    const auto t = riemann_tables(cal.r2(), 2.0, 1.0, cal.Q(), 400000);
    std::vector<double> f(t.r.size(), 0.0);
    auto g_at = [&](std::size_t i) {
        const double I = t.I[i];
        const double I1 = t.r[i] <= cal.r1() ? I : interp(t, t.I, cal.r1());
        return 1.0 - cal.zeta() / 4.0 * I - cal.xi() / 4.0 * I1;
    };
    for (std::size_t i = 1; i < t.r.size(); ++i) {
        f[i] = f[i - 1] + 0.5 * t.h * (t.phi[i - 1] * g_at(i - 1) + t.phi[i] * g_at(i));
    }
    for (double r : {0.1, 1.0, 3.0, cal.r1(), 7.5, cal.r2()}) {
        CHECK(cal.f(r) == doctest::Approx(interp(t, f, r)).epsilon(1e-6));
        CHECK(cal.f_exact(r) == doctest::Approx(interp(t, f, r)).epsilon(1e-6));
    }
    CHECK(cal.f(2.0 * cal.r2()) == cal.f(cal.r2()));

    // f'' against central differences of f' away from R1 and R2.
    for (int k = 1; k <= 100; ++k) {
        const double r = cal.r2() * (k - 0.5) / 100.0;
        if (std::abs(r - cal.r1()) < 1e-3) continue;
        const double h = 1e-5;
        const double fd = (cal.f_prime(r + h) - cal.f_prime(r - h)) / (2.0 * h);
        CHECK(cal.f_second(r) == doctest::Approx(fd).epsilon(1e-4).scale(1.0));
    }

    const Vector x{0.3, -0.2}, y{-1.0, 2.0};
    CHECK(cal.rho2(x, x) == 0.0);
    CHECK(cal.rho2(x, y) == cal.rho2(y, x));
    const Vector o{0.0, 0.0}, yr{1.8, 2.4};
    const double r = 3.0;
    const double expected = interp(t, f, r) * (1.0 + cal.kappa() + cal.kappa() * (1.0 + r * r));
    CHECK(cal.rho2(o, yr) == doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("smoothness to rho constant") {
    const auto cal = EberleCalibration::build({1.0, 1.0, 2.0, 1.0, 2});
    const double A = 0.5, M = 2.0;
    const double K = smoothness_to_rho_constant(cal, A, M);
    RandomStream rng(6);
    for (int k = 0; k < 10000; ++k) {
        Vector x(2), y(2);
        for (auto& v : x) v = 10.0 * rng.uniform() - 5.0;
        for (auto& v : y) v = 10.0 * rng.uniform() - 5.0;
        const double lhs = (M / 2.0 * norm(x) + M / 2.0 * norm(y) + A) * distance(x, y);
        REQUIRE(lhs <= K * cal.rho2(x, y));
    }
    const Vector x{1.0, 1.0};
    CHECK((M / 2.0 * norm(x) * 2.0 + A) * distance(x, x) == 0.0);
    CHECK(cal.rho2(x, x) == 0.0);
    const Vector y{-2.0, 0.5};
    CHECK(0.0 <= smoothness_to_rho_constant(cal, 0.0, 0.0) * cal.rho2(x, y));
}

TEST_CASE("verify_calibration on the shipped calibration") {
    const CalibrationInputs in{1.0, 1.0, 2.0, 1.0, 2};
    const auto cal = EberleCalibration::build(in);
    const auto catalog = compatible_catalog(in, 1);
    RandomStream rng(3);
    const auto report = verify_calibration(cal, catalog, rng);
    REQUIRE(report.checks.size() == 4);
    for (const auto& c : report.checks) {
        INFO(c.name << ": " << c.detail);
        CHECK(c.passed);
        CHECK(c.margin >= 0.0);
    }
    CHECK(report.passed());
}

TEST_CASE("generator margins are skipped inside S1") {
    const CalibrationInputs in{1.0, 1.0, 2.0, 1.0, 2};
    const auto cal = EberleCalibration::build(in);
    const auto catalog = compatible_catalog(in, 1);
    const Vector x{0.1, 0.0}, y{0.0, 0.1};
    CHECK_FALSE(generator_margin_outside_s1(cal, catalog[0], catalog[0], x, y).has_value());
    const Vector far{20.0, 0.0};
    CHECK(generator_margin_outside_s1(cal, catalog[0], catalog[0], far, y).has_value());
}

TEST_CASE("calibration json round-trip") {
    const auto cal = EberleCalibration::build({1.0, 1.0, 2.0, 1.0, 2});
    const auto back = EberleCalibration::from_json(cal.to_json());
    CHECK(back.rate() == cal.rate());
    CHECK(back.kappa() == cal.kappa());
    CHECK(back.f(3.3) == cal.f(3.3));
    CHECK(back.to_json() == cal.to_json());
}
