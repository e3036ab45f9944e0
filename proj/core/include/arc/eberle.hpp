// SPDX-License-Identifier: Apache-2.0
//! \file arc/eberle.hpp
//! Constant chain and concave profile f of the rho_2 semimetric.
//!
//! From (m, b, M, beta, d):
//!   lambda = m, C = C(2) + lambda,
//!   S1 = {Vbar(x) + Vbar(y) <= 2C/lambda}, S2 = {... <= 4C(1 + 1/lambda)},
//!   R1, R2 = sup ||x - y|| over S1, S2,
//!   kappa, Q(kappa), phi, Phi, zeta, xi, g, f and
//!   rho_2(x, y) = f(||x - y||) (1 + kappa Vbar(x) + kappa Vbar(y)),
//!   c = min{zeta/beta, lambda/2, 2 C lambda kappa}.
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "arc/potentials.hpp"
#include "arc/rng.hpp"

namespace arc {

struct LyapunovConstants {
    double lambda = 0.0;  //!< lambda(p) = m p / 2
    double C = 0.0;       //!< C(p) = lambda(p) L(p)^p
    double L = 0.0;       //!< L(p) = sqrt((2/m)((d + p - 2)/beta + b))
};

//! Drift constants of V_p(x) = ||x||^p: L_H V_p <= C(p) - lambda(p) V_p.
LyapunovConstants lyapunov_constants(double p, double m, double b, double beta, std::size_t dim);

struct RegionRadii {
    double r1 = 0.0;
    double r2 = 0.0;
};

//! Diameters of S1 and S2. The set {||x||^2 + ||y||^2 <= rho^2} has
//! sup ||x - y|| = sqrt(2) rho, attained at y = -x.
RegionRadii region_radii(double C, double lambda);

//! kappa = min{1/2, 2 exp(-M beta R1^2 / 8) / (C beta (e^{2 R1} - 1 - 2 R1))}; 1/2 when R1 = 0.
double choose_kappa(double M, double beta, double C, double r1);

//! Q(kappa) = 2 sqrt(kappa - kappa^2) for kappa in (0, 1).
double q_of_kappa(double kappa);

//! phi(r) = exp(-(M beta / 8) r^2 - 2 Q r), r >= 0.
double phi(double r, double M, double beta, double Q);
//! Phi(r) = int_0^r phi, adaptive Simpson to absolute tolerance `tol`.
double Phi(double r, double M, double beta, double Q, double tol = 1e-10);

struct ZetaXi {
    double zeta = 0.0;
    double xi = 0.0;
    //! True when R1 = 0 and xi was replaced by the cap.
    bool xi_clamped = false;
};

//! 1/zeta = int_0^R2 Phi/phi, 1/xi = int_0^R1 Phi/phi.
ZetaXi zeta_xi(double r1, double r2, double M, double beta, double Q, double tol = 1e-10,
               double xi_cap = 1e300);

struct CalibrationInputs {
    double m = 1.0;
    double b = 1.0;
    double M = 2.0;
    double beta = 1.0;
    std::size_t dim = 2;
};

struct CalibrationOptions {
    double quadrature_tolerance = 1e-10;
    std::size_t grid_points = 4096;
    double xi_cap = 1e300;
};

/*!
 * Immutable calibration: scalar constants plus node tables of Phi, the
 * inner integral I(r) = int_0^r Phi/phi, f and f' on a uniform grid of
 * [0, R2] (with R1 inserted as a node). f() interpolates the table with
 * monotone cubic Hermite segments; the *_exact() accessors integrate from
 * the nearest node instead.
 */
class EberleCalibration {
  public:
    static EberleCalibration build(const CalibrationInputs& inputs,
                                   const CalibrationOptions& options = {});

    const CalibrationInputs& inputs() const { return inputs_; }
    const CalibrationOptions& options() const { return options_; }
    double lambda() const { return lambda_; }
    double C() const { return C_; }
    double r1() const { return r1_; }
    double r2() const { return r2_; }
    double kappa() const { return kappa_; }
    double Q() const { return Q_; }
    double zeta() const { return zeta_; }
    double xi() const { return xi_; }
    bool xi_clamped() const { return xi_clamped_; }
    double rate() const { return rate_; }

    double phi(double r) const;
    double Phi(double r) const;
    //! I(r) = int_0^r Phi(s)/phi(s) ds, 0 <= r <= R2.
    double inner_integral(double r) const;
    double g(double r) const;
    //! Table interpolant of f.
    double f(double r) const;
    //! f by quadrature from the nearest node.
    double f_exact(double r) const;
    double f_prime(double r) const;
    //! Analytic f'' off {R1, R2}.
    double f_second(double r) const;

    //! U(x, y) = 1 + kappa Vbar(x) + kappa Vbar(y).
    double lyapunov_weight(std::span<const double> x, std::span<const double> y) const;
    double rho2(std::span<const double> x, std::span<const double> y) const;

    const std::vector<double>& nodes() const { return nodes_; }

    std::string to_json() const;
    static EberleCalibration from_json(std::string_view text);

  private:
    EberleCalibration() = default;
    std::size_t panel_of(double r) const;
    double phi_over(double s) const;
    double Phi_from(std::size_t node, double r) const;
    double inner_from(std::size_t node, double r) const;
    double g_from(std::size_t node, double r) const;
    void tabulate();

    CalibrationInputs inputs_;
    CalibrationOptions options_;
    double lambda_ = 0.0, C_ = 0.0, r1_ = 0.0, r2_ = 0.0, kappa_ = 0.0, Q_ = 0.0;
    double zeta_ = 0.0, xi_ = 0.0, rate_ = 0.0;
    bool xi_clamped_ = false;
    std::vector<double> nodes_;
    std::vector<double> Phi_nodes_;
    std::vector<double> inner_nodes_;
    std::vector<double> f_nodes_;
    std::vector<double> fprime_nodes_;
};

//! c = min{zeta/beta, lambda/2, 2 C lambda kappa}.
double contraction_rate(const EberleCalibration& cal);
double contraction_rate(double zeta, double beta, double lambda, double C, double kappa);

/*!
 * K with (M/2 ||x|| + M/2 ||y|| + A) ||x - y|| <= K rho_2(x, y):
 * K = 2 exp(M beta R2^2 / 8 + 2 R2) max{1, 1/R2} max{A + M/2, (A/2 + M)/kappa}.
 */
double smoothness_to_rho_constant(const EberleCalibration& cal, double A, double M);

struct CalibrationCheck {
    std::string name;
    double margin = 0.0;
    bool passed = false;
    std::size_t evaluated = 0;
    std::size_t skipped = 0;
    std::string detail;
};

struct CalibrationReport {
    std::vector<CalibrationCheck> checks;
    bool xi_clamped = false;
    bool passed() const;
    std::string to_json() const;
};

struct VerificationOptions {
    std::size_t chain_points = 1000;
    std::size_t generator_samples = 10000;
    std::size_t finite_difference_points = 100;
    double kappa_tolerance = 1e-8;
    double chain_tolerance = 1e-8;
    double finite_difference_tolerance = 1e-4;
};

//! -(L_F Vbar(x) + L_G Vbar(y)) for (x, y) outside S1; nullopt inside S1.
//! L_H Vbar(x) = -2 <grad H(x), x> + 2 d / beta.
std::optional<double> generator_margin_outside_s1(const EberleCalibration& cal,
                                                  const EmpiricalLoss& F, const EmpiricalLoss& G,
                                                  std::span<const double> x,
                                                  std::span<const double> y);
//! RHS - LHS of the kappa-weighted inequality outside S2; nullopt inside S2.
std::optional<double> generator_margin_outside_s2(const EberleCalibration& cal,
                                                  const EmpiricalLoss& F, const EmpiricalLoss& G,
                                                  std::span<const double> x,
                                                  std::span<const double> y);

/*!
 * Catalog losses whose certificates are at least as strong as the
 * calibration's (m, b): quadratic (m0 = 2m, data on the sphere of radius
 * sqrt(b/m)) and cosine-quadratic (m0 = 2m, R = 1, a = sqrt(2 m0 b)).
 */
std::vector<EmpiricalLoss> compatible_catalog(const CalibrationInputs& inputs, std::uint64_t seed);

/*!
 * Four checks: (i) kappa inequality by quadrature, (ii) the chain
 * r phi(R2) <= Phi <= 2f <= 2Phi <= 2r on a grid of [0, R2], (iii) the f''
 * upper bound on the same grid off {R1, R2} plus a finite-difference check
 * of f'', (iv) generator inequalities outside S1 and S2 for every ordered
 * pair of catalog losses.
 */
CalibrationReport verify_calibration(const EberleCalibration& cal,
                                     std::span<const EmpiricalLoss> catalog, RandomStream& rng,
                                     const VerificationOptions& options = {});

}  // namespace arc
