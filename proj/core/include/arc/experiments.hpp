// SPDX-License-Identifier: Apache-2.0
//! \file arc/experiments.hpp
//! Experiment drivers: contraction, eta / batch / n / eps sweeps, Gibbs gap,
//! plus the Monte Carlo bound checks used by `verify`.
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "arc/eberle.hpp"
#include "arc/estimators.hpp"
#include "arc/potentials.hpp"
#include "arc/sde.hpp"

namespace arc {

//! A catalog loss plus the law and size of its training data.
struct ModelConfig {
    LossFamily family = LossFamily::quadratic;
    std::size_t dim = 1;
    double m0 = 1.0;
    //! Cosine amplitude a (cosine_quadratic only).
    double amplitude = 0.0;
    DistributionSpec data = DistributionSpec::origin(1);
    std::size_t n = 1;
    double min_offset = kDefaultMinOffset;
    //! Dissipativity split s: m = (1 - s) m0 when the data are not at the origin.
    double split = 0.5;
    //! Certify with this support radius instead of the data law's (0 = use the law).
    double support_radius = 0.0;

    static ModelConfig quadratic_origin(std::size_t dim, double m0);
    static ModelConfig quadratic_sphere(std::size_t dim, double m0, double radius, std::size_t n);
    static ModelConfig cosine_sphere(std::size_t dim, double m0, double amplitude, double radius,
                                     std::size_t n);

    PotentialModel model() const;
    //! Model bound to generate_dataset(data, n, seed).
    EmpiricalLoss build(std::uint64_t seed) const;
};

CalibrationInputs calibration_inputs(const CertifiedConstants& constants, double beta,
                                     std::size_t dim);

using ConfigSnapshot = std::vector<std::pair<std::string, std::string>>;

struct ExperimentRecord {
    std::string id;
    ConfigSnapshot config;
    std::string sweep_name;
    std::vector<double> sweep_values;
    //! One time curve per sweep value (the curve each experiment reports).
    std::vector<EnsembleStatistic> measured;
    //! Named per-sweep-value scalars, e.g. the loss gap and its CI.
    std::vector<std::pair<std::string, std::vector<double>>> series;
    std::optional<SlopeFit> fit;
    std::vector<CheckRecord> checks;
    //! Excluded from JSON and CSV so reruns are byte-identical.
    double wall_time = 0.0;

    bool passed() const;
    std::string to_json() const;
    //! Rows sweep_value,time,mean,ci.
    std::string curves_csv() const;
    //! One line per check.
    std::string summary() const;
};

struct LabeledTrajectory {
    std::string label;
    CoupledTrajectory trajectory;
};

struct RunOptions {
    std::uint64_t seed = 1;
    unsigned threads = 0;
    //! Pair experiments replay their first `dump_trajectories` pairs per sweep
    //! value into `trajectories` (null disables).
    std::size_t dump_trajectories = 0;
    std::vector<LabeledTrajectory>* trajectories = nullptr;
};

struct ContractionConfig {
    //! m = M keeps c large enough for a 5/c horizon (c ~ 2.3e-3 here).
    ModelConfig model = ModelConfig::quadratic_origin(1, 0.79);
    double beta = 1.07;
    Vector x0{1.0};
    Vector y0{-1.0};
    //! 0 selects 5/c rounded up to the record grid.
    double horizon = 0.0;
    double dt = 0.05;
    std::size_t record_stride = 200;
    std::size_t ensemble = 10000;
    //! 0 selects 1e-3 R2.
    double eps = 0.0;
    bool synchronous_arm = true;
    CalibrationOptions calibration;
};

/*!
 * ARC pairs of one driver (continuous Langevin, EM step dt) from (x0, y0);
 * E[rho_2(X_t, Y_t)] against e^{-ct} rho_2(x0, y0) + 3 CI on the record grid,
 * plus the fitted empirical decay rate.
 */
ExperimentRecord run_contraction(const ContractionConfig& config, const RunOptions& run = {});

struct EtaSweepConfig {
    ModelConfig model = ModelConfig::quadratic_origin(1, 1.0);
    double beta = 1.0;
    double t_final = 2.0;
    std::vector<double> eta_list{0.125, 0.0625, 0.03125, 0.015625, 0.0078125, 0.00390625,
                                 0.001953125};
    //! Continuous X uses EM step min(eta_list) / substep_divisor for every eta.
    std::size_t substep_divisor = 8;
    std::size_t ensemble = 10000;
    Vector x0{1.0};
    double eps = 0.0;
    std::size_t record_stride = 0;
    CalibrationOptions calibration;
};

/*!
 * Continuous X against discretized Y (step eta) under ARC on shared noise;
 * E[rho_2(X_T, Y_T)] per eta, K sqrt(eta) envelope anchored at the largest
 * eta and the log-log slope.
 */
ExperimentRecord run_eta_sweep(const EtaSweepConfig& config, const RunOptions& run = {});

struct BatchSweepConfig {
    ModelConfig model = ModelConfig::cosine_sphere(2, 1.0, 1.0, 1.0, 64);
    double beta = 1.0;
    double t_final = 2.0;
    std::vector<std::size_t> batch_list{1, 2, 4, 8, 16, 32, 64};
    double eta = 0.01;
    std::size_t ensemble = 10000;
    Vector x0{0.0};
    //! Above the B = 1 separation scale (~0.035 at T = 2), so h_eps stays 0 and
    //! E[rho_2] tracks the gradient-noise gap; 0 selects 1e-3 R2.
    double eps = 0.25;
    CalibrationOptions calibration;
};

/*!
 * Mini-batch SGLD X against full-gradient discretized Y (same eta) under ARC;
 * E[rho_2(X_T, Y_T)] per B, monotonicity in B and the slope of the
 * residual over B = n against s(B) = sqrt((n - B)/(B (n - 1))).
 */
ExperimentRecord run_batch_sweep(const BatchSweepConfig& config, const RunOptions& run = {});

struct NSweepConfig {
    ModelConfig model = ModelConfig::quadratic_sphere(1, 1.0, 1.0, 16);
    double beta = 1.0;
    double t_final = 4.0;
    double eta = 0.05;
    std::vector<std::size_t> n_list{16, 32, 64, 128, 256};
    std::size_t replicas = 20;
    std::size_t ensemble = 500;
    std::size_t test_size = 4096;
    Vector x0{0.0};
    bool control_arm = true;
};

/*!
 * Generalization gap E[L(X_T)] - E[L_S(X_T)] of discretized Langevin on a
 * dataset S of size n. Each replica draws S and a ghost S'; the ghost
 * trajectory (same noise, trained on S') is a control variate:
 *   gap = E[(L - L_S)(X_T)] - E[(L - L_S)(X'_T)],
 * since E[L_S(X')] = E[L(X')]. L is estimated on a shared test set.
 */
ExperimentRecord run_n_sweep(const NSweepConfig& config, const RunOptions& run = {});

struct EpsConvergenceConfig {
    ModelConfig model = ModelConfig::cosine_sphere(2, 1.0, 1.0, 1.0, 16);
    double beta = 1.0;
    std::vector<double> eps_list{0.4, 0.2, 0.1, 0.05, 0.025};
    double horizon = 1.0;
    double dt = 1e-4;
    std::size_t ensemble = 10000;
    Vector x0{1.0};
    Vector y0{-1.0};
    CalibrationOptions calibration;
};

/*!
 * ARC of one continuous driver per eps on common random numbers: mean
 * occupation integral at T, successive differences of E[rho_2(X_T, Y_T)],
 * a synchronous control arm, and the law of Y_T against an independent run.
 */
ExperimentRecord run_eps_convergence(const EpsConvergenceConfig& config, const RunOptions& run = {});

enum class GibbsObservable { coordinate, loss };

std::string_view to_string(GibbsObservable observable);
GibbsObservable parse_gibbs_observable(std::string_view name);

struct GibbsGapConfig {
    //! Certified for data within radius 0.1 with split 0.1: m = 0.9, b = 0.025, M = 1.
    ModelConfig model = [] {
        auto m = ModelConfig::quadratic_origin(1, 1.0);
        m.split = 0.1;
        m.support_radius = 0.1;
        return m;
    }();
    double beta = 1.0;
    //! G's data are F's data shifted by delta along the first axis.
    std::vector<double> delta_list{0.01, 0.02, 0.05, 0.1};
    //! 0 selects 5/c.
    double burn_in = 0.0;
    double horizon = 500.0;
    double dt = 0.05;
    std::size_t ensemble = 32;
    //! Time-average sampling stride (steps).
    std::size_t sample_stride = 10;
    GibbsObservable observable = GibbsObservable::coordinate;
    CalibrationOptions calibration;
};

/*!
 * |pi_F(H) - pi_G(H)| from post-burn-in time averages of two Langevin chains
 * on common noise, for G = F shifted by delta; slope of the gap against delta.
 */
ExperimentRecord run_gibbs_gap(const GibbsGapConfig& config, const RunOptions& run = {});

struct MarginalComparison {
    Vector mean_a, mean_b, mean_se;
    //! Upper-triangular covariance entries, row-major.
    Vector cov_a, cov_b, cov_se;
    //! max |a - b| / se over all entries.
    double worst_z = 0.0;
    bool passed = false;
};

//! Means and covariances of two samples (rows of length dim) within 3 standard errors.
MarginalComparison compare_marginals(std::span<const double> a, std::span<const double> b,
                                     std::size_t dim);

struct MarginalConfig {
    ModelConfig model = ModelConfig::cosine_sphere(2, 1.0, 1.0, 1.0, 8);
    double beta = 1.0;
    double horizon = 2.0;
    double dt = 0.01;
    std::size_t ensemble = 100000;
    Vector x0{1.0};
    Vector y0{-1.0};
    double eps = 0.0;
    CalibrationOptions calibration;
};

//! Law of ARC's Y_T against an independent run of the same driver.
ExperimentRecord run_marginal_check(const MarginalConfig& config, const RunOptions& run = {});

struct MomentSuiteConfig {
    ModelConfig model = ModelConfig::cosine_sphere(2, 1.0, 1.0, 1.0, 8);
    double beta = 1.0;
    double horizon = 10.0;
    double dt = 1e-3;
    std::size_t record_stride = 100;
    std::size_t ensemble = 10000;
    Vector y0{1.0};
    std::vector<double> p_list{2.0, 4.0};
    //! OU oracle: pure quadratic with data at the origin, d = 1.
    double ou_m0 = 1.0;
    double ou_y0 = 1.0;
    //! One-step bound, discretized driver with this eta at mid-step.
    double one_step_eta = 0.05;
    double one_step_t = 1.025;
};

//! Moment bounds for p in p_list, the OU closed form, the one-step bound.
ExperimentRecord run_moment_checks(const MomentSuiteConfig& config, const RunOptions& run = {});

struct MinibatchSuiteConfig {
    ModelConfig model = ModelConfig::cosine_sphere(2, 1.0, 1.0, 1.0, 12);
    std::size_t max_n = 12;
    std::size_t points = 100;
    double box = 3.0;
};

//! Enumeration vs identity and the 4 (n - B)/(B (n - 1)) bound for every n <= max_n, B <= n.
ExperimentRecord run_minibatch_checks(const MinibatchSuiteConfig& config,
                                      const RunOptions& run = {});

//! Semi-log decay fit: -slope of log(mean) on t over points with mean > 0.
std::optional<SlopeFit> fit_decay_rate(std::span<const double> times,
                                       std::span<const double> means);

//! Experiment ids accepted by `sweep`.
const std::vector<std::string>& experiment_ids();

}  // namespace arc
