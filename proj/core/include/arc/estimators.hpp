// SPDX-License-Identifier: Apache-2.0
//! \file arc/estimators.hpp
//! Ensemble statistics, log-log fits and Monte Carlo checks of the moment and mini-batch variance bounds.
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "arc/numeric.hpp"
#include "arc/potentials.hpp"
#include "arc/sde.hpp"

namespace arc {

//! Pointwise-in-time mean, variance and 95% normal half-width.
struct EnsembleStatistic {
    std::vector<double> times;
    std::vector<double> mean;
    std::vector<double> variance;
    std::vector<double> ci_halfwidth;
    std::size_t n_trajectories = 0;

    static EnsembleStatistic from_moments(std::vector<double> times,
                                          std::span<const Moments> moments);
    std::size_t size() const { return times.size(); }
};

//! 1.96 sqrt(variance / n).
double ci_halfwidth(double variance, double n);

/*!
 * Per-slot moments over an ensemble. Workers fill one accumulator per fixed
 * chunk of trajectories; chunks are merged in index order so the result does
 * not depend on the thread count.
 */
class EnsembleAccumulator {
  public:
    explicit EnsembleAccumulator(std::size_t slots = 0) : slots_(slots) {}
    void add(std::size_t slot, double value) { slots_[slot].add(value); }
    void merge(const EnsembleAccumulator& other);
    std::size_t size() const { return slots_.size(); }
    const Moments& operator[](std::size_t slot) const { return slots_[slot]; }
    //! Slots [first, first + count) as a statistic on `times`.
    EnsembleStatistic statistic(std::vector<double> times, std::size_t first = 0) const;

  private:
    std::vector<Moments> slots_;
};

inline constexpr std::size_t kEnsembleChunk = 256;

/*!
 * Runs fn(begin, end, acc) on chunks of [0, count) and merges the per-chunk
 * accumulators in chunk order.
 */
template <class Fn>
EnsembleAccumulator run_ensemble(std::size_t count, std::size_t slots, unsigned threads, Fn&& fn,
                                 std::size_t chunk = kEnsembleChunk) {
    const std::size_t chunks = (count + chunk - 1) / chunk;
    std::vector<EnsembleAccumulator> parts(chunks, EnsembleAccumulator(slots));
    parallel_for(chunks, threads, [&](std::size_t c) {
        const std::size_t begin = c * chunk;
        const std::size_t end = std::min(count, begin + chunk);
        fn(begin, end, parts[c]);
    });
    EnsembleAccumulator total(slots);
    for (const auto& p : parts) {
        total.merge(p);
    }
    return total;
}

//! values[k][i] is the functional on trajectory k at time i.
EnsembleStatistic mc_expectation(std::span<const std::vector<double>> values,
                                 std::vector<double> times);

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double stderr_slope = 0.0;
    double r_squared = 0.0;
    std::size_t points = 0;
};

//! OLS of log y on log x. Needs >= 3 points, all positive.
SlopeFit fit_loglog_slope(std::span<const double> xs, std::span<const double> ys);

//! One pass/fail line of a check: margin >= 0 means the inequality holds.
struct CheckRecord {
    std::string name;
    double margin = 0.0;
    double ci = 0.0;
    bool passed = false;
    std::string detail;
};

std::string to_json(const CheckRecord& record);
std::string to_json(const EnsembleStatistic& stat);
std::string to_json(const SlopeFit& fit);

struct MomentCheckOptions {
    std::size_t ensemble = 10000;
    std::uint64_t seed = 1;
    unsigned threads = 0;
};

struct MomentBoundReport {
    double p = 2.0;
    DriverKind kind = DriverKind::continuous_langevin;
    EnsembleStatistic moment;
    //! e^{-lambda(p) t} E||Y0||^p + (C(p)/lambda(p))(1 - e^{-lambda(p) t}).
    std::vector<double> bound;
    std::size_t violations = 0;
    //! min over t of bound + 3 CI - mean.
    double worst_margin = 0.0;
    //! Discretized drivers: last-quarter mean vs third-quarter mean + 3 CI.
    std::optional<double> flat_tail_margin;
    bool passed = false;

    CheckRecord record() const;
};

/*!
 * Estimates E||Y_t||^p along the grid from Y_0 = y0. Continuous drivers are
 * compared with the Lyapunov bound at every grid time; discretized drivers
 * get the flat-tail check over the last half of the horizon (the bound curve
 * is still reported).
 */
MomentBoundReport check_moment_bound(const DriverSpec& driver, double p, const TimeGrid& grid,
                                     std::span<const double> y0,
                                     const MomentCheckOptions& options = {});

struct OneStepReport {
    double t = 0.0;
    double lhs = 0.0;
    double lhs_ci = 0.0;
    double rhs = 0.0;
    double rhs_ci = 0.0;
    double margin = 0.0;
    bool passed = false;

    CheckRecord record() const;
};

/*!
 * E||Y_t - Y_{floor(t/eta) eta}||^2 against
 * eta^2 E[(M ||Y_{floor}|| + ||grad H(0)||)^2] + 2 d eta / beta, both by MC.
 */
OneStepReport check_one_step_bound(const DriverSpec& driver, double t, std::span<const double> y0,
                                   const MomentCheckOptions& options = {});

struct MinibatchVarianceReport {
    std::size_t n = 0;
    std::size_t batch = 0;
    std::optional<double> enumerated;
    double closed_form = 0.0;
    double bound = 0.0;
    double margin = 0.0;
    bool agree = true;
    bool passed = false;

    CheckRecord record() const;
};

inline constexpr double kEnumerationCap = 1e6;

//! Number of B-subsets of n as a double (saturates to +inf).
double binomial(std::size_t n, std::size_t k);

/*!
 * E||grad L_n(w) - grad L_{n,k}(w)||^2 for a uniformly random B-subset:
 * by enumeration when C(n, B) <= 1e6, and always by the identity
 * (n - B)/(B (n - 1)) (1/n) sum_i ||g_i - gbar||^2. Bound:
 * 4 (n - B)/(B (n - 1)) (M ||w|| + A)^2.
 */
MinibatchVarianceReport check_minibatch_variance(const PotentialModel& model, const Dataset& data,
                                                 std::span<const double> w, std::size_t batch);

}  // namespace arc
