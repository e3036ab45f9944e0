// SPDX-License-Identifier: Apache-2.0
#include "arc/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "arc/eberle.hpp"
#include "json.hpp"

namespace arc {
namespace {

// Times observed by simulate_single / PairSimulator for this grid.
std::vector<double> recorded_times(const TimeGrid& grid) {
    const std::size_t steps = grid.steps();
    std::vector<double> t{0.0};
    for (std::size_t s = 1; s <= steps; ++s) {
        if (s % grid.record_stride == 0 || s == steps) {
            t.push_back(static_cast<double>(s) * grid.dt);
        }
    }
    return t;
}

// Neumaier-compensated running sum.
struct CompensatedSum {
    double sum = 0.0;
    double carry = 0.0;
    void add(double v) {
        const double t = sum + v;
        if (std::abs(sum) >= std::abs(v)) {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    double value() const { return sum + carry; }
};

}  // namespace

double ci_halfwidth(double variance, double n) {
    return n > 0.0 ? 1.96 * std::sqrt(std::max(variance, 0.0) / n) : 0.0;
}

EnsembleStatistic EnsembleStatistic::from_moments(std::vector<double> times,
                                                  std::span<const Moments> moments) {
    if (times.size() != moments.size()) {
        throw std::invalid_argument("ensemble statistic: times and moments differ in length");
    }
    EnsembleStatistic s;
    s.times = std::move(times);
    for (const auto& m : moments) {
        s.mean.push_back(m.mean);
        s.variance.push_back(std::max(m.variance(), 0.0));
        s.ci_halfwidth.push_back(arc::ci_halfwidth(s.variance.back(), m.count));
    }
    s.n_trajectories = moments.empty() ? 0 : static_cast<std::size_t>(moments.front().count);
    return s;
}

void EnsembleAccumulator::merge(const EnsembleAccumulator& other) {
    if (other.slots_.size() != slots_.size()) {
        throw std::invalid_argument("accumulator merge: slot count mismatch");
    }
    for (std::size_t i = 0; i < slots_.size(); ++i) {
        slots_[i].merge(other.slots_[i]);
    }
}

EnsembleStatistic EnsembleAccumulator::statistic(std::vector<double> times,
                                                 std::size_t first) const {
    if (first + times.size() > slots_.size()) {
        throw std::out_of_range("accumulator: slot range out of bounds");
    }
    std::span<const Moments> view(slots_.data() + first, times.size());
    return EnsembleStatistic::from_moments(std::move(times), view);
}

EnsembleStatistic mc_expectation(std::span<const std::vector<double>> values,
                                 std::vector<double> times) {
    if (values.empty()) {
        throw std::invalid_argument("mc_expectation: empty ensemble");
    }
    std::vector<Moments> m(times.size());
    for (const auto& row : values) {
        if (row.size() != times.size()) {
            throw std::invalid_argument("mc_expectation: trajectory length mismatch");
        }
        for (std::size_t i = 0; i < row.size(); ++i) {
            m[i].add(row[i]);
        }
    }
    return EnsembleStatistic::from_moments(std::move(times), m);
}

SlopeFit fit_loglog_slope(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) {
        throw std::invalid_argument("fit_loglog_slope: xs and ys differ in length");
    }
    if (xs.size() < 3) {
        throw std::invalid_argument("fit_loglog_slope: need at least 3 points");
    }
    const std::size_t n = xs.size();
    std::vector<double> lx(n), ly(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!(xs[i] > 0.0) || !(ys[i] > 0.0)) {
            throw std::invalid_argument("fit_loglog_slope: inputs must be positive");
        }
        lx[i] = std::log(xs[i]);
        ly[i] = std::log(ys[i]);
    }
    const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / static_cast<double>(n);
    const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
        syy += (ly[i] - my) * (ly[i] - my);
    }
    if (sxx == 0.0) {
        throw std::invalid_argument("fit_loglog_slope: xs are all equal");
    }
    SlopeFit fit;
    fit.points = n;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double ssr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = ly[i] - (fit.intercept + fit.slope * lx[i]);
        ssr += r * r;
    }
    fit.stderr_slope = std::sqrt(ssr / static_cast<double>(n - 2) / sxx);
    fit.r_squared = syy > 0.0 ? std::max(0.0, 1.0 - ssr / syy) : 1.0;
    return fit;
}

std::string to_json(const CheckRecord& record) {
    nlohmann::ordered_json j;
    j["check"] = record.name;
    j["margin"] = record.margin;
    j["ci"] = record.ci;
    j["passed"] = record.passed;
    j["detail"] = record.detail;
    return j.dump();
}

std::string to_json(const EnsembleStatistic& stat) {
    nlohmann::ordered_json j;
    j["n_trajectories"] = stat.n_trajectories;
    j["times"] = stat.times;
    j["mean"] = stat.mean;
    j["variance"] = stat.variance;
    j["ci"] = stat.ci_halfwidth;
    return j.dump();
}

std::string to_json(const SlopeFit& fit) {
    nlohmann::ordered_json j;
    j["slope"] = fit.slope;
    j["intercept"] = fit.intercept;
    j["stderr"] = fit.stderr_slope;
    j["r_squared"] = fit.r_squared;
    j["points"] = fit.points;
    return j.dump();
}

CheckRecord MomentBoundReport::record() const {
    CheckRecord r;
    std::ostringstream name;
    name << "moment_bound_p" << p;
    r.name = name.str();
    r.margin = flat_tail_margin.value_or(worst_margin);
    r.passed = passed;
    std::ostringstream d;
    d << to_string(kind) << ", " << violations << " grid violations, worst bound margin "
      << worst_margin;
    if (flat_tail_margin) d << ", flat-tail margin " << *flat_tail_margin;
    r.detail = d.str();
    if (!moment.ci_halfwidth.empty()) {
        r.ci = *std::max_element(moment.ci_halfwidth.begin(), moment.ci_halfwidth.end());
    }
    return r;
}

MomentBoundReport check_moment_bound(const DriverSpec& driver, double p, const TimeGrid& grid,
                                     std::span<const double> y0,
                                     const MomentCheckOptions& options) {
    driver.validate();
    if (options.ensemble == 0) {
        throw std::invalid_argument("check_moment_bound: empty ensemble");
    }
    const auto& k = driver.loss.model->constants();
    const auto lyap = lyapunov_constants(p, k.m, k.b, driver.beta, driver.dim());
    auto times = recorded_times(grid);
    const std::size_t slots = times.size();

    auto acc = run_ensemble(options.ensemble, slots, options.threads,
                            [&](std::size_t begin, std::size_t end, EnsembleAccumulator& part) {
                                for (std::size_t i = begin; i < end; ++i) {
                                    auto streams = PairStreams::derive(options.seed, "moment", i);
                                    std::size_t slot = 0;
                                    simulate_single(y0, driver, grid, streams,
                                                    [&](std::size_t, double, std::span<const double> y) {
                                                        part.add(slot++, std::pow(norm(y), p));
                                                    });
                                }
                            });

    MomentBoundReport rep;
    rep.p = p;
    rep.kind = driver.kind;
    rep.moment = acc.statistic(times);
    const double m0 = std::pow(norm(y0), p);
    rep.worst_margin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < slots; ++i) {
        const double decay = std::exp(-lyap.lambda * times[i]);
        const double b = decay * m0 + lyap.C / lyap.lambda * (1.0 - decay);
        rep.bound.push_back(b);
        const double margin = b + 3.0 * rep.moment.ci_halfwidth[i] - rep.moment.mean[i];
        if (margin < 0.0) ++rep.violations;
        rep.worst_margin = std::min(rep.worst_margin, margin);
    }
    if (driver.kind == DriverKind::continuous_langevin) {
        rep.passed = rep.violations == 0;
    } else {
        const double T = times.back();
        Moments third, last;
        double ci_sum = 0.0;
        double ci_count = 0.0;
        for (std::size_t i = 0; i < slots; ++i) {
            if (times[i] < 0.5 * T) continue;
            ci_sum += rep.moment.ci_halfwidth[i];
            ci_count += 1.0;
            if (times[i] < 0.75 * T) {
                third.add(rep.moment.mean[i]);
            } else {
                last.add(rep.moment.mean[i]);
            }
        }
        if (third.count == 0.0 || last.count == 0.0) {
            throw std::invalid_argument("check_moment_bound: grid too coarse for the flat-tail check");
        }
        rep.flat_tail_margin = third.mean + 3.0 * ci_sum / ci_count - last.mean;
        rep.passed = *rep.flat_tail_margin >= 0.0;
    }
    return rep;
}

CheckRecord OneStepReport::record() const {
    CheckRecord r;
    r.name = "one_step_bound";
    r.margin = margin;
    r.ci = std::hypot(lhs_ci, rhs_ci);
    r.passed = passed;
    std::ostringstream d;
    d << "t = " << t << ", E||Y_t - Y_floor||^2 = " << lhs << ", bound = " << rhs;
    r.detail = d.str();
    return r;
}

OneStepReport check_one_step_bound(const DriverSpec& driver, double t, std::span<const double> y0,
                                   const MomentCheckOptions& options) {
    driver.validate();
    if (t < 0.0) {
        throw std::invalid_argument("check_one_step_bound: t must be >= 0");
    }
    if (!driver.frozen_drift()) {
        throw std::invalid_argument("check_one_step_bound: needs a discretized driver");
    }
    const std::size_t d = driver.dim();
    if (y0.size() != d) {
        throw std::invalid_argument("check_one_step_bound: initial state dimension mismatch");
    }
    const double eta = driver.eta;
    const double k_real = std::floor(t / eta + 1e-12);
    const auto k_steps = static_cast<std::size_t>(k_real);
    double tau = t - k_real * eta;
    if (tau < 1e-12 * eta) tau = 0.0;
    const double M = driver.loss.model->constants().M;
    const double s = std::sqrt(2.0 / driver.beta);
    const Vector origin(d, 0.0);

    auto acc = run_ensemble(
        options.ensemble, 2, options.threads,
        [&](std::size_t begin, std::size_t end, EnsembleAccumulator& part) {
            GradientWorkspace ws(d);
            MiniBatchIndex batch;
            std::vector<std::size_t> scratch;
            Vector y(d), b(d), b0(d);
            for (std::size_t i = begin; i < end; ++i) {
                auto streams = PairStreams::derive(options.seed, "one-step", i);
                std::copy(y0.begin(), y0.end(), y.begin());
                auto drift = [&](const Vector& w, Vector& out) -> const MiniBatchIndex* {
                    if (driver.kind == DriverKind::sgld) {
                        sample_minibatch_into(driver.loss.data->size(), driver.batch_size,
                                              streams.batch_y, batch, scratch);
                        driver_drift(driver, w, &batch, out, ws);
                        return &batch;
                    }
                    driver_drift(driver, w, nullptr, out, ws);
                    return nullptr;
                };
                for (std::size_t k = 0; k < k_steps; ++k) {
                    drift(y, b);
                    for (std::size_t j = 0; j < d; ++j) {
                        const double w = std::sqrt(eta) * streams.noise.normal();
                        y[j] = y[j] - eta * b[j] + s * w;
                    }
                }
                const MiniBatchIndex* used = drift(y, b);
                driver_drift(driver, origin, used, b0, ws);
                double lhs = 0.0;
                for (std::size_t j = 0; j < d; ++j) {
                    const double w = std::sqrt(tau) * streams.noise.normal();
                    const double inc = -tau * b[j] + s * w;
                    lhs += inc * inc;
                }
                const double a = M * norm(y) + norm(b0);
                part.add(0, lhs);
                part.add(1, eta * eta * a * a + 2.0 * static_cast<double>(d) * eta / driver.beta);
            }
        });

    OneStepReport rep;
    rep.t = t;
    rep.lhs = acc[0].mean;
    rep.lhs_ci = ci_halfwidth(acc[0].variance(), acc[0].count);
    rep.rhs = acc[1].mean;
    rep.rhs_ci = ci_halfwidth(acc[1].variance(), acc[1].count);
    rep.margin = rep.rhs + 3.0 * std::hypot(rep.lhs_ci, rep.rhs_ci) - rep.lhs;
    rep.passed = rep.margin >= 0.0;
    return rep;
}

CheckRecord MinibatchVarianceReport::record() const {
    CheckRecord r;
    std::ostringstream name;
    name << "minibatch_variance_n" << n << "_B" << batch;
    r.name = name.str();
    r.margin = margin;
    r.passed = passed;
    std::ostringstream d;
    d << "closed form " << closed_form;
    if (enumerated) d << ", enumeration " << *enumerated << (agree ? " (agree)" : " (DISAGREE)");
    d << ", bound " << bound;
    r.detail = d.str();
    return r;
}

double binomial(std::size_t n, std::size_t k) {
    if (k > n) return 0.0;
    k = std::min(k, n - k);
    double c = 1.0;
    for (std::size_t i = 1; i <= k; ++i) {
        c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
        if (!std::isfinite(c)) return std::numeric_limits<double>::infinity();
    }
    return std::round(c);
}

MinibatchVarianceReport check_minibatch_variance(const PotentialModel& model, const Dataset& data,
                                                 std::span<const double> w, std::size_t batch) {
    const std::size_t n = data.size();
    const std::size_t d = data.dim();
    if (batch == 0 || batch > n) {
        throw std::invalid_argument("check_minibatch_variance: need 1 <= B <= n");
    }
    if (w.size() != d || model.dim() != d) {
        throw std::invalid_argument("check_minibatch_variance: dimension mismatch");
    }
    std::vector<double> g(n * d);
    for (std::size_t i = 0; i < n; ++i) {
        grad_loss(model, w, data.sample(i), std::span<double>(g.data() + i * d, d));
    }
    Vector gbar(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
        CompensatedSum s;
        for (std::size_t i = 0; i < n; ++i) s.add(g[i * d + j]);
        gbar[j] = s.value() / static_cast<double>(n);
    }

    MinibatchVarianceReport rep;
    rep.n = n;
    rep.batch = batch;
    const double nn = static_cast<double>(n);
    const double bb = static_cast<double>(batch);
    const double factor = n > 1 ? (nn - bb) / (bb * (nn - 1.0)) : 0.0;
    {
        CompensatedSum s;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                const double dev = g[i * d + j] - gbar[j];
                s.add(dev * dev);
            }
        }
        rep.closed_form = factor * s.value() / nn;
    }

    const double subsets = binomial(n, batch);
    if (subsets <= kEnumerationCap) {
        std::vector<std::size_t> idx(batch);
        std::iota(idx.begin(), idx.end(), 0);
        CompensatedSum total;
        for (;;) {
            double sq = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                CompensatedSum gs;
                for (std::size_t i : idx) gs.add(g[i * d + j]);
                const double dev = gs.value() / bb - gbar[j];
                sq += dev * dev;
            }
            total.add(sq);
            // Next combination in lexicographic order.
            std::size_t pos = batch;
            while (pos > 0 && idx[pos - 1] == n - batch + pos - 1) --pos;
            if (pos == 0) break;
            ++idx[pos - 1];
            for (std::size_t q = pos; q < batch; ++q) idx[q] = idx[q - 1] + 1;
        }
        rep.enumerated = total.value() / subsets;
        const double scale = std::max({1.0, std::abs(*rep.enumerated), std::abs(rep.closed_form)});
        rep.agree = std::abs(*rep.enumerated - rep.closed_form) <= 1e-12 * scale;
    }

    const auto& k = model.constants();
    const double a = k.M * norm(w) + k.A;
    rep.bound = n > 1 ? 4.0 * factor * a * a : 0.0;
    const double exact = rep.enumerated.value_or(rep.closed_form);
    rep.margin = rep.bound - exact;
    rep.passed = rep.agree && rep.margin >= 0.0;
    return rep;
}

}  // namespace arc
