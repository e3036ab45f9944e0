// SPDX-License-Identifier: Apache-2.0
#include "arc/sde.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace arc {
namespace {

std::size_t refresh_interval(const DriverSpec& d, double dt) {
    if (!d.frozen_drift()) {
        if (dt > d.em_substep * (1.0 + 1e-12)) {
            throw std::invalid_argument("grid: dt exceeds the continuous driver's em_substep");
        }
        return 1;
    }
    const double ratio = d.eta / dt;
    const double r = std::round(ratio);
    if (r < 1.0 || std::abs(r * dt - d.eta) > 1e-9 * d.eta) {
        std::ostringstream msg;
        msg << "grid: dt = " << dt << " does not divide eta = " << d.eta;
        throw std::invalid_argument(msg.str());
    }
    return static_cast<std::size_t>(r);
}

void check_pair(const DriverSpec& xd, const DriverSpec& yd) {
    xd.validate();
    yd.validate();
    if (xd.beta != yd.beta) {
        throw std::invalid_argument("coupled drivers must share beta");
    }
    if (xd.dim() != yd.dim()) {
        throw std::invalid_argument("coupled drivers have different dimensions");
    }
}

void fill_normal(RandomStream& rng, double scale, std::span<double> out) {
    for (auto& v : out) {
        v = scale * rng.normal();
    }
}

// Weight of the reflection at the current state (before a step).
double coupling_weight(std::span<const double> x, std::span<const double> y,
                       const CouplingSpec& coupling, bool coalesced) {
    switch (coupling.mode) {
        case CouplingMode::synchronous:
            return 0.0;
        case CouplingMode::arc: {
            const double r = distance(x, y);
            return r <= coupling.eps ? 0.0 : h_eps(r, coupling.eps);
        }
        case CouplingMode::reflection:
            return coalesced ? 0.0 : 1.0;
    }
    return 0.0;
}

StepDiagnostics diagnostics_at(std::span<const double> x, std::span<const double> y,
                               const CouplingSpec& coupling, bool coalesced) {
    StepDiagnostics d;
    d.h = coupling_weight(x, y, coupling, coalesced);
    d.occupation_integrand = (1.0 - d.h) * d.h * d.h;
    d.coalesced = coalesced;
    return d;
}

}  // namespace

std::string_view to_string(DriverKind kind) {
    switch (kind) {
        case DriverKind::continuous_langevin:
            return "continuous-langevin";
        case DriverKind::discretized_langevin:
            return "discretized-langevin";
        case DriverKind::sgld:
            return "sgld";
    }
    return "?";
}

DriverKind parse_driver_kind(std::string_view name) {
    for (auto k : {DriverKind::continuous_langevin, DriverKind::discretized_langevin,
                   DriverKind::sgld}) {
        if (name == to_string(k)) return k;
    }
    throw std::invalid_argument("unknown driver kind '" + std::string(name) + "'");
}

std::string_view to_string(CouplingMode mode) {
    switch (mode) {
        case CouplingMode::synchronous:
            return "synchronous";
        case CouplingMode::reflection:
            return "reflection";
        case CouplingMode::arc:
            return "arc";
    }
    return "?";
}

CouplingMode parse_coupling_mode(std::string_view name) {
    for (auto m : {CouplingMode::synchronous, CouplingMode::reflection, CouplingMode::arc}) {
        if (name == to_string(m)) return m;
    }
    throw std::invalid_argument("unknown coupling mode '" + std::string(name) + "'");
}

std::string_view to_string(CutoffShape shape) {
    switch (shape) {
        case CutoffShape::smoothstep_cubic:
            return "smoothstep-cubic";
    }
    return "?";
}

CutoffShape parse_cutoff_shape(std::string_view name) {
    if (name == "smoothstep-cubic") return CutoffShape::smoothstep_cubic;
    throw std::invalid_argument("unknown cutoff shape '" + std::string(name) + "'");
}

DriverSpec DriverSpec::continuous(EmpiricalLoss loss, double beta, double em_substep) {
    DriverSpec d;
    d.kind = DriverKind::continuous_langevin;
    d.loss = std::move(loss);
    d.beta = beta;
    d.em_substep = em_substep;
    return d;
}

DriverSpec DriverSpec::discretized(EmpiricalLoss loss, double beta, double eta) {
    DriverSpec d;
    d.kind = DriverKind::discretized_langevin;
    d.loss = std::move(loss);
    d.beta = beta;
    d.eta = eta;
    return d;
}

DriverSpec DriverSpec::sgld(EmpiricalLoss loss, double beta, double eta, std::size_t batch_size) {
    DriverSpec d;
    d.kind = DriverKind::sgld;
    d.loss = std::move(loss);
    d.beta = beta;
    d.eta = eta;
    d.batch_size = batch_size;
    return d;
}

void DriverSpec::validate() const {
    if (!loss.model || !loss.data) {
        throw std::invalid_argument("driver: loss is not bound to a model and dataset");
    }
    if (!(beta > 0.0) || !std::isfinite(beta)) {
        throw std::invalid_argument("driver: beta must be positive and finite");
    }
    if (frozen_drift() && !(eta > 0.0)) {
        throw std::invalid_argument("driver: eta must be positive");
    }
    if (kind == DriverKind::continuous_langevin && !(em_substep > 0.0)) {
        throw std::invalid_argument("driver: em_substep must be positive");
    }
    if (kind == DriverKind::sgld &&
        (batch_size == 0 || batch_size > loss.data->size())) {
        throw std::invalid_argument("driver: sgld batch size must lie in [1, n]");
    }
}

void CouplingSpec::validate() const {
    if (mode == CouplingMode::arc && !(eps > 0.0)) {
        throw std::invalid_argument("coupling: eps must be positive for arc");
    }
    if (mode == CouplingMode::reflection && !(coalescence_threshold >= 0.0)) {
        throw std::invalid_argument("coupling: coalescence threshold must be >= 0");
    }
}

double h_eps(double a, double eps) {
    if (!(eps > 0.0)) {
        throw std::invalid_argument("h_eps: eps must be positive");
    }
    const double u = std::clamp((std::abs(a) - eps) / eps, 0.0, 1.0);
    return u * u * (3.0 - 2.0 * u);
}

double h_eps_derivative(double a, double eps) {
    if (!(eps > 0.0)) {
        throw std::invalid_argument("h_eps_derivative: eps must be positive");
    }
    const double u = std::clamp((std::abs(a) - eps) / eps, 0.0, 1.0);
    const double d = 6.0 * u * (1.0 - u) / eps;
    return a < 0.0 ? -d : d;
}

void reflected_increment(std::span<const double> z, std::span<const double> dW, double eps,
                         std::span<double> out) {
    if (z.size() != dW.size() || out.size() != dW.size()) {
        throw std::invalid_argument("reflected_increment: dimension mismatch");
    }
    const double r = norm(z);
    const double h = r <= eps ? 0.0 : h_eps(r, eps);
    if (h == 0.0) {
        std::copy(dW.begin(), dW.end(), out.begin());
        return;
    }
    const double c = 2.0 * h * dot(z, dW) / (r * r);
    for (std::size_t i = 0; i < dW.size(); ++i) {
        out[i] = dW[i] - c * z[i];
    }
}

Vector reflected_increment(std::span<const double> z, std::span<const double> dW, double eps) {
    Vector out(dW.size());
    reflected_increment(z, dW, eps, out);
    return out;
}

void driver_drift(const DriverSpec& driver, std::span<const double> w, const MiniBatchIndex* batch,
                  std::span<double> out, GradientWorkspace& ws) {
    if (batch) {
        minibatch_grad(*driver.loss.model, w, *driver.loss.data, *batch, out, ws);
    } else {
        empirical_grad(*driver.loss.model, w, *driver.loss.data, out, ws);
    }
}

Vector step_sgld(std::span<const double> state, const DriverSpec& driver,
                 const MiniBatchIndex& batch, std::span<const double> dW) {
    if (driver.kind != DriverKind::sgld) {
        throw std::invalid_argument("step_sgld: driver is not sgld");
    }
    if (batch.size() == 0) {
        throw std::invalid_argument("step_sgld: missing batch");
    }
    if (state.size() != driver.dim() || dW.size() != state.size()) {
        throw std::invalid_argument("step_sgld: dimension mismatch");
    }
    GradientWorkspace ws(state.size());
    Vector g(state.size());
    driver_drift(driver, state, &batch, g, ws);
    const double s = std::sqrt(2.0 / driver.beta);
    Vector out(state.size());
    for (std::size_t i = 0; i < state.size(); ++i) {
        out[i] = state[i] - driver.eta * g[i] + s * dW[i];
    }
    return out;
}

StepDiagnostics coupled_euler_step(std::span<const double> x, std::span<const double> y,
                                   std::span<const double> drift_x, std::span<const double> drift_y,
                                   std::span<const double> dW, double beta, double dt,
                                   const CouplingSpec& coupling, bool& coalesced,
                                   std::span<double> x_out, std::span<double> y_out) {
    const std::size_t d = x.size();
    const double s = std::sqrt(2.0 / beta);
    for (std::size_t i = 0; i < d; ++i) {
        x_out[i] = x[i] - dt * drift_x[i] + s * dW[i];
    }
    StepDiagnostics diag;
    double r = 0.0;
    if (coupling.mode == CouplingMode::reflection && !coalesced) {
        r = distance(x, y);
        if (r <= coupling.coalescence_threshold) {
            coalesced = true;
        }
    }
    diag.h = coupling_weight(x, y, coupling, coalesced);
    diag.occupation_integrand = (1.0 - diag.h) * diag.h * diag.h;
    if (diag.h == 0.0) {
        for (std::size_t i = 0; i < d; ++i) {
            y_out[i] = y[i] - dt * drift_y[i] + s * dW[i];
        }
        diag.coalesced = coalesced;
        return diag;
    }
    if (r == 0.0) r = distance(x, y);
    double zw = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        zw += (x[i] - y[i]) * dW[i];
    }
    const double c = 2.0 * diag.h * zw / (r * r);
    for (std::size_t i = 0; i < d; ++i) {
        y_out[i] = y[i] - dt * drift_y[i] + s * (dW[i] - c * (x[i] - y[i]));
    }
    if (coupling.mode == CouplingMode::reflection) {
        // The pair crossed the mirror hyperplane during the step: they met.
        double along = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            along += (x_out[i] - y_out[i]) * (x[i] - y[i]);
        }
        if (along <= 0.0) {
            std::copy(x_out.begin(), x_out.end(), y_out.begin());
            coalesced = true;
        }
    }
    diag.coalesced = coalesced;
    return diag;
}

CoupledStep step_coupled(std::span<const double> x, std::span<const double> y,
                         const DriverSpec& x_driver, const DriverSpec& y_driver,
                         const CouplingSpec& coupling, double dt, RandomStream& rng) {
    check_pair(x_driver, y_driver);
    coupling.validate();
    if (x.size() != x_driver.dim() || y.size() != x.size()) {
        throw std::invalid_argument("step_coupled: dimension mismatch");
    }
    const std::size_t d = x.size();
    Vector dW(d);
    fill_normal(rng, std::sqrt(dt), dW);
    GradientWorkspace ws(d);
    Vector bx(d), by(d);
    std::vector<std::size_t> scratch;
    MiniBatchIndex batch;
    auto drift = [&](const DriverSpec& drv, std::span<const double> w, std::span<double> out) {
        if (drv.kind == DriverKind::sgld) {
            sample_minibatch_into(drv.loss.data->size(), drv.batch_size, rng, batch, scratch);
            driver_drift(drv, w, &batch, out, ws);
        } else {
            driver_drift(drv, w, nullptr, out, ws);
        }
    };
    drift(x_driver, x, bx);
    drift(y_driver, y, by);
    CoupledStep out{Vector(d), Vector(d), {}};
    bool coalesced = false;
    out.diagnostics = coupled_euler_step(x, y, bx, by, dW, x_driver.beta, dt, coupling, coalesced,
                                         out.x, out.y);
    return out;
}

std::size_t TimeGrid::steps() const {
    if (!(dt > 0.0) || !(horizon >= 0.0) || record_stride == 0) {
        throw std::invalid_argument("grid: need dt > 0, horizon >= 0, record_stride >= 1");
    }
    const double n = std::round(horizon / dt);
    if (std::abs(n * dt - horizon) > 1e-9 * std::max(horizon, dt)) {
        std::ostringstream msg;
        msg << "grid: horizon " << horizon << " is not a multiple of dt " << dt;
        throw std::invalid_argument(msg.str());
    }
    return static_cast<std::size_t>(n);
}

PairStreams PairStreams::derive(std::uint64_t master_seed, std::string_view tag,
                                std::uint64_t index) {
    return {RandomStream(derive_stream_id(master_seed, tag, index, StreamPurpose::noise)),
            RandomStream(derive_stream_id(master_seed, tag, index, StreamPurpose::batch_x)),
            RandomStream(derive_stream_id(master_seed, tag, index, StreamPurpose::batch_y))};
}

PairSimulator::PairSimulator(DriverSpec x_driver, DriverSpec y_driver, CouplingSpec coupling,
                             TimeGrid grid)
    : xd_(std::move(x_driver)), yd_(std::move(y_driver)), coupling_(coupling), grid_(grid) {
    check_pair(xd_, yd_);
    coupling_.validate();
    steps_ = grid_.steps();
    refresh_x_ = refresh_interval(xd_, grid_.dt);
    refresh_y_ = refresh_interval(yd_, grid_.dt);
    const std::size_t d = xd_.dim();
    x_.resize(d);
    y_.resize(d);
    xn_.resize(d);
    yn_.resize(d);
    bx_.resize(d);
    by_.resize(d);
    dW_.resize(d);
    ws_.reset(d);
}

double PairSimulator::run(std::span<const double> x0, std::span<const double> y0,
                          PairStreams& streams, const PairObserver& observer) {
    const std::size_t d = x_.size();
    if (x0.size() != d || y0.size() != d) {
        throw std::invalid_argument("simulate_pair: initial state dimension mismatch");
    }
    std::copy(x0.begin(), x0.end(), x_.begin());
    std::copy(y0.begin(), y0.end(), y_.begin());
    bool coalesced = false;
    double occupation = 0.0;
    const double dt = grid_.dt;
    const double sdt = std::sqrt(dt);
    if (observer) {
        observer(0, 0.0, x_, y_, diagnostics_at(x_, y_, coupling_, coalesced), occupation);
    }
    auto refresh = [&](const DriverSpec& drv, const Vector& w, Vector& out, RandomStream& rng) {
        if (drv.kind == DriverKind::sgld) {
            sample_minibatch_into(drv.loss.data->size(), drv.batch_size, rng, batch_, scratch_);
            driver_drift(drv, w, &batch_, out, ws_);
        } else {
            driver_drift(drv, w, nullptr, out, ws_);
        }
    };
    for (std::size_t k = 0; k < steps_; ++k) {
        if (k % refresh_x_ == 0) refresh(xd_, x_, bx_, streams.batch_x);
        if (k % refresh_y_ == 0) refresh(yd_, y_, by_, streams.batch_y);
        fill_normal(streams.noise, sdt, dW_);
        const auto diag = coupled_euler_step(x_, y_, bx_, by_, dW_, xd_.beta, dt, coupling_,
                                             coalesced, xn_, yn_);
        occupation += diag.occupation_integrand * dt;
        std::swap(x_, xn_);
        std::swap(y_, yn_);
        const std::size_t step = k + 1;
        if (observer && (step % grid_.record_stride == 0 || step == steps_)) {
            observer(step, static_cast<double>(step) * dt, x_, y_,
                     diagnostics_at(x_, y_, coupling_, coalesced), occupation);
        }
    }
    return occupation;
}

CoupledTrajectory simulate_pair(std::span<const double> x0, std::span<const double> y0,
                                const DriverSpec& x_driver, const DriverSpec& y_driver,
                                const CouplingSpec& coupling, const TimeGrid& grid,
                                PairStreams& streams) {
    PairSimulator sim(x_driver, y_driver, coupling, grid);
    CoupledTrajectory traj;
    traj.dim = x_driver.dim();
    traj.rng_stream_id = streams.noise.id();
    sim.run(x0, y0, streams,
            [&](std::size_t, double t, std::span<const double> x, std::span<const double> y,
                const StepDiagnostics& diag, double occ) {
                traj.times.push_back(t);
                traj.x_path.insert(traj.x_path.end(), x.begin(), x.end());
                traj.y_path.insert(traj.y_path.end(), y.begin(), y.end());
                traj.distance.push_back(distance(x, y));
                traj.h_path.push_back(diag.h);
                traj.occupation_integrand.push_back(diag.occupation_integrand);
                traj.occupation_integral.push_back(occ);
            });
    return traj;
}

void write_trajectory_csv(const CoupledTrajectory& traj, std::ostream& out) {
    const std::size_t d = traj.dim;
    out << "t";
    for (std::size_t j = 0; j < d; ++j) out << ",x" << j;
    for (std::size_t j = 0; j < d; ++j) out << ",y" << j;
    out << ",distance,h_eps,occupation_integrand\n";
    for (std::size_t i = 0; i < traj.size(); ++i) {
        out << format_real(traj.times[i]);
        for (std::size_t j = 0; j < d; ++j) out << ',' << format_real(traj.x_path[i * d + j]);
        for (std::size_t j = 0; j < d; ++j) out << ',' << format_real(traj.y_path[i * d + j]);
        out << ',' << format_real(traj.distance[i]) << ',' << format_real(traj.h_path[i]) << ','
            << format_real(traj.occupation_integrand[i]) << '\n';
    }
}

void simulate_single(std::span<const double> y0, const DriverSpec& driver, const TimeGrid& grid,
                     PairStreams& streams, const SingleObserver& observer) {
    driver.validate();
    const std::size_t d = driver.dim();
    if (y0.size() != d) {
        throw std::invalid_argument("simulate_single: initial state dimension mismatch");
    }
    const std::size_t steps = grid.steps();
    const std::size_t refresh = refresh_interval(driver, grid.dt);
    Vector y(y0.begin(), y0.end()), b(d);
    GradientWorkspace ws(d);
    MiniBatchIndex batch;
    std::vector<std::size_t> scratch;
    const double dt = grid.dt;
    const double sdt = std::sqrt(dt);
    const double s = std::sqrt(2.0 / driver.beta);
    if (observer) observer(0, 0.0, y);
    for (std::size_t k = 0; k < steps; ++k) {
        if (k % refresh == 0) {
            if (driver.kind == DriverKind::sgld) {
                sample_minibatch_into(driver.loss.data->size(), driver.batch_size, streams.batch_y,
                                      batch, scratch);
                driver_drift(driver, y, &batch, b, ws);
            } else {
                driver_drift(driver, y, nullptr, b, ws);
            }
        }
        for (std::size_t i = 0; i < d; ++i) {
            const double w = sdt * streams.noise.normal();
            y[i] = y[i] - dt * b[i] + s * w;
        }
        const std::size_t step = k + 1;
        if (observer && (step % grid.record_stride == 0 || step == steps)) {
            observer(step, static_cast<double>(step) * dt, y);
        }
    }
}

}  // namespace arc
