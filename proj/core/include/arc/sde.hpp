// SPDX-License-Identifier: Apache-2.0
//! \file arc/sde.hpp
//! Euler-Maruyama steppers for Langevin, SGLD and coupled pairs.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "arc/numeric.hpp"
#include "arc/potentials.hpp"
#include "arc/rng.hpp"

namespace arc {

enum class DriverKind { continuous_langevin, discretized_langevin, sgld };

std::string_view to_string(DriverKind kind);
DriverKind parse_driver_kind(std::string_view name);

/*!
 * dY = -grad L(Y) dt + sqrt(2/beta) dW.
 *
 * continuous_langevin evaluates the drift at every grid step (step size at
 * most em_substep). discretized_langevin and sgld freeze the drift on
 * [k eta, (k+1) eta); sgld uses a fresh mini-batch of size batch_size at
 * every refresh.
 */
struct DriverSpec {
    DriverKind kind = DriverKind::continuous_langevin;
    EmpiricalLoss loss;
    double beta = 1.0;
    double eta = 0.01;
    double em_substep = 0.01;
    std::size_t batch_size = 0;

    static DriverSpec continuous(EmpiricalLoss loss, double beta, double em_substep);
    static DriverSpec discretized(EmpiricalLoss loss, double beta, double eta);
    static DriverSpec sgld(EmpiricalLoss loss, double beta, double eta, std::size_t batch_size);

    std::size_t dim() const { return loss.dim(); }
    bool frozen_drift() const { return kind != DriverKind::continuous_langevin; }
    void validate() const;
};

enum class CouplingMode { synchronous, reflection, arc };
enum class CutoffShape { smoothstep_cubic };

std::string_view to_string(CouplingMode mode);
CouplingMode parse_coupling_mode(std::string_view name);
std::string_view to_string(CutoffShape shape);
CutoffShape parse_cutoff_shape(std::string_view name);

struct CouplingSpec {
    CouplingMode mode = CouplingMode::arc;
    double eps = 1e-3;
    CutoffShape shape = CutoffShape::smoothstep_cubic;
    //! Hard reflection only: separation at which the pair is declared merged.
    double coalescence_threshold = 1e-9;

    void validate() const;
};

//! h(a) = 3u^2 - 2u^3 with u = clamp((|a| - eps)/eps, 0, 1).
double h_eps(double a, double eps);
//! dh/da; odd in a.
double h_eps_derivative(double a, double eps);

//! dW - 2 h(||z||) <e, dW> e with e = z/||z||; dW itself when ||z|| <= eps.
void reflected_increment(std::span<const double> z, std::span<const double> dW, double eps,
                         std::span<double> out);
Vector reflected_increment(std::span<const double> z, std::span<const double> dW, double eps);

//! state - eta grad L_{n,k}(state) + sqrt(2/beta) dW, dW ~ N(0, eta I).
Vector step_sgld(std::span<const double> state, const DriverSpec& driver,
                 const MiniBatchIndex& batch, std::span<const double> dW);

//! Drift of the driver at w: full gradient, or the mini-batch gradient when a batch is given.
void driver_drift(const DriverSpec& driver, std::span<const double> w, const MiniBatchIndex* batch,
                  std::span<double> out, GradientWorkspace& ws);

struct StepDiagnostics {
    //! Reflection weight applied to Y's increment (h_eps under arc, 1 or 0 under hard reflection).
    double h = 0.0;
    //! (1 - h) h^2.
    double occupation_integrand = 0.0;
    bool coalesced = false;
};

/*!
 * One explicit Euler-Maruyama step of the pair with frozen drifts:
 *   x' = x - dt bx + sqrt(2/beta) dW,
 *   y' = y - dt by + sqrt(2/beta) dW', dW' chosen by the coupling mode.
 * `coalesced` carries the hard-reflection state across steps.
 */
StepDiagnostics coupled_euler_step(std::span<const double> x, std::span<const double> y,
                                   std::span<const double> drift_x, std::span<const double> drift_y,
                                   std::span<const double> dW, double beta, double dt,
                                   const CouplingSpec& coupling, bool& coalesced,
                                   std::span<double> x_out, std::span<double> y_out);

struct CoupledStep {
    Vector x;
    Vector y;
    StepDiagnostics diagnostics;
};

//! Convenience single step: drift at (x, y), dW ~ N(0, dt I) from rng,
//! mini-batches (sgld) drawn from rng after the noise.
CoupledStep step_coupled(std::span<const double> x, std::span<const double> y,
                         const DriverSpec& x_driver, const DriverSpec& y_driver,
                         const CouplingSpec& coupling, double dt, RandomStream& rng);

struct TimeGrid {
    double horizon = 1.0;
    double dt = 0.01;
    //! Observe every record_stride-th step (the final step is always observed).
    std::size_t record_stride = 1;

    //! Number of steps; throws when horizon is not a multiple of dt.
    std::size_t steps() const;
};

//! Independent streams of one trajectory: Brownian noise, X batches, Y batches.
struct PairStreams {
    RandomStream noise;
    RandomStream batch_x;
    RandomStream batch_y;

    static PairStreams derive(std::uint64_t master_seed, std::string_view tag, std::uint64_t index);
};

//! Observer called at step 0 and at recorded steps: (step, t, x, y, diag, occupation_integral).
using PairObserver = std::function<void(std::size_t, double, std::span<const double>,
                                        std::span<const double>, const StepDiagnostics&, double)>;

/*!
 * Reusable single-pair simulator. Holds scratch buffers so an ensemble
 * worker can run many trajectories without allocation.
 */
class PairSimulator {
  public:
    PairSimulator(DriverSpec x_driver, DriverSpec y_driver, CouplingSpec coupling, TimeGrid grid);

    //! Runs one trajectory from (x0, y0); returns the final occupation integral.
    double run(std::span<const double> x0, std::span<const double> y0, PairStreams& streams,
               const PairObserver& observer);

    const Vector& x() const { return x_; }
    const Vector& y() const { return y_; }
    const TimeGrid& grid() const { return grid_; }
    std::size_t steps() const { return steps_; }

  private:
    DriverSpec xd_, yd_;
    CouplingSpec coupling_;
    TimeGrid grid_;
    std::size_t steps_ = 0;
    std::size_t refresh_x_ = 1, refresh_y_ = 1;
    Vector x_, y_, xn_, yn_, bx_, by_, dW_;
    GradientWorkspace ws_;
    MiniBatchIndex batch_;
    std::vector<std::size_t> scratch_;
};

struct CoupledTrajectory {
    std::size_t dim = 0;
    std::vector<double> times;
    //! Row-major, one row of length dim per recorded time.
    std::vector<double> x_path;
    std::vector<double> y_path;
    std::vector<double> distance;
    std::vector<double> h_path;
    std::vector<double> occupation_integrand;
    //! Running integral of (1 - h) h^2 over [0, t].
    std::vector<double> occupation_integral;
    std::uint64_t rng_stream_id = 0;

    std::size_t size() const { return times.size(); }
};

CoupledTrajectory simulate_pair(std::span<const double> x0, std::span<const double> y0,
                                const DriverSpec& x_driver, const DriverSpec& y_driver,
                                const CouplingSpec& coupling, const TimeGrid& grid,
                                PairStreams& streams);

//! Columns t, x0.., y0.., distance, h_eps, occupation_integrand.
void write_trajectory_csv(const CoupledTrajectory& traj, std::ostream& out);

/*!
 * Single process: Y alone under its driver (noise from streams.noise,
 * batches from streams.batch_y). Observer gets (step, t, y).
 */
using SingleObserver = std::function<void(std::size_t, double, std::span<const double>)>;
void simulate_single(std::span<const double> y0, const DriverSpec& driver, const TimeGrid& grid,
                     PairStreams& streams, const SingleObserver& observer);

}  // namespace arc
