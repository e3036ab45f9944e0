// SPDX-License-Identifier: Apache-2.0
#include "dispatch.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace arc::cli {
namespace {

namespace fs = std::filesystem;

class IoError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

void write_file(const fs::path& path, const std::string& content) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    f << content;
    f.close();
    if (!f) throw IoError("write failed for " + path.string());
}

std::string calibration_json(const ModelConfig& model, double beta, const CalibrationOptions& options) {
    const auto m = model.model();
    return EberleCalibration::build(calibration_inputs(m.constants(), beta, m.dim()), options).to_json();
}

struct Outcome {
    std::vector<ExperimentRecord> records;
    std::vector<CheckRecord> extra_checks;
    std::string extra_summary;
};

Outcome run_sweep(const RunConfig& rc, const RunOptions& opts, const fs::path& dir) {
    const auto& j = rc.job;
    const auto& id = rc.experiment;
    Outcome o;
    auto calib = [&](const ModelConfig& m, double beta, const CalibrationOptions& c) {
        write_file(dir / "calibration.json", calibration_json(m, beta, c));
    };
    if (id == "contraction") {
        calib(j.contraction.model, j.contraction.beta, j.contraction.calibration);
        o.records.push_back(run_contraction(j.contraction, opts));
    } else if (id == "eta-sweep") {
        calib(j.eta_sweep.model, j.eta_sweep.beta, j.eta_sweep.calibration);
        o.records.push_back(run_eta_sweep(j.eta_sweep, opts));
    } else if (id == "batch-sweep") {
        calib(j.batch_sweep.model, j.batch_sweep.beta, j.batch_sweep.calibration);
        o.records.push_back(run_batch_sweep(j.batch_sweep, opts));
    } else if (id == "n-sweep") {
        calib(j.n_sweep.model, j.n_sweep.beta, {});
        o.records.push_back(run_n_sweep(j.n_sweep, opts));
    } else if (id == "eps-convergence") {
        calib(j.eps_convergence.model, j.eps_convergence.beta, j.eps_convergence.calibration);
        o.records.push_back(run_eps_convergence(j.eps_convergence, opts));
    } else if (id == "gibbs-gap") {
        calib(j.gibbs_gap.model, j.gibbs_gap.beta, j.gibbs_gap.calibration);
        o.records.push_back(run_gibbs_gap(j.gibbs_gap, opts));
    } else if (id == "marginal") {
        calib(j.marginal.model, j.marginal.beta, j.marginal.calibration);
        o.records.push_back(run_marginal_check(j.marginal, opts));
    } else if (id == "moments") {
        calib(j.moments.model, j.moments.beta, {});
        o.records.push_back(run_moment_checks(j.moments, opts));
    } else if (id == "minibatch-variance") {
        o.records.push_back(run_minibatch_checks(j.minibatch, opts));
    }
    return o;
}

Outcome run_calibrate(const RunConfig& rc, const fs::path& dir) {
    const auto& c = rc.job.calibrate;
    Outcome o;
    const auto cal = EberleCalibration::build(c.inputs, c.options);
    write_file(dir / "calibration.json", cal.to_json());
    const auto catalog =
        compatible_catalog(c.inputs, derive_stream_id(rc.seed, "calibrate", 0, StreamPurpose::data));
    RandomStream rng(derive_stream_id(rc.seed, "calibrate", 0, StreamPurpose::probe));
    const auto report = verify_calibration(cal, catalog, rng, c.verification);
    write_file(dir / "records" / "calibration-report.json", report.to_json());

    const double constants[] = {cal.lambda(), cal.C(), cal.r1(), cal.r2(), cal.kappa(),
                                cal.Q(),      cal.zeta(), cal.xi(), cal.rate()};
    double worst = std::numeric_limits<double>::infinity();
    for (double v : constants) worst = std::min(worst, std::isfinite(v) ? v : -1.0);
    char line[256];
    std::snprintf(line, sizeof line,
                  "lambda %.6g, C %.6g, R1 %.6g, R2 %.6g, kappa %.6g, Q %.6g, zeta %.6g, xi %.6g, c %.6g",
                  cal.lambda(), cal.C(), cal.r1(), cal.r2(), cal.kappa(), cal.Q(), cal.zeta(), cal.xi(),
                  cal.rate());
    o.extra_checks.push_back({"constants_finite_positive", worst, 0.0, worst > 0.0, line});
    for (const auto& chk : report.checks) {
        o.extra_checks.push_back({chk.name, chk.margin, 0.0, chk.passed, chk.detail});
    }
    return o;
}

Outcome run_simulate(const RunConfig& rc, const fs::path& dir) {
    const auto& c = rc.job.simulate;
    Outcome o;
    const auto loss = c.model.build(derive_stream_id(rc.seed, "simulate", 0, StreamPurpose::data));
    const auto cal = EberleCalibration::build(
        calibration_inputs(loss.model->constants(), c.beta, loss.dim()), c.calibration);
    write_file(dir / "calibration.json", cal.to_json());
    auto make = [&](DriverKind kind) {
        switch (kind) {
            case DriverKind::continuous_langevin: return DriverSpec::continuous(loss, c.beta, c.dt);
            case DriverKind::discretized_langevin: return DriverSpec::discretized(loss, c.beta, c.eta);
            case DriverKind::sgld: return DriverSpec::sgld(loss, c.beta, c.eta, c.batch_size);
        }
        throw std::invalid_argument("unknown driver");
    };
    CouplingSpec coupling;
    coupling.mode = c.coupling;
    coupling.eps = c.eps > 0.0 ? c.eps : 1e-3 * cal.r2();
    coupling.coalescence_threshold = c.coalescence_threshold;
    auto expand = [&](const Vector& v) { return v.size() == 1 ? Vector(loss.dim(), v[0]) : v; };
    auto streams = PairStreams::derive(rc.seed, "simulate", c.trajectory_index);
    const auto traj = simulate_pair(expand(c.x0), expand(c.y0), make(c.driver_x), make(c.driver_y),
                                    coupling, TimeGrid{c.horizon, c.dt, c.record_stride}, streams);
    std::ostringstream csv;
    write_trajectory_csv(traj, csv);
    write_file(dir / "curves" / "trajectory.csv", csv.str());
    std::ostringstream line;
    line << "simulate: " << traj.size() << " rows, final distance "
         << (traj.size() ? traj.distance.back() : 0.0) << ", occupation integral "
         << (traj.size() ? traj.occupation_integral.back() : 0.0) << '\n';
    o.extra_summary = line.str();
    return o;
}

Outcome run_verify(const RunConfig& rc, const RunOptions& opts, const fs::path& dir) {
    const auto& v = rc.job.verify;
    Outcome o;
    write_file(dir / "calibration.json", calibration_json(v.moments.model, v.moments.beta, {}));
    o.records.push_back(run_moment_checks(v.moments, opts));
    o.records.push_back(run_minibatch_checks(v.minibatch, opts));
    return o;
}

}  // namespace

int dispatch(const RunConfig& config, std::ostream& out, std::ostream& err) {
    const fs::path dir(config.out);
    const auto start = std::chrono::steady_clock::now();
    try {
        write_file(dir / "config-echo.kv", config.echo());
        std::vector<LabeledTrajectory> trajectories;
        RunOptions opts = config.run_options();
        if (config.dump_trajectories) opts.trajectories = &trajectories;

        Outcome o;
        switch (config.subcommand) {
            case Subcommand::calibrate: o = run_calibrate(config, dir); break;
            case Subcommand::simulate: o = run_simulate(config, dir); break;
            case Subcommand::verify: o = run_verify(config, opts, dir); break;
            case Subcommand::sweep: o = run_sweep(config, opts, dir); break;
        }

        std::ostringstream summary;
        bool passed = true;
        for (const auto& rec : o.records) {
            write_file(dir / "records" / (rec.id + ".json"), rec.to_json());
            write_file(dir / "curves" / (rec.id + ".csv"), rec.curves_csv());
            summary << rec.summary();
            for (const auto& c : rec.checks) {
                if (!c.passed) err << "failed check: " << rec.id << '/' << c.name << '\n';
            }
            passed = passed && rec.passed();
        }
        for (const auto& c : o.extra_checks) {
            summary << (c.passed ? "PASS " : "FAIL ") << to_string(config.subcommand) << '/' << c.name
                    << ": margin " << c.margin << ", " << c.detail << '\n';
            if (!c.passed) err << "failed check: " << c.name << '\n';
            passed = passed && c.passed;
        }
        summary << o.extra_summary;
        for (const auto& t : trajectories) {
            std::ostringstream csv;
            write_trajectory_csv(t.trajectory, csv);
            write_file(dir / "trajectories" / (t.label + ".csv"), csv.str());
        }
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::ostringstream timing;
        timing << "wall time " << wall << " s\n";
        write_file(dir / "summary.txt", summary.str() + timing.str());
        out << summary.str() << timing.str();
        return passed ? kExitPass : kExitVerdictFailed;
    } catch (const IoError& e) {
        err << "io error: " << e.what() << '\n';
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
    }
    return kExitError;
}

}  // namespace arc::cli
