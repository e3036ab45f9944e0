// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: one PASS/FAIL line per criterion.
// Usage: arc_acceptance [criterion-number ...]   (default: all)
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "arc/eberle.hpp"
#include "arc/experiments.hpp"
#include "arc/sde.hpp"
#include "cli/config.hpp"
#include "cli/dispatch.hpp"

namespace fs = std::filesystem;
using namespace arc;

namespace {

struct Verdict {
    bool passed = false;
    std::string detail;
};

struct Criterion {
    int id;
    const char* name;
    double time_limit;  // seconds; 0 = none
    std::function<Verdict()> run;
};

std::string failed_checks(const ExperimentRecord& rec) {
    std::string out;
    for (const auto& c : rec.checks) {
        if (!c.passed) out += (out.empty() ? "" : ",") + c.name;
    }
    return out;
}

Verdict from_record(const ExperimentRecord& rec, std::string extra = {}) {
    Verdict v;
    v.passed = rec.passed();
    std::ostringstream d;
    d << rec.checks.size() << " checks";
    if (!v.passed) d << ", failed: " << failed_checks(rec);
    if (rec.fit) d << ", slope " << rec.fit->slope << " (se " << rec.fit->stderr_slope << ")";
    if (!extra.empty()) d << ", " << extra;
    v.detail = d.str();
    return v;
}

RunOptions run_options() {
    RunOptions r;
    r.seed = 20240601;
    r.threads = 0;
    return r;
}

Verdict calibration() {
    const CalibrationInputs in{1.0, 1.0, 2.0, 1.0, 2};
    const auto cal = EberleCalibration::build(in);
    const double k[] = {cal.lambda(), cal.C(), cal.r1(), cal.r2(), cal.kappa(),
                        cal.Q(),      cal.zeta(), cal.xi(), cal.rate()};
    bool finite = true;
    for (double v : k) finite = finite && std::isfinite(v) && v > 0.0;
    RandomStream rng(derive_stream_id(run_options().seed, "acceptance", 0, StreamPurpose::probe));
    const auto catalog =
        compatible_catalog(in, derive_stream_id(run_options().seed, "acceptance", 0, StreamPurpose::data));
    const auto report = verify_calibration(cal, catalog, rng, VerificationOptions{});
    Verdict v;
    v.passed = finite && report.passed() && report.checks.size() == 4;
    char buf[256];
    std::snprintf(buf, sizeof buf, "c = %.4g, R1 = %.6g, R2 = %.6g, kappa = %.4g, %zu/%zu checks",
                  cal.rate(), cal.r1(), cal.r2(), cal.kappa(),
                  static_cast<std::size_t>(std::count_if(report.checks.begin(), report.checks.end(),
                                                         [](const auto& c) { return c.passed; })),
                  report.checks.size());
    v.detail = buf;
    return v;
}

Verdict coupling() {
    const double eps = 0.05;
    bool ok = h_eps(eps, eps) == 0.0 && h_eps(2.0 * eps, eps) == 1.0 && h_eps(-2.0 * eps, eps) == 1.0 &&
              h_eps(0.5 * eps, eps) == 0.0 && h_eps(3.0 * eps, eps) == 1.0;
    RandomStream rng(7);
    double worst = 0.0;
    for (int k = 0; k < 100000; ++k) {
        Vector z(3), w(3);
        for (auto& x : z) x = rng.normal();
        for (auto& x : w) x = rng.normal();
        const auto out = reflected_increment(z, w, 1e-3);
        const double nz = norm(z), nw = norm(w);
        worst = std::max(worst, std::abs(norm(out) - nw) / nw);
        worst = std::max(worst, std::abs(dot(out, z) + dot(w, z)) / (nz * nw));
    }
    ok = ok && worst <= 1e-12;

    const auto loss = ModelConfig::cosine_sphere(2, 1.0, 1.0, 1.0, 8).build(3);
    const auto drv = DriverSpec::continuous(loss, 1.0, 0.01);
    CouplingSpec a, s;
    a.eps = 0.5;
    s.mode = CouplingMode::synchronous;
    std::size_t mismatches = 0;
    for (int k = 0; k < 10000; ++k) {
        Vector x{2.0 * rng.normal(), 2.0 * rng.normal()}, y = x;
        const double r = 0.5 * rng.uniform(), th = 6.283185307179586 * rng.uniform();
        y[0] += r * std::cos(th);
        y[1] += r * std::sin(th);
        RandomStream ra(100 + k), rs(100 + k);
        const auto pa = step_coupled(x, y, drv, drv, a, 0.01, ra);
        const auto ps = step_coupled(x, y, drv, drv, s, 0.01, rs);
        if (std::memcmp(pa.x.data(), ps.x.data(), 16) != 0 ||
            std::memcmp(pa.y.data(), ps.y.data(), 16) != 0) {
            ++mismatches;
        }
    }
    ok = ok && mismatches == 0;
    char buf[160];
    std::snprintf(buf, sizeof buf, "max orthogonality defect %.3g, %zu bitwise mismatches", worst,
                  mismatches);
    return {ok, buf};
}

std::string read_all(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

// Every output file except the echo (it records threads and out) and summary.txt (wall time).
std::vector<std::pair<std::string, std::string>> outputs(const fs::path& root) {
    std::vector<std::pair<std::string, std::string>> files;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), root).generic_string();
        if (rel == "config-echo.kv" || rel == "summary.txt") continue;
        files.emplace_back(rel, read_all(e.path()));
    }
    std::sort(files.begin(), files.end());
    return files;
}

Verdict determinism() {
    struct Case {
        const char* experiment;
        const char* config;
    };
    const Case cases[] = {
        {"contraction", "[dynamics]\nensemble = 600\nhorizon = 20\nrecord_stride = 40\n"},
        {"eta-sweep", "[dynamics]\nensemble = 300\n[eta_sweep]\nt_final = 0.5\neta_list = 0.125, 0.0625, 0.03125, 0.0078125\n"},
        {"batch-sweep", "[model]\nn = 8\n[dynamics]\nensemble = 300\n[batch_sweep]\nt_final = 0.5\nbatch_list = 1, 2, 4, 8\n"},
        {"eps-convergence", "[dynamics]\nensemble = 300\nhorizon = 0.1\ndt = 0.001\n[eps_convergence]\neps_list = 0.4, 0.2, 0.1, 0.05\n"},
        {"minibatch-variance", "[minibatch]\nmax_n = 6\npoints = 5\n"},
    };
    const auto root = fs::temp_directory_path() / "arc-acceptance-determinism";
    std::size_t files = 0;
    std::string bad;
    for (const auto& c : cases) {
        std::vector<std::vector<std::pair<std::string, std::string>>> runs;
        for (unsigned threads : {1u, 2u, 1u}) {
            cli::Overrides ov;
            const auto dir = root / (std::string(c.experiment) + "-" + std::to_string(runs.size()));
            fs::remove_all(dir);
            ov.out = dir.string();
            ov.threads = threads;
            ov.seed = 99;
            ov.dump_trajectories = true;
            std::ostringstream out, err;
            const int code =
                cli::dispatch(cli::parse_config(c.config, cli::Subcommand::sweep, c.experiment, ov), out, err);
            if (code == cli::kExitError) bad += std::string(c.experiment) + ":error ";
            runs.push_back(outputs(dir));
            fs::remove_all(dir);
        }
        files += runs[0].size();
        if (runs[0].empty() || runs[0] != runs[1] || runs[0] != runs[2]) bad += std::string(c.experiment) + " ";
    }
    fs::remove_all(root);
    return {bad.empty(), std::to_string(files) + " files compared over threads 1/2/1" +
                             (bad.empty() ? "" : ", differing: " + bad)};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> criteria = {
        {1, "calibration soundness", 10, calibration},
        {2, "coupling correctness", 0, coupling},
        {3, "marginal preservation", 300,
         [] { return from_record(run_marginal_check(MarginalConfig{}, run_options())); }},
        {4, "contraction", 300,
         [] {
             const auto rec = run_contraction(ContractionConfig{}, run_options());
             std::string extra;
             for (const auto& [name, v] : rec.series) {
                 if (name.find("decay") != std::string::npos && !v.empty()) {
                     extra += name + " " + std::to_string(v.front()) + " ";
                 }
             }
             return from_record(rec, extra);
         }},
        {5, "eta exponent", 600,
         [] { return from_record(run_eta_sweep(EtaSweepConfig{}, run_options())); }},
        {6, "batch exponent", 900,
         [] { return from_record(run_batch_sweep(BatchSweepConfig{}, run_options())); }},
        {7, "minibatch variance bound", 60,
         [] { return from_record(run_minibatch_checks(MinibatchSuiteConfig{}, run_options())); }},
        {8, "moment bounds", 300,
         [] { return from_record(run_moment_checks(MomentSuiteConfig{}, run_options())); }},
        {9, "eps convergence", 600,
         [] { return from_record(run_eps_convergence(EpsConvergenceConfig{}, run_options())); }},
        {10, "n rate", 1800, [] { return from_record(run_n_sweep(NSweepConfig{}, run_options())); }},
        {11, "determinism", 0, determinism},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

    int failures = 0;
    for (const auto& c : criteria) {
        if (!selected.empty() && !selected.count(c.id)) continue;
        const auto start = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = c.run();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = c.time_limit == 0 || secs < c.time_limit;
        const bool pass = v.passed && in_time;
        failures += pass ? 0 : 1;
        std::printf("%s [%2d] %-26s %7.1f s%s  %s\n", pass ? "PASS" : "FAIL", c.id, c.name, secs,
                    in_time ? "" : " (over time limit)", v.detail.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
