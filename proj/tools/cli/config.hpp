// SPDX-License-Identifier: Apache-2.0
//! \file config.hpp
//! Key-value run configuration for the `arc` tool.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "arc/eberle.hpp"
#include "arc/experiments.hpp"

namespace arc::cli {

enum class Subcommand { calibrate, simulate, verify, sweep };

std::string_view to_string(Subcommand s);
Subcommand parse_subcommand(std::string_view name);

class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/*!
 * Parses
 *   # comment
 *   [section]
 *   key = value
 * into "section.key" -> value, in file order. Keys outside a section are
 * errors, as are duplicates.
 */
std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text);

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<unsigned> threads;
    bool dump_trajectories = false;
    //! "section.key" = value, applied last.
    std::vector<std::pair<std::string, std::string>> set;
};

struct SimulateConfig {
    ModelConfig model = ModelConfig::cosine_sphere(2, 1.0, 1.0, 1.0, 8);
    double beta = 1.0;
    Vector x0{1.0};
    Vector y0{-1.0};
    double horizon = 1.0;
    double dt = 0.01;
    std::size_t record_stride = 1;
    DriverKind driver_x = DriverKind::continuous_langevin;
    DriverKind driver_y = DriverKind::continuous_langevin;
    double eta = 0.01;
    std::size_t batch_size = 1;
    CouplingMode coupling = CouplingMode::arc;
    //! 0 selects 1e-3 R2.
    double eps = 0.0;
    double coalescence_threshold = 1e-9;
    std::size_t trajectory_index = 0;
    CalibrationOptions calibration;
};

struct CalibrateConfig {
    CalibrationInputs inputs;
    CalibrationOptions options;
    VerificationOptions verification;
};

struct VerifyConfig {
    MomentSuiteConfig moments;
    MinibatchSuiteConfig minibatch;
};

//! Every typed configuration a run may use; only the selected one is bound.
struct Job {
    CalibrateConfig calibrate;
    SimulateConfig simulate;
    VerifyConfig verify;
    ContractionConfig contraction;
    EtaSweepConfig eta_sweep;
    BatchSweepConfig batch_sweep;
    NSweepConfig n_sweep;
    EpsConvergenceConfig eps_convergence;
    GibbsGapConfig gibbs_gap;
    MarginalConfig marginal;
    MomentSuiteConfig moments;
    MinibatchSuiteConfig minibatch;
};

struct RunConfig {
    Subcommand subcommand = Subcommand::calibrate;
    //! Experiment id for `sweep`.
    std::string experiment;
    std::uint64_t seed = 1;
    std::string out;
    unsigned threads = 0;
    bool dump_trajectories = false;
    std::size_t dump_count = 4;
    Job job;
    //! Effective values in schema order.
    std::vector<std::pair<std::string, std::string>> effective;

    RunOptions run_options() const;
    //! The effective config as a key-value document; parses back to the same run.
    std::string echo() const;
};

/*!
 * Defaults, then file values, then overrides. Keys are checked against the
 * union of all subcommands' keys; keys for another subcommand are accepted
 * and ignored.
 */
RunConfig parse_config(std::string_view file_bytes, Subcommand subcommand,
                       std::string experiment, const Overrides& overrides = {});

//! All keys any subcommand accepts, sorted.
std::vector<std::string> known_keys();

//! Levenshtein distance.
std::size_t edit_distance(std::string_view a, std::string_view b);

//! Default output root: $ARC_OUTPUT_ROOT, else "arc-output".
std::string default_output_root();

}  // namespace arc::cli
