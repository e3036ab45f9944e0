// SPDX-License-Identifier: Apache-2.0
//! \file dispatch.hpp
//! Runs one subcommand and writes the output directory.
#pragma once

#include <ostream>

#include "config.hpp"

namespace arc::cli {

inline constexpr int kExitPass = 0;
inline constexpr int kExitVerdictFailed = 1;
inline constexpr int kExitError = 2;

/*!
 * Output layout under config.out:
 *   config-echo.kv, calibration.json, records/<id>.json, curves/<id>.csv,
 *   summary.txt, and trajectories/<label>.csv with dump_trajectories.
 * Returns kExitPass iff every verdict passed and every write succeeded.
 * Verdict lines go to `out`, failures and errors to `err`.
 */
int dispatch(const RunConfig& config, std::ostream& out, std::ostream& err);

}  // namespace arc::cli
