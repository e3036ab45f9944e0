// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli/config.hpp"
#include "cli/dispatch.hpp"
#include "doctest.h"

using namespace arc;
using namespace arc::cli;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

fs::path scratch_dir(const std::string& name) {
    auto p = fs::temp_directory_path() / ("arc-cli-test-" + name);
    fs::remove_all(p);
    return p;
}

const char* kSmallContraction =
    "[dynamics]\nensemble = 16\nhorizon = 20\nrecord_stride = 40\n";

}  // namespace

TEST_CASE("key-value parsing") {
    const auto kv = parse_key_values("# c\n[run]\nseed = 7 ; trailing\n\n[dynamics]\nbeta=2\n");
    REQUIRE(kv.size() == 2);
    CHECK(kv[0] == std::pair<std::string, std::string>{"run.seed", "7"});
    CHECK(kv[1] == std::pair<std::string, std::string>{"dynamics.beta", "2"});
    CHECK_THROWS_AS(parse_key_values("seed = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_key_values("[run]\nseed = 1\nseed = 2\n"), ConfigError);
    CHECK_THROWS_AS(parse_key_values("[run\n"), ConfigError);
    CHECK_THROWS_AS(parse_key_values("[run]\nseed\n"), ConfigError);
}

TEST_CASE("empty file gives defaults") {
    const auto rc = parse_config("", Subcommand::sweep, "eta-sweep");
    CHECK(rc.seed == 1);
    CHECK(rc.job.eta_sweep.eta_list == EtaSweepConfig{}.eta_list);
    CHECK(rc.job.eta_sweep.ensemble == EtaSweepConfig{}.ensemble);
    CHECK(rc.out.size() > std::string("eta-sweep").size());
    CHECK(rc.out.substr(rc.out.size() - 9) == "eta-sweep");
}

TEST_CASE("file values and overrides both reach the echo") {
    Overrides ov;
    ov.set.emplace_back("dynamics.ensemble", "123");
    ov.seed = 9;
    const auto rc = parse_config("[eta_sweep]\neta_list = 0.1, 0.05, 0.01\n", Subcommand::sweep,
                                 "eta-sweep", ov);
    CHECK(rc.job.eta_sweep.eta_list == std::vector<double>{0.1, 0.05, 0.01});
    CHECK(rc.job.eta_sweep.ensemble == 123);
    CHECK(rc.seed == 9);
    const auto echo = rc.echo();
    CHECK(echo.find("ensemble = 123") != std::string::npos);
    CHECK(echo.find("seed = 9") != std::string::npos);
    CHECK(echo.find("eta_list = ") != std::string::npos);

    const auto again = parse_config(echo, Subcommand::sweep, "eta-sweep");
    CHECK(again.effective == rc.effective);
    CHECK(again.echo() == echo);
}

TEST_CASE("override beats file value") {
    Overrides ov;
    ov.set.emplace_back("dynamics.beta", "3");
    const auto rc = parse_config("[dynamics]\nbeta = 2\n", Subcommand::simulate, "", ov);
    CHECK(rc.job.simulate.beta == 3.0);
}

TEST_CASE("unknown keys name the nearest known key") {
    try {
        parse_config("[dynamics]\nensemle = 5\n", Subcommand::sweep, "contraction");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string what = e.what();
        CHECK(what.find("dynamics.ensemle") != std::string::npos);
        CHECK(what.find("did you mean 'dynamics.ensemble'") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config("[dynamics]\nbeta = abc\n", Subcommand::simulate, ""), ConfigError);
    CHECK_THROWS_AS(parse_config("[simulate]\ncoupling = glue\n", Subcommand::simulate, ""),
                    ConfigError);
    // Keys for another subcommand are accepted.
    CHECK_NOTHROW(parse_config("[eta_sweep]\nt_final = 1\n", Subcommand::calibrate, ""));
}

TEST_CASE("edit distance and key catalog") {
    CHECK(edit_distance("kitten", "sitting") == 3);
    CHECK(edit_distance("", "abc") == 3);
    const auto keys = known_keys();
    CHECK(std::is_sorted(keys.begin(), keys.end()));
    CHECK(std::find(keys.begin(), keys.end(), "run.seed") != keys.end());
}

TEST_CASE("subcommand names round-trip") {
    for (auto s : {Subcommand::calibrate, Subcommand::simulate, Subcommand::verify, Subcommand::sweep}) {
        CHECK(parse_subcommand(to_string(s)) == s);
    }
    CHECK_THROWS_AS(parse_subcommand("run"), ConfigError);
}

TEST_CASE("dispatch calibrate") {
    Overrides ov;
    const auto dir = scratch_dir("calibrate");
    ov.out = dir.string();
    const auto rc = parse_config("", Subcommand::calibrate, "", ov);
    std::ostringstream out, err;
    CHECK(dispatch(rc, out, err) == kExitPass);
    CHECK(fs::exists(dir / "config-echo.kv"));
    CHECK(fs::exists(dir / "calibration.json"));
    CHECK(fs::exists(dir / "records" / "calibration-report.json"));
    CHECK(fs::exists(dir / "summary.txt"));
    CHECK(err.str().empty());
    fs::remove_all(dir);
}

TEST_CASE("dispatch simulate with zero horizon") {
    Overrides ov;
    const auto dir = scratch_dir("simulate");
    ov.out = dir.string();
    const auto rc = parse_config("[dynamics]\nhorizon = 0\n", Subcommand::simulate, "", ov);
    std::ostringstream out, err;
    CHECK(dispatch(rc, out, err) == kExitPass);
    const auto csv = slurp(dir / "curves" / "trajectory.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
    fs::remove_all(dir);
}

TEST_CASE("dispatch sweep is byte-identical across reruns and thread counts") {
    const auto a = scratch_dir("sweep-a");
    const auto b = scratch_dir("sweep-b");
    Overrides oa, ob;
    oa.out = a.string();
    oa.threads = 1;
    oa.dump_trajectories = true;
    ob = oa;
    ob.out = b.string();
    ob.threads = 2;
    std::ostringstream out, err;
    CHECK(dispatch(parse_config(kSmallContraction, Subcommand::sweep, "contraction", oa), out, err) ==
          kExitPass);
    CHECK(dispatch(parse_config(kSmallContraction, Subcommand::sweep, "contraction", ob), out, err) ==
          kExitPass);
    for (const char* rel : {"records/contraction.json", "curves/contraction.csv", "calibration.json",
                            "trajectories/contraction-arc-0.csv"}) {
        CAPTURE(rel);
        REQUIRE(fs::exists(a / rel));
        CHECK(slurp(a / rel) == slurp(b / rel));
    }
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("dispatch exit codes") {
    Overrides ov;
    const auto dir = scratch_dir("bad");
    ov.out = dir.string();
    // Batch list without B = n is a run error.
    const auto rc = parse_config("[batch_sweep]\nbatch_list = 1, 2\n", Subcommand::sweep,
                                 "batch-sweep", ov);
    std::ostringstream out, err;
    CHECK(dispatch(rc, out, err) == kExitError);
    CHECK(err.str().find("B = n") != std::string::npos);

    // An unwritable output path is an io error.
    const auto file = scratch_dir("file");
    { std::ofstream(file) << "x"; }
    ov.out = (file / "sub").string();
    std::ostringstream out2, err2;
    CHECK(dispatch(parse_config("", Subcommand::calibrate, "", ov), out2, err2) == kExitError);
    CHECK(err2.str().find("io error") != std::string::npos);
    fs::remove_all(dir);
    fs::remove(file);
}
