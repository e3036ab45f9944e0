// SPDX-License-Identifier: Apache-2.0
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "cli/config.hpp"
#include "cli/dispatch.hpp"

namespace {

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw arc::cli::ConfigError("cannot read config file " + path);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"arc: approximate reflection coupling experiments"};
    app.require_subcommand(1);

    std::string config_path;
    arc::cli::Overrides overrides;
    std::uint64_t seed = 0;
    std::string out;
    unsigned threads = 0;
    std::vector<std::string> sets;
    std::string experiment;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "Key-value config file");
        sub->add_option("--seed", seed, "Master seed (u64)");
        sub->add_option("--out", out, "Output directory");
        sub->add_option("--threads", threads, "Worker threads (0 = all cores)");
        sub->add_flag("--dump-trajectories", overrides.dump_trajectories,
                      "Write sample coupled trajectories");
        sub->add_option("--set", sets, "Override one key: section.key=value (repeatable)");
    };
    auto* calibrate = app.add_subcommand("calibrate", "Build and verify an Eberle calibration");
    auto* simulate = app.add_subcommand("simulate", "Simulate one coupled trajectory");
    auto* verify = app.add_subcommand("verify", "Monte Carlo checks of the moment and mini-batch bounds");
    auto* sweep = app.add_subcommand("sweep", "Run one experiment");
    sweep->add_option("experiment", experiment, "Experiment id")
        ->required()
        ->check(CLI::IsMember(arc::experiment_ids()));
    for (auto* sub : {calibrate, simulate, verify, sweep}) common(sub);
    auto* keys = app.add_subcommand("keys", "List every accepted config key");

    CLI11_PARSE(app, argc, argv);

    if (keys->parsed()) {
        for (const auto& k : arc::cli::known_keys()) std::cout << k << '\n';
        return 0;
    }
    try {
        CLI::App* sub = app.get_subcommands().front();
        if (sub->count("--seed")) overrides.seed = seed;
        if (sub->count("--out")) overrides.out = out;
        if (sub->count("--threads")) overrides.threads = threads;
        for (const auto& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw arc::cli::ConfigError("--set expects section.key=value, got " + s);
            overrides.set.emplace_back(s.substr(0, eq), s.substr(eq + 1));
        }
        const std::string text = config_path.empty() ? std::string() : read_file(config_path);
        const auto config = arc::cli::parse_config(
            text, arc::cli::parse_subcommand(sub->get_name()), experiment, overrides);
        return arc::cli::dispatch(config, std::cout, std::cerr);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return arc::cli::kExitError;
    }
}
