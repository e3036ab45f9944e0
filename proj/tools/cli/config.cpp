// SPDX-License-Identifier: Apache-2.0
#include "config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace arc::cli {
namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_list(std::string_view s) {
    std::vector<std::string_view> out;
    if (trim(s).empty()) return out;
    std::size_t start = 0;
    while (true) {
        const auto comma = s.find(',', start);
        out.push_back(trim(s.substr(start, comma == std::string_view::npos ? comma : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

[[noreturn]] void type_error(const std::string& key, std::string_view value, const char* expected) {
    std::ostringstream msg;
    msg << "config key '" << key << "': cannot parse '" << value << "' as " << expected;
    throw ConfigError(msg.str());
}

double parse_double(const std::string& key, std::string_view s) {
    s = trim(s);
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        type_error(key, s, "a real number");
    }
    return v;
}

std::uint64_t parse_u64(const std::string& key, std::string_view s) {
    s = trim(s);
    std::uint64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        type_error(key, s, "a non-negative integer");
    }
    return v;
}

std::string show(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

class Binder {
  public:
    enum class Mode { collect, apply };

    Binder(Mode mode, const std::map<std::string, std::string>* values)
        : mode_(mode), values_(values) {}

    bool applying() const { return mode_ == Mode::apply; }
    const std::vector<std::pair<std::string, std::string>>& collected() const { return collected_; }

    void real(const std::string& key, double& v) {
        if (auto s = lookup(key)) v = parse_double(key, *s);
        emit(key, show(v));
    }
    template <class Int>
    void integer(const std::string& key, Int& v) {
        if (auto s = lookup(key)) {
            const auto u = parse_u64(key, *s);
            if (u > static_cast<std::uint64_t>(std::numeric_limits<Int>::max())) {
                type_error(key, *s, "an integer in range");
            }
            v = static_cast<Int>(u);
        }
        emit(key, std::to_string(v));
    }
    void flag(const std::string& key, bool& v) {
        if (auto s = lookup(key)) {
            const auto t = trim(*s);
            if (t == "true" || t == "1" || t == "yes" || t == "on") {
                v = true;
            } else if (t == "false" || t == "0" || t == "no" || t == "off") {
                v = false;
            } else {
                type_error(key, t, "a boolean");
            }
        }
        emit(key, v ? "true" : "false");
    }
    void text(const std::string& key, std::string& v) {
        if (auto s = lookup(key)) v = std::string(trim(*s));
        emit(key, v);
    }
    void reals(const std::string& key, std::vector<double>& v) {
        if (auto s = lookup(key)) {
            v.clear();
            for (auto item : split_list(*s)) v.push_back(parse_double(key, item));
            if (v.empty()) type_error(key, *s, "a non-empty list of reals");
        }
        std::string joined;
        for (std::size_t i = 0; i < v.size(); ++i) joined += (i ? "," : "") + show(v[i]);
        emit(key, joined);
    }
    void sizes(const std::string& key, std::vector<std::size_t>& v) {
        if (auto s = lookup(key)) {
            v.clear();
            for (auto item : split_list(*s)) v.push_back(parse_u64(key, item));
            if (v.empty()) type_error(key, *s, "a non-empty list of integers");
        }
        std::string joined;
        for (std::size_t i = 0; i < v.size(); ++i) joined += (i ? "," : "") + std::to_string(v[i]);
        emit(key, joined);
    }
    template <class E, class Parse>
    void choice(const std::string& key, E& v, Parse parse, const char* expected) {
        if (auto s = lookup(key)) {
            try {
                v = parse(trim(*s));
            } catch (const std::invalid_argument&) {
                type_error(key, *s, expected);
            }
        }
        emit(key, std::string(to_string(v)));
    }

  private:
    std::optional<std::string> lookup(const std::string& key) const {
        if (mode_ != Mode::apply) return std::nullopt;
        auto it = values_->find(key);
        if (it == values_->end()) return std::nullopt;
        return it->second;
    }
    void emit(const std::string& key, std::string value) {
        if (mode_ == Mode::collect) collected_.emplace_back(key, std::move(value));
    }

    Mode mode_;
    const std::map<std::string, std::string>* values_;
    std::vector<std::pair<std::string, std::string>> collected_;
};

void bind_model(Binder& b, ModelConfig& m) {
    b.choice("model.family", m.family, parse_loss_family, "a loss family (quadratic, cosine-quadratic)");
    b.integer("model.dim", m.dim);
    b.real("model.m0", m.m0);
    b.real("model.amplitude", m.amplitude);
    b.choice("model.data", m.data.kind, parse_distribution_kind, "a data law");
    b.real("model.data_scale", m.data.scale);
    b.real("model.data_truncation", m.data.truncation);
    b.integer("model.n", m.n);
    b.real("model.min_offset", m.min_offset);
    b.real("model.split", m.split);
    b.real("model.support_radius", m.support_radius);
    if (b.applying()) m.data.dim = m.dim;
}

void bind_calibration(Binder& b, CalibrationOptions& o) {
    b.real("calibration.quadrature_tolerance", o.quadrature_tolerance);
    b.integer("calibration.grid_points", o.grid_points);
    b.real("calibration.xi_cap", o.xi_cap);
}

void bind_moments(Binder& b, MomentSuiteConfig& c) {
    bind_model(b, c.model);
    b.real("dynamics.beta", c.beta);
    b.reals("dynamics.y0", c.y0);
    b.real("dynamics.horizon", c.horizon);
    b.real("dynamics.dt", c.dt);
    b.integer("dynamics.record_stride", c.record_stride);
    b.integer("dynamics.ensemble", c.ensemble);
    b.reals("moments.p_list", c.p_list);
    b.real("moments.ou_m0", c.ou_m0);
    b.real("moments.ou_y0", c.ou_y0);
    b.real("moments.one_step_eta", c.one_step_eta);
    b.real("moments.one_step_t", c.one_step_t);
}

void bind_minibatch(Binder& b, MinibatchSuiteConfig& c) {
    b.integer("minibatch.max_n", c.max_n);
    b.integer("minibatch.points", c.points);
    b.real("minibatch.box", c.box);
}

void bind_experiment(Binder& b, const std::string& id, Job& job) {
    if (id == "contraction") {
        auto& c = job.contraction;
        bind_model(b, c.model);
        b.real("dynamics.beta", c.beta);
        b.reals("dynamics.x0", c.x0);
        b.reals("dynamics.y0", c.y0);
        b.real("dynamics.horizon", c.horizon);
        b.real("dynamics.dt", c.dt);
        b.integer("dynamics.record_stride", c.record_stride);
        b.integer("dynamics.ensemble", c.ensemble);
        b.real("dynamics.eps", c.eps);
        b.flag("contraction.synchronous_arm", c.synchronous_arm);
        bind_calibration(b, c.calibration);
    } else if (id == "eta-sweep") {
        auto& c = job.eta_sweep;
        bind_model(b, c.model);
        b.real("dynamics.beta", c.beta);
        b.reals("dynamics.x0", c.x0);
        b.integer("dynamics.ensemble", c.ensemble);
        b.real("dynamics.eps", c.eps);
        b.integer("dynamics.record_stride", c.record_stride);
        b.real("eta_sweep.t_final", c.t_final);
        b.reals("eta_sweep.eta_list", c.eta_list);
        b.integer("eta_sweep.substep_divisor", c.substep_divisor);
        bind_calibration(b, c.calibration);
    } else if (id == "batch-sweep") {
        auto& c = job.batch_sweep;
        bind_model(b, c.model);
        b.real("dynamics.beta", c.beta);
        b.reals("dynamics.x0", c.x0);
        b.integer("dynamics.ensemble", c.ensemble);
        b.real("dynamics.eps", c.eps);
        b.real("batch_sweep.t_final", c.t_final);
        b.sizes("batch_sweep.batch_list", c.batch_list);
        b.real("batch_sweep.eta", c.eta);
        bind_calibration(b, c.calibration);
    } else if (id == "n-sweep") {
        auto& c = job.n_sweep;
        bind_model(b, c.model);
        b.real("dynamics.beta", c.beta);
        b.reals("dynamics.x0", c.x0);
        b.integer("dynamics.ensemble", c.ensemble);
        b.real("n_sweep.t_final", c.t_final);
        b.real("n_sweep.eta", c.eta);
        b.sizes("n_sweep.n_list", c.n_list);
        b.integer("n_sweep.replicas", c.replicas);
        b.integer("n_sweep.test_size", c.test_size);
        b.flag("n_sweep.control_arm", c.control_arm);
    } else if (id == "eps-convergence") {
        auto& c = job.eps_convergence;
        bind_model(b, c.model);
        b.real("dynamics.beta", c.beta);
        b.reals("dynamics.x0", c.x0);
        b.reals("dynamics.y0", c.y0);
        b.real("dynamics.horizon", c.horizon);
        b.real("dynamics.dt", c.dt);
        b.integer("dynamics.ensemble", c.ensemble);
        b.reals("eps_convergence.eps_list", c.eps_list);
        bind_calibration(b, c.calibration);
    } else if (id == "gibbs-gap") {
        auto& c = job.gibbs_gap;
        bind_model(b, c.model);
        b.real("dynamics.beta", c.beta);
        b.real("dynamics.horizon", c.horizon);
        b.real("dynamics.dt", c.dt);
        b.integer("dynamics.ensemble", c.ensemble);
        b.reals("gibbs_gap.delta_list", c.delta_list);
        b.real("gibbs_gap.burn_in", c.burn_in);
        b.integer("gibbs_gap.sample_stride", c.sample_stride);
        b.choice("gibbs_gap.observable", c.observable, parse_gibbs_observable, "coordinate or loss");
        bind_calibration(b, c.calibration);
    } else if (id == "marginal") {
        auto& c = job.marginal;
        bind_model(b, c.model);
        b.real("dynamics.beta", c.beta);
        b.reals("dynamics.x0", c.x0);
        b.reals("dynamics.y0", c.y0);
        b.real("dynamics.horizon", c.horizon);
        b.real("dynamics.dt", c.dt);
        b.integer("dynamics.ensemble", c.ensemble);
        b.real("dynamics.eps", c.eps);
        bind_calibration(b, c.calibration);
    } else if (id == "moments") {
        bind_moments(b, job.moments);
    } else if (id == "minibatch-variance") {
        bind_model(b, job.minibatch.model);
        bind_minibatch(b, job.minibatch);
    } else {
        std::ostringstream msg;
        msg << "unknown experiment '" << id << "'; expected one of:";
        for (const auto& e : experiment_ids()) msg << ' ' << e;
        throw ConfigError(msg.str());
    }
}

void bind_run(Binder& b, RunConfig& rc) {
    b.integer("run.seed", rc.seed);
    b.integer("run.threads", rc.threads);
    b.text("run.out", rc.out);
    b.flag("run.dump_trajectories", rc.dump_trajectories);
    b.integer("run.dump_count", rc.dump_count);
    switch (rc.subcommand) {
        case Subcommand::calibrate: {
            auto& c = rc.job.calibrate;
            b.real("calibration.m", c.inputs.m);
            b.real("calibration.b", c.inputs.b);
            b.real("calibration.M", c.inputs.M);
            b.real("calibration.beta", c.inputs.beta);
            b.integer("calibration.dim", c.inputs.dim);
            bind_calibration(b, c.options);
            b.integer("verify.chain_points", c.verification.chain_points);
            b.integer("verify.generator_samples", c.verification.generator_samples);
            b.integer("verify.finite_difference_points", c.verification.finite_difference_points);
            b.real("verify.kappa_tolerance", c.verification.kappa_tolerance);
            b.real("verify.chain_tolerance", c.verification.chain_tolerance);
            b.real("verify.finite_difference_tolerance", c.verification.finite_difference_tolerance);
            break;
        }
        case Subcommand::simulate: {
            auto& c = rc.job.simulate;
            bind_model(b, c.model);
            b.real("dynamics.beta", c.beta);
            b.reals("dynamics.x0", c.x0);
            b.reals("dynamics.y0", c.y0);
            b.real("dynamics.horizon", c.horizon);
            b.real("dynamics.dt", c.dt);
            b.integer("dynamics.record_stride", c.record_stride);
            b.real("dynamics.eps", c.eps);
            b.choice("simulate.driver_x", c.driver_x, parse_driver_kind, "a driver kind");
            b.choice("simulate.driver_y", c.driver_y, parse_driver_kind, "a driver kind");
            b.real("simulate.eta", c.eta);
            b.integer("simulate.batch_size", c.batch_size);
            b.choice("simulate.coupling", c.coupling, parse_coupling_mode,
                     "synchronous, reflection or arc");
            b.real("simulate.coalescence_threshold", c.coalescence_threshold);
            b.integer("simulate.trajectory_index", c.trajectory_index);
            bind_calibration(b, c.calibration);
            break;
        }
        case Subcommand::verify:
            bind_moments(b, rc.job.verify.moments);
            bind_minibatch(b, rc.job.verify.minibatch);
            if (b.applying()) rc.job.verify.minibatch.model = rc.job.verify.moments.model;
            break;
        case Subcommand::sweep:
            bind_experiment(b, rc.experiment, rc.job);
            break;
    }
}

const std::set<std::string>& key_union() {
    static const std::set<std::string> keys = [] {
        std::set<std::string> all;
        auto add = [&](Subcommand s, const std::string& id) {
            RunConfig rc;
            rc.subcommand = s;
            rc.experiment = id;
            Binder b(Binder::Mode::collect, nullptr);
            bind_run(b, rc);
            for (const auto& [k, v] : b.collected()) all.insert(k);
        };
        add(Subcommand::calibrate, "");
        add(Subcommand::simulate, "");
        add(Subcommand::verify, "");
        for (const auto& id : experiment_ids()) add(Subcommand::sweep, id);
        return all;
    }();
    return keys;
}

void check_known(const std::string& key) {
    const auto& keys = key_union();
    if (keys.count(key)) return;
    std::string nearest;
    std::size_t best = std::numeric_limits<std::size_t>::max();
    for (const auto& k : keys) {
        const auto d = edit_distance(key, k);
        if (d < best) {
            best = d;
            nearest = k;
        }
    }
    throw ConfigError("unknown config key '" + key + "' (did you mean '" + nearest + "'?)");
}

}  // namespace

std::string_view to_string(Subcommand s) {
    switch (s) {
        case Subcommand::calibrate: return "calibrate";
        case Subcommand::simulate: return "simulate";
        case Subcommand::verify: return "verify";
        case Subcommand::sweep: return "sweep";
    }
    return "?";
}

Subcommand parse_subcommand(std::string_view name) {
    for (auto s : {Subcommand::calibrate, Subcommand::simulate, Subcommand::verify, Subcommand::sweep}) {
        if (to_string(s) == name) return s;
    }
    throw ConfigError("unknown subcommand '" + std::string(name) + "'");
}

std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text) {
    std::vector<std::pair<std::string, std::string>> out;
    std::set<std::string> seen;
    std::string section;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto eol = text.find('\n', pos);
        auto line = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
        pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
        ++line_no;
        if (const auto hash = line.find_first_of("#;"); hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) continue;
        auto where = [&] { return "line " + std::to_string(line_no) + ": "; };
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where() + "unterminated section header");
            section = std::string(trim(line.substr(1, line.size() - 2)));
            if (section.empty() || section.find('.') != std::string::npos) {
                throw ConfigError(where() + "invalid section name");
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError(where() + "expected key = value");
        const auto key = trim(line.substr(0, eq));
        if (key.empty()) throw ConfigError(where() + "empty key");
        if (section.empty()) throw ConfigError(where() + "key '" + std::string(key) + "' outside a section");
        std::string full = section + "." + std::string(key);
        if (!seen.insert(full).second) throw ConfigError(where() + "duplicate key '" + full + "'");
        out.emplace_back(std::move(full), std::string(trim(line.substr(eq + 1))));
    }
    return out;
}

RunConfig parse_config(std::string_view file_bytes, Subcommand subcommand, std::string experiment,
                       const Overrides& overrides) {
    std::map<std::string, std::string> values;
    for (auto& [k, v] : parse_key_values(file_bytes)) {
        check_known(k);
        values[k] = v;
    }
    if (overrides.seed) values["run.seed"] = std::to_string(*overrides.seed);
    if (overrides.out) values["run.out"] = *overrides.out;
    if (overrides.threads) values["run.threads"] = std::to_string(*overrides.threads);
    if (overrides.dump_trajectories) values["run.dump_trajectories"] = "true";
    for (const auto& [k, v] : overrides.set) {
        check_known(k);
        values[k] = v;
    }

    RunConfig rc;
    rc.subcommand = subcommand;
    rc.experiment = std::move(experiment);
    if (subcommand == Subcommand::sweep && rc.experiment.empty()) {
        throw ConfigError("sweep: missing experiment id");
    }
    Binder apply(Binder::Mode::apply, &values);
    bind_run(apply, rc);
    if (rc.out.empty()) {
        rc.out = default_output_root() + "/" +
                 (subcommand == Subcommand::sweep ? rc.experiment : std::string(to_string(subcommand)));
    }
    Binder collect(Binder::Mode::collect, nullptr);
    bind_run(collect, rc);
    rc.effective = collect.collected();
    return rc;
}

RunOptions RunConfig::run_options() const {
    RunOptions o;
    o.seed = seed;
    o.threads = threads;
    o.dump_trajectories = dump_trajectories ? dump_count : 0;
    return o;
}

std::string RunConfig::echo() const {
    std::ostringstream out;
    out << "# arc " << to_string(subcommand);
    if (!experiment.empty()) out << ' ' << experiment;
    out << '\n';
    std::string section;
    for (const auto& [key, value] : effective) {
        const auto dot = key.find('.');
        const auto sec = key.substr(0, dot);
        if (sec != section) {
            out << '[' << sec << "]\n";
            section = sec;
        }
        out << key.substr(dot + 1) << " = " << value << '\n';
    }
    return out.str();
}

std::vector<std::string> known_keys() {
    const auto& keys = key_union();
    return {keys.begin(), keys.end()};
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
    std::vector<std::size_t> row(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        std::size_t diag = row[0];
        row[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t up = row[j];
            row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
            diag = up;
        }
    }
    return row[b.size()];
}

std::string default_output_root() {
    if (const char* env = std::getenv("ARC_OUTPUT_ROOT"); env && *env) return env;
    return "arc-output";
}

}  // namespace arc::cli
