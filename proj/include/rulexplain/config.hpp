#pragma once

#include <charconv>
#include <cmath>
#include <limits>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rulexplain/external_simulator.hpp"
#include "rulexplain/http_synthesizer.hpp"
#include "rulexplain/learner.hpp"
#include "rulexplain/simulators.hpp"
#include "rulexplain/synthesizer.hpp"

namespace rulexplain {

/// Flat `key = value` document; `#` starts a comment line.
class FlatConfig {
public:
    FlatConfig() = default;

    static FlatConfig parse(const std::string& text) {
        FlatConfig c;
        int line_no = 0;
        for (const auto& raw : detail::split_lines(text)) {
            ++line_no;
            const std::string line = detail::trim(raw);
            if (line.empty() || line.front() == '#') continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
            const std::string key = detail::trim(line.substr(0, eq));
            if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
            c.values_[key] = detail::trim(line.substr(eq + 1));
        }
        return c;
    }

    static FlatConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot read config file " + path);
        std::ostringstream ss;
        ss << in.rdbuf();
        return parse(ss.str());
    }

    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
    bool has(const std::string& key) const { return values_.count(key) > 0; }
    const std::map<std::string, std::string>& values() const { return values_; }

    std::string text() const {
        std::string s;
        for (const auto& [k, v] : values_) s += k + " = " + v + "\n";
        return s;
    }

private:
    std::map<std::string, std::string> values_;
};

namespace detail {

inline void parse_value(const std::string& key, const std::string& s, double& out) {
    try {
        std::size_t used = 0;
        out = s == "inf" ? std::numeric_limits<double>::infinity() : std::stod(s, &used);
        if (s != "inf" && used != s.size()) throw std::invalid_argument(s);
    } catch (const std::logic_error&) {
        throw ConfigError(key + ": expected a number, got '" + s + "'");
    }
}

inline void parse_value(const std::string& key, const std::string& s, int& out) {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError(key + ": expected an integer, got '" + s + "'");
}

inline void parse_value(const std::string& key, const std::string& s, std::uint64_t& out) {
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc() || p != s.data() + s.size())
        throw ConfigError(key + ": expected an unsigned integer, got '" + s + "'");
}

inline void parse_value(const std::string&, const std::string& s, std::string& out) { out = s; }

inline std::string show_value(double v) {
    return std::isinf(v) ? "inf" : format_double(v);
}
inline std::string show_value(int v) { return std::to_string(v); }
inline std::string show_value(std::uint64_t v) { return std::to_string(v); }
inline std::string show_value(const std::string& v) { return v; }

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(trim(tok));
    return out;
}

}  // namespace detail

/// Every tunable of a run. Field defaults are the documented defaults.
struct RunConfig {
    std::string simulator = "epidemic";  // epidemic | energy | external
    std::string external_command;
    int external_timeout = 120;  // seconds
    int horizon = 100;
    int interval = 7;
    std::string input_names;   // comma list; empty keeps the simulator's defaults
    std::string input_lower;
    std::string input_upper;
    std::string relationship = "inverse";

    EpidemicParams epidemic;
    EnergyParams energy;

    std::string baseline_source = "hidden";  // hidden | file
    std::string baseline_file;

    int learner_n = 20;
    LearnerConfig learner;
    std::string learner_optimizer = "tpe";

    int context_k = 4;
    std::string context_reducer = "pca";

    std::string backend = "deterministic";
    DeterministicOptions synth;
    HttpOptions http;
    int http_timeout = 120;
    std::string http_prompt_dir;

    double epsilon = 0.05;
    int max_iterations = 10;
    std::map<int, std::vector<std::string>> constraints;

    Thresholds thresholds;
    std::uint64_t seed = 42;

    double corrupt_fraction = 1.0;
    std::uint64_t corrupt_seed = 1;
    // Alternative scenarios for generalization: index -> overriding keys.
    std::map<int, FlatConfig> alternatives;

    template <class V>
    void visit(V&& v) {
        v("simulator", simulator);
        v("simulator.command", external_command);
        v("simulator.timeout", external_timeout);
        v("horizon", horizon);
        v("interval", interval);
        v("input.names", input_names);
        v("input.lower", input_lower);
        v("input.upper", input_upper);
        v("relationship", relationship);
        v("epidemic.population", epidemic.population);
        v("epidemic.beta", epidemic.beta);
        v("epidemic.sigma", epidemic.sigma);
        v("epidemic.gamma", epidemic.gamma);
        v("epidemic.kappa_s", epidemic.kappa_s);
        v("epidemic.kappa_a", epidemic.kappa_a);
        v("epidemic.delay", epidemic.delay);
        v("epidemic.initial_infected", epidemic.initial_infected);
        v("energy.base_load", energy.base_load);
        v("energy.cooling", energy.cooling);
        v("energy.setpoint", energy.setpoint);
        v("energy.solar", energy.solar);
        v("energy.lag", energy.lag);
        v("baseline.source", baseline_source);
        v("baseline.file", baseline_file);
        v("learner.n", learner_n);
        v("learner.budget", learner.budget);
        v("learner.lambda_arch", learner.lambda_arch);
        v("learner.optimizer", learner_optimizer);
        v("learner.tpe.gamma", learner.tpe.gamma);
        v("learner.tpe.candidates", learner.tpe.candidates);
        v("learner.tpe.startup_trials", learner.tpe.startup_trials);
        v("learner.tpe.prior_weight", learner.tpe.prior_weight);
        v("context.k", context_k);
        v("context.reducer", context_reducer);
        v("backend", backend);
        v("synth.initial_lag", synth.initial_lag);
        v("synth.jitter", synth.jitter);
        v("synth.ratio_high", synth.ratio_high);
        v("synth.ratio_low", synth.ratio_low);
        v("http.base_url", http.base_url);
        v("http.path", http.path);
        v("http.model", http.model);
        v("http.temperature", http.temperature);
        v("http.retries", http.retries);
        v("http.timeout", http_timeout);
        v("http.api_key_env", http.api_key_env);
        v("http.prompt_dir", http_prompt_dir);
        v("loop.epsilon", epsilon);
        v("loop.max_iterations", max_iterations);
        v("trend.low_ceiling", thresholds.trend.low_ceiling);
        v("trend.high_floor", thresholds.trend.high_floor);
        v("trend.stability_range", thresholds.trend.stability_range);
        v("trend.spike_jump", thresholds.trend.spike_jump);
        v("trend.rise_total", thresholds.trend.rise_total);
        v("trend.dip_depth", thresholds.trend.dip_depth);
        v("trend.lowmoderate_lo", thresholds.trend.lowmoderate_lo);
        v("trend.lowmoderate_hi", thresholds.trend.lowmoderate_hi);
        v("trend.lowmoderate_range", thresholds.trend.lowmoderate_range);
        v("phase.growth_start_ceiling", thresholds.phase.growth_start_ceiling);
        v("phase.growth_rise", thresholds.phase.growth_rise);
        v("phase.peak_fraction", thresholds.phase.peak_fraction);
        v("phase.postpeak_proximity", thresholds.phase.postpeak_proximity);
        v("phase.postpeak_drop", thresholds.phase.postpeak_drop);
        v("phase.decline_fall", thresholds.phase.decline_fall);
        v("phase.decline_rebound", thresholds.phase.decline_rebound);
        v("phase.resurgence_rise", thresholds.phase.resurgence_rise);
        v("phase.resurgence_dip", thresholds.phase.resurgence_dip);
        v("phase.segment_swing", thresholds.phase.segment_swing);
        v("seed", seed);
        v("corrupt.fraction", corrupt_fraction);
        v("corrupt.seed", corrupt_seed);
    }

    /// Applies `cfg` on top of the current values. Keys under `constraint.<i>`
    /// schedule notes for iteration i; keys under `alt.<i>.` describe
    /// alternative scenarios.
    void apply(const FlatConfig& cfg) {
        std::set<std::string> known;
        visit([&](const std::string& key, auto& field) {
            known.insert(key);
            auto it = cfg.values().find(key);
            if (it != cfg.values().end()) detail::parse_value(key, it->second, field);
        });
        for (const auto& [key, value] : cfg.values()) {
            if (known.count(key)) continue;
            if (key.rfind("constraint.", 0) == 0) {
                int it = 0;
                const std::string rest = key.substr(11);
                detail::parse_value(key, rest.substr(0, rest.find('.')), it);
                constraints[it].push_back(value);
                continue;
            }
            if (key.rfind("alt.", 0) == 0) {
                const std::string rest = key.substr(4);
                const auto dot = rest.find('.');
                if (dot == std::string::npos) throw ConfigError(key + ": expected alt.<i>.<key>");
                int idx = 0;
                detail::parse_value(key, rest.substr(0, dot), idx);
                alternatives[idx].set(rest.substr(dot + 1), value);
                continue;
            }
            throw ConfigError("unknown config key '" + key + "'");
        }
        check();
    }

    void check() const {
        if (!(epsilon >= 0)) throw ConfigError("loop.epsilon must be non-negative");
        if (max_iterations < 1) throw ConfigError("loop.max_iterations must be at least 1");
        if (learner_n < 1) throw ConfigError("learner.n must be at least 1");
        if (context_k < 1) throw ConfigError("context.k must be at least 1");
        if (!(corrupt_fraction > 0 && corrupt_fraction <= 1)) throw ConfigError("corrupt.fraction must lie in (0,1]");
        thresholds.trend.check();
        if (backend != "deterministic" && backend != "http") throw ConfigError("backend must be deterministic or http");
        if (learner_optimizer != "tpe" && learner_optimizer != "random")
            throw ConfigError("learner.optimizer must be tpe or random");
        relationship_from_string(relationship);
    }

    static RunConfig from(const FlatConfig& cfg) {
        RunConfig rc;
        rc.apply(cfg);
        return rc;
    }

    /// Every effective value, including defaults; loads back to an equal config.
    FlatConfig snapshot() const {
        FlatConfig out;
        const_cast<RunConfig*>(this)->visit(
            [&](const std::string& key, auto& field) { out.set(key, detail::show_value(field)); });
        for (const auto& [it, notes] : constraints)
            for (std::size_t n = 0; n < notes.size(); ++n)
                out.set("constraint." + std::to_string(it) + "." + std::to_string(n), notes[n]);
        for (const auto& [idx, alt] : alternatives)
            for (const auto& [k, v] : alt.values()) out.set("alt." + std::to_string(idx) + "." + k, v);
        return out;
    }

    HttpOptions http_options() const {
        HttpOptions h = http;
        h.timeout = std::chrono::seconds(http_timeout);
        return h;
    }

    LearnerConfig learner_config() const {
        LearnerConfig lc = learner;
        lc.optimizer = learner_optimizer == "random" ? OptimizerKind::Random : OptimizerKind::Tpe;
        lc.seed = seed;
        return lc;
    }

    /// This config with alternative `idx`'s keys applied on top.
    RunConfig alternative(int idx) const {
        RunConfig rc = *this;
        rc.alternatives.clear();
        rc.apply(alternatives.at(idx));
        return rc;
    }

    InputSpec input_spec() const {
        InputSpec base = simulator == "energy" ? energy_spec(horizon, interval) : epidemic_spec(horizon, interval);
        if (input_names.empty()) return base;
        const auto names = detail::split_list(input_names), lo = detail::split_list(input_lower),
                   hi = detail::split_list(input_upper);
        if (lo.size() != names.size() || hi.size() != names.size())
            throw ConfigError("input.names, input.lower and input.upper must list the same number of entries");
        std::vector<ComponentSpec> comps;
        for (std::size_t j = 0; j < names.size(); ++j) {
            ComponentSpec c{names[j], {}, interval};
            detail::parse_value("input.lower", lo[j], c.bounds.lower);
            detail::parse_value("input.upper", hi[j], c.bounds.upper);
            comps.push_back(c);
        }
        return InputSpec(std::move(comps), horizon);
    }
};

inline std::unique_ptr<Simulator> make_simulator(const RunConfig& rc) {
    const InputSpec spec = rc.input_spec();
    if (rc.simulator == "epidemic") return std::make_unique<EpidemicSimulator>(spec, rc.epidemic);
    if (rc.simulator == "energy") return std::make_unique<EnergySimulator>(spec, rc.energy);
    if (rc.simulator == "external") {
        if (rc.external_command.empty()) throw ConfigError("simulator.command is required for the external simulator");
        return std::make_unique<ExternalSimulator>(spec, rc.external_command, std::chrono::seconds(rc.external_timeout));
    }
    throw ConfigError("unknown simulator '" + rc.simulator + "'");
}

/// Baseline output: the simulator run on the scenario's hidden input, or a CSV file.
inline OutputSeries make_baseline(const RunConfig& rc, const Simulator& sim) {
    if (rc.baseline_source == "file") {
        auto y = load_output_csv(rc.baseline_file);
        if (y.size() != static_cast<std::size_t>(rc.horizon))
            throw HorizonMismatch("baseline file has " + std::to_string(y.size()) + " rows, horizon is " +
                                  std::to_string(rc.horizon));
        return y;
    }
    if (rc.baseline_source != "hidden") throw ConfigError("baseline.source must be hidden or file");
    if (rc.simulator == "epidemic") return sim.simulate(epidemic_reference_input(sim.spec()));
    if (rc.simulator == "energy") return sim.simulate(energy_reference_input(sim.spec()));
    throw ConfigError("the external simulator needs baseline.source = file");
}

}  // namespace rulexplain
