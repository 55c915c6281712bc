#pragma once

#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "rulexplain/config.hpp"
#include "rulexplain/context.hpp"
#include "rulexplain/http_synthesizer.hpp"
#include "rulexplain/json_io.hpp"
#include "rulexplain/learner.hpp"
#include "rulexplain/mismatch.hpp"
#include "rulexplain/synthesizer.hpp"

namespace rulexplain {

enum class Termination { Converged, MaxIterations, Failed };

inline std::string_view to_string(Termination t) {
    switch (t) {
        case Termination::Converged: return "converged";
        case Termination::MaxIterations: return "max-iterations";
        case Termination::Failed: return "failed";
    }
    return "failed";
}

inline Termination termination_from_string(const std::string& s) {
    if (s == "converged") return Termination::Converged;
    if (s == "max-iterations") return Termination::MaxIterations;
    if (s == "failed") return Termination::Failed;
    throw SchemaError("unknown termination '" + s + "'");
}

struct IterationRecord {
    int iteration = 0;
    Ruleset rules;
    InputSeries input;
    OutputSeries output;
    double l_out = 0.0;
    double nmse = 0.0;
    MismatchReport mismatch;
    std::vector<ConstraintNote> constraints;
    std::vector<Justification> justifications;
    std::vector<std::string> warnings;
    std::string medoid_hash;
};

/// Best-so-far losses after an iteration.
struct LossPoint {
    int iteration = 0;
    double mse = 0.0;
    double nmse = 0.0;
};

struct RunArtifact {
    FlatConfig config;
    Archive archive;
    ClusterContext context;
    std::vector<IterationRecord> iterations;
    Ruleset final_rules;
    int final_iteration = -1;  // iteration whose ruleset is final_rules; -1 when none ran
    Termination termination = Termination::Failed;
    std::string error;
    std::string failed_stage;
    std::vector<LossPoint> loss_curve;

    double best_nmse() const {
        return loss_curve.empty() ? std::numeric_limits<double>::infinity() : loss_curve.back().nmse;
    }
};

struct LoopOptions {
    double epsilon = 0.05;
    int max_iterations = 10;
    std::map<int, std::vector<std::string>> schedule;  // iteration -> notes added before it runs
    // Called after each non-final iteration; returned notes apply from the next iteration on.
    std::function<std::vector<std::string>(const IterationRecord&)> interactive;
    std::function<void(const IterationRecord&)> on_iteration;
};

namespace detail {

inline void add_notes(SynthesisContext& ctx, const std::vector<std::string>& notes, int iteration) {
    for (const auto& n : notes)
        if (!trim(n).empty()) ctx.constraints.emplace_back(n, iteration);
}

inline void push_loss(std::vector<LossPoint>& curve, const IterationRecord& r) {
    LossPoint p{r.iteration, r.l_out, r.nmse};
    if (!curve.empty() && curve.back().nmse <= r.nmse) {
        p.mse = curve.back().mse;
        p.nmse = curve.back().nmse;
    }
    curve.push_back(p);
}

}  // namespace detail

/// Iterates generate -> simulate -> mismatch -> refine from an inferred
/// initial ruleset. The context medoids stay fixed; only constraints and
/// history grow. Stage errors end the run with termination Failed.
inline RunArtifact run_loop(const Simulator& sim, RuleSynthesizer& synth, SynthesisContext ctx,
                            const LoopOptions& opt) {
    if (!(opt.epsilon >= 0)) throw PreconditionError("epsilon must be non-negative");
    if (opt.max_iterations < 1) throw PreconditionError("max iterations must be at least 1");

    RunArtifact art;
    art.context = ctx.cluster;
    const auto hash = medoid_hash(ctx.cluster);
    const auto schedule = [&](int i) {
        auto it = opt.schedule.find(i);
        if (it != opt.schedule.end()) detail::add_notes(ctx, it->second, i);
    };

    std::string stage = "infer";
    Ruleset rules;
    bool have_rules = false;
    try {
        schedule(0);
        rules = synth.infer_initial_ruleset(ctx);
        have_rules = true;
        for (int i = 0; i < opt.max_iterations; ++i) {
            if (i > 0) schedule(i);
            stage = "generate";
            auto gen = synth.generate_input(ctx, rules);
            stage = "simulate";
            auto y = sim.simulate(gen.input);
            stage = "mismatch";
            IterationRecord rec;
            rec.iteration = i;
            rec.rules = rules;
            rec.mismatch = build_mismatch_report(y, ctx.baseline(), ctx.interval(), ctx.thresholds.phase);
            rec.l_out = rec.mismatch.l_out;
            rec.nmse = rec.mismatch.nmse;
            rec.input = std::move(gen.input);
            rec.output = std::move(y);
            rec.constraints = ctx.constraints;
            rec.justifications = std::move(gen.justifications);
            rec.warnings = std::move(gen.warnings);
            rec.medoid_hash = hash;
            ctx.history.push_back({i, rec.rules, rec.input, rec.output, rec.l_out, rec.nmse});
            detail::push_loss(art.loss_curve, rec);
            art.iterations.push_back(rec);
            if (opt.on_iteration) opt.on_iteration(art.iterations.back());

            if (rec.nmse <= opt.epsilon) {
                art.termination = Termination::Converged;
                break;
            }
            if (i + 1 == opt.max_iterations) {
                art.termination = Termination::MaxIterations;
                break;
            }
            if (opt.interactive) detail::add_notes(ctx, opt.interactive(art.iterations.back()), i + 1);
            stage = "refine";
            rules = synth.refine_ruleset(ctx, rules, art.iterations.back().input, art.iterations.back().output,
                                         art.iterations.back().mismatch);
        }
    } catch (const Error& e) {
        art.termination = Termination::Failed;
        art.failed_stage = stage;
        art.error = e.what();
    }

    if (!art.iterations.empty()) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < art.iterations.size(); ++i)
            if (art.iterations[i].nmse < art.iterations[best].nmse) best = i;
        art.final_rules = art.iterations[best].rules;
        art.final_iteration = art.iterations[best].iteration;
    } else if (have_rules) {
        art.final_rules = rules;
    }
    return art;
}

inline std::unique_ptr<RuleSynthesizer> make_synthesizer(const RunConfig& rc, Sleeper sleeper = {}) {
    if (rc.backend == "deterministic") {
        DeterministicOptions opt = rc.synth;
        opt.seed = rc.seed;
        return std::make_unique<DeterministicSynthesizer>(opt);
    }
    if (rc.backend == "http") {
        auto prompts = rc.http_prompt_dir.empty() ? PromptLibrary{} : PromptLibrary::from_directory(rc.http_prompt_dir);
        return std::make_unique<HttpSynthesizer>(rc.http_options(), std::move(prompts), std::move(sleeper));
    }
    throw ConfigError("unknown backend '" + rc.backend + "'");
}

inline ContextOptions context_options(const RunConfig& rc) {
    ContextOptions co;
    co.k = rc.context_k;
    co.seed = rc.seed;
    if (rc.context_reducer == "pca") co.method = ReductionMethod::Pca;
    else if (rc.context_reducer == "identity") co.method = ReductionMethod::IdentityFirstTwo;
    else throw ConfigError("context.reducer must be pca or identity");
    return co;
}

inline SynthesisContext make_synthesis_context(const RunConfig& rc, const InputSpec& spec, ClusterContext cluster) {
    SynthesisContext ctx;
    ctx.cluster = std::move(cluster);
    ctx.spec = spec;
    ctx.relationship = relationship_from_string(rc.relationship);
    ctx.thresholds = rc.thresholds;
    return ctx;
}

inline LoopOptions loop_options(const RunConfig& rc) {
    LoopOptions lo;
    lo.epsilon = rc.epsilon;
    lo.max_iterations = rc.max_iterations;
    lo.schedule = rc.constraints;
    return lo;
}

// ---------------------------------------------------------------------------
// Persistence

inline Json to_json(const IterationRecord& r) {
    Json notes = Json::array(), just = Json::array();
    for (const auto& n : r.constraints) notes.push_back(to_json(n));
    for (const auto& j : r.justifications) just.push_back(to_json(j));
    return {{"iteration", r.iteration},   {"rules", to_json(r.rules)},     {"input", to_json(r.input)},
            {"output", to_json(r.output)}, {"l_out", r.l_out},             {"nmse", r.nmse},
            {"mismatch", to_json(r.mismatch)}, {"constraints", notes},     {"justifications", just},
            {"warnings", r.warnings},      {"medoid_hash", r.medoid_hash}};
}

inline IterationRecord iteration_from_json(const Json& j) {
    return detail::schema_guard("iteration record", [&] {
        IterationRecord r;
        r.iteration = j.at("iteration").get<int>();
        r.rules = ruleset_from_json(j.at("rules"));
        r.input = input_from_json(j.at("input"));
        r.output = output_from_json(j.at("output"));
        r.l_out = j.at("l_out").get<double>();
        r.nmse = j.at("nmse").get<double>();
        r.mismatch = mismatch_from_json(j.at("mismatch"));
        for (const auto& n : j.at("constraints")) r.constraints.push_back(constraint_from_json(n));
        for (const auto& x : j.at("justifications")) r.justifications.push_back(justification_from_json(x));
        r.warnings = j.at("warnings").get<std::vector<std::string>>();
        r.medoid_hash = j.at("medoid_hash").get<std::string>();
        return r;
    });
}

inline std::string loss_curve_csv(const std::vector<LossPoint>& curve) {
    std::string s = "iteration,mse,nmse\n";
    for (const auto& p : curve)
        s += std::to_string(p.iteration) + "," + detail::format_double(p.mse) + "," + detail::format_double(p.nmse) + "\n";
    return s;
}

inline Json run_report(const RunArtifact& art) {
    Json curve = Json::array();
    for (const auto& p : art.loss_curve) curve.push_back({{"iteration", p.iteration}, {"mse", p.mse}, {"nmse", p.nmse}});
    Json j = {{"termination", to_string(art.termination)},
              {"iterations", art.iterations.size()},
              {"final_iteration", art.final_iteration},
              {"final_rules", to_json(art.final_rules)},
              {"best_nmse", art.loss_curve.empty() ? Json(nullptr) : Json(art.best_nmse())},
              {"loss_curve", curve},
              {"medoid_hash", medoid_hash(art.context)},
              {"error", art.error},
              {"failed_stage", art.failed_stage}};
    return j;
}

/// Writes the run directory: config.snapshot, archive.json, context.json,
/// iterations/iter_<i>.json, rules/R_<i>.md, loss_curve.csv, report.json.
inline void write_run(const std::string& dir, const RunArtifact& art) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "iterations");
    fs::create_directories(fs::path(dir) / "rules");
    const auto at = [&](const std::string& rel) { return (fs::path(dir) / rel).string(); };
    write_text_file(at("config.snapshot"), art.config.text());
    write_json_file(at("archive.json"), to_json(art.archive));
    write_json_file(at("context.json"), to_json(art.context, &art.archive));
    for (const auto& r : art.iterations) {
        const auto i = std::to_string(r.iteration);
        write_json_file(at("iterations/iter_" + i + ".json"), to_json(r));
        write_text_file(at("rules/R_" + i + ".md"), format_ruleset(r.rules));
    }
    if (!art.final_rules.rules.empty()) write_text_file(at("rules/R_final.md"), format_ruleset(art.final_rules));
    write_text_file(at("loss_curve.csv"), loss_curve_csv(art.loss_curve));
    write_json_file(at("report.json"), run_report(art));
}

inline RunArtifact load_run(const std::string& dir) {
    namespace fs = std::filesystem;
    const auto at = [&](const std::string& rel) { return (fs::path(dir) / rel).string(); };
    RunArtifact art;
    art.config = FlatConfig::parse(read_text_file(at("config.snapshot")));
    art.archive = archive_from_json(read_json_file(at("archive.json")));
    art.context = context_from_json(read_json_file(at("context.json")));
    const auto report = read_json_file(at("report.json"));
    detail::schema_guard("report", [&] {
        art.termination = termination_from_string(report.at("termination").get<std::string>());
        art.final_iteration = report.at("final_iteration").get<int>();
        art.final_rules = ruleset_from_json(report.at("final_rules"));
        art.error = report.at("error").get<std::string>();
        art.failed_stage = report.at("failed_stage").get<std::string>();
        for (const auto& p : report.at("loss_curve"))
            art.loss_curve.push_back({p.at("iteration").get<int>(), p.at("mse").get<double>(), p.at("nmse").get<double>()});
        const auto n = report.at("iterations").get<int>();
        for (int i = 0; i < n; ++i)
            art.iterations.push_back(iteration_from_json(read_json_file(at("iterations/iter_" + std::to_string(i) + ".json"))));
        return 0;
    });
    return art;
}

struct ReplayReport {
    bool bit_exact = true;
    std::vector<int> mismatched;  // iterations whose output differs
};

/// Re-simulates every recorded input and compares outputs exactly.
inline ReplayReport replay(const RunArtifact& art, const Simulator& sim) {
    ReplayReport rep;
    for (const auto& r : art.iterations) {
        if (sim.simulate(r.input).values() != r.output.values()) {
            rep.bit_exact = false;
            rep.mismatched.push_back(r.iteration);
        }
    }
    return rep;
}

/// learn -> context -> infer -> loop. When `out_dir` is set the run
/// directory is written, also after a failure.
inline RunArtifact run_closed_loop(const RunConfig& rc, const std::string& out_dir = {}, LoopOptions hooks = {},
                                   Sleeper sleeper = {}) {
    rc.check();
    RunArtifact art;
    std::string stage = "setup";
    try {
        auto sim = make_simulator(rc);
        const auto baseline = make_baseline(rc, *sim);
        stage = "learn";
        art.archive = learn_archive(rc.learner_n, *sim, baseline, rc.learner_config());
        stage = "context";
        art.context = build_context(art.archive, context_options(rc));
        stage = "synthesizer";
        auto synth = make_synthesizer(rc, std::move(sleeper));
        auto opt = loop_options(rc);
        opt.interactive = std::move(hooks.interactive);
        opt.on_iteration = std::move(hooks.on_iteration);
        auto loop = run_loop(*sim, *synth, make_synthesis_context(rc, sim->spec(), art.context), opt);
        loop.archive = std::move(art.archive);
        art = std::move(loop);
    } catch (const Error& e) {
        art.termination = Termination::Failed;
        art.failed_stage = stage;
        art.error = e.what();
    }
    art.config = rc.snapshot();
    if (!out_dir.empty()) write_run(out_dir, art);
    return art;
}

// ---------------------------------------------------------------------------
// Experiments

struct ScenarioResult {
    std::string name;
    InputSeries input;
    OutputSeries output;
    double l_out = 0.0;
    double nmse = 0.0;
    std::vector<std::string> warnings;
};

namespace detail {

inline ScenarioResult score(std::string name, Generation gen, const Simulator& sim, const OutputSeries& baseline) {
    ScenarioResult s;
    s.name = std::move(name);
    s.output = sim.simulate(gen.input);
    s.input = std::move(gen.input);
    s.l_out = l_out(s.output, baseline);
    s.nmse = nmse(s.output, baseline);
    s.warnings = std::move(gen.warnings);
    return s;
}

}  // namespace detail

inline Json to_json(const ScenarioResult& s) {
    return {{"name", s.name},   {"nmse", s.nmse}, {"l_out", s.l_out}, {"input", to_json(s.input)},
            {"output", to_json(s.output)}, {"warnings", s.warnings}};
}

/// S1: no ruleset and no context. S2: ruleset only. S3: ruleset and context.
struct AblationReport {
    ScenarioResult s1, s2, s3;
};

inline AblationReport run_ablation(const Simulator& sim, RuleSynthesizer& synth, const SynthesisContext& ctx,
                                   const Ruleset& r_final) {
    SynthesisContext fresh = ctx;
    fresh.history.clear();
    AblationReport rep;
    rep.s1 = detail::score("S1", synth.generate_unguided(fresh.without_medoids()), sim, fresh.baseline());
    rep.s2 = detail::score("S2", synth.generate_input(fresh.without_medoids(), r_final), sim, fresh.baseline());
    rep.s3 = detail::score("S3", synth.generate_input(fresh, r_final), sim, fresh.baseline());
    return rep;
}

/// Ablation against a completed run's context and final ruleset.
inline AblationReport run_ablation(const RunConfig& rc, const RunArtifact& art, Sleeper sleeper = {}) {
    if (art.final_rules.rules.empty()) throw PreconditionError("ablation needs a run with a final ruleset");
    auto sim = make_simulator(rc);
    auto synth = make_synthesizer(rc, std::move(sleeper));
    return run_ablation(*sim, *synth, make_synthesis_context(rc, sim->spec(), art.context), art.final_rules);
}

inline Json to_json(const AblationReport& r) {
    return {{"S1", to_json(r.s1)}, {"S2", to_json(r.s2)}, {"S3", to_json(r.s3)}};
}

/// A baseline from a scenario with altered simulator parameters.
struct AltScenario {
    std::string label;
    std::shared_ptr<const Simulator> sim;
    OutputSeries baseline;
};

/// Alternative scenarios from the config's `alt.<i>.*` keys; without any,
/// the epidemic scenario varies its transmission rate (0.5, 0.55) and the
/// energy scenario its cooling coefficient (0.8x, 1.2x).
inline std::vector<AltScenario> alternative_scenarios(const RunConfig& rc) {
    RunConfig base = rc;
    if (base.alternatives.empty()) {
        if (rc.simulator == "epidemic") {
            base.alternatives[0].set("epidemic.beta", "0.5");
            base.alternatives[1].set("epidemic.beta", "0.55");
        } else if (rc.simulator == "energy") {
            base.alternatives[0].set("energy.cooling", detail::format_double(rc.energy.cooling * 0.8));
            base.alternatives[1].set("energy.cooling", detail::format_double(rc.energy.cooling * 1.2));
        }
    }
    std::vector<AltScenario> out;
    for (const auto& [idx, keys] : base.alternatives) {
        const RunConfig alt = base.alternative(idx);
        std::shared_ptr<const Simulator> sim = make_simulator(alt);
        std::string label;
        for (const auto& [k, v] : keys.values()) label += (label.empty() ? "" : ", ") + k + "=" + v;
        out.push_back({label, sim, make_baseline(alt, *sim)});
    }
    return out;
}

struct GeneralizationEntry {
    std::string label;
    ScenarioResult e1;  // correct ruleset, no context
    ScenarioResult e2;  // corrupted ruleset, no context
};

struct GeneralizationReport {
    Ruleset ruleset;
    Ruleset corrupted;
    std::vector<GeneralizationEntry> entries;
};

/// E1 and E2 for each alternative baseline. The context medoids are withheld.
inline GeneralizationReport run_generalization(RuleSynthesizer& synth, const SynthesisContext& ctx,
                                               const std::vector<AltScenario>& alts, const Ruleset& ruleset,
                                               double fraction, std::uint64_t corrupt_seed) {
    GeneralizationReport rep;
    rep.ruleset = ruleset;
    rep.corrupted = corrupt_ruleset(ruleset, fraction, corrupt_seed);
    for (const auto& alt : alts) {
        SynthesisContext actx = ctx.without_medoids();
        actx.history.clear();
        actx.cluster.baseline = alt.baseline;
        GeneralizationEntry e;
        e.label = alt.label;
        e.e1 = detail::score("E1", synth.generate_input(actx, rep.ruleset), *alt.sim, alt.baseline);
        e.e2 = detail::score("E2", synth.generate_input(actx, rep.corrupted), *alt.sim, alt.baseline);
        rep.entries.push_back(std::move(e));
    }
    return rep;
}

inline GeneralizationReport run_generalization(const RunConfig& rc, const RunArtifact& art, Sleeper sleeper = {}) {
    if (art.final_rules.rules.empty()) throw PreconditionError("generalization needs a run with a final ruleset");
    auto sim = make_simulator(rc);
    auto synth = make_synthesizer(rc, std::move(sleeper));
    return run_generalization(*synth, make_synthesis_context(rc, sim->spec(), art.context), alternative_scenarios(rc),
                              art.final_rules, rc.corrupt_fraction, rc.corrupt_seed);
}

inline Json to_json(const GeneralizationReport& r) {
    Json entries = Json::array();
    for (const auto& e : r.entries) entries.push_back({{"label", e.label}, {"E1", to_json(e.e1)}, {"E2", to_json(e.e2)}});
    return {{"ruleset", to_json(r.ruleset)}, {"corrupted", to_json(r.corrupted)}, {"entries", entries}};
}

}  // namespace rulexplain
