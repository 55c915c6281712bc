#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "rulexplain/rulexplain.hpp"

#include <CLI11.hpp>

namespace fs = std::filesystem;
using namespace rulexplain;

namespace {

struct Globals {
    std::string config;
    std::vector<std::string> sets;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string out = "run";
    std::string backend;
};

RunConfig load_config(const Globals& g) {
    FlatConfig fc = g.config.empty() ? FlatConfig{} : FlatConfig::load(g.config);
    for (const auto& kv : g.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        fc.set(detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
    }
    if (g.seed_given) fc.set("seed", std::to_string(g.seed));
    if (!g.backend.empty()) fc.set("backend", g.backend);
    return RunConfig::from(fc);
}

std::string out_path(const Globals& g, const std::string& name) {
    fs::create_directories(g.out);
    return (fs::path(g.out) / name).string();
}

Ruleset read_rules(const std::string& path, const RunConfig& rc, bool symbolic) {
    auto rs = parse_ruleset(read_text_file(path), symbolic ? Dialect::Symbolic : Dialect::MarkdownTable,
                            ParseOptions{rc.horizon, rc.interval});
    auto bound = rs;
    try {
        bind_components(bound, rc.input_spec());
        return bound;
    } catch (const Error&) {
        return rs;
    }
}

ClusterContext read_context(const std::string& path) {
    const auto j = read_json_file(path);
    return context_from_json(j);
}

void print_iteration(const IterationRecord& r) {
    std::cout << "iteration " << r.iteration << "  mse " << format_number(r.l_out) << "  nmse "
              << format_number(r.nmse) << "\n";
    for (const auto& w : r.warnings) std::cout << "  warning: " << w << "\n";
}

std::vector<std::string> ask_constraints(const IterationRecord& r) {
    std::cout << "constraint notes for iteration " << r.iteration + 1 << " (empty line ends):\n";
    std::vector<std::string> notes;
    std::string line;
    while (std::getline(std::cin, line) && !detail::trim(line).empty()) notes.push_back(line);
    return notes;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Counterfactual rule inference for simulators"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config, "Flat key = value config file")->check(CLI::ExistingFile);
    app.add_option("--set", g.sets, "Override a config key (key=value)");
    app.add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& s) {
        g.seed = s;
        g.seed_given = true;
    }, "Master seed");
    app.add_option("--out", g.out, "Output directory");
    app.add_option("--backend", g.backend, "Synthesizer backend")->check(CLI::IsMember({"deterministic", "http"}));

    auto* learn = app.add_subcommand("learn", "Learn a counterfactual archive against the baseline");

    auto* cluster = app.add_subcommand("cluster", "Build the clustering context from an archive");
    std::string archive_file;
    cluster->add_option("--archive", archive_file, "archive.json")->required()->check(CLI::ExistingFile);

    auto* infer = app.add_subcommand("infer-rules", "Infer the initial ruleset from a context");
    std::string context_file;
    infer->add_option("--context", context_file, "context.json")->required()->check(CLI::ExistingFile);

    auto* loop = app.add_subcommand("loop", "Run the closed loop end to end");
    bool interactive = false;
    loop->add_flag("--interactive", interactive, "Ask for constraint notes between iterations");

    auto* generate = app.add_subcommand("generate", "Generate an input realizing a ruleset");
    std::string rules_file;
    bool symbolic = false;
    generate->add_option("--rules", rules_file, "Ruleset file")->required()->check(CLI::ExistingFile);
    generate->add_option("--context", context_file, "context.json (omit for no examples)")->check(CLI::ExistingFile);
    generate->add_flag("--symbolic", symbolic, "Ruleset file uses the symbolic dialect");

    auto* simulate = app.add_subcommand("simulate", "Simulate an input");
    std::string input_file;
    simulate->add_option("--input", input_file, "Input series JSON (omit for the hidden reference input)")
        ->check(CLI::ExistingFile);

    auto* ablate = app.add_subcommand("ablate", "S1/S2/S3 ablation over a completed run");
    std::string run_dir;
    ablate->add_option("--run", run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);

    auto* generalize = app.add_subcommand("generalize", "E1/E2 generalization over a completed run");
    generalize->add_option("--run", run_dir, "Run directory")->required()->check(CLI::ExistingDirectory);

    auto* corrupt = app.add_subcommand("corrupt", "Invert the antecedent trends of a fraction of rules");
    double fraction = 1.0;
    std::uint64_t corrupt_seed = 1;
    corrupt->add_option("--rules", rules_file, "Ruleset file")->required()->check(CLI::ExistingFile);
    corrupt->add_option("--fraction", fraction, "Fraction of rules to corrupt");
    corrupt->add_option("--corrupt-seed", corrupt_seed, "Seed of the rule selection");
    corrupt->add_flag("--symbolic", symbolic, "Ruleset file uses the symbolic dialect");

    auto* validate = app.add_subcommand("validate-rules", "Parse and validate a ruleset file");
    bool strict = false;
    validate->add_option("--rules", rules_file, "Ruleset file")->required()->check(CLI::ExistingFile);
    validate->add_flag("--strict", strict, "Reject repeated phases");
    validate->add_flag("--symbolic", symbolic, "Ruleset file uses the symbolic dialect");

    CLI11_PARSE(app, argc, argv);

    if ((*ablate || *generalize) && g.config.empty()) g.config = (fs::path(run_dir) / "config.snapshot").string();
    try {
        const RunConfig rc = load_config(g);

        if (*learn) {
            auto sim = make_simulator(rc);
            const auto baseline = make_baseline(rc, *sim);
            auto archive = learn_archive(rc.learner_n, *sim, baseline, rc.learner_config(),
                                         [](int p, const Candidate& c) {
                                             std::cout << "member " << p << "  l_out " << format_number(c.l_out)
                                                       << "  d_arch " << format_number(c.d_arch) << "\n";
                                         });
            write_json_file(out_path(g, "archive.json"), to_json(archive));
            write_text_file(out_path(g, "config.snapshot"), rc.snapshot().text());
        } else if (*cluster) {
            const auto archive = archive_from_json(read_json_file(archive_file));
            const auto ctx = build_context(archive, context_options(rc));
            for (const auto& w : ctx.warnings) std::cerr << "warning: " << w << "\n";
            write_json_file(out_path(g, "context.json"), to_json(ctx, &archive));
            std::cout << "medoids";
            for (auto i : ctx.medoid_indices) std::cout << " " << i;
            std::cout << "\n";
        } else if (*infer) {
            auto synth = make_synthesizer(rc);
            const auto ctx = make_synthesis_context(rc, rc.input_spec(), read_context(context_file));
            const auto rules = synth->infer_initial_ruleset(ctx);
            const auto table = format_ruleset(rules);
            write_text_file(out_path(g, "R_0.md"), table);
            std::cout << table;
        } else if (*loop) {
            LoopOptions hooks;
            hooks.on_iteration = print_iteration;
            if (interactive) hooks.interactive = ask_constraints;
            const auto art = run_closed_loop(rc, g.out, hooks);
            std::cout << "termination " << to_string(art.termination) << "\n";
            if (art.termination == Termination::Failed) {
                std::cerr << "error in " << art.failed_stage << ": " << art.error << "\n";
                return 1;
            }
            std::cout << format_ruleset(art.final_rules);
        } else if (*generate) {
            auto synth = make_synthesizer(rc);
            auto sim = make_simulator(rc);
            ClusterContext cc;
            if (!context_file.empty()) cc = read_context(context_file);
            else cc.baseline = make_baseline(rc, *sim);
            auto ctx = make_synthesis_context(rc, sim->spec(), cc);
            if (context_file.empty()) ctx.include_medoids = false;
            const auto gen = synth->generate_input(ctx, read_rules(rules_file, rc, symbolic));
            for (const auto& w : gen.warnings) std::cerr << "warning: " << w << "\n";
            Json just = Json::array();
            for (const auto& j : gen.justifications) just.push_back(to_json(j));
            write_json_file(out_path(g, "input.json"), to_json(gen.input));
            write_json_file(out_path(g, "justifications.json"), just);
            for (std::size_t j = 0; j < gen.input.spec().size(); ++j)
                std::cout << gen.input.spec()[j].name << ": " << format_array(gen.input.component(j)) << "\n";
        } else if (*simulate) {
            auto sim = make_simulator(rc);
            const auto input = input_file.empty()
                                   ? (rc.simulator == "energy" ? energy_reference_input(sim->spec())
                                                               : epidemic_reference_input(sim->spec()))
                                   : input_from_json(read_json_file(input_file));
            const auto y = sim->simulate(input);
            std::ofstream out(out_path(g, "output.csv"));
            write_output_csv(out, y);
            write_output_csv(std::cout, y);
        } else if (*ablate) {
            const auto rep = run_ablation(rc, load_run(run_dir));
            write_json_file(out_path(g, "ablation.json"), to_json(rep));
            for (const auto* s : {&rep.s1, &rep.s2, &rep.s3})
                std::cout << s->name << "  nmse " << format_number(s->nmse) << "\n";
        } else if (*generalize) {
            const auto rep = run_generalization(rc, load_run(run_dir));
            write_json_file(out_path(g, "generalization.json"), to_json(rep));
            for (const auto& e : rep.entries)
                std::cout << e.label << "  E1 " << format_number(e.e1.nmse) << "  E2 " << format_number(e.e2.nmse)
                          << "\n";
        } else if (*corrupt) {
            const auto rules = read_rules(rules_file, rc, symbolic);
            std::cout << format_ruleset(corrupt_ruleset(rules, fraction, corrupt_seed));
        } else if (*validate) {
            const auto rules = read_rules(rules_file, rc, symbolic);
            const auto spec = rc.input_spec();
            const auto violations =
                validate_ruleset(rules, spec, strict ? PhasePolicy::Strict : PhasePolicy::Periodic);
            for (const auto& v : violations) std::cout << to_string(v.kind) << ": " << v.message << "\n";
            if (!violations.empty()) return 1;
            std::cout << rules.rules.size() << " rules valid\n";
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
