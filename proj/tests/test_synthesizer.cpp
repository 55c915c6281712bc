#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <mutex>
#include <thread>

#include "support.hpp"

using namespace rulexplain;
using namespace testing_support;

namespace {

Candidate simulated(const Simulator& sim, const InputSeries& x, const OutputSeries& base) {
    Candidate c;
    c.input = x;
    c.output = sim.simulate(x);
    c.l_out = l_out(c.output, base);
    return c;
}

SynthesisContext epidemic_context(std::size_t medoids, std::uint64_t seed = 1) {
    const EpidemicSimulator sim;
    SynthesisContext ctx;
    ctx.spec = sim.spec();
    ctx.relationship = Relationship::Inverse;
    ctx.cluster.baseline = sim.simulate(epidemic_reference_input(sim.spec()));
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < medoids; ++i) {
        ctx.cluster.medoid_indices.push_back(i);
        ctx.cluster.medoids.push_back(simulated(sim, random_input(rng, sim.spec()), ctx.cluster.baseline));
    }
    return ctx;
}

SynthesisContext learned_context() {
    const EpidemicSimulator sim;
    const auto base = sim.simulate(epidemic_reference_input(sim.spec()));
    LearnerConfig cfg;
    cfg.budget = 60;
    cfg.seed = 3;
    const auto archive = learn_archive(6, sim, base, cfg);
    ContextOptions opt;
    opt.seed = 3;
    SynthesisContext ctx;
    ctx.spec = sim.spec();
    ctx.relationship = Relationship::Inverse;
    ctx.cluster = build_context(archive, opt);
    return ctx;
}

/// Output whose phases follow Table 2's output windows: growth to a peak at
/// 40, decline to a trough at 71, resurgence to a second peak at 92.
OutputSeries table2_shaped_output() {
    std::vector<double> y(100);
    for (int t = 0; t < 100; ++t) {
        double v;
        if (t <= 15) v = 0.05;
        else if (t <= 40) v = 0.05 + 0.95 * (t - 15) / 25.0;
        else if (t <= 71) v = 1.0 - 0.8 * (t - 40) / 31.0;
        else if (t <= 92) v = 0.2 + 0.6 * (t - 71) / 21.0;
        else v = 0.8 - 0.2 * (t - 92) / 8.0;
        y[static_cast<std::size_t>(t)] = 1000.0 * v;
    }
    return OutputSeries(y);
}

std::string prose_wrapped(const std::string& table) {
    return "Here is my analysis of the examples.\n\nThe output shows two waves.\n\n" + table +
           "\nThese rules capture the delayed inverse effect.\n";
}

}  // namespace

TEST(Deterministic, InitialRulesetFollowsBaselinePhases) {
    const auto ctx = learned_context();
    DeterministicSynthesizer ds;
    const auto rs = ds.infer_initial_ruleset(ctx);
    EXPECT_TRUE(validate_ruleset(rs, ctx.spec).empty());
    const auto segs = segment_phases(ctx.baseline(), ctx.interval());
    ASSERT_EQ(rs.rules.size(), segs.size());
    for (std::size_t i = 0; i < segs.size(); ++i) {
        EXPECT_EQ(rs.rules[i].phase, segs[i].phase);
        EXPECT_EQ(rs.rules[i].output_window, segs[i].window);
        EXPECT_EQ(rs.rules[i].input_window.start % 7, 0);
        EXPECT_LE(rs.rules[i].input_window.start, rs.rules[i].output_window.start);
    }
    EXPECT_EQ(ds.infer_initial_ruleset(ctx), rs);
}

TEST(Deterministic, EmptyContextRejected) {
    DeterministicSynthesizer ds;
    EXPECT_THROW(ds.infer_initial_ruleset(epidemic_context(0)), PreconditionError);
}

TEST(Deterministic, RealizationGuaranteeOnTables) {
    DeterministicSynthesizer ds;
    for (const auto& name : {"table2.md", "table5.md"}) {
        for (std::size_t medoids : {0u, 3u}) {
            const auto ctx = epidemic_context(medoids, 5);
            const auto rs = fixture(name);
            const auto g = ds.generate_input(ctx, rs);
            const auto rep = check_ruleset(rs, g.input, ctx.baseline());
            EXPECT_EQ(rep.antecedents_true, 6) << name << " medoids " << medoids;
            for (const auto& m : ctx.cluster.medoids) EXPECT_NE(m.input.values(), g.input.values());
        }
    }
}

TEST(Deterministic, RealizationGuaranteeOnEnergyTable) {
    SynthesisContext ctx;
    ctx.spec = energy_spec();
    const EnergySimulator sim;
    ctx.cluster.baseline = sim.simulate(energy_reference_input(ctx.spec));
    auto rs = fixture("table3.md", 3);
    bind_components(rs, ctx.spec);
    DeterministicSynthesizer ds;
    // A dip needs an interior changepoint, which [18,21] does not have at Δ=3.
    try {
        ds.generate_input(ctx, rs);
        FAIL();
    } catch (const InfeasibleRule& e) {
        EXPECT_EQ(e.rule_id(), "R3");
    }
    ContextOptions opt;
    const EnergySimulator esim;
    LearnerConfig cfg;
    cfg.budget = 40;
    ctx.cluster = build_context(learn_archive(4, esim, ctx.baseline(), cfg), opt);
    const auto inferred = ds.infer_initial_ruleset(ctx);
    const auto g = ds.generate_input(ctx, inferred);
    EXPECT_EQ(check_ruleset(inferred, g.input, ctx.baseline()).antecedents_true, static_cast<int>(inferred.rules.size()));
}

TEST(Deterministic, Table2RealizationAgainstTable2ShapedOutput) {
    auto ctx = epidemic_context(0);
    DeterministicSynthesizer ds;
    const auto t2 = fixture("table2.md"), t5 = fixture("table5.md");
    const auto g = ds.generate_input(ctx, t2);
    const auto y = table2_shaped_output();
    const auto rep2 = check_ruleset(t2, g.input, y);
    EXPECT_EQ(rep2.satisfied, 6);
    EXPECT_EQ(rep2.antecedents_true, 6);
    EXPECT_EQ(rep2.consequents_true, 6);
    const auto rep5 = check_ruleset(t5, g.input, y);
    EXPECT_EQ(rep5.antecedents_true, 0);
    int supported = 0;
    for (const auto& r : rep5.results) supported += r.antecedent_holds && r.consequent_holds;
    EXPECT_LT(supported, 6);
}

TEST(Deterministic, FirstRuleUsesTemplateLevels) {
    const auto ctx = epidemic_context(0);
    DeterministicSynthesizer ds;
    const auto z = ds.realize(ctx, fixture("table2.md"));
    for (std::size_t c = 0; c <= 2; ++c) EXPECT_LT(z[0][c], 0.33);
    EXPECT_GE(z[1][2] - z[1][0], 0.15);
    const auto g = ds.generate_input(ctx, fixture("table2.md"));
    for (std::size_t j = 0; j < 2; ++j)
        for (double v : g.input.component(j)) EXPECT_TRUE(ctx.spec[j].bounds.contains(v));
}

TEST(Deterministic, JustificationsNameRulesAndWindows) {
    const auto ctx = epidemic_context(2);
    DeterministicSynthesizer ds;
    const auto rs = fixture("table2.md");
    const auto g = ds.generate_input(ctx, rs);
    ASSERT_EQ(g.justifications.size(), 6u);
    for (std::size_t i = 0; i < 6; ++i) {
        EXPECT_EQ(g.justifications[i].rule_id, rs.rules[i].id);
        EXPECT_EQ(g.justifications[i].input_window, rs.rules[i].input_window);
        EXPECT_EQ(g.justifications[i].output_window, rs.rules[i].output_window);
        EXPECT_NE(g.justifications[i].text.find(rs.rules[i].id), std::string::npos);
    }
}

TEST(Deterministic, SeededGenerationIsReproducible) {
    const auto ctx = epidemic_context(3);
    DeterministicOptions o;
    o.seed = 77;
    DeterministicSynthesizer a(o), b(o);
    EXPECT_EQ(a.generate_input(ctx, fixture("table2.md")).input.values(),
              b.generate_input(ctx, fixture("table2.md")).input.values());
    o.seed = 78;
    DeterministicSynthesizer c(o);
    EXPECT_NE(a.generate_input(ctx, fixture("table2.md")).input.values(),
              c.generate_input(ctx, fixture("table2.md")).input.values());
}

TEST(Deterministic, InfeasibleWindowNamesRule) {
    const auto ctx = epidemic_context(0);
    Ruleset rs;
    rs.components = {"X_s", "X_a"};
    rs.rules.emplace_back("R1", SeriesWindow(0, 6), std::vector<Conjunct>{{"X_s", TrendLabel::DipThenRise}},
                          SeriesWindow(7, 20), PhaseLabel::InitialGrowth);
    rs.rules.emplace_back("R2", SeriesWindow(6, 100), std::vector<Conjunct>{{"X_s", TrendLabel::Low}},
                          SeriesWindow(20, 100), PhaseLabel::Decline);
    DeterministicSynthesizer ds;
    try {
        ds.generate_input(ctx, rs);
        FAIL();
    } catch (const InfeasibleRule& e) {
        EXPECT_EQ(e.rule_id(), "R1");
    }
}

TEST(Deterministic, RefineZeroMismatchIsFixedPoint) {
    const auto ctx = epidemic_context(0);
    DeterministicSynthesizer ds;
    const auto rs = fixture("table2.md");
    const auto rep = build_mismatch_report(ctx.baseline(), ctx.baseline(), 7);
    const auto x = ds.generate_input(ctx, rs).input;
    EXPECT_EQ(ds.refine_ruleset(ctx, rs, x, ctx.baseline(), rep), rs);
}

TEST(Deterministic, RefineEscalatesOnHighPeakForInverse) {
    const auto ctx = epidemic_context(0);
    DeterministicSynthesizer ds;
    const auto rs = fixture("table2.md");
    MismatchReport rep;
    PhaseMismatch pm;
    pm.phase = PhaseLabel::PeakFormation;
    pm.window = rs.rules[1].output_window;
    pm.magnitude_ratio = 1.4;
    rep.phases.push_back(pm);
    const auto x = ds.generate_input(ctx, rs).input;
    const auto out = ds.refine_ruleset(ctx, rs, x, ctx.baseline(), rep);
    EXPECT_TRUE(validate_ruleset(out, ctx.spec).empty());
    int moved = 0;
    for (std::size_t c = 0; c < 2; ++c) {
        const auto before = rs.rules[1].antecedent[c].trend, after = out.rules[1].antecedent[c].trend;
        if (before == after) continue;
        ++moved;
        EXPECT_EQ(DeterministicSynthesizer::escalate(before), after);
    }
    EXPECT_EQ(moved, 1);
    for (std::size_t i = 0; i < rs.rules.size(); ++i)
        if (i != 1) EXPECT_EQ(out.rules[i], rs.rules[i]);

    auto direct = ctx;
    direct.relationship = Relationship::Direct;
    const auto down = ds.refine_ruleset(direct, rs, x, ctx.baseline(), rep);
    for (std::size_t c = 0; c < 2; ++c) {
        const auto before = rs.rules[1].antecedent[c].trend, after = down.rules[1].antecedent[c].trend;
        if (before != after) EXPECT_EQ(DeterministicSynthesizer::deescalate(before), after);
    }
}

TEST(Deterministic, RefineShiftsWindowsOnLateOutput) {
    const auto ctx = epidemic_context(0);
    DeterministicSynthesizer ds;
    const auto rs = fixture("table2.md");
    MismatchReport rep;
    PhaseMismatch pm;
    pm.phase = PhaseLabel::PostPeak;
    pm.window = rs.rules[2].output_window;
    pm.lag = 8;
    rep.phases.push_back(pm);
    const auto x = ds.generate_input(ctx, rs).input;
    const auto out = ds.refine_ruleset(ctx, rs, x, ctx.baseline(), rep);
    EXPECT_TRUE(validate_ruleset(out, ctx.spec).empty());
    EXPECT_EQ(out.rules[2].input_window, SeriesWindow(21, 35));
    EXPECT_EQ(out.rules[1].input_window.end, 21);
    EXPECT_EQ(out.rules[3].input_window.start, 35);
    EXPECT_EQ(check_ruleset(out, ds.generate_input(ctx, out).input, ctx.baseline()).antecedents_true, 6);

    pm.lag = 3;
    rep.phases = {pm};
    EXPECT_EQ(ds.refine_ruleset(ctx, rs, x, ctx.baseline(), rep), rs);
}

TEST(Deterministic, LadderSteps) {
    EXPECT_EQ(DeterministicSynthesizer::escalate(TrendLabel::Low), TrendLabel::LowModerate);
    EXPECT_EQ(DeterministicSynthesizer::escalate(TrendLabel::LowModerate), TrendLabel::Moderate);
    EXPECT_EQ(DeterministicSynthesizer::escalate(TrendLabel::Moderate), TrendLabel::SlowRise);
    EXPECT_EQ(DeterministicSynthesizer::escalate(TrendLabel::SlowRise), TrendLabel::HighStable);
    EXPECT_EQ(DeterministicSynthesizer::escalate(TrendLabel::HighStable), std::nullopt);
    EXPECT_EQ(DeterministicSynthesizer::deescalate(TrendLabel::Low), std::nullopt);
    EXPECT_EQ(DeterministicSynthesizer::deescalate(TrendLabel::HighStable), TrendLabel::SlowRise);
}

TEST(Deterministic, UnguidedIsMidRange) {
    const auto ctx = epidemic_context(2);
    DeterministicSynthesizer ds;
    const auto g = ds.generate_unguided(ctx);
    for (double v : g.input.component(0)) EXPECT_DOUBLE_EQ(v, 0.15);
    for (double v : g.input.component(1)) EXPECT_DOUBLE_EQ(v, 0.3);
}

TEST(Mismatch, IdentityShiftAndScale) {
    const auto ctx = epidemic_context(0);
    const auto& base = ctx.baseline();
    const auto same = build_mismatch_report(base, base, 7);
    EXPECT_EQ(same.l_out, 0.0);
    for (const auto& p : same.phases) {
        EXPECT_EQ(p.lag, 0);
        EXPECT_DOUBLE_EQ(p.magnitude_ratio, 1.0);
    }
    std::vector<double> late(base.values().size()), twice(late);
    for (std::size_t t = 0; t < late.size(); ++t) {
        late[t] = base.values()[t >= 7 ? t - 7 : 0];
        twice[t] = 2 * base.values()[t];
    }
    const auto shifted = build_mismatch_report(OutputSeries(late), base, 7);
    int hits = 0;
    for (const auto& p : shifted.phases) hits += p.lag == 7;
    EXPECT_GE(hits, static_cast<int>(shifted.phases.size()) - 1);
    for (const auto& p : build_mismatch_report(OutputSeries(twice), base, 7).phases) EXPECT_NEAR(p.magnitude_ratio, 2.0, 1e-9);
    EXPECT_THROW(build_mismatch_report(OutputSeries({1.0, 2.0}), base, 7), HorizonMismatch);
}

TEST(Prompts, InitialHasExamplesAndBaseline) {
    const auto ctx = epidemic_context(2);
    const auto p = render_prompt(PromptKind::Initial, ctx);
    EXPECT_NE(p.find("Example 0"), std::string::npos);
    EXPECT_NE(p.find("Example 1"), std::string::npos);
    EXPECT_EQ(p.find("Example 2"), std::string::npos);
    EXPECT_NE(p.find("Baseline Y: " + format_array(ctx.baseline().values())), std::string::npos);
    EXPECT_NE(p.find("interval length 7"), std::string::npos);
    EXPECT_NE(p.find("inverse"), std::string::npos);
    EXPECT_EQ(p.find("{{"), std::string::npos);
}

TEST(Prompts, GenerateHasRangesAndRules) {
    const auto ctx = epidemic_context(1);
    const auto rs = fixture("table2.md");
    PromptExtras extra;
    extra.rules = &rs;
    const auto p = render_prompt(PromptKind::Generate, ctx, extra);
    EXPECT_NE(p.find("X_s values must lie in the range [0, 0.3]"), std::string::npos);
    EXPECT_NE(p.find("X_a values must lie in the range [0, 0.6]"), std::string::npos);
    EXPECT_NE(p.find(format_ruleset(rs)), std::string::npos);
    EXPECT_NE(p.find("v_15"), std::string::npos);
}

TEST(Prompts, RefineHasPreviousRulesAndBothOutputs) {
    const auto ctx = epidemic_context(1);
    const auto rs = fixture("table2.md");
    const auto x = ctx.cluster.medoids[0].input;
    const auto y = ctx.cluster.medoids[0].output;
    const auto rep = build_mismatch_report(y, ctx.baseline(), 7);
    PromptExtras extra{&rs, &x, &y, &rep};
    const auto p = render_prompt(PromptKind::Refine, ctx, extra);
    EXPECT_NE(p.find("Previous Rules Table:\n" + format_ruleset(rs)), std::string::npos);
    EXPECT_NE(p.find("Simulated output Y': " + format_array(y.values())), std::string::npos);
    EXPECT_NE(p.find("Baseline Y: " + format_array(ctx.baseline().values())), std::string::npos);
    EXPECT_NE(p.find("timing shift"), std::string::npos);
    EXPECT_THROW(render_prompt(PromptKind::Refine, ctx), TemplateError);
}

TEST(Prompts, ConstraintsAppear) {
    auto ctx = epidemic_context(1);
    ctx.constraints.emplace_back("Keep X_a below 0.4 after day 50", 1);
    EXPECT_NE(render_prompt(PromptKind::Initial, ctx).find("- Keep X_a below 0.4 after day 50"), std::string::npos);
    EXPECT_THROW(ConstraintNote("  ", 1), PreconditionError);
}

TEST(Prompts, DistinctContextsGiveDistinctPrompts) {
    const auto base = epidemic_context(2);
    std::vector<SynthesisContext> variants(5, base);
    variants[1].relationship = Relationship::Direct;
    variants[2].constraints.emplace_back("note", 0);
    auto y = base.baseline().values();
    y[50] += 1e-9;
    variants[3].cluster.baseline = OutputSeries(y);
    variants[4].cluster.medoids.pop_back();
    std::set<std::string> prompts;
    for (const auto& v : variants) prompts.insert(render_prompt(PromptKind::Initial, v));
    EXPECT_EQ(prompts.size(), variants.size());
}

TEST(Prompts, TemplateErrors) {
    EXPECT_EQ(render_template("a {{x}} b", {{"x", "{{y}}"}}), "a {{y}} b");
    try {
        render_template("{{missing}}", {});
        FAIL();
    } catch (const TemplateError& e) {
        EXPECT_NE(std::string(e.what()).find("missing"), std::string::npos);
    }
    EXPECT_THROW(render_template("{{open", {}), TemplateError);
}

TEST(Prompts, ShippedFilesMatchDefaults) {
    for (auto k : {PromptKind::Initial, PromptKind::Generate, PromptKind::Refine, PromptKind::NoGuidance})
        EXPECT_EQ(read_text_file(source_path("prompts/" + std::string(to_string(k)) + ".txt")), default_template(k));
    const auto lib = PromptLibrary::from_directory(source_path("prompts"));
    EXPECT_EQ(lib.get(PromptKind::Initial), default_template(PromptKind::Initial));
    PromptLibrary custom;
    custom.set(PromptKind::Initial, "T={{horizon}}");
    EXPECT_EQ(custom.render(PromptKind::Initial, epidemic_context(1)), "T=100");
}

TEST(Replies, TableInsideProse) {
    const auto rs = parse_rules_reply(prose_wrapped(fixture_text("table2.md")), epidemic_spec(), 7);
    EXPECT_EQ(rs, fixture("table2.md"));
    EXPECT_THROW(parse_rules_reply("no table here", epidemic_spec(), 7), MalformedReply);
}

TEST(Replies, PositionalComponentsBound) {
    auto text = fixture_text("table2.md");
    detail::replace_all(text, "X_s", "X_{t,1}");
    detail::replace_all(text, "X_a", "X_{t,2}");
    const auto rs = parse_rules_reply(text, epidemic_spec(), 7);
    EXPECT_EQ(rs.rules[0].antecedent[0].component, "X_s");
    EXPECT_EQ(rs.rules[0].antecedent[1].component, "X_a");
}

TEST(Replies, GenerationArraysClampAndLength) {
    const auto spec = epidemic_spec(98, 7);
    std::string xs = "[", xa = "[";
    for (int k = 0; k < 14; ++k) {
        xs += std::string(k ? ", " : "") + (k == 3 ? "0.35" : "0.1");
        xa += std::string(k ? ", " : "") + "0.2";
    }
    const std::string reply = "1. Generated Input Series:\n- X_s: " + xs + "]\n- X_a: " + xa +
                              "]\n2. Phase-wise Justification:\nOutput Phase: InitialGrowth, Output Window: [15, 29], "
                              "Applied Rule: R1, Required Input Trend Window: [0, 14], Assigned Input Trends: X_s: Low, "
                              "X_a: SlowRise\nJustification: low testing lets infections grow.\n";
    const auto g = parse_generation_reply(reply, spec);
    EXPECT_EQ(g.values[0][3], 0.3);
    ASSERT_EQ(g.warnings.size(), 1u);
    EXPECT_NE(g.warnings[0].find("clamped"), std::string::npos);
    ASSERT_EQ(g.justifications.size(), 1u);
    EXPECT_EQ(g.justifications[0].rule_id, "R1");
    EXPECT_EQ(g.justifications[0].input_window, SeriesWindow(0, 14));
    EXPECT_EQ(g.justifications[0].trends.size(), 2u);

    std::string short_xs = "[";
    for (int k = 0; k < 13; ++k) short_xs += std::string(k ? ", " : "") + "0.1";
    EXPECT_THROW(parse_generation_reply("X_s: " + short_xs + "]\nX_a: " + xa + "]", spec), LengthMismatch);
    EXPECT_THROW(parse_generation_reply("nothing useful", spec), MalformedReply);
}

namespace {

/// Local chat endpoint: a queue of (status, content) replies, then the last
/// one repeated.
class StubServer {
public:
    explicit StubServer(std::vector<std::pair<int, std::string>> replies) : replies_(std::move(replies)) {
        svr_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            std::lock_guard lock(mu_);
            bodies_.push_back(req.body);
            auth_.push_back(req.get_header_value("Authorization"));
            const auto& r = replies_[std::min(served_++, replies_.size() - 1)];
            res.status = r.first;
            if (r.first == 200) {
                const nlohmann::json body = {{"choices", {{{"message", {{"role", "assistant"}, {"content", r.second}}}}}}};
                res.set_content(body.dump(), "application/json");
            } else {
                res.set_content(r.second, "text/plain");
            }
        });
        port_ = svr_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { svr_.listen_after_bind(); });
        svr_.wait_until_ready();
    }

    ~StubServer() {
        svr_.stop();
        thread_.join();
    }

    HttpOptions options() const {
        HttpOptions o;
        o.base_url = "http://127.0.0.1:" + std::to_string(port_);
        o.timeout = std::chrono::seconds(5);
        return o;
    }

    std::vector<std::string> bodies() const {
        std::lock_guard lock(mu_);
        return bodies_;
    }

    std::vector<std::string> auth() const {
        std::lock_guard lock(mu_);
        return auth_;
    }

private:
    httplib::Server svr_;
    std::vector<std::pair<int, std::string>> replies_;
    std::size_t served_ = 0;
    std::vector<std::string> bodies_, auth_;
    mutable std::mutex mu_;
    int port_ = 0;
    std::thread thread_;
};

struct SleepLog {
    std::vector<std::chrono::milliseconds> sleeps;
    Sleeper sleeper() {
        return [this](std::chrono::milliseconds d) { sleeps.push_back(d); };
    }
};

}  // namespace

TEST(Http, InitialRulesetWithTwoTransientFailures) {
    ::setenv("RULEXPLAIN_API_KEY", "test-key", 1);
    StubServer server({{503, "busy"}, {500, "oops"}, {200, prose_wrapped(fixture_text("table2.md"))}});
    SleepLog log;
    HttpSynthesizer synth(server.options(), {}, log.sleeper());
    const auto ctx = epidemic_context(2);
    const auto rs = synth.infer_initial_ruleset(ctx);
    ::unsetenv("RULEXPLAIN_API_KEY");

    ASSERT_EQ(rs.rules.size(), 6u);
    EXPECT_EQ(rs.rules[0], fixture("table2.md").rules[0]);
    EXPECT_EQ(log.sleeps, (std::vector<std::chrono::milliseconds>{std::chrono::seconds(1), std::chrono::seconds(2)}));

    const auto bodies = server.bodies();
    ASSERT_EQ(bodies.size(), 3u);
    const auto body = nlohmann::json::parse(bodies.back());
    EXPECT_EQ(body.at("model"), "gpt-4.1");
    EXPECT_DOUBLE_EQ(body.at("temperature").get<double>(), 0.2);
    EXPECT_EQ(body.at("messages").at(0).at("role"), "user");
    EXPECT_EQ(body.at("messages").at(0).at("content"), render_prompt(PromptKind::Initial, ctx));
    EXPECT_EQ(server.auth().back(), "Bearer test-key");
    EXPECT_EQ(synth.transcript().size(), 1u);
}

TEST(Http, PersistentFailureExhaustsRetries) {
    StubServer server({{500, "down"}});
    SleepLog log;
    HttpSynthesizer synth(server.options(), {}, log.sleeper());
    EXPECT_THROW(synth.infer_initial_ruleset(epidemic_context(1)), BackendError);
    EXPECT_EQ(server.bodies().size(), 4u);
    EXPECT_EQ(log.sleeps, (std::vector<std::chrono::milliseconds>{std::chrono::seconds(1), std::chrono::seconds(2),
                                                                   std::chrono::seconds(4)}));
    EXPECT_TRUE(server.auth().back().empty());
}

TEST(Http, ClientErrorIsNotRetried) {
    StubServer server({{400, "bad request body"}});
    SleepLog log;
    HttpSynthesizer synth(server.options(), {}, log.sleeper());
    try {
        synth.infer_initial_ruleset(epidemic_context(1));
        FAIL();
    } catch (const BackendError& e) {
        EXPECT_EQ(e.raw_reply(), "bad request body");
    }
    EXPECT_EQ(server.bodies().size(), 1u);
    EXPECT_TRUE(log.sleeps.empty());
}

TEST(Http, UnparseableReplyIsRequestedAgain) {
    StubServer server({{200, "I cannot help with tables."}, {200, fixture_text("table2.md")}});
    HttpSynthesizer synth(server.options(), {}, SleepLog().sleeper());
    EXPECT_EQ(synth.infer_initial_ruleset(epidemic_context(1)).rules.size(), 6u);
    EXPECT_EQ(synth.transcript().size(), 2u);

    StubServer never({{200, "still no table"}});
    HttpSynthesizer stubborn(never.options(), {}, SleepLog().sleeper());
    try {
        stubborn.infer_initial_ruleset(epidemic_context(1));
        FAIL();
    } catch (const BackendError& e) {
        EXPECT_EQ(e.raw_reply(), "still no table");
    }
}

TEST(Http, RefineAndGenerateRoundTrip) {
    std::string xs = "[", xa = "[";
    for (int k = 0; k < 15; ++k) {
        xs += std::string(k ? ", " : "") + "0.1";
        xa += std::string(k ? ", " : "") + (k == 0 ? "0.7" : "0.2");
    }
    StubServer server({{200, "Generated Input Series:\nX_s: " + xs + "]\nX_a: " + xa + "]\n"}});
    HttpSynthesizer synth(server.options(), {}, SleepLog().sleeper());
    const auto ctx = epidemic_context(1);
    const auto g = synth.generate_input(ctx, fixture("table2.md"));
    EXPECT_EQ(g.input.component(1)[0], 0.6);
    EXPECT_EQ(g.warnings.size(), 1u);
    EXPECT_NE(synth.transcript().back().find("Rules Table:"), std::string::npos);

    auto revised = fixture_text("table2.md");
    revised.replace(revised.find("| Moderate | SlowRise | [29, 43]"), 10, "| HighStable");
    StubServer refine({{200, revised}});
    HttpSynthesizer refiner(refine.options(), {}, SleepLog().sleeper());
    const auto rep = build_mismatch_report(ctx.cluster.medoids[0].output, ctx.baseline(), 7);
    const auto rs = refiner.refine_ruleset(ctx, fixture("table2.md"), g.input, ctx.cluster.medoids[0].output, rep);
    EXPECT_EQ(rs.rules[1].antecedent[0].trend, TrendLabel::HighStable);
    EXPECT_NE(refiner.transcript().back().find("Previous Rules Table:"), std::string::npos);
}
