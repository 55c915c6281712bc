#include <gtest/gtest.h>

#include <set>

#include "support.hpp"

using namespace rulexplain;
using namespace testing_support;

namespace {

InputSpec one_dim(int horizon, int interval) { return InputSpec({{"x", {0.0, 1.0}, interval}}, horizon); }

Candidate member(const InputSeries& x, double loss = 0.0) {
    Candidate c;
    c.input = x;
    c.output = OutputSeries(std::vector<double>(static_cast<std::size_t>(x.spec().horizon()), 0.0));
    c.l_out = loss;
    return c;
}

double quadratic(const std::vector<double>& x) {
    double f = 0;
    for (double v : x) f += (v - 0.3) * (v - 0.3);
    return f;
}

double run_quadratic(OptimizerKind kind, std::uint64_t seed, int budget) {
    auto opt = make_optimizer(kind, std::vector<Bounds>(10, Bounds{-1, 1}), seed);
    double best = std::numeric_limits<double>::infinity();
    for (int t = 0; t < budget; ++t) {
        const auto x = opt->ask();
        const double f = quadratic(x);
        opt->tell(x, f);
        best = std::min(best, f);
    }
    return best;
}

struct EpidemicCase {
    EpidemicSimulator sim;
    InputSeries hidden = epidemic_reference_input(sim.spec());
    OutputSeries baseline = sim.simulate(hidden);
};

Archive blob_archive(const Blobs& b) {
    Archive a(OutputSeries(std::vector<double>(10, 1.0)), 1.0);
    const InputSpec spec({{"x", {-2.0, 2.0}, 5}, {"y", {-2.0, 2.0}, 5}}, 10);
    for (std::size_t i = 0; i < b.points.size(); ++i) {
        const auto& p = b.points[i];
        a.append(member(InputSeries::clamped(spec, {{p[0], p[0]}, {p[1], p[1]}}), static_cast<double>(i)));
    }
    return a;
}

}  // namespace

TEST(Distance, HandEvaluated) {
    const auto spec = one_dim(2, 1);
    const InputSeries xl(spec, {{0.1, 0.2}}), xp(spec, {{0.2, 0.1}});
    EXPECT_NEAR(pairwise_distance(xp, xl), 0.75, 1e-12);
    EXPECT_EQ(pairwise_distance(xl, xl), 0.0);
}

TEST(Distance, ArchiveMean) {
    const auto spec = one_dim(2, 1);
    const InputSeries xp(spec, {{0.2, 0.1}});
    Archive a(OutputSeries({0.0, 0.0}), 1.0);
    EXPECT_EQ(d_arch(xp, a), 0.0);
    a.append(member(InputSeries(spec, {{0.1, 0.2}})));
    a.append(member(InputSeries(spec, {{0.2, 0.2}})));
    EXPECT_NEAR(pairwise_distance(xp, a[1].input), 0.25, 1e-12);
    EXPECT_NEAR(d_arch(xp, a), 0.5, 1e-12);
}

TEST(Distance, GuardAtZeroAndNonnegativity) {
    const auto spec = one_dim(4, 2);
    EXPECT_NEAR(pairwise_distance(InputSeries(spec, {{1e-6, 0.0}}), InputSeries(spec, {{0.0, 0.0}})), 0.5, 1e-12);
    std::mt19937_64 rng(8);
    const auto es = epidemic_spec();
    for (int trial = 0; trial < 200; ++trial) {
        const auto a = random_input(rng, es), b = random_input(rng, es);
        EXPECT_GE(pairwise_distance(a, b), 0.0);
        EXPECT_GT(pairwise_distance(a, b), 0.0);
    }
    EXPECT_THROW(pairwise_distance(random_input(rng, es), random_input(rng, energy_spec())), SchemaError);
}

TEST(Objective, LinearCombinationAndLambdaMonotone) {
    const auto spec = one_dim(2, 1);
    struct Offset final : Simulator {
        InputSpec s;
        explicit Offset(InputSpec sp) : s(std::move(sp)) {}
        const InputSpec& spec() const override { return s; }
        std::string name() const override { return "offset"; }
        OutputSeries simulate(const InputSeries& x) const override {
            return OutputSeries({x.component(0)[0] + 1.0, x.component(0)[1] + 1.0});
        }
    } sim(spec);
    const OutputSeries base({0.1 + 1.0 + std::sqrt(2.0), 0.2 + 1.0 + std::sqrt(2.0)});
    const InputSeries x(spec, {{0.1, 0.2}});
    Archive a(base, 0.5);
    a.append(member(InputSeries(spec, {{0.05, 0.1}})));
    const auto [value, cand] = objective(x, a, sim, base, 0.5);
    EXPECT_NEAR(cand.l_out, 2.0, 1e-12);
    EXPECT_NEAR(cand.d_arch, 1.0, 1e-12);
    EXPECT_NEAR(value, 1.5, 1e-12);
    EXPECT_NEAR(objective(x, a, sim, base, 0.0).first, 2.0, 1e-12);
    double prev = std::numeric_limits<double>::infinity();
    for (double lambda : {0.0, 0.5, 1.0, 2.0, 10.0}) {
        const double v = objective(x, a, sim, base, lambda).first;
        EXPECT_LE(v, prev);
        prev = v;
    }
    const Archive empty(base, 3.0);
    EXPECT_NEAR(objective(x, empty, sim, base, 3.0).first, 2.0, 1e-12);
}

TEST(Optimizer, SuggestionsStayInBox) {
    const std::vector<Bounds> box{{0.0, 0.3}, {-5.0, 5.0}, {100.0, 100.5}};
    for (auto kind : {OptimizerKind::Random, OptimizerKind::Tpe}) {
        auto opt = make_optimizer(kind, box, 17);
        std::mt19937_64 rng(1);
        for (int i = 0; i < 10000; ++i) {
            const auto x = opt->ask();
            ASSERT_EQ(x.size(), box.size());
            for (std::size_t d = 0; d < box.size(); ++d) ASSERT_TRUE(box[d].contains(x[d]));
            if (i < 300) opt->tell(x, quadratic(x) + detail::uniform01(rng));
        }
    }
}

TEST(Optimizer, SeededDeterminism) {
    for (auto kind : {OptimizerKind::Random, OptimizerKind::Tpe}) {
        EXPECT_EQ(run_quadratic(kind, 5, 40), run_quadratic(kind, 5, 40));
        EXPECT_NE(run_quadratic(kind, 5, 40), run_quadratic(kind, 6, 40));
    }
}

TEST(Optimizer, TpeBeatsRandomOnQuadratic) {
    EXPECT_LE(run_quadratic(OptimizerKind::Tpe, 42, 50), run_quadratic(OptimizerKind::Random, 42, 50));
}

TEST(Optimizer, Preconditions) {
    EXPECT_THROW(make_optimizer(OptimizerKind::Random, {}, 1), PreconditionError);
    EXPECT_THROW(make_optimizer(OptimizerKind::Tpe, {{1.0, 1.0}}, 1), PreconditionError);
    TpeOptions bad;
    bad.gamma = 1.0;
    EXPECT_THROW(make_optimizer(OptimizerKind::Tpe, {{0.0, 1.0}}, 1, bad), PreconditionError);
}

TEST(Learner, BudgetZeroRejectedAndBudgetOneReturnsSuggestion) {
    const EpidemicCase e;
    Archive a(e.baseline, 1.0);
    auto opt = make_optimizer(OptimizerKind::Random, search_box(e.sim.spec()), 3);
    EXPECT_THROW(solve_p_learn(a, e.sim, e.baseline, *opt, 0, 1.0), PreconditionError);
    auto fresh = make_optimizer(OptimizerKind::Random, search_box(e.sim.spec()), 3);
    const auto first = make_optimizer(OptimizerKind::Random, search_box(e.sim.spec()), 3)->ask();
    const auto c = solve_p_learn(a, e.sim, e.baseline, *fresh, 1, 1.0);
    EXPECT_EQ(flatten(c.input), first);
    EXPECT_EQ(c.trial_index, 0);
}

TEST(Learner, RandomSearchRecoversHiddenInput) {
    const EpidemicCase e;
    Archive a(e.baseline, 1.0);
    auto opt = make_optimizer(OptimizerKind::Random, search_box(e.sim.spec()), 7);
    const auto c = solve_p_learn(a, e.sim, e.baseline, *opt, 300, 1.0);
    EXPECT_LE(nmse(c.output, e.baseline), 0.1);
    EXPECT_EQ(c.objective, c.l_out);
}

TEST(Learner, DiversityPressureMovesAwayFromHiddenInput) {
    const EpidemicCase e;
    Archive a(e.baseline, 5.0);
    a.append(member(e.hidden));
    auto opt = make_optimizer(OptimizerKind::Tpe, search_box(e.sim.spec()), 11);
    const auto c = solve_p_learn(a, e.sim, e.baseline, *opt, 100, 5.0);
    EXPECT_NE(flatten(c.input), flatten(e.hidden));
    EXPECT_GT(c.d_arch, 0.0);
}

TEST(Learner, ArchiveOfFiveIsPairwiseDistinctAndSequential) {
    const EpidemicCase e;
    LearnerConfig cfg;
    cfg.budget = 40;
    cfg.seed = 9;
    int calls = 0;
    const auto a = learn_archive(5, e.sim, e.baseline, cfg, [&](int p, const Candidate&) { EXPECT_EQ(p, calls++); });
    ASSERT_EQ(a.size(), 5u);
    EXPECT_EQ(calls, 5);
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < a.size(); ++j)
            if (i != j) EXPECT_GT(pairwise_distance(a[i].input, a[j].input), 0.0);
        EXPECT_DOUBLE_EQ(a[i].d_arch, d_arch(a[i].input, a.prefix(i)));
        EXPECT_NEAR(a[i].objective, a[i].l_out - cfg.lambda_arch * a[i].d_arch, 1e-9);
    }
    const auto rank = a.ranking();
    for (std::size_t i = 1; i < rank.size(); ++i) EXPECT_LE(a[rank[i - 1]].l_out, a[rank[i]].l_out);
}

TEST(Learner, SeededRunIsBitReproducible) {
    const EpidemicCase e;
    LearnerConfig cfg;
    cfg.budget = 30;
    cfg.seed = 4;
    const auto a = learn_archive(3, e.sim, e.baseline, cfg), b = learn_archive(3, e.sim, e.baseline, cfg);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(flatten(a[i].input), flatten(b[i].input));
        EXPECT_EQ(a[i].objective, b[i].objective);
    }
    EXPECT_THROW(learn_archive(0, e.sim, e.baseline, cfg), PreconditionError);
}

TEST(Learner, FailingSimulatorReported) {
    struct Broken final : Simulator {
        InputSpec s = epidemic_spec();
        const InputSpec& spec() const override { return s; }
        std::string name() const override { return "broken"; }
        OutputSeries simulate(const InputSeries&) const override { throw ProcessFailure("solver crashed"); }
    } sim;
    Archive a(OutputSeries(std::vector<double>(100, 1.0)), 1.0);
    auto opt = make_optimizer(OptimizerKind::Random, search_box(sim.spec()), 1);
    try {
        solve_p_learn(a, sim, a.baseline(), *opt, 3, 1.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("solver crashed"), std::string::npos);
    }
}

TEST(Context, FlattenColumns) {
    const EpidemicCase e;
    Archive a(e.baseline, 1.0);
    a.append(member(e.hidden));
    const auto m = flatten(a);
    ASSERT_EQ(m.size(), 1u);
    EXPECT_EQ(m[0].size(), 30u);
    EXPECT_EQ(flatten(a), m);
    const InputSpec spec({{"X_s", {0.0, 0.3}, 7}, {"X_a", {0.0, 0.6}, 7}}, 98);
    Archive b(OutputSeries(std::vector<double>(98, 1.0)), 1.0);
    b.append(member(constant_input(spec, {0.1, 0.2})));
    EXPECT_EQ(flatten(b)[0].size(), 28u);
    EXPECT_EQ(flatten(b)[0][14], 0.2);
}

TEST(Context, PcaIsIsometryOnCentredPlanarData) {
    std::mt19937_64 rng(12);
    Matrix rows;
    for (int i = 0; i < 12; ++i) rows.push_back({detail::standard_normal(rng), 0.3 * detail::standard_normal(rng)});
    const auto emb = pca_2d(rows);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows.size(); ++j) {
            const double d0 = std::hypot(rows[i][0] - rows[j][0], rows[i][1] - rows[j][1]);
            EXPECT_NEAR(std::sqrt(detail::sq_dist(emb[i], emb[j])), d0, 1e-9);
        }
}

TEST(Context, PcaRankOneAndRankZero) {
    Matrix line;
    for (int i = 0; i < 6; ++i) line.push_back({1.0 * i, 2.0 * i, -1.0 * i});
    for (const auto& p : pca_2d(line)) EXPECT_NEAR(p[1], 0.0, 1e-9);
    EXPECT_THROW(pca_2d(Matrix(4, {1.0, 2.0})), PreconditionError);
    EXPECT_THROW(pca_2d(Matrix{{1.0, 2.0}}), PreconditionError);
}

TEST(Context, PcaSeparatesBlobs) {
    std::mt19937_64 rng(13);
    Matrix rows;
    for (int b = 0; b < 3; ++b)
        for (int i = 0; i < 10; ++i) {
            std::vector<double> r(28);
            for (std::size_t d = 0; d < r.size(); ++d) r[d] = (d % 3 == static_cast<std::size_t>(b) ? 1.0 : 0.0) + 0.05 * detail::standard_normal(rng);
            rows.push_back(r);
        }
    const auto emb = pca_2d(rows);
    double within = 0, between = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < emb.size(); ++i)
        for (std::size_t j = i + 1; j < emb.size(); ++j) {
            const double d = std::sqrt(detail::sq_dist(emb[i], emb[j]));
            if (i / 10 == j / 10) within = std::max(within, d);
            else between = std::min(between, d);
        }
    EXPECT_GT(between, 2 * within);
}

TEST(Context, KmeansEdgeCases) {
    const auto b = three_blobs(4, 1);
    const auto self = kmeans(b.points, static_cast<int>(b.points.size()), 3);
    EXPECT_NEAR(self.inertia(), 0.0, 1e-12);
    EXPECT_EQ(std::set<int>(self.assignments.begin(), self.assignments.end()).size(), b.points.size());
    EXPECT_THROW(kmeans(b.points, 13, 1), PreconditionError);
    EXPECT_THROW(kmeans(b.points, 0, 1), PreconditionError);
    const std::vector<Point2> dup(5, Point2{0.5, 0.5});
    const auto one = kmeans(dup, 1, 2);
    EXPECT_EQ(one.centroids.size(), 1u);
    EXPECT_EQ(one.centroids[0], (Point2{0.5, 0.5}));
}

TEST(Context, KmeansThreeBlobsAri) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto b = three_blobs(30, seed);
        const auto km = kmeans(b.points, 3, seed);
        EXPECT_GE(adjusted_rand_index(km.assignments, b.labels), 0.9);
        for (std::size_t i = 1; i < km.inertia_history.size(); ++i)
            EXPECT_LE(km.inertia_history[i], km.inertia_history[i - 1] + 1e-12);
    }
}

TEST(Context, MedoidTieRules) {
    Archive a(OutputSeries({0.0, 0.0}), 1.0);
    const auto spec = one_dim(2, 1);
    a.append(member(InputSeries(spec, {{0.1, 0.1}}), 2.0));
    a.append(member(InputSeries(spec, {{0.2, 0.2}}), 1.0));
    a.append(member(InputSeries(spec, {{0.3, 0.3}}), 1.0));
    KMeansResult km;
    km.assignments = {0, 0, 0};
    km.centroids = {{0.0, 0.0}};
    const auto ctx = select_medoids(a, {{-1.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}}, km);
    EXPECT_EQ(ctx.medoid_indices, (std::vector<std::size_t>{1}));
    KMeansResult km2 = km;
    km2.centroids = {{0.0, 0.0}, {9.0, 9.0}};
    const auto dropped = select_medoids(a, {{-1.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}}, km2);
    EXPECT_EQ(dropped.size(), 1u);
    EXPECT_EQ(dropped.warnings.size(), 1u);
}

TEST(Context, OneMedoidPerBlob) {
    const auto b = three_blobs(15, 21);
    const auto a = blob_archive(b);
    ContextOptions opt;
    opt.k = 3;
    opt.seed = 21;
    const auto ctx = build_context(a, opt);
    ASSERT_EQ(ctx.size(), 3u);
    std::set<int> blobs;
    for (auto i : ctx.medoid_indices) blobs.insert(b.labels[i]);
    EXPECT_EQ(blobs.size(), 3u);
    EXPECT_GE(adjusted_rand_index(ctx.assignments, b.labels), 0.9);
}

TEST(Context, PipelineFromLearnedArchive) {
    const EpidemicCase e;
    LearnerConfig cfg;
    cfg.budget = 30;
    cfg.seed = 2;
    const auto a = learn_archive(8, e.sim, e.baseline, cfg);
    ContextOptions opt;
    opt.seed = 2;
    const auto c1 = build_context(a, opt), c2 = build_context(a, opt);
    EXPECT_EQ(c1.medoid_indices, c2.medoid_indices);
    EXPECT_EQ(c1.embedding, c2.embedding);
    EXPECT_LE(c1.size(), 4u);
    for (std::size_t m = 0; m < c1.size(); ++m)
        EXPECT_EQ(flatten(c1.medoids[m].input), flatten(a[c1.medoid_indices[m]].input));
    Archive single(e.baseline, 1.0);
    single.append(a[0]);
    EXPECT_EQ(build_context(single, opt).size(), 1u);
    EXPECT_THROW(build_context(Archive(e.baseline, 1.0), opt), PreconditionError);
}
