#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "rulexplain/context.hpp"
#include "rulexplain/mismatch.hpp"
#include "rulexplain/rules.hpp"
#include "rulexplain/trends.hpp"

namespace rulexplain {

/// Sign of the input-output effect: inverse means raising an input lowers Y.
enum class Relationship { Direct, Inverse };

inline std::string_view to_string(Relationship r) { return r == Relationship::Direct ? "direct" : "inverse"; }

inline Relationship relationship_from_string(std::string_view s) {
    if (s == "direct") return Relationship::Direct;
    if (s == "inverse") return Relationship::Inverse;
    throw ConfigError("relationship must be direct or inverse, got '" + std::string(s) + "'");
}

struct ConstraintNote {
    std::string text;
    int iteration = 0;

    ConstraintNote() = default;
    ConstraintNote(std::string t, int it) : text(std::move(t)), iteration(it) {
        if (detail::trim(text).empty()) throw PreconditionError("constraint note text is empty");
    }

    friend bool operator==(const ConstraintNote&, const ConstraintNote&) = default;
};

struct HistoryEntry {
    int iteration = 0;
    Ruleset rules;
    InputSeries input;
    OutputSeries output;
    double l_out = 0.0;
    double nmse = 0.0;
};

/// Everything a synthesizer may look at. The orchestrator owns all updates.
struct SynthesisContext {
    ClusterContext cluster;
    InputSpec spec;
    Relationship relationship = Relationship::Direct;
    std::vector<ConstraintNote> constraints;
    std::vector<HistoryEntry> history;
    Thresholds thresholds;
    bool include_medoids = true;  // false withholds the examples (ruleset-only generation)

    int interval() const { return spec[0].interval; }
    int horizon() const { return spec.horizon(); }
    const OutputSeries& baseline() const { return cluster.baseline; }

    std::vector<Candidate> examples() const { return include_medoids ? cluster.medoids : std::vector<Candidate>{}; }

    SynthesisContext without_medoids() const {
        SynthesisContext c = *this;
        c.include_medoids = false;
        return c;
    }
};

struct Justification {
    PhaseLabel phase = PhaseLabel::InitialGrowth;
    SeriesWindow output_window;
    std::string rule_id;
    SeriesWindow input_window;
    std::vector<Conjunct> trends;
    std::string text;
};

struct Generation {
    InputSeries input;
    std::vector<Justification> justifications;
    std::vector<std::string> warnings;
};

class RuleSynthesizer {
public:
    virtual ~RuleSynthesizer() = default;

    virtual std::string name() const = 0;
    virtual bool deterministic() const = 0;

    virtual Ruleset infer_initial_ruleset(const SynthesisContext& ctx) = 0;
    virtual Generation generate_input(const SynthesisContext& ctx, const Ruleset& rules) = 0;
    virtual Ruleset refine_ruleset(const SynthesisContext& ctx, const Ruleset& rules, const InputSeries& trial_input,
                                   const OutputSeries& trial_output, const MismatchReport& mismatch) = 0;
    /// Input proposed from the baseline and bounds alone (no rules, no examples).
    virtual Generation generate_unguided(const SynthesisContext& ctx) = 0;
};

// ---------------------------------------------------------------------------
// Realization of trend labels as changepoint values

/// Normalized shape used to realize a label; u is the relative position of a
/// changepoint across the window.
inline double template_value(TrendLabel label, double u) {
    switch (label) {
        case TrendLabel::Low: return 0.10;
        case TrendLabel::Moderate: return 0.50;
        case TrendLabel::HighStable: return 0.85;
        case TrendLabel::LowModerate: return 0.30;
        case TrendLabel::SlowRise: return 0.15 + 0.40 * u;
        case TrendLabel::SharpSpike: return u < 0.5 ? 0.15 : 0.60;
        case TrendLabel::DipThenRise: return u <= 0.5 ? 0.30 - 0.40 * u : 0.10 + 0.60 * (u - 0.5);
    }
    return 0.5;
}

namespace detail {

/// Changepoints touched by a closed window and the number of window steps
/// each one covers.
struct CpSpan {
    int k0 = 0, k1 = 0;
    std::vector<int> weight;

    int size() const { return k1 - k0 + 1; }
};

inline CpSpan cp_span(const SeriesWindow& w, int interval, int horizon) {
    const auto [a, b] = clip_window(w, static_cast<std::size_t>(horizon));
    CpSpan s;
    s.k0 = static_cast<int>(a) / interval;
    s.k1 = static_cast<int>(b) / interval;
    s.weight.assign(static_cast<std::size_t>(s.size()), 0);
    for (auto t = a; t <= b; ++t) ++s.weight[static_cast<std::size_t>(static_cast<int>(t) / interval - s.k0)];
    return s;
}

inline std::vector<double> span_steps(const CpSpan& s, const std::vector<double>& cps) {
    std::vector<double> out;
    for (std::size_t i = 0; i < s.weight.size(); ++i) out.insert(out.end(), static_cast<std::size_t>(s.weight[i]), cps[i]);
    return out;
}

inline std::vector<double> template_vector(TrendLabel label, int n) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = template_value(label, n == 1 ? 0.5 : double(i) / (n - 1));
    return v;
}

struct Slot {
    const Rule* rule = nullptr;
    TrendLabel label = TrendLabel::Low;
    CpSpan span;
    std::vector<double> target;
};

/// Chooses normalized changepoint values for one component so that every
/// rule's label holds on its window, staying close to per-rule targets.
/// Consecutive windows may share their boundary changepoint; a dynamic
/// program over the chain resolves those couplings.
class ComponentRealizer {
public:
    ComponentRealizer(const ComponentSpec& comp, int horizon, const TrendThresholds& th)
        : comp_(comp), horizon_(horizon), th_(th) {}

    // Value as it reads back after a round trip through the component bounds.
    double round_trip(double z) const { return normalize(denormalize(z, comp_.bounds), comp_.bounds); }

    bool holds(const Slot& s, const std::vector<double>& cps) const {
        return holds_trend(s.label, span_steps(s.span, cps), th_);
    }

    std::vector<double> realize(std::vector<Slot> slots, const std::vector<double>& free_target) const {
        std::stable_sort(slots.begin(), slots.end(), [](const Slot& a, const Slot& b) {
            return std::pair(a.span.k0, a.span.k1) < std::pair(b.span.k0, b.span.k1);
        });
        for (std::size_t i = 1; i < slots.size(); ++i)
            if (slots[i].span.k0 < slots[i - 1].span.k1)
                throw InfeasibleRule(slots[i].rule->id, "input window overlaps rule " + slots[i - 1].rule->id +
                                                            " by more than one interval on " + comp_.name);

        std::vector<double> endpoints;
        for (int g = 0; g <= 20; ++g) endpoints.push_back(round_trip(0.05 * g));
        for (const auto& s : slots) {
            endpoints.push_back(round_trip(s.target.front()));
            endpoints.push_back(round_trip(s.target.back()));
        }
        std::sort(endpoints.begin(), endpoints.end());
        endpoints.erase(std::unique(endpoints.begin(), endpoints.end()), endpoints.end());

        struct State {
            double last;
            double cost;
            int prev;
            std::vector<double> values;
        };
        std::vector<std::vector<State>> layers;
        for (std::size_t i = 0; i < slots.size(); ++i) {
            const Slot& s = slots[i];
            const bool shared = i > 0 && s.span.k0 == slots[i - 1].span.k1;
            std::map<double, std::pair<double, int>> prev_by_last;
            double prev_best = 0.0;
            int prev_best_idx = -1;
            if (i > 0) {
                const auto& pl = layers.back();
                for (std::size_t p = 0; p < pl.size(); ++p) {
                    prev_by_last[pl[p].last] = {pl[p].cost, static_cast<int>(p)};
                    if (prev_best_idx < 0 || pl[p].cost < prev_best) {
                        prev_best = pl[p].cost;
                        prev_best_idx = static_cast<int>(p);
                    }
                }
            }
            std::map<double, State> best_by_last;
            bool any_feasible = false;
            for_each_candidate(s, endpoints, [&](const std::vector<double>& cand) {
                if (!holds(s, cand)) return;
                any_feasible = true;
                double cost = 0.0;
                for (std::size_t c = 0; c < cand.size(); ++c) {
                    const double d = cand[c] - s.target[c];
                    cost += s.span.weight[c] * d * d;
                }
                int prev = -1;
                if (shared) {
                    auto it = prev_by_last.find(cand.front());
                    if (it == prev_by_last.end()) return;
                    cost += it->second.first;
                    prev = it->second.second;
                } else if (i > 0) {
                    cost += prev_best;
                    prev = prev_best_idx;
                }
                auto it = best_by_last.find(cand.back());
                if (it == best_by_last.end() || cost < it->second.cost) best_by_last[cand.back()] = {cand.back(), cost, prev, cand};
            });
            if (best_by_last.empty()) {
                const std::string why = any_feasible ? "cannot join its " + std::string(to_string(s.label)) +
                                                           " realization on " + comp_.name + " to rule " +
                                                           slots[i - 1].rule->id
                                                     : "no realization of " + std::string(to_string(s.label)) +
                                                           " on " + comp_.name + " over " + s.rule->input_window.str();
                throw InfeasibleRule(s.rule->id, why);
            }
            std::vector<State> layer;
            for (auto& kv : best_by_last) layer.push_back(std::move(kv.second));
            layers.push_back(std::move(layer));
        }

        std::vector<double> out(free_target.begin(), free_target.end());
        for (auto& v : out) v = round_trip(v);
        if (slots.empty()) return out;
        int idx = 0;
        for (std::size_t p = 1; p < layers.back().size(); ++p)
            if (layers.back()[p].cost < layers.back()[static_cast<std::size_t>(idx)].cost) idx = static_cast<int>(p);
        for (std::size_t i = slots.size(); i-- > 0;) {
            const State& st = layers[i][static_cast<std::size_t>(idx)];
            for (int c = 0; c < slots[i].span.size(); ++c)
                out[static_cast<std::size_t>(slots[i].span.k0 + c)] = st.values[static_cast<std::size_t>(c)];
            idx = st.prev;
        }
        return out;
    }

private:
    template <class F>
    void for_each_candidate(const Slot& s, const std::vector<double>& endpoints, F&& f) const {
        const int n = s.span.size();
        if (n == 1) {
            for (double e : endpoints) f(std::vector<double>{e});
            return;
        }
        std::vector<std::vector<double>> bases{s.target};
        const auto tmpl = template_vector(s.label, n);
        if (tmpl != s.target) bases.push_back(tmpl);
        std::vector<std::vector<double>> interiors;
        for (const auto& base : bases) {
            for (int k = -4; k <= (n > 2 ? 4 : -4); ++k) {
                std::vector<double> in;
                for (int c = 1; c + 1 < n; ++c)
                    in.push_back(round_trip(std::clamp(base[static_cast<std::size_t>(c)] + 0.05 * k, 0.0, 1.0)));
                interiors.push_back(std::move(in));
            }
        }
        std::sort(interiors.begin(), interiors.end());
        interiors.erase(std::unique(interiors.begin(), interiors.end()), interiors.end());
        std::vector<double> cand(static_cast<std::size_t>(n));
        for (double l : endpoints)
            for (double r : endpoints)
                for (const auto& in : interiors) {
                    cand.front() = l;
                    std::copy(in.begin(), in.end(), cand.begin() + 1);
                    cand.back() = r;
                    f(cand);
                }
    }

    const ComponentSpec& comp_;
    int horizon_;
    TrendThresholds th_;
};

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline int window_overlap(const SeriesWindow& a, const SeriesWindow& b) {
    return std::min(a.end, b.end) - std::max(a.start, b.start);
}

}  // namespace detail

struct DeterministicOptions {
    std::uint64_t seed = 0;
    int initial_lag = -1;  // steps between an input window and the phase it drives; < 0 means 2Δ
    double jitter = 0.02;
    double ratio_high = 1.15;
    double ratio_low = 0.85;
};

/// Offline backend: rules read off the baseline segmentation and the
/// medoids, inputs realized from trend templates, refinement by a fixed
/// timing/magnitude policy.
class DeterministicSynthesizer : public RuleSynthesizer {
public:
    explicit DeterministicSynthesizer(DeterministicOptions opt = {}) : opt_(opt) {}

    std::string name() const override { return "deterministic"; }
    bool deterministic() const override { return true; }
    const DeterministicOptions& options() const { return opt_; }

    static constexpr std::array<TrendLabel, 5> kLadder = {TrendLabel::Low, TrendLabel::LowModerate,
                                                          TrendLabel::Moderate, TrendLabel::SlowRise,
                                                          TrendLabel::HighStable};

    static int ladder_position(TrendLabel t) {
        switch (t) {
            case TrendLabel::Low: return 0;
            case TrendLabel::LowModerate:
            case TrendLabel::DipThenRise: return 1;
            case TrendLabel::Moderate: return 2;
            case TrendLabel::SlowRise:
            case TrendLabel::SharpSpike: return 3;
            case TrendLabel::HighStable: return 4;
        }
        return 2;
    }

    static std::optional<TrendLabel> escalate(TrendLabel t) {
        switch (t) {
            case TrendLabel::SharpSpike: return TrendLabel::HighStable;
            case TrendLabel::DipThenRise: return TrendLabel::SlowRise;
            case TrendLabel::HighStable: return std::nullopt;
            default: return kLadder[static_cast<std::size_t>(ladder_position(t) + 1)];
        }
    }

    static std::optional<TrendLabel> deescalate(TrendLabel t) {
        switch (t) {
            case TrendLabel::SharpSpike: return TrendLabel::Moderate;
            case TrendLabel::DipThenRise: return TrendLabel::LowModerate;
            case TrendLabel::Low: return std::nullopt;
            default: return kLadder[static_cast<std::size_t>(ladder_position(t) - 1)];
        }
    }

    Ruleset infer_initial_ruleset(const SynthesisContext& ctx) override {
        if (ctx.cluster.medoids.empty()) throw PreconditionError("initial ruleset needs at least one context medoid");
        const int T = ctx.horizon(), d = ctx.interval();
        const int lag = opt_.initial_lag < 0 ? 2 * d : opt_.initial_lag;
        auto segs = segment_phases(ctx.baseline(), d, ctx.thresholds.phase);

        std::vector<int> bounds;
        while (true) {
            std::vector<int> starts;
            for (const auto& s : segs) starts.push_back(s.window.start);
            std::vector<int> desired(segs.size() + 1, 0);
            for (std::size_t k = 1; k < segs.size(); ++k)
                desired[k] = static_cast<int>(std::lround(double(starts[k] - lag) / d)) * d;
            desired.back() = T;
            if (auto b = plan_boundaries(desired, starts, std::vector<int>(segs.size(), 2 * d), T, d)) {
                bounds = *b;
                break;
            }
            if (segs.size() == 1) throw InfeasibleRule("R1", "horizon too short for a single input window");
            merge_shortest(segs);
        }

        Ruleset rs;
        rs.horizon = T;
        rs.interval = d;
        for (const auto& c : ctx.spec.components()) rs.components.push_back(c.name);
        for (std::size_t k = 0; k < segs.size(); ++k) {
            const SeriesWindow in(bounds[k], bounds[k + 1]);
            std::vector<Conjunct> ante;
            for (std::size_t j = 0; j < ctx.spec.size(); ++j) ante.push_back({ctx.spec[j].name, vote(ctx, j, in)});
            rs.rules.emplace_back("R" + std::to_string(k + 1), in, std::move(ante), segs[k].window, segs[k].phase);
        }

        // Relax any label the realizer cannot join to its neighbours.
        for (std::size_t attempt = 0; attempt < rs.rules.size() * ctx.spec.size(); ++attempt) {
            try {
                realize(ctx, rs);
                break;
            } catch (const InfeasibleRule& e) {
                for (auto& r : rs.rules)
                    if (r.id == e.rule_id())
                        for (auto& c : r.antecedent)
                            if (c.trend != TrendLabel::Moderate) {
                                c.trend = TrendLabel::Moderate;
                                break;
                            }
            }
        }
        return rs;
    }

    Generation generate_input(const SynthesisContext& ctx, const Ruleset& rules) override {
        Generation g;
        auto z = realize(ctx, rules);
        const auto slots = slots_for(ctx, rules, false);
        std::mt19937_64 rng(detail::mix_seed(opt_.seed, ctx.history.size()));
        const auto medoids = ctx.examples();
        for (int attempt = 0; attempt < 8; ++attempt) {
            auto jittered = z;
            for (std::size_t j = 0; j < ctx.spec.size(); ++j) jittered[j] = jitter_component(ctx, j, z[j], slots[j], rng);
            auto input = to_input(ctx.spec, jittered);
            const bool clash = std::any_of(medoids.begin(), medoids.end(),
                                           [&](const Candidate& m) { return m.input.values() == input.values(); });
            if (!clash) {
                g.input = std::move(input);
                break;
            }
            if (attempt == 7) {
                g.input = std::move(input);
                g.warnings.push_back("generated input coincides with a context example");
            }
        }
        for (const auto& r : rules.rules) {
            Justification jst;
            jst.phase = r.phase;
            jst.output_window = r.output_window;
            jst.rule_id = r.id;
            jst.input_window = r.input_window;
            jst.trends = r.antecedent;
            std::string trends;
            for (const auto& c : r.antecedent)
                trends += (trends.empty() ? "" : ", ") + c.component + " " + std::string(to_string(c.trend));
            jst.text = r.id + ": " + trends + " on " + r.input_window.str() + " drives " +
                       std::string(to_string(r.phase)) + " on " + r.output_window.str() + " (" +
                       std::string(to_string(ctx.relationship)) + ", delay " + std::to_string(r.delay()) + ")";
            g.justifications.push_back(std::move(jst));
        }
        return g;
    }

    Ruleset refine_ruleset(const SynthesisContext& ctx, const Ruleset& rules, const InputSeries&, const OutputSeries&,
                           const MismatchReport& mismatch) override {
        Ruleset rs = rules;
        if (rs.rules.empty()) return rs;
        const int d = ctx.interval();
        std::vector<bool> touched(rs.rules.size(), false);
        for (const auto& pm : mismatch.phases) {
            std::size_t idx = 0;
            for (std::size_t i = 1; i < rs.rules.size(); ++i)
                if (detail::window_overlap(rs.rules[i].output_window, pm.window) >
                    detail::window_overlap(rs.rules[idx].output_window, pm.window))
                    idx = i;
            if (touched[idx]) continue;

            int direction = 0;  // +1 escalate, -1 de-escalate
            if (pm.magnitude_ratio > opt_.ratio_high) direction = ctx.relationship == Relationship::Inverse ? 1 : -1;
            if (pm.magnitude_ratio < opt_.ratio_low) direction = ctx.relationship == Relationship::Inverse ? -1 : 1;
            bool changed = false;
            if (direction != 0) changed = try_relabel(ctx, rs, idx, direction);
            if (std::abs(pm.lag) > d) {
                const int shift = -static_cast<int>(std::lround(double(pm.lag) / d)) * d;
                changed = try_shift(ctx, rs, idx, shift) || changed;
            }
            touched[idx] = changed;
        }
        return rs;
    }

    Generation generate_unguided(const SynthesisContext& ctx) override {
        std::vector<std::vector<double>> z(ctx.spec.size());
        for (std::size_t j = 0; j < ctx.spec.size(); ++j)
            z[j].assign(static_cast<std::size_t>(ctx.spec.changepoints(j)), 0.5);
        Generation g;
        g.input = to_input(ctx.spec, z);
        return g;
    }

    /// Normalized changepoints realizing every antecedent of `rules`, before jitter.
    std::vector<std::vector<double>> realize(const SynthesisContext& ctx, const Ruleset& rules) const {
        const auto slots = slots_for(ctx, rules, true);
        std::vector<std::vector<double>> z(ctx.spec.size());
        for (std::size_t j = 0; j < ctx.spec.size(); ++j) {
            detail::ComponentRealizer cr(ctx.spec[j], ctx.horizon(), ctx.thresholds.trend);
            z[j] = cr.realize(slots[j], free_target(ctx, j));
        }
        return z;
    }

    /// Input boundaries b_0 = 0 < b_1 < ... < b_K = T near `desired`, with
    /// b_k a multiple of Δ, b_{k+1} - b_k >= min_width[k] and b_k <= starts[k]
    /// (a rule's effect cannot open before its cause).
    static std::optional<std::vector<int>> plan_boundaries(std::vector<int> b, const std::vector<int>& starts,
                                                           const std::vector<int>& min_width, int T, int d) {
        const std::size_t K = starts.size();
        b.front() = 0;
        b.back() = T;
        for (std::size_t k = 1; k < K; ++k) b[k] = std::clamp(b[k], 0, (starts[k] / d) * d);
        for (std::size_t k = 1; k < K; ++k) b[k] = std::max(b[k], b[k - 1] + min_width[k - 1]);
        for (std::size_t k = K - 1; k >= 1; --k) b[k] = std::min(b[k], ((b[k + 1] - min_width[k]) / d) * d);
        for (std::size_t k = 0; k < K; ++k) {
            if (b[k] % d != 0 || b[k + 1] - b[k] < min_width[k] || b[k] > starts[k] || b[k] < 0) return std::nullopt;
        }
        return b;
    }

private:
    // slots[j]: the rules constraining component j, with their targets.
    std::vector<std::vector<detail::Slot>> slots_for(const SynthesisContext& ctx, const Ruleset& rules,
                                                     bool with_targets) const {
        std::vector<std::vector<detail::Slot>> slots(ctx.spec.size());
        for (const auto& r : rules.rules) {
            for (const auto& c : r.antecedent) {
                const int j = ctx.spec.index_of(c.component);
                if (j < 0) throw SchemaError("rule " + r.id + " names unknown component '" + c.component + "'");
                const auto uj = static_cast<std::size_t>(j);
                detail::Slot s;
                s.rule = &r;
                s.label = c.trend;
                s.span = detail::cp_span(r.input_window, ctx.spec[uj].interval, ctx.horizon());
                if (with_targets) s.target = target(ctx, uj, s);
                slots[uj].push_back(std::move(s));
            }
        }
        return slots;
    }

    // Mean of the examples' normalized values over the window, preferring the
    // examples whose window already shows the label; the label's template
    // when there are no examples.
    std::vector<double> target(const SynthesisContext& ctx, std::size_t j, const detail::Slot& s) const {
        const auto n = static_cast<std::size_t>(s.span.size());
        std::vector<double> sum(n, 0.0);
        int count = 0;
        for (const auto& m : ctx.examples()) {
            std::vector<double> cps(n);
            for (std::size_t c = 0; c < n; ++c)
                cps[c] = normalize(m.input.component(j)[static_cast<std::size_t>(s.span.k0) + c], ctx.spec[j].bounds);
            if (!holds_trend(s.label, detail::span_steps(s.span, cps), ctx.thresholds.trend)) continue;
            for (std::size_t c = 0; c < n; ++c) sum[c] += cps[c];
            ++count;
        }
        const auto ex = ctx.examples();
        if (ex.empty()) return detail::template_vector(s.label, s.span.size());
        if (count == 0) {
            for (const auto& m : ex)
                for (std::size_t c = 0; c < n; ++c)
                    sum[c] += normalize(m.input.component(j)[static_cast<std::size_t>(s.span.k0) + c], ctx.spec[j].bounds);
            count = static_cast<int>(ex.size());
        }
        for (auto& v : sum) v /= count;
        return sum;
    }

    std::vector<double> free_target(const SynthesisContext& ctx, std::size_t j) const {
        const auto k = static_cast<std::size_t>(ctx.spec.changepoints(j));
        std::vector<double> out(k, 0.5);
        const auto ex = ctx.examples();
        if (ex.empty()) return out;
        for (std::size_t c = 0; c < k; ++c) {
            double acc = 0.0;
            for (const auto& m : ex) acc += normalize(m.input.component(j)[c], ctx.spec[j].bounds);
            out[c] = acc / static_cast<double>(ex.size());
        }
        return out;
    }

    std::vector<double> jitter_component(const SynthesisContext& ctx, std::size_t j, const std::vector<double>& z,
                                         const std::vector<detail::Slot>& slots, std::mt19937_64& rng) const {
        detail::ComponentRealizer cr(ctx.spec[j], ctx.horizon(), ctx.thresholds.trend);
        std::vector<double> noise(z.size());
        for (auto& e : noise) e = 2.0 * detail::uniform01(rng) - 1.0;
        for (double amp = opt_.jitter; amp > 1e-4; amp *= 0.5) {
            std::vector<double> out(z.size());
            for (std::size_t c = 0; c < z.size(); ++c) out[c] = cr.round_trip(std::clamp(z[c] + amp * noise[c], 0.0, 1.0));
            const bool ok = std::all_of(slots.begin(), slots.end(), [&](const detail::Slot& s) {
                return cr.holds(s, std::vector<double>(out.begin() + s.span.k0, out.begin() + s.span.k1 + 1));
            });
            if (ok) return out;
        }
        return z;
    }

    static InputSeries to_input(const InputSpec& spec, const std::vector<std::vector<double>>& z) {
        std::vector<std::vector<double>> v(spec.size());
        for (std::size_t j = 0; j < spec.size(); ++j)
            for (double x : z[j]) v[j].push_back(denormalize(x, spec[j].bounds));
        return InputSeries::clamped(spec, std::move(v));
    }

    bool realizable(const SynthesisContext& ctx, const Ruleset& rs) const {
        try {
            realize(ctx, rs);
            return true;
        } catch (const InfeasibleRule&) {
            return false;
        }
    }

    bool try_relabel(const SynthesisContext& ctx, Ruleset& rs, std::size_t idx, int direction) const {
        auto& ante = rs.rules[idx].antecedent;
        std::vector<std::size_t> order(ante.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        // Dominant conjunct first: the one with the most room to move.
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const int pa = ladder_position(ante[a].trend), pb = ladder_position(ante[b].trend);
            return direction > 0 ? pa < pb : pa > pb;
        });
        for (auto i : order) {
            const auto next = direction > 0 ? escalate(ante[i].trend) : deescalate(ante[i].trend);
            if (!next) continue;
            const TrendLabel old = ante[i].trend;
            ante[i].trend = *next;
            if (realizable(ctx, rs)) return true;
            ante[i].trend = old;
        }
        return false;
    }

    bool try_shift(const SynthesisContext& ctx, Ruleset& rs, std::size_t idx, int shift) const {
        const int T = ctx.horizon(), d = ctx.interval();
        const std::size_t K = rs.rules.size();
        std::vector<int> b(K + 1), starts(K), widths(K);
        for (std::size_t k = 0; k < K; ++k) {
            b[k] = rs.rules[k].input_window.start;
            starts[k] = rs.rules[k].output_window.start;
            const bool dip = std::any_of(rs.rules[k].antecedent.begin(), rs.rules[k].antecedent.end(),
                                         [](const Conjunct& c) { return c.trend == TrendLabel::DipThenRise; });
            widths[k] = dip ? 2 * d : d;
            if (k > 0 && rs.rules[k - 1].input_window.end != b[k]) return false;  // not a partition
        }
        b[K] = rs.rules.back().input_window.end;
        if (b[0] != 0 || b[K] != T) return false;
        auto want = b;
        if (idx > 0) want[idx] += shift;
        if (idx + 1 < K) want[idx + 1] += shift;
        if (want == b) return false;
        auto plan = plan_boundaries(want, starts, widths, T, d);
        if (!plan || *plan == b) return false;
        Ruleset trial = rs;
        for (std::size_t k = 0; k < K; ++k) trial.rules[k].input_window = SeriesWindow((*plan)[k], (*plan)[k + 1]);
        if (!realizable(ctx, trial)) return false;
        rs = std::move(trial);
        return true;
    }

    // Label of the examples' consensus: their mean normalized changepoints,
    // smoothed over neighbouring intervals so that single-interval noise in
    // the learned inputs does not read as a spike.
    TrendLabel vote(const SynthesisContext& ctx, std::size_t j, const SeriesWindow& w) const {
        const auto k = static_cast<std::size_t>(ctx.spec.changepoints(j));
        std::vector<double> mean(k, 0.0);
        for (const auto& m : ctx.cluster.medoids)
            for (std::size_t c = 0; c < k; ++c)
                mean[c] += normalize(m.input.component(j)[c], ctx.spec[j].bounds) /
                           static_cast<double>(ctx.cluster.medoids.size());
        std::vector<double> smooth(k);
        for (std::size_t c = 0; c < k; ++c) {
            const std::size_t lo = c > 0 ? c - 1 : c, hi = std::min(k - 1, c + 1);
            smooth[c] = std::accumulate(mean.begin() + static_cast<std::ptrdiff_t>(lo),
                                        mean.begin() + static_cast<std::ptrdiff_t>(hi) + 1, 0.0) /
                        static_cast<double>(hi - lo + 1);
        }
        const auto span = detail::cp_span(w, ctx.spec[j].interval, ctx.horizon());
        const std::vector<double> cps(smooth.begin() + span.k0, smooth.begin() + span.k1 + 1);
        return classify_trend(detail::span_steps(span, cps), ctx.thresholds.trend);
    }

    static void merge_shortest(std::vector<PhaseSegment>& segs) {
        std::size_t s = 0;
        for (std::size_t i = 1; i < segs.size(); ++i)
            if (segs[i].window.length() < segs[s].window.length()) s = i;
        const std::size_t other = s > 0 ? s - 1 : s + 1;
        const std::size_t lo = std::min(s, other), hi = std::max(s, other);
        PhaseSegment merged = segs[lo].window.length() >= segs[hi].window.length() ? segs[lo] : segs[hi];
        merged.window = SeriesWindow(segs[lo].window.start, segs[hi].window.end);
        segs[lo] = merged;
        segs.erase(segs.begin() + static_cast<std::ptrdiff_t>(hi));
    }

    DeterministicOptions opt_;
};

}  // namespace rulexplain
