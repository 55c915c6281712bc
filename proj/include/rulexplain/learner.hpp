#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "rulexplain/error.hpp"
#include "rulexplain/optimizers.hpp"
#include "rulexplain/series.hpp"
#include "rulexplain/simulators.hpp"

namespace rulexplain {

inline constexpr double kDivisionGuard = 1e-6;

struct Candidate {
    InputSeries input;
    OutputSeries output;
    double l_out = 0.0;
    double d_arch = 0.0;
    double objective = 0.0;
    int trial_index = 0;
    std::uint64_t seed = 0;
};

/// Append-only pool of counterfactual candidates that all aim at one baseline.
class Archive {
public:
    Archive() = default;
    Archive(OutputSeries baseline, double lambda_arch) : baseline_(std::move(baseline)), lambda_(lambda_arch) {
        if (lambda_ < 0.0) throw PreconditionError("lambda_arch must be non-negative");
    }

    void append(Candidate c) {
        if (!members_.empty() && !(c.input.spec() == members_.front().input.spec()))
            throw SchemaError("archive members must share one input spec");
        members_.push_back(std::move(c));
    }

    std::size_t size() const { return members_.size(); }
    bool empty() const { return members_.empty(); }
    const Candidate& operator[](std::size_t i) const { return members_.at(i); }
    const std::vector<Candidate>& members() const { return members_; }
    const OutputSeries& baseline() const { return baseline_; }
    double lambda_arch() const { return lambda_; }

    /// Member indices ordered by fit loss (ties keep archive order).
    std::vector<std::size_t> ranking() const {
        std::vector<std::size_t> idx(members_.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::stable_sort(idx.begin(), idx.end(),
                         [&](std::size_t a, std::size_t b) { return members_[a].l_out < members_[b].l_out; });
        return idx;
    }

    /// First `n` members, the state candidate n was optimized against.
    Archive prefix(std::size_t n) const {
        Archive a(baseline_, lambda_);
        for (std::size_t i = 0; i < std::min(n, members_.size()); ++i) a.members_.push_back(members_[i]);
        return a;
    }

private:
    std::vector<Candidate> members_;
    OutputSeries baseline_;
    double lambda_ = 1.0;
};

/// d^ℓ: mean over steps of the guarded relative deviation, summed over components.
inline double pairwise_distance(const StepMatrix& candidate, const StepMatrix& member) {
    if (candidate.size() != member.size()) throw SchemaError("candidate and archive member differ in components");
    double total = 0.0;
    for (std::size_t j = 0; j < candidate.size(); ++j) {
        if (candidate[j].size() != member[j].size()) throw SchemaError("candidate and archive member differ in horizon");
        double acc = 0.0;
        for (std::size_t t = 0; t < candidate[j].size(); ++t)
            acc += std::abs((candidate[j][t] - member[j][t]) / std::max(std::abs(member[j][t]), kDivisionGuard));
        total += acc / static_cast<double>(candidate[j].size());
    }
    return total;
}

inline double pairwise_distance(const InputSeries& candidate, const InputSeries& member) {
    if (!(candidate.spec() == member.spec())) throw SchemaError("candidate and archive member use different specs");
    return pairwise_distance(expand(candidate), expand(member));
}

/// D_arch: mean d^ℓ over archive members; 0 for an empty archive.
inline double d_arch(const InputSeries& candidate, const Archive& archive) {
    if (archive.empty()) return 0.0;
    const StepMatrix x = expand(candidate);
    double acc = 0.0;
    for (const auto& m : archive.members()) {
        if (!(m.input.spec() == candidate.spec())) throw SchemaError("candidate spec differs from archive spec");
        acc += pairwise_distance(x, expand(m.input));
    }
    return acc / static_cast<double>(archive.size());
}

/// Fit loss minus diversity bonus.
inline std::pair<double, Candidate> objective(const InputSeries& input, const Archive& archive, const Simulator& sim,
                                              const OutputSeries& baseline, double lambda_arch) {
    Candidate c;
    c.input = input;
    c.output = sim.simulate(input);
    c.l_out = l_out(c.output, baseline);
    c.d_arch = d_arch(input, archive);
    c.objective = c.l_out - lambda_arch * c.d_arch;
    return {c.objective, c};
}

/// Flat changepoint vector (component-major) <-> InputSeries.
inline std::vector<Bounds> search_box(const InputSpec& spec) {
    std::vector<Bounds> box;
    for (std::size_t j = 0; j < spec.size(); ++j)
        for (int k = 0; k < spec.changepoints(j); ++k) box.push_back(spec[j].bounds);
    return box;
}

inline InputSeries unflatten(const InputSpec& spec, const std::vector<double>& flat) {
    std::vector<std::vector<double>> values(spec.size());
    std::size_t pos = 0;
    for (std::size_t j = 0; j < spec.size(); ++j)
        for (int k = 0; k < spec.changepoints(j); ++k) values[j].push_back(flat.at(pos++));
    return InputSeries::clamped(spec, std::move(values));
}

inline std::vector<double> flatten(const InputSeries& input) {
    std::vector<double> flat;
    for (const auto& row : input.values()) flat.insert(flat.end(), row.begin(), row.end());
    return flat;
}

struct LearnerConfig {
    int budget = 300;
    double lambda_arch = 1.0;
    OptimizerKind optimizer = OptimizerKind::Tpe;
    std::uint64_t seed = 0;
    TpeOptions tpe{};
};

/// One sequential P_LEARN(p) solve against the current archive. Returns the
/// budget-best candidate by objective (ties: lower fit loss, then earlier trial).
inline Candidate solve_p_learn(const Archive& archive, const Simulator& sim, const OutputSeries& baseline,
                               Optimizer& optimizer, int budget, double lambda_arch) {
    if (budget < 1) throw PreconditionError("optimizer budget must be at least 1");
    const InputSpec& spec = sim.spec();
    std::optional<Candidate> best;
    std::string last_failure;
    for (int trial = 0; trial < budget; ++trial) {
        const auto x = optimizer.ask();
        try {
            auto [value, cand] = objective(unflatten(spec, x), archive, sim, baseline, lambda_arch);
            cand.trial_index = trial;
            optimizer.tell(x, value);
            const bool better = !best || cand.objective < best->objective ||
                                (cand.objective == best->objective && cand.l_out < best->l_out);
            if (better) best = std::move(cand);
        } catch (const Error& e) {
            last_failure = e.what();
            optimizer.tell(x, std::numeric_limits<double>::infinity());
        }
    }
    if (!best) throw Error("every learner trial failed; last failure: " + last_failure);
    return *best;
}

/// Builds an N-member archive by solving P_LEARN(1..N) in sequence; member p
/// is optimized against members 1..p-1.
inline Archive learn_archive(int n, const Simulator& sim, const OutputSeries& baseline, const LearnerConfig& cfg,
                             const std::function<void(int, const Candidate&)>& on_member = {}) {
    if (n < 1) throw PreconditionError("archive size N must be at least 1");
    Archive archive(baseline, cfg.lambda_arch);
    for (int p = 0; p < n; ++p) {
        const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(p) * 0x9E3779B97F4A7C15ULL;
        auto opt = make_optimizer(cfg.optimizer, search_box(sim.spec()), seed, cfg.tpe);
        Candidate c = solve_p_learn(archive, sim, baseline, *opt, cfg.budget, cfg.lambda_arch);
        c.seed = seed;
        if (on_member) on_member(p, c);
        archive.append(std::move(c));
    }
    return archive;
}

}  // namespace rulexplain
