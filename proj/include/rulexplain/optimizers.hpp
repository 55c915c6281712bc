#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "rulexplain/error.hpp"
#include "rulexplain/series.hpp"

namespace rulexplain {

/// Ask/tell minimizer over a box. Suggestions always lie inside the box and
/// depend only on the seed and the history of tells.
class Optimizer {
public:
    virtual ~Optimizer() = default;

    virtual std::vector<double> ask() = 0;
    virtual void tell(const std::vector<double>& x, double value) = 0;
    virtual std::string name() const = 0;

    const std::vector<Bounds>& box() const { return box_; }

protected:
    explicit Optimizer(std::vector<Bounds> box) : box_(std::move(box)) {
        if (box_.empty()) throw PreconditionError("optimizer needs at least one dimension");
        for (const auto& b : box_)
            if (!(b.lower < b.upper)) throw PreconditionError("optimizer box has a degenerate dimension");
    }

    std::vector<Bounds> box_;
};

namespace detail {

inline double uniform01(std::mt19937_64& rng) {
    // 53 random bits -> [0,1)
    return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
}

inline double standard_normal(std::mt19937_64& rng) {
    // Box-Muller, kept local so draws are identical across standard libraries.
    double u1 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace detail

class RandomSearch final : public Optimizer {
public:
    RandomSearch(std::vector<Bounds> box, std::uint64_t seed) : Optimizer(std::move(box)), rng_(seed) {}

    std::vector<double> ask() override {
        std::vector<double> x(box_.size());
        for (std::size_t d = 0; d < box_.size(); ++d)
            x[d] = box_[d].lower + detail::uniform01(rng_) * box_[d].width();
        return x;
    }

    void tell(const std::vector<double>&, double) override {}
    std::string name() const override { return "random"; }

private:
    std::mt19937_64 rng_;
};

struct TpeOptions {
    double gamma = 0.25;         // fraction of trials forming the "good" density
    int candidates = 24;         // draws scored per suggestion
    int startup_trials = 10;     // uniform suggestions before modelling
    double prior_weight = 1.0;   // weight of the uniform prior component
};

/// Tree-structured Parzen estimator with independent per-dimension adaptive
/// Parzen windows. Each suggestion is the candidate, drawn from the good-trial
/// density l(x), that maximizes l(x)/g(x).
class TpeSearch final : public Optimizer {
public:
    TpeSearch(std::vector<Bounds> box, std::uint64_t seed, TpeOptions opt = {})
        : Optimizer(std::move(box)), rng_(seed), opt_(opt) {
        if (!(opt_.gamma > 0.0 && opt_.gamma < 1.0)) throw PreconditionError("TPE gamma must lie in (0,1)");
        if (opt_.candidates < 1) throw PreconditionError("TPE needs at least one candidate per trial");
    }

    std::vector<double> ask() override {
        if (static_cast<int>(xs_.size()) < opt_.startup_trials) return uniform();

        std::vector<std::size_t> order(xs_.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ys_[a] < ys_[b]; });
        const auto n_good = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::ceil(opt_.gamma * static_cast<double>(xs_.size()))));

        std::vector<Parzen> good(box_.size()), bad(box_.size());
        for (std::size_t d = 0; d < box_.size(); ++d) {
            std::vector<double> g, b;
            for (std::size_t k = 0; k < order.size(); ++k) (k < n_good ? g : b).push_back(xs_[order[k]][d]);
            good[d] = Parzen(std::move(g), box_[d], opt_.prior_weight);
            bad[d] = Parzen(std::move(b), box_[d], opt_.prior_weight);
        }

        std::vector<double> best;
        double best_score = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < opt_.candidates; ++c) {
            std::vector<double> x(box_.size());
            double score = 0.0;
            for (std::size_t d = 0; d < box_.size(); ++d) {
                x[d] = good[d].sample(rng_);
                score += good[d].log_pdf(x[d]) - bad[d].log_pdf(x[d]);
            }
            if (score > best_score) {
                best_score = score;
                best = std::move(x);
            }
        }
        return best;
    }

    void tell(const std::vector<double>& x, double value) override {
        xs_.push_back(x);
        ys_.push_back(std::isfinite(value) ? value : std::numeric_limits<double>::max());
    }

    std::string name() const override { return "tpe"; }

private:
    // Mixture of a uniform prior and box-truncated Gaussians centred on the
    // observations; bandwidth of each kernel is the larger gap to its sorted
    // neighbours.
    class Parzen {
    public:
        Parzen() = default;
        Parzen(std::vector<double> pts, Bounds box, double prior_weight)
            : mus_(std::move(pts)), box_(box), prior_weight_(prior_weight) {
            std::sort(mus_.begin(), mus_.end());
            const double range = box_.width();
            const std::size_t m = mus_.size();
            sigmas_.resize(m);
            const double lo_bw = range / std::min(100.0, static_cast<double>(m) + 1.0);
            for (std::size_t i = 0; i < m; ++i) {
                const double left = i == 0 ? mus_[i] - box_.lower : mus_[i] - mus_[i - 1];
                const double right = i + 1 == m ? box_.upper - mus_[i] : mus_[i + 1] - mus_[i];
                sigmas_[i] = std::clamp(std::max(left, right), lo_bw, range);
            }
            masses_.resize(m);
            for (std::size_t i = 0; i < m; ++i)
                masses_[i] = std::max(1e-12, cdf((box_.upper - mus_[i]) / sigmas_[i]) - cdf((box_.lower - mus_[i]) / sigmas_[i]));
            total_ = prior_weight_ + static_cast<double>(m);
        }

        double sample(std::mt19937_64& rng) const {
            const double pick = detail::uniform01(rng) * total_;
            if (pick < prior_weight_ || mus_.empty()) return box_.lower + detail::uniform01(rng) * box_.width();
            const auto i = std::min(mus_.size() - 1, static_cast<std::size_t>(pick - prior_weight_));
            for (int tries = 0; tries < 32; ++tries) {
                const double v = mus_[i] + sigmas_[i] * detail::standard_normal(rng);
                if (box_.contains(v)) return v;
            }
            return box_.clamp(mus_[i]);
        }

        double log_pdf(double x) const {
            double p = prior_weight_ / box_.width();
            for (std::size_t i = 0; i < mus_.size(); ++i) {
                const double z = (x - mus_[i]) / sigmas_[i];
                p += std::exp(-0.5 * z * z) / (sigmas_[i] * std::sqrt(2.0 * M_PI) * masses_[i]);
            }
            return std::log(p / total_);
        }

    private:
        static double cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

        std::vector<double> mus_, sigmas_, masses_;
        Bounds box_;
        double prior_weight_ = 1.0;
        double total_ = 1.0;
    };

    std::vector<double> uniform() {
        std::vector<double> x(box_.size());
        for (std::size_t d = 0; d < box_.size(); ++d)
            x[d] = box_[d].lower + detail::uniform01(rng_) * box_[d].width();
        return x;
    }

    std::mt19937_64 rng_;
    TpeOptions opt_;
    std::vector<std::vector<double>> xs_;
    std::vector<double> ys_;
};

enum class OptimizerKind { Random, Tpe };

inline std::unique_ptr<Optimizer> make_optimizer(OptimizerKind kind, std::vector<Bounds> box, std::uint64_t seed,
                                                 TpeOptions tpe = {}) {
    if (kind == OptimizerKind::Tpe) return std::make_unique<TpeSearch>(std::move(box), seed, tpe);
    return std::make_unique<RandomSearch>(std::move(box), seed);
}

}  // namespace rulexplain
