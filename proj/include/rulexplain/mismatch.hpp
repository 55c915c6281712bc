#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <optional>
#include <vector>

#include "rulexplain/learner.hpp"
#include "rulexplain/series.hpp"
#include "rulexplain/trends.hpp"

namespace rulexplain {

struct PhaseMismatch {
    PhaseLabel phase = PhaseLabel::InitialGrowth;
    SeriesWindow window;
    int lag = 0;                  // positive: the simulated output runs late
    double magnitude_ratio = 1.0; // simulated window max over baseline window max
    double window_mse = 0.0;
};

struct MismatchReport {
    double l_out = 0.0;
    double nmse = 0.0;
    std::vector<PhaseMismatch> phases;
};

namespace detail {

inline std::optional<double> pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const auto n = static_cast<double>(a.size());
    if (a.size() < 3) return std::nullopt;
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa <= 0.0 || sbb <= 0.0) return std::nullopt;
    return sab / std::sqrt(saa * sbb);
}

/// Lag in [-max_lag, max_lag] maximizing the correlation of base[t] with
/// sim[t + lag] over the window. Near-ties go to the smallest |lag|.
inline int best_lag(const std::vector<double>& sim, const std::vector<double>& base, int a, int b, int max_lag) {
    const int n = static_cast<int>(base.size());
    int best = 0;
    double best_r = -std::numeric_limits<double>::infinity();
    for (int m = 0; m <= max_lag; ++m) {
        for (int lag : {m, -m}) {
            if (m == 0 && lag != 0) continue;
            std::vector<double> xs, ys;
            for (int t = a; t <= b; ++t) {
                if (t + lag < 0 || t + lag >= n) continue;
                xs.push_back(base[static_cast<std::size_t>(t)]);
                ys.push_back(sim[static_cast<std::size_t>(t + lag)]);
            }
            const auto r = pearson(xs, ys);
            if (r && *r > best_r + 1e-9) {
                best_r = *r;
                best = lag;
            }
        }
    }
    return best;
}

}  // namespace detail

/// Per-phase diagnosis of a simulated output against the baseline; phases
/// come from segmenting the baseline with smoothing width Δ.
inline MismatchReport build_mismatch_report(const OutputSeries& y_sim, const OutputSeries& y_base, int interval,
                                            const PhaseThresholds& th = {}) {
    if (y_sim.size() != y_base.size()) throw HorizonMismatch("simulated and baseline outputs differ in length");
    MismatchReport rep;
    rep.l_out = l_out(y_sim, y_base);
    rep.nmse = nmse(y_sim, y_base);
    const auto& sim = y_sim.values();
    const auto& base = y_base.values();
    const int n = static_cast<int>(base.size());
    for (const auto& seg : segment_phases(y_base, interval, th)) {
        const auto [ua, ub] = detail::clip_window(seg.window, base.size());
        const int a = static_cast<int>(ua), b = static_cast<int>(ub);
        PhaseMismatch pm;
        pm.phase = seg.phase;
        pm.window = seg.window;
        pm.lag = detail::best_lag(sim, base, a, b, 2 * interval);
        double base_max = -std::numeric_limits<double>::infinity();
        double sim_max = -std::numeric_limits<double>::infinity();
        double se = 0.0;
        for (int t = a; t <= b; ++t) {
            base_max = std::max(base_max, base[static_cast<std::size_t>(t)]);
            const int s = std::clamp(t + pm.lag, 0, n - 1);
            sim_max = std::max(sim_max, sim[static_cast<std::size_t>(s)]);
            const double d = sim[static_cast<std::size_t>(t)] - base[static_cast<std::size_t>(t)];
            se += d * d;
        }
        pm.magnitude_ratio = sim_max / std::max(std::abs(base_max), kDivisionGuard);
        pm.window_mse = se / static_cast<double>(b - a + 1);
        rep.phases.push_back(pm);
    }
    return rep;
}

}  // namespace rulexplain
