#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "rulexplain/error.hpp"
#include "rulexplain/rules.hpp"
#include "rulexplain/series.hpp"

namespace rulexplain {

/// Numeric meaning of the trend vocabulary, in units of the normalized [0,1]
/// input scale.
struct TrendThresholds {
    double low_ceiling = 0.33;
    double high_floor = 0.66;
    double stability_range = 0.15;
    double spike_jump = 0.30;
    double rise_total = 0.15;
    double dip_depth = 0.10;
    double lowmoderate_lo = 0.15;
    double lowmoderate_hi = 0.50;
    double lowmoderate_range = 0.20;

    void check() const {
        if (!(0.0 < low_ceiling && low_ceiling < high_floor && high_floor < 1.0))
            throw ConfigError("trend thresholds need 0 < low_ceiling < high_floor < 1");
        for (double m : {stability_range, spike_jump, rise_total, dip_depth, lowmoderate_range})
            if (!(m > 0.0 && m < 1.0)) throw ConfigError("trend magnitudes must lie in (0,1)");
        if (!(lowmoderate_lo < lowmoderate_hi)) throw ConfigError("lowmoderate band is empty");
    }
};

/// Numeric meaning of the phase vocabulary; output values are scaled by the
/// full-series maximum.
struct PhaseThresholds {
    double growth_start_ceiling = 1.0 / 3.0;
    double growth_rise = 0.10;
    double peak_fraction = 0.90;
    double postpeak_proximity = 0.15;
    double postpeak_drop = 0.05;
    double decline_fall = 0.10;
    double decline_rebound = 0.05;
    double resurgence_rise = 0.10;
    double resurgence_dip = 0.10;
    // Minimum smoothed swing between consecutive extrema during segmentation.
    double segment_swing = 0.20;
};

struct Thresholds {
    TrendThresholds trend;
    PhaseThresholds phase;
};

// ---------------------------------------------------------------------------
// Trends

namespace detail {

struct WindowStats {
    double mean = 0, min = 0, max = 0, first = 0, last = 0, max_step_rise = 0;
};

inline WindowStats stats(std::span<const double> w) {
    WindowStats s;
    s.first = w.front();
    s.last = w.back();
    s.min = *std::min_element(w.begin(), w.end());
    s.max = *std::max_element(w.begin(), w.end());
    s.mean = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(w.size());
    s.max_step_rise = 0.0;
    for (std::size_t i = 1; i < w.size(); ++i) s.max_step_rise = std::max(s.max_step_rise, w[i] - w[i - 1]);
    return s;
}

}  // namespace detail

inline bool holds_trend(TrendLabel label, std::span<const double> w, const TrendThresholds& th = {}) {
    if (w.size() < 2) throw DegenerateWindow("trend window needs at least 2 values");
    const auto s = detail::stats(w);
    const double net = s.last - s.first;
    switch (label) {
        case TrendLabel::Low: return s.mean < th.low_ceiling && std::abs(net) < th.rise_total;
        case TrendLabel::Moderate:
            return s.mean >= th.low_ceiling && s.mean < th.high_floor && std::abs(net) < th.rise_total;
        case TrendLabel::HighStable: return s.mean >= th.high_floor && (s.max - s.min) < th.stability_range;
        case TrendLabel::SharpSpike: return s.max_step_rise >= th.spike_jump;
        case TrendLabel::SlowRise: return net >= th.rise_total && s.max_step_rise < th.spike_jump;
        case TrendLabel::DipThenRise: {
            if (w.size() < 3) return false;
            const double interior_min = *std::min_element(w.begin() + 1, w.end() - 1);
            return s.first - interior_min >= th.dip_depth && s.last - interior_min >= th.dip_depth;
        }
        case TrendLabel::LowModerate:
            return s.mean >= th.lowmoderate_lo && s.mean <= th.lowmoderate_hi && (s.max - s.min) < th.lowmoderate_range;
    }
    return false;
}

/// Priority used when a window must be described by a single label.
inline constexpr std::array<TrendLabel, 7> kTrendPriority = {TrendLabel::SharpSpike, TrendLabel::DipThenRise,
                                                             TrendLabel::SlowRise,   TrendLabel::HighStable,
                                                             TrendLabel::LowModerate, TrendLabel::Moderate,
                                                             TrendLabel::Low};

/// First label in priority order that holds; if none does, the level label
/// whose canonical value is nearest the window mean.
inline TrendLabel classify_trend(std::span<const double> w, const TrendThresholds& th = {}) {
    for (auto label : kTrendPriority)
        if (holds_trend(label, w, th)) return label;
    const double mean = detail::stats(w).mean;
    const std::pair<TrendLabel, double> levels[] = {{TrendLabel::Low, 0.10},
                                                    {TrendLabel::LowModerate, 0.30},
                                                    {TrendLabel::Moderate, 0.50},
                                                    {TrendLabel::HighStable, 0.85}};
    auto best = levels[0];
    for (const auto& l : levels)
        if (std::abs(l.second - mean) < std::abs(best.second - mean)) best = l;
    return best.first;
}

// ---------------------------------------------------------------------------
// Phases

/// Output scaled by its full-series maximum magnitude.
inline std::vector<double> scale_by_max(std::span<const double> y) {
    double m = 0.0;
    for (double v : y) m = std::max(m, std::abs(v));
    std::vector<double> out(y.begin(), y.end());
    if (m > 0.0)
        for (double& v : out) v /= m;
    return out;
}

namespace detail {

inline std::pair<std::size_t, std::size_t> clip_window(const SeriesWindow& w, std::size_t n) {
    if (n == 0) throw DegenerateWindow("empty series");
    const auto last = static_cast<int>(n) - 1;
    const int a = std::min(w.start, last), b = std::min(w.end, last);
    if (b - a < 1) throw DegenerateWindow("window " + w.str() + " holds fewer than 2 steps of the horizon");
    return {static_cast<std::size_t>(a), static_cast<std::size_t>(b)};
}

}  // namespace detail

/// Evaluates a phase predicate on the closed window `w` of `yn`, an output
/// already scaled by its full-series maximum.
inline bool holds_phase_scaled(PhaseLabel label, std::span<const double> yn, const SeriesWindow& w,
                               const PhaseThresholds& th = {}) {
    const auto [a, b] = detail::clip_window(w, yn.size());
    const double first = yn[a], last = yn[b], net = last - first;
    switch (label) {
        case PhaseLabel::InitialGrowth: return first < th.growth_start_ceiling && net >= th.growth_rise;
        case PhaseLabel::PeakFormation: {
            double wmax = yn[a];
            for (std::size_t i = a; i <= b; ++i) wmax = std::max(wmax, yn[i]);
            for (std::size_t i = a + 1; i < b; ++i) {
                if (yn[i] >= yn[i - 1] && yn[i] >= yn[i + 1] && yn[i] >= th.peak_fraction * wmax && yn[i] > first &&
                    yn[i] > last)
                    return true;
            }
            return false;
        }
        case PhaseLabel::PostPeak: {
            double preceding = yn[0];
            for (std::size_t i = 0; i <= a; ++i) preceding = std::max(preceding, yn[i]);
            return first >= preceding - th.postpeak_proximity && net <= -th.postpeak_drop;
        }
        case PhaseLabel::Decline: {
            if (-net < th.decline_fall) return false;
            double running_min = yn[a], rebound = 0.0;
            for (std::size_t i = a; i <= b; ++i) {
                running_min = std::min(running_min, yn[i]);
                rebound = std::max(rebound, yn[i] - running_min);
            }
            return rebound <= th.decline_rebound;
        }
        case PhaseLabel::Resurgence: {
            if (net < th.resurgence_rise) return false;
            double running_max = yn[0], drawdown = 0.0;
            for (std::size_t i = 0; i <= a; ++i) {
                running_max = std::max(running_max, yn[i]);
                drawdown = std::max(drawdown, running_max - yn[i]);
            }
            return drawdown >= th.resurgence_dip;
        }
    }
    return false;
}

inline bool holds_phase(PhaseLabel label, const OutputSeries& y, const SeriesWindow& w, const PhaseThresholds& th = {}) {
    const auto yn = scale_by_max(y.values());
    return holds_phase_scaled(label, yn, w, th);
}

struct PhaseSegment {
    PhaseLabel phase;
    SeriesWindow window;
    bool degenerate = false;  // constant series fallback; the label is nominal

    friend bool operator==(const PhaseSegment&, const PhaseSegment&) = default;
};

namespace detail {

inline std::vector<double> moving_average(std::span<const double> y, int width) {
    const int n = static_cast<int>(y.size());
    const int lo = (width - 1) / 2, hi = width / 2;
    std::vector<double> out(y.size());
    for (int t = 0; t < n; ++t) {
        const int a = std::max(0, t - lo), b = std::min(n - 1, t + hi);
        double acc = 0.0;
        for (int i = a; i <= b; ++i) acc += y[static_cast<std::size_t>(i)];
        out[static_cast<std::size_t>(t)] = acc / (b - a + 1);
    }
    return out;
}

/// Alternating extrema whose smoothed swing exceeds `swing`; always starts at
/// 0 and ends at n-1.
inline std::vector<int> zigzag(std::span<const double> s, double swing) {
    const int n = static_cast<int>(s.size());
    std::vector<int> pivots{0};
    int dir = 0, hi = 0, lo = 0, ext = 0;
    for (int t = 1; t < n; ++t) {
        const double v = s[static_cast<std::size_t>(t)];
        if (dir == 0) {
            if (v > s[static_cast<std::size_t>(hi)]) hi = t;
            if (v < s[static_cast<std::size_t>(lo)]) lo = t;
            if (s[static_cast<std::size_t>(hi)] - s[static_cast<std::size_t>(lo)] >= swing) {
                dir = hi > lo ? 1 : -1;
                ext = hi > lo ? hi : lo;
            }
        } else if (dir == 1) {
            if (v >= s[static_cast<std::size_t>(ext)]) ext = t;
            else if (s[static_cast<std::size_t>(ext)] - v >= swing) {
                pivots.push_back(ext);
                dir = -1;
                ext = t;
            }
        } else {
            if (v <= s[static_cast<std::size_t>(ext)]) ext = t;
            else if (v - s[static_cast<std::size_t>(ext)] >= swing) {
                pivots.push_back(ext);
                dir = 1;
                ext = t;
            }
        }
    }
    if (pivots.back() != n - 1) pivots.push_back(n - 1);
    return pivots;
}

}  // namespace detail

/// Partitions [0, T] into phase windows (adjacent windows share a boundary
/// step). Every non-degenerate segment satisfies its own phase predicate.
inline std::vector<PhaseSegment> segment_phases(const OutputSeries& y, int smoothing_width = 7,
                                                const PhaseThresholds& th = {}) {
    const int n = static_cast<int>(y.size());
    if (n < 10) throw PreconditionError("segment_phases needs at least 10 steps");
    const int T = n;
    const auto yn = scale_by_max(y.values());
    const auto sm = detail::moving_average(yn, std::max(1, smoothing_width));
    auto pivots = detail::zigzag(sm, th.segment_swing);

    // Snap interior peaks/troughs onto the raw series extremum nearby.
    for (std::size_t k = 1; k + 1 < pivots.size(); ++k) {
        const bool peak = sm[static_cast<std::size_t>(pivots[k])] > sm[static_cast<std::size_t>(pivots[k - 1])];
        const int a = std::max(pivots[k - 1] + 1, pivots[k] - smoothing_width);
        const int b = std::min(pivots[k + 1] - 1, pivots[k] + smoothing_width);
        int best = pivots[k];
        for (int i = a; i <= b; ++i) {
            const double v = yn[static_cast<std::size_t>(i)], cur = yn[static_cast<std::size_t>(best)];
            if (peak ? v > cur : v < cur) best = i;
        }
        pivots[k] = best;
    }

    // Candidate boundaries and labels from the legs between pivots.
    std::vector<int> bounds{0};
    std::vector<PhaseLabel> labels;
    auto push = [&](int end, PhaseLabel label) {
        if (end <= bounds.back()) return;
        bounds.push_back(end);
        labels.push_back(label);
    };
    const int last = n - 1;
    for (std::size_t k = 0; k + 1 < pivots.size(); ++k) {
        const int a = pivots[k], b = pivots[k + 1];
        const bool rising = sm[static_cast<std::size_t>(b)] > sm[static_cast<std::size_t>(a)];
        const int len = b - a;
        const int h = std::clamp(smoothing_width, 1, std::max(1, len / 3));
        if (rising) {
            const PhaseLabel up = a == 0 ? PhaseLabel::InitialGrowth : PhaseLabel::Resurgence;
            if (b == last) {
                push(b, up);
            } else {
                push(b - h, up);
                // PeakFormation closes inside the following falling leg.
            }
        } else {
            if (a == 0) {
                push(b, PhaseLabel::Decline);
                continue;
            }
            const int next_len = len;
            const int hh = std::clamp(smoothing_width, 1, std::max(1, next_len / 3));
            // Close the peak while the series is still near its top so PostPeak can start there.
            int pe = a + 1;
            while (pe < a + hh && yn[static_cast<std::size_t>(pe)] > yn[static_cast<std::size_t>(a)] - 0.5 * th.postpeak_proximity)
                ++pe;
            push(pe, PhaseLabel::PeakFormation);
            const double mid = 0.5 * (sm[static_cast<std::size_t>(a)] + sm[static_cast<std::size_t>(b)]);
            int m = pe;
            while (m < b && sm[static_cast<std::size_t>(m)] > mid) ++m;
            if (m - pe >= 2 && b - m >= 2) {
                push(m, PhaseLabel::PostPeak);
                push(b, PhaseLabel::Decline);
            } else {
                push(b, PhaseLabel::PostPeak);
            }
        }
    }
    if (bounds.back() != last) {
        // Series ends right after a peak pivot that never fell far enough.
        push(last, PhaseLabel::PeakFormation);
    }
    bounds.back() = T;  // the final window is reported up to the horizon

    std::vector<PhaseSegment> segs;
    for (std::size_t i = 0; i < labels.size(); ++i) segs.push_back({labels[i], SeriesWindow(bounds[i], bounds[i + 1])});

    constexpr std::array<PhaseLabel, 5> kFallback = {PhaseLabel::PeakFormation, PhaseLabel::Resurgence,
                                                     PhaseLabel::InitialGrowth, PhaseLabel::PostPeak,
                                                     PhaseLabel::Decline};
    auto ok = [&](const PhaseSegment& s) { return holds_phase_scaled(s.phase, yn, s.window, th); };
    auto relabel = [&](PhaseSegment& s) {
        if (ok(s)) return true;
        for (auto p : kFallback) {
            PhaseSegment c{p, s.window};
            if (ok(c)) {
                s.phase = p;
                return true;
            }
        }
        return false;
    };

    // Repair: relabel failing windows, otherwise merge them into a neighbour.
    bool changed = true;
    while (changed && segs.size() > 1) {
        changed = false;
        for (std::size_t i = 0; i < segs.size(); ++i) {
            const bool too_short = segs[i].window.length() < 2;
            if (!too_short && relabel(segs[i])) continue;
            if (i > 0) {
                segs[i - 1].window = SeriesWindow(segs[i - 1].window.start, segs[i].window.end);
                segs.erase(segs.begin() + static_cast<std::ptrdiff_t>(i));
            } else {
                segs[1].window = SeriesWindow(segs[0].window.start, segs[1].window.end);
                segs.erase(segs.begin());
            }
            changed = true;
            break;
        }
        if (changed) continue;
        // Merge equal neighbours when the union still satisfies the label.
        for (std::size_t i = 0; i + 1 < segs.size(); ++i) {
            if (segs[i].phase != segs[i + 1].phase) continue;
            PhaseSegment merged{segs[i].phase, SeriesWindow(segs[i].window.start, segs[i + 1].window.end)};
            if (!ok(merged)) continue;
            segs[i] = merged;
            segs.erase(segs.begin() + static_cast<std::ptrdiff_t>(i) + 1);
            changed = true;
            break;
        }
    }
    if (segs.size() == 1 && !relabel(segs[0])) {
        segs[0] = {PhaseLabel::Decline, SeriesWindow(0, T), true};
    }
    return segs;
}

// ---------------------------------------------------------------------------
// Rule satisfaction

struct ConjunctCheck {
    std::string component;
    TrendLabel trend;
    bool holds;
};

struct RuleCheckResult {
    std::string rule_id;
    bool antecedent_holds = false;
    bool consequent_holds = false;
    bool satisfied = false;  // material implication
    std::vector<ConjunctCheck> conjuncts;
};

/// Normalized per-step values of component j over the closed window.
inline std::vector<double> window_values(const StepMatrix& steps, const InputSpec& spec, std::size_t j,
                                         const SeriesWindow& w) {
    const auto [a, b] = detail::clip_window(w, steps.at(j).size());
    std::vector<double> out;
    out.reserve(b - a + 1);
    for (std::size_t t = a; t <= b; ++t) out.push_back(normalize(steps[j][t], spec[j].bounds));
    return out;
}

inline RuleCheckResult check_rule(const Rule& rule, const InputSeries& input, const OutputSeries& y,
                                  const Thresholds& th = {}) {
    const auto& spec = input.spec();
    if (y.size() != static_cast<std::size_t>(spec.horizon()))
        throw HorizonMismatch("output length differs from input horizon");
    const StepMatrix steps = expand(input);
    RuleCheckResult res;
    res.rule_id = rule.id;
    res.antecedent_holds = true;
    for (const auto& cj : rule.antecedent) {
        const int j = spec.index_of(cj.component);
        if (j < 0) throw SchemaError("rule " + rule.id + " names unknown component '" + cj.component + "'");
        const auto w = window_values(steps, spec, static_cast<std::size_t>(j), rule.input_window);
        const bool h = holds_trend(cj.trend, w, th.trend);
        res.conjuncts.push_back({cj.component, cj.trend, h});
        res.antecedent_holds = res.antecedent_holds && h;
    }
    res.consequent_holds = holds_phase(rule.phase, y, rule.output_window, th.phase);
    res.satisfied = !res.antecedent_holds || res.consequent_holds;
    return res;
}

struct SatisfactionReport {
    std::vector<RuleCheckResult> results;
    int satisfied = 0;
    int antecedents_true = 0;
    int consequents_true = 0;

    int total() const { return static_cast<int>(results.size()); }
    bool all_satisfied() const { return satisfied == total(); }
};

inline SatisfactionReport check_ruleset(const Ruleset& rs, const InputSeries& input, const OutputSeries& y,
                                        const Thresholds& th = {}) {
    SatisfactionReport rep;
    for (const auto& r : rs.rules) {
        rep.results.push_back(check_rule(r, input, y, th));
        const auto& res = rep.results.back();
        rep.satisfied += res.satisfied;
        rep.antecedents_true += res.antecedent_holds;
        rep.consequents_true += res.consequent_holds;
    }
    return rep;
}

}  // namespace rulexplain
