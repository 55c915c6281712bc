#pragma once

#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <rulexplain/rulexplain.hpp>

namespace testing_support {

inline std::string source_path(const std::string& rel) { return std::string(RULEXPLAIN_SOURCE_DIR) + "/" + rel; }

inline std::string fixture_text(const std::string& name) {
    return rulexplain::read_text_file(source_path("data/fixtures/" + name));
}

inline rulexplain::Ruleset fixture(const std::string& name, int interval = 7) {
    return rulexplain::parse_ruleset(fixture_text(name), rulexplain::Dialect::MarkdownTable,
                                     rulexplain::ParseOptions{100, interval});
}

/// Adjusted Rand index from the pair-counting contingency table.
inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    std::map<std::pair<int, int>, double> nij;
    std::map<int, double> ai, bj;
    for (std::size_t i = 0; i < a.size(); ++i) {
        nij[{a[i], b[i]}] += 1;
        ai[a[i]] += 1;
        bj[b[i]] += 1;
    }
    auto c2 = [](double n) { return n * (n - 1) / 2; };
    double index = 0, sa = 0, sb = 0;
    for (const auto& [k, v] : nij) index += c2(v);
    for (const auto& [k, v] : ai) sa += c2(v);
    for (const auto& [k, v] : bj) sb += c2(v);
    const double expected = sa * sb / c2(static_cast<double>(a.size()));
    const double max_index = 0.5 * (sa + sb);
    return (index - expected) / (max_index - expected);
}

/// Three Gaussian blobs (sigma 0.1) at the corners of a unit triangle.
struct Blobs {
    std::vector<rulexplain::Point2> points;
    std::vector<int> labels;
};

inline Blobs three_blobs(int per_blob, std::uint64_t seed) {
    const rulexplain::Point2 centers[] = {{0.0, 0.0}, {1.0, 0.0}, {0.5, std::sqrt(3.0) / 2}};
    std::mt19937_64 rng(seed);
    Blobs b;
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < per_blob; ++i) {
            b.points.push_back({centers[c][0] + 0.1 * rulexplain::detail::standard_normal(rng),
                                centers[c][1] + 0.1 * rulexplain::detail::standard_normal(rng)});
            b.labels.push_back(c);
        }
    return b;
}

inline std::vector<double> random_series(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (auto& x : v) x = lo + (hi - lo) * rulexplain::detail::uniform01(rng);
    return v;
}

inline rulexplain::InputSeries random_input(std::mt19937_64& rng, const rulexplain::InputSpec& spec) {
    std::vector<std::vector<double>> v(spec.size());
    for (std::size_t j = 0; j < spec.size(); ++j)
        v[j] = random_series(rng, static_cast<std::size_t>(spec.changepoints(j)), spec[j].bounds.lower,
                             spec[j].bounds.upper);
    return rulexplain::InputSeries(spec, std::move(v));
}

inline rulexplain::InputSeries constant_input(const rulexplain::InputSpec& spec, std::vector<double> level) {
    std::vector<std::vector<double>> v(spec.size());
    for (std::size_t j = 0; j < spec.size(); ++j) v[j].assign(static_cast<std::size_t>(spec.changepoints(j)), level[j]);
    return rulexplain::InputSeries(spec, std::move(v));
}

}  // namespace testing_support
