#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "rulexplain/error.hpp"

namespace rulexplain {

// Per-step matrix: one row per input component, one column per time step.
using StepMatrix = std::vector<std::vector<double>>;

struct Bounds {
    double lower = 0.0;
    double upper = 1.0;

    double width() const { return upper - lower; }
    double clamp(double x) const { return std::clamp(x, lower, upper); }
    bool contains(double x) const { return x >= lower && x <= upper; }

    friend bool operator==(const Bounds&, const Bounds&) = default;
};

struct ComponentSpec {
    std::string name;
    Bounds bounds;
    int interval = 1;  // time steps per changepoint

    friend bool operator==(const ComponentSpec&, const ComponentSpec&) = default;
};

/// Shape of a stepwise-constant multivariate input: per-component bounds and
/// interval lengths over a horizon of `horizon` integer steps.
class InputSpec {
public:
    InputSpec() = default;

    InputSpec(std::vector<ComponentSpec> components, int horizon)
        : components_(std::move(components)), horizon_(horizon) {
        if (horizon_ < 1) throw InvalidSpec("horizon must be positive");
        if (components_.empty()) throw InvalidSpec("input spec needs at least one component");
        std::set<std::string> seen;
        for (const auto& c : components_) {
            if (c.name.empty() || std::any_of(c.name.begin(), c.name.end(), [](unsigned char ch) { return std::isspace(ch); }))
                throw InvalidSpec("component label '" + c.name + "' must be nonempty without whitespace");
            if (!(c.bounds.lower < c.bounds.upper))
                throw InvalidSpec("component '" + c.name + "' has degenerate bounds");
            if (c.interval < 1 || c.interval > horizon_)
                throw InvalidSpec("component '" + c.name + "' interval must lie in [1, horizon]");
            if (!seen.insert(c.name).second)
                throw InvalidSpec("duplicate component label '" + c.name + "'");
        }
    }

    std::size_t size() const { return components_.size(); }
    int horizon() const { return horizon_; }
    const std::vector<ComponentSpec>& components() const { return components_; }
    const ComponentSpec& operator[](std::size_t j) const { return components_.at(j); }

    // K_j = ceil(T / Δ_j)
    int changepoints(std::size_t j) const {
        const int d = components_.at(j).interval;
        return (horizon_ + d - 1) / d;
    }

    int total_changepoints() const {
        int n = 0;
        for (std::size_t j = 0; j < size(); ++j) n += changepoints(j);
        return n;
    }

    /// Index of the named component, or -1.
    int index_of(const std::string& name) const {
        for (std::size_t j = 0; j < components_.size(); ++j)
            if (components_[j].name == name) return static_cast<int>(j);
        return -1;
    }

    friend bool operator==(const InputSpec&, const InputSpec&) = default;

private:
    std::vector<ComponentSpec> components_;
    int horizon_ = 0;
};

/// Changepoint values v_{j,k}; value k of component j holds for steps
/// [k*Δ_j, (k+1)*Δ_j) truncated at the horizon.
class InputSeries {
public:
    InputSeries() = default;

    InputSeries(InputSpec spec, std::vector<std::vector<double>> values)
        : spec_(std::move(spec)), values_(std::move(values)) {
        if (values_.size() != spec_.size())
            throw SchemaError("input has " + std::to_string(values_.size()) + " components, spec declares " +
                              std::to_string(spec_.size()));
        for (std::size_t j = 0; j < values_.size(); ++j) {
            const auto k = static_cast<std::size_t>(spec_.changepoints(j));
            if (values_[j].size() != k)
                throw LengthMismatch("component '" + spec_[j].name + "' expects " + std::to_string(k) +
                                     " changepoints, got " + std::to_string(values_[j].size()));
            for (double v : values_[j]) {
                if (!std::isfinite(v) || !spec_[j].bounds.contains(v))
                    throw SchemaError("component '" + spec_[j].name + "' value out of bounds");
            }
        }
    }

    /// Builds an input by clamping every value into its component bounds.
    static InputSeries clamped(InputSpec spec, std::vector<std::vector<double>> values) {
        for (std::size_t j = 0; j < values.size() && j < spec.size(); ++j)
            for (double& v : values[j]) v = spec[j].bounds.clamp(v);
        return InputSeries(std::move(spec), std::move(values));
    }

    const InputSpec& spec() const { return spec_; }
    const std::vector<std::vector<double>>& values() const { return values_; }
    const std::vector<double>& component(std::size_t j) const { return values_.at(j); }

    friend bool operator==(const InputSeries&, const InputSeries&) = default;

private:
    InputSpec spec_;
    std::vector<std::vector<double>> values_;
};

class OutputSeries {
public:
    OutputSeries() = default;

    explicit OutputSeries(std::vector<double> values, std::string name = {})
        : values_(std::move(values)), name_(std::move(name)) {
        for (double v : values_)
            if (!std::isfinite(v)) throw SchemaError("output series contains a non-finite value");
    }

    std::size_t size() const { return values_.size(); }
    const std::vector<double>& values() const { return values_; }
    double operator[](std::size_t t) const { return values_[t]; }
    const std::string& name() const { return name_; }

    friend bool operator==(const OutputSeries& a, const OutputSeries& b) { return a.values_ == b.values_; }

private:
    std::vector<double> values_;
    std::string name_;
};

/// Closed time window [start, end]. Adjacent windows in a partition share
/// their boundary step.
struct SeriesWindow {
    int start = 0;
    int end = 1;

    SeriesWindow() = default;
    SeriesWindow(int a, int b) : start(a), end(b) {
        if (a < 0 || a >= b)
            throw InvalidSpec("window [" + std::to_string(a) + "," + std::to_string(b) + "] must satisfy 0 <= a < b");
    }

    int length() const { return end - start; }
    bool contains(int t) const { return start <= t && t <= end; }

    /// Step range [first, last] after clipping to a horizon of T steps.
    std::pair<int, int> clipped(int horizon) const { return {std::min(start, horizon - 1), std::min(end, horizon - 1)}; }

    std::string str() const { return "[" + std::to_string(start) + "," + std::to_string(end) + "]"; }

    friend bool operator==(const SeriesWindow&, const SeriesWindow&) = default;
};

inline StepMatrix expand(const InputSeries& input) {
    const auto& spec = input.spec();
    const int horizon = spec.horizon();
    StepMatrix out(spec.size(), std::vector<double>(static_cast<std::size_t>(horizon)));
    for (std::size_t j = 0; j < spec.size(); ++j) {
        const int d = spec[j].interval;
        for (int t = 0; t < horizon; ++t) out[j][static_cast<std::size_t>(t)] = input.component(j)[static_cast<std::size_t>(t / d)];
    }
    return out;
}

/// Mean squared deviation between a simulated and a baseline output.
inline double l_out(std::span<const double> y_sim, std::span<const double> y_base) {
    if (y_sim.size() != y_base.size())
        throw HorizonMismatch("incompatible horizons: " + std::to_string(y_sim.size()) + " vs " +
                              std::to_string(y_base.size()));
    if (y_sim.empty()) throw HorizonMismatch("empty series");
    double acc = 0.0;
    for (std::size_t t = 0; t < y_sim.size(); ++t) {
        const double d = y_sim[t] - y_base[t];
        acc += d * d;
    }
    return acc / static_cast<double>(y_sim.size());
}

inline double l_out(const OutputSeries& y_sim, const OutputSeries& y_base) {
    return l_out(std::span<const double>(y_sim.values()), std::span<const double>(y_base.values()));
}

/// l_out normalized by the baseline mean square.
inline double nmse(std::span<const double> y_sim, std::span<const double> y_base) {
    const double loss = l_out(y_sim, y_base);
    double power = 0.0;
    for (double v : y_base) power += v * v;
    if (power == 0.0) throw UndefinedNormalization("all-zero baseline: NMSE undefined");
    return loss / (power / static_cast<double>(y_base.size()));
}

inline double nmse(const OutputSeries& y_sim, const OutputSeries& y_base) {
    return nmse(std::span<const double>(y_sim.values()), std::span<const double>(y_base.values()));
}

inline double normalize(double x, const Bounds& b) { return std::clamp((x - b.lower) / b.width(), 0.0, 1.0); }

inline std::vector<double> normalize(std::span<const double> xs, const Bounds& b) {
    std::vector<double> out;
    out.reserve(xs.size());
    for (double x : xs) out.push_back(normalize(x, b));
    return out;
}

inline double denormalize(double z, const Bounds& b) { return b.lower + std::clamp(z, 0.0, 1.0) * b.width(); }

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::string format_double(double v) {
    std::ostringstream os;
    os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
    return os.str();
}

inline std::vector<std::pair<long, double>> read_two_column_csv(std::istream& in, const std::string& key) {
    std::string line;
    if (!std::getline(in, line)) throw SchemaError("empty CSV");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != key + ",value") throw SchemaError("expected CSV header '" + key + ",value', got '" + line + "'");
    std::vector<std::pair<long, double>> rows;
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw SyntaxError("missing comma", row);
        try {
            rows.emplace_back(std::stol(line.substr(0, comma)), std::stod(line.substr(comma + 1)));
        } catch (const std::exception&) {
            throw SyntaxError("bad number in '" + line + "'", row);
        }
    }
    for (std::size_t i = 0; i < rows.size(); ++i)
        if (rows[i].first != static_cast<long>(i)) throw SchemaError("CSV rows must be indexed 0..n-1 in order");
    return rows;
}

}  // namespace detail

inline void write_output_csv(std::ostream& out, const OutputSeries& y) {
    out << "t,value\n";
    for (std::size_t t = 0; t < y.size(); ++t) out << t << ',' << detail::format_double(y[t]) << '\n';
}

inline OutputSeries read_output_csv(std::istream& in) {
    std::vector<double> values;
    for (const auto& [t, v] : detail::read_two_column_csv(in, "t")) values.push_back(v);
    return OutputSeries(std::move(values));
}

inline void write_changepoint_csv(std::ostream& out, std::span<const double> values) {
    out << "interval_index,value\n";
    for (std::size_t k = 0; k < values.size(); ++k) out << k << ',' << detail::format_double(values[k]) << '\n';
}

inline std::vector<double> read_changepoint_csv(std::istream& in) {
    std::vector<double> values;
    for (const auto& [k, v] : detail::read_two_column_csv(in, "interval_index")) values.push_back(v);
    return values;
}

inline OutputSeries load_output_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    return read_output_csv(in);
}

}  // namespace rulexplain
