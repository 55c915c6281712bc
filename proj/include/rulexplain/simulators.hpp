#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "rulexplain/error.hpp"
#include "rulexplain/series.hpp"

namespace rulexplain {

/// Black-box forward model: maps a stepwise input to an output of length T.
class Simulator {
public:
    virtual ~Simulator() = default;

    virtual const InputSpec& spec() const = 0;
    virtual bool deterministic() const { return true; }
    virtual OutputSeries simulate(const InputSeries& input) const = 0;
    virtual std::string name() const = 0;

protected:
    void require_spec(const InputSeries& input) const {
        if (!(input.spec() == spec())) throw SchemaError(name() + ": input does not match the simulator's input spec");
    }
};

// ---------------------------------------------------------------------------
// Epidemic reference model

struct EpidemicParams {
    double population = 100000.0;
    double beta = 0.6;      // transmission rate, 1/day
    double sigma = 0.3;     // incubation rate, 1/day
    double gamma = 0.15;    // recovery rate, 1/day
    double kappa_s = 1.0;   // symptomatic testing effectiveness
    double kappa_a = 1.0;   // asymptomatic testing effectiveness
    int delay = 15;         // days before testing affects transmission
    double initial_infected = 20.0;

    void check() const {
        if (!(population > 0 && beta > 0 && sigma > 0 && gamma > 0))
            throw InvalidSpec("epidemic rates and population must be positive");
        if (sigma > 1.0 || gamma > 1.0) throw InvalidSpec("daily sigma/gamma must not exceed 1");
        if (kappa_s < 0 || kappa_s > 1 || kappa_a < 0 || kappa_a > 1)
            throw InvalidSpec("testing effectiveness must lie in [0,1]");
        if (delay < 0) throw InvalidSpec("report delay must be non-negative");
        if (initial_infected < 0 || initial_infected > population) throw InvalidSpec("bad initial infected count");
    }
};

struct Compartments {
    std::vector<double> S, E, I, R;
};

/// Two-component input spec of the epidemic scenario: symptomatic and
/// asymptomatic testing rates, weekly changepoints, T=100 days.
inline InputSpec epidemic_spec(int horizon = 100, int interval = 7) {
    return InputSpec({{"X_s", {0.0, 0.3}, interval}, {"X_a", {0.0, 0.6}, interval}}, horizon);
}

/// Discrete-time SEIR surrogate. Testing suppresses transmission after a
/// reporting delay; the reported output is the infectious compartment.
class EpidemicSimulator final : public Simulator {
public:
    explicit EpidemicSimulator(InputSpec spec = epidemic_spec(), EpidemicParams params = {})
        : spec_(std::move(spec)), params_(params) {
        params_.check();
        if (spec_.size() != 2) throw InvalidSpec("epidemic simulator takes exactly two input components");
    }

    const InputSpec& spec() const override { return spec_; }
    const EpidemicParams& params() const { return params_; }
    std::string name() const override { return "epidemic"; }

    /// β_t = β·(1 − κ_s·x_s[t−d])·(1 − κ_a·x_a[t−d]); unmodified before the delay.
    double effective_beta(const StepMatrix& x, int t) const {
        const int src = t - params_.delay;
        if (src < 0) return params_.beta;
        const auto s = static_cast<std::size_t>(src);
        return params_.beta * (1.0 - params_.kappa_s * x[0][s]) * (1.0 - params_.kappa_a * x[1][s]);
    }

    Compartments compartments(const InputSeries& input) const {
        require_spec(input);
        const StepMatrix x = expand(input);
        const int T = spec_.horizon();
        const double N = params_.population;
        Compartments c;
        for (auto* v : {&c.S, &c.E, &c.I, &c.R}) v->resize(static_cast<std::size_t>(T));
        double S = N - params_.initial_infected, E = 0.0, I = params_.initial_infected, R = 0.0;
        for (int t = 0; t < T; ++t) {
            const auto k = static_cast<std::size_t>(t);
            c.S[k] = S;
            c.E[k] = E;
            c.I[k] = I;
            c.R[k] = R;
            const double beta_t = std::max(0.0, effective_beta(x, t));
            const double infections = std::min(S, beta_t * S * I / N);
            const double onsets = params_.sigma * E;
            const double recoveries = params_.gamma * I;
            S -= infections;
            E += infections - onsets;
            I += onsets - recoveries;
            R += recoveries;
        }
        return c;
    }

    OutputSeries simulate(const InputSeries& input) const override {
        return OutputSeries(compartments(input).I, "Y");
    }

    /// Total ever infected over the recorded horizon, N − S at the last step.
    double cumulative_infected(const InputSeries& input) const {
        return params_.population - compartments(input).S.back();
    }

private:
    InputSpec spec_;
    EpidemicParams params_;
};

// ---------------------------------------------------------------------------
// Energy reference model

struct EnergyParams {
    double base_load = 1.0e6;        // J/hour
    double cooling = 6.0e4;          // J/(hour·°C) above setpoint
    double setpoint = 20.0;          // °C
    double solar = 600.0;            // J·m²/(hour·Wh)
    int lag = 1;                     // hours
    std::array<double, 24> schedule = {0.55, 0.55, 0.55, 0.55, 0.55, 0.6,  0.75, 0.9,  1.0,  1.0,  1.0,  1.0,
                                       1.0,  1.0,  1.0,  1.0,  1.0,  1.0,  0.95, 0.9,  0.8,  0.7,  0.6,  0.55};

    void check() const {
        if (base_load < 0 || cooling < 0 || solar < 0) throw InvalidSpec("energy coefficients must be non-negative");
        if (lag < 0) throw InvalidSpec("thermal lag must be non-negative");
        for (double s : schedule)
            if (s < 0) throw InvalidSpec("schedule multipliers must be non-negative");
    }
};

/// Dry-bulb temperature (°C) and global horizontal irradiance (Wh/m²),
/// T=100 hours, three-hour changepoints.
inline InputSpec energy_spec(int horizon = 100, int interval = 3) {
    return InputSpec({{"X_d", {10.0, 35.0}, interval}, {"X_g", {0.0, 800.0}, interval}}, horizon);
}

/// Hourly electricity: scheduled base load plus lagged cooling and solar terms.
class EnergySimulator final : public Simulator {
public:
    explicit EnergySimulator(InputSpec spec = energy_spec(), EnergyParams params = {})
        : spec_(std::move(spec)), params_(params) {
        params_.check();
        if (spec_.size() != 2) throw InvalidSpec("energy simulator takes exactly two input components");
    }

    const InputSpec& spec() const override { return spec_; }
    const EnergyParams& params() const { return params_; }
    std::string name() const override { return "energy"; }

    double base_term(int t) const { return params_.schedule[static_cast<std::size_t>(t % 24)] * params_.base_load; }

    OutputSeries simulate(const InputSeries& input) const override {
        require_spec(input);
        const StepMatrix x = expand(input);
        const int T = spec_.horizon();
        std::vector<double> y(static_cast<std::size_t>(T));
        for (int t = 0; t < T; ++t) {
            // Before the lag has elapsed the building sees the initial conditions.
            const auto src = static_cast<std::size_t>(std::max(0, t - params_.lag));
            const double cooling = params_.cooling * std::max(0.0, x[0][src] - params_.setpoint);
            const double solar = params_.solar * x[1][src];
            y[static_cast<std::size_t>(t)] = base_term(t) + cooling + solar;
        }
        return OutputSeries(std::move(y), "Y");
    }

private:
    InputSpec spec_;
    EnergyParams params_;
};

// ---------------------------------------------------------------------------
// Reference hidden inputs

/// Input behind the reference epidemic baseline: both testing rates ramp up
/// linearly in time until they saturate at their upper bounds.
inline InputSeries epidemic_reference_input(const InputSpec& spec = epidemic_spec()) {
    const double start[] = {0.02, 0.05}, per_week[] = {0.02, 0.04};
    std::vector<std::vector<double>> v(spec.size());
    for (std::size_t j = 0; j < spec.size() && j < 2; ++j)
        for (int k = 0; k < spec.changepoints(j); ++k)
            v[j].push_back(start[j] + per_week[j] * k * spec[j].interval / 7.0);
    return InputSeries::clamped(spec, std::move(v));
}

/// Input behind the reference energy baseline: a daily temperature cycle
/// peaking mid-afternoon and daylight irradiance between 06:00 and 18:00.
inline InputSeries energy_reference_input(const InputSpec& spec = energy_spec()) {
    const double pi = std::acos(-1.0);
    std::vector<std::vector<double>> v(spec.size());
    for (std::size_t j = 0; j < spec.size() && j < 2; ++j) {
        for (int k = 0; k < spec.changepoints(j); ++k) {
            const double hour = std::fmod(k * spec[j].interval + 0.5 * (spec[j].interval - 1), 24.0);
            if (j == 0) v[j].push_back(24.0 + 7.0 * std::sin(2.0 * pi * (hour - 9.0) / 24.0));
            else v[j].push_back(hour > 6.0 && hour < 18.0 ? 750.0 * std::sin(pi * (hour - 6.0) / 12.0) : 0.0);
        }
    }
    return InputSeries::clamped(spec, std::move(v));
}

}  // namespace rulexplain
