#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "rulexplain/synthesizer.hpp"

namespace rulexplain {

enum class PromptKind { Initial, Generate, Refine, NoGuidance };

inline std::string_view to_string(PromptKind k) {
    switch (k) {
        case PromptKind::Initial: return "initial";
        case PromptKind::Generate: return "generate";
        case PromptKind::Refine: return "refine";
        case PromptKind::NoGuidance: return "no_guidance";
    }
    return "?";
}

inline constexpr std::string_view kInitialTemplate = R"(Context-Hash: {{context_hash}}

The examples below come from a timeseries simulation model. Each example pairs a multivariate input X_t with a univariate output Y.

X_t is piecewise constant with interval length {{interval}}. Y covers {{horizon}} steps, so each input component holds {{changepoints}} interval values. Inputs act on the output in a {{relationship}} way, possibly after a delay.

Input bounds (trends are judged relative to them):
{{ranges}}

Task: read the input-output relationships off the examples and state them as symbolic causal rules of the form "if these trends persist in selected components of X_t over a time window, Y shows this phase after a delay".

Split the baseline output into phases in time order and name the input trends responsible for each. Input windows must be multiples of {{interval}} and must concatenate to cover 0 to {{horizon}}.

Vocabulary:
- Trends: {{trend_vocabulary}}
- Output phases: {{phase_vocabulary}}

{{examples}}
----------------------
Baseline Y: {{baseline}}

Additional constraints:
{{constraints}}

Answer with a markdown table in exactly this format:

{{table_format}}

The Symbolic Rule column must read: □_[t1,t2](Trend(X_i) ∧ Trend(X_j) ∧ ...) → ◇_[t3,t4] Phase(Y)
Use abstract trend labels only, no domain terminology.
)";

inline constexpr std::string_view kGenerateTemplate = R"(Context-Hash: {{context_hash}}

You are given input-output examples from a timeseries simulation model together with a causal ruleset linking input trends to output phases.

X_t is piecewise constant with interval length {{interval}}. Y covers {{horizon}} steps, so each input component holds {{changepoints}} interval values. Every example input produces the same output Y. Inputs act on the output in a {{relationship}} way, possibly after a delay.

Input bounds:
{{ranges}}

Using the ruleset, produce a new input X_t that differs from every example input and whose simulated output follows the baseline Y.

Steps:
1. Split the baseline Y into output phases.
2. For each phase, find the rule that covers it and the input trends it requires.
3. Write the input: one value per interval for every component, consistent with the rules, covering the whole timeline, inside the bounds.
4. Justify the choice for each phase by naming the applied rule and the delayed effect.

{{examples}}
----------------------
Baseline Y: {{baseline}}

Rules Table:
{{rules}}

Additional constraints:
{{constraints}}

Reply format:
1. Generated Input Series:
{{array_format}}
2. Phase-wise Justification, one block per phase:
Output Phase: <phase>, Output Window: [t3, t4], Applied Rule: <rule id>, Required Input Trend Window: [t1, t2], Assigned Input Trends: <component>: <trend>
Justification: <one sentence>
)";

inline constexpr std::string_view kRefineTemplate = R"(Context-Hash: {{context_hash}}

An input X' generated from the ruleset below was simulated and produced Y', which does not match the baseline Y closely enough. Inputs act on the output in a {{relationship}} way, after a delay; use that when diagnosing.

Input bounds:
{{ranges}}

Generated input X':
{{trial_input}}

Simulated output Y': {{trial_output}}
----------------------
Baseline Y: {{baseline}}

Measured mismatch per baseline phase:
{{mismatch}}

Previous Rules Table:
{{rules}}

Steps:
1. Split the baseline Y into phases in time order.
2. Compare Y' with the baseline: timing shifts, magnitude differences, shape differences, misaligned phases.
3. Decide which input trends caused each mismatch: too high or too low, too early or too late, too sharp or too flat, too short.
4. Update the rules. Prefer changing only the input most responsible for a mismatch.

Keep input windows multiples of {{interval}} and concatenated from 0 to {{horizon}}. Use only these labels:
- Trends: {{trend_vocabulary}}
- Output phases: {{phase_vocabulary}}

Additional constraints:
{{constraints}}

Return the updated rules as a markdown table in exactly this format:

{{table_format}}
)";

inline constexpr std::string_view kNoGuidanceTemplate = R"(Context-Hash: {{context_hash}}

A simulation model maps a multivariate input X_t to a univariate output Y. The inputs influence the output in a {{relationship}} way, possibly after a delay. Do not rely on any domain knowledge.

X_t is piecewise constant with interval length {{interval}}. Y covers {{horizon}} steps, so each input component holds {{changepoints}} interval values.

Input bounds:
{{ranges}}

Target output Y: {{baseline}}

Propose an input X_t whose simulated output follows the target.

Reply format:
Generated Input Series:
{{array_format}}
)";

inline std::string_view default_template(PromptKind k) {
    switch (k) {
        case PromptKind::Initial: return kInitialTemplate;
        case PromptKind::Generate: return kGenerateTemplate;
        case PromptKind::Refine: return kRefineTemplate;
        case PromptKind::NoGuidance: return kNoGuidanceTemplate;
    }
    return {};
}

/// Substitutes every `{{name}}` marker in one pass; substituted text is not
/// rescanned.
inline std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& values) {
    std::string out;
    std::size_t pos = 0;
    while (true) {
        const auto open = tmpl.find("{{", pos);
        if (open == std::string_view::npos) break;
        const auto close = tmpl.find("}}", open + 2);
        if (close == std::string_view::npos) throw TemplateError("unterminated placeholder at offset " + std::to_string(open));
        const std::string key(tmpl.substr(open + 2, close - open - 2));
        const auto it = values.find(key);
        if (it == values.end()) throw TemplateError("unresolved placeholder {{" + key + "}}");
        out.append(tmpl.substr(pos, open - pos));
        out.append(it->second);
        pos = close + 2;
    }
    out.append(tmpl.substr(pos));
    return out;
}

/// Four significant digits.
inline std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

inline std::string format_array(const std::vector<double>& xs) {
    std::string s = "[";
    for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? ", " : "") + format_number(xs[i]);
    return s + "]";
}

namespace detail {

inline void fnv_mix(std::uint64_t& h, std::string_view s) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    h ^= 0xff;
    h *= 0x100000001b3ULL;
}

inline void fnv_mix(std::uint64_t& h, double v) { fnv_mix(h, format_double(v)); }

inline std::string hex64(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

template <class Range>
std::string join_labels(const Range& r) {
    std::string s;
    for (auto x : r) s += (s.empty() ? "" : ", ") + std::string(to_string(x));
    return s;
}

}  // namespace detail

/// FNV-1a over everything a prompt can show, at full precision.
inline std::string context_hash(const SynthesisContext& ctx) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& c : ctx.spec.components()) {
        detail::fnv_mix(h, c.name);
        detail::fnv_mix(h, c.bounds.lower);
        detail::fnv_mix(h, c.bounds.upper);
        detail::fnv_mix(h, std::to_string(c.interval));
    }
    detail::fnv_mix(h, std::to_string(ctx.horizon()));
    detail::fnv_mix(h, to_string(ctx.relationship));
    for (double v : ctx.baseline().values()) detail::fnv_mix(h, v);
    for (const auto& m : ctx.examples())
        for (const auto& row : m.input.values())
            for (double v : row) detail::fnv_mix(h, v);
    for (const auto& n : ctx.constraints) detail::fnv_mix(h, n.text);
    return detail::hex64(h);
}

/// Hash of the context medoids alone; identical across the iterations of a run.
inline std::string medoid_hash(const ClusterContext& cc) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (auto i : cc.medoid_indices) detail::fnv_mix(h, std::to_string(i));
    for (const auto& m : cc.medoids) {
        for (const auto& row : m.input.values())
            for (double v : row) detail::fnv_mix(h, v);
        for (double v : m.output.values()) detail::fnv_mix(h, v);
    }
    return detail::hex64(h);
}

struct PromptExtras {
    const Ruleset* rules = nullptr;
    const InputSeries* trial_input = nullptr;
    const OutputSeries* trial_output = nullptr;
    const MismatchReport* mismatch = nullptr;
};

inline std::string component_block(const InputSeries& x) {
    std::string s;
    for (std::size_t j = 0; j < x.spec().size(); ++j)
        s += x.spec()[j].name + ": " + format_array(x.component(j)) + "\n";
    return s;
}

/// Every placeholder value a template may use for this context.
inline std::map<std::string, std::string> prompt_values(const SynthesisContext& ctx, const PromptExtras& extra = {}) {
    std::map<std::string, std::string> v;
    v["context_hash"] = context_hash(ctx);
    v["interval"] = std::to_string(ctx.interval());
    v["horizon"] = std::to_string(ctx.horizon());
    v["changepoints"] = std::to_string(ctx.spec.changepoints(0));
    v["relationship"] = std::string(to_string(ctx.relationship));
    v["trend_vocabulary"] = detail::join_labels(kAllTrends);
    v["phase_vocabulary"] = detail::join_labels(kAllPhases);
    v["baseline"] = format_array(ctx.baseline().values());

    std::string ranges, arrays;
    for (const auto& c : ctx.spec.components()) {
        ranges += "- All " + c.name + " values must lie in the range [" + format_number(c.bounds.lower) + ", " +
                  format_number(c.bounds.upper) + "]\n";
        arrays += "- " + c.name + ": [v_1, v_2, ..., v_" + std::to_string((ctx.horizon() + c.interval - 1) / c.interval) + "]\n";
    }
    v["ranges"] = ranges;
    v["array_format"] = arrays;

    // Examples are shown with the baseline as their output: every medoid
    // reproduces it up to the learner's fit loss.
    std::string ex;
    const auto examples = ctx.examples();
    for (std::size_t i = 0; i < examples.size(); ++i) {
        ex += "---- Example " + std::to_string(i) + " ----\n";
        ex += component_block(examples[i].input);
        ex += "Y: " + format_array(ctx.baseline().values()) + "\n";
    }
    v["examples"] = examples.empty() ? "(no examples)\n" : ex;

    std::string notes;
    for (const auto& n : ctx.constraints) notes += "- " + n.text + "\n";
    v["constraints"] = notes.empty() ? "(none)" : notes;

    Ruleset shape;
    for (const auto& c : ctx.spec.components()) shape.components.push_back(c.name);
    std::vector<Conjunct> ante;
    for (const auto& c : ctx.spec.components()) ante.push_back({c.name, TrendLabel::Low});
    shape.rules.emplace_back("R1", SeriesWindow(0, 2 * ctx.interval()), ante,
                             SeriesWindow(ctx.interval(), 3 * ctx.interval()), PhaseLabel::InitialGrowth);
    v["table_format"] = format_ruleset(shape);

    if (extra.rules) v["rules"] = format_ruleset(*extra.rules);
    if (extra.trial_input) v["trial_input"] = component_block(*extra.trial_input);
    if (extra.trial_output) v["trial_output"] = format_array(extra.trial_output->values());
    if (extra.mismatch) {
        std::string m = "Overall MSE " + format_number(extra.mismatch->l_out) + ", NMSE " +
                        format_number(extra.mismatch->nmse) + "\n";
        for (const auto& p : extra.mismatch->phases)
            m += "- " + std::string(to_string(p.phase)) + " " + p.window.str() + ": timing shift " +
                 std::to_string(p.lag) + ", peak ratio " + format_number(p.magnitude_ratio) + ", window MSE " +
                 format_number(p.window_mse) + "\n";
        v["mismatch"] = m;
    }
    return v;
}

class PromptLibrary {
public:
    PromptLibrary() = default;

    /// Reads `<dir>/<kind>.txt` for every kind present; missing files keep
    /// the built-in default.
    static PromptLibrary from_directory(const std::string& dir) {
        PromptLibrary lib;
        for (auto k : {PromptKind::Initial, PromptKind::Generate, PromptKind::Refine, PromptKind::NoGuidance}) {
            std::ifstream in(dir + "/" + std::string(to_string(k)) + ".txt", std::ios::binary);
            if (!in) continue;
            std::ostringstream ss;
            ss << in.rdbuf();
            lib.overrides_[k] = ss.str();
        }
        return lib;
    }

    std::string_view get(PromptKind k) const {
        auto it = overrides_.find(k);
        return it == overrides_.end() ? default_template(k) : std::string_view(it->second);
    }

    void set(PromptKind k, std::string text) { overrides_[k] = std::move(text); }

    std::string render(PromptKind k, const SynthesisContext& ctx, const PromptExtras& extra = {}) const {
        return render_template(get(k), prompt_values(ctx, extra));
    }

private:
    std::map<PromptKind, std::string> overrides_;
};

inline std::string render_prompt(PromptKind k, const SynthesisContext& ctx, const PromptExtras& extra = {}) {
    return PromptLibrary().render(k, ctx, extra);
}

// ---------------------------------------------------------------------------
// Reply parsing

/// Renames positional component labels (X_t,1 or X_{t,1}) to the spec's names.
inline void bind_components(Ruleset& rs, const InputSpec& spec) {
    static const std::regex positional(R"(^X_?\{?t,\s*(\d+)\}?$)");
    auto bind = [&](std::string& name) {
        if (spec.index_of(name) >= 0) return;
        std::smatch m;
        if (std::regex_match(name, m, positional)) {
            const auto j = std::stoul(m[1].str());
            if (j >= 1 && j <= spec.size()) {
                name = spec[j - 1].name;
                return;
            }
        }
        throw SchemaError("reply names unknown component '" + name + "'");
    };
    for (auto& c : rs.components) bind(c);
    for (auto& r : rs.rules)
        for (auto& c : r.antecedent) bind(c.component);
}

/// The first well-formed markdown rule table in `text`.
inline Ruleset parse_rules_reply(const std::string& text, const InputSpec& spec, int interval) {
    const ParseOptions opt{spec.horizon(), interval};
    const auto lines = detail::split_lines(text);
    std::string last_error = "no rule table found";
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (detail::trim(lines[i]).rfind('|', 0) != 0) continue;
        std::string block;
        std::size_t k = i;
        for (; k < lines.size() && detail::trim(lines[k]).rfind('|', 0) == 0; ++k) block += lines[k] + "\n";
        try {
            auto rs = parse_ruleset(block, Dialect::MarkdownTable, opt);
            bind_components(rs, spec);
            return rs;
        } catch (const Error& e) {
            last_error = e.what();
        }
        i = k;
    }
    throw MalformedReply("reply holds no usable rule table: " + last_error);
}

struct ParsedGeneration {
    std::vector<std::vector<double>> values;
    std::vector<Justification> justifications;
    std::vector<std::string> warnings;
};

namespace detail {

inline std::optional<std::vector<double>> find_array(const std::string& text, const std::string& label) {
    const std::regex re("(^|[^A-Za-z0-9_])" + label + R"(\s*[^\[\n|]{0,8}\[([^\]]*)\])");
    std::smatch m;
    if (!std::regex_search(text, m, re)) return std::nullopt;
    std::vector<double> out;
    std::stringstream ss(m[2].str());
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (tok.empty()) continue;
        try {
            std::size_t used = 0;
            out.push_back(std::stod(tok, &used));
            if (used != tok.size() || !std::isfinite(out.back()))
                throw MalformedReply("bad number '" + tok + "' for " + label);
        } catch (const std::logic_error&) {
            throw MalformedReply("bad number '" + tok + "' for " + label);
        }
    }
    return out;
}

inline std::string regex_escape(const std::string& s) {
    static const std::regex special(R"([.^$|()\[\]{}*+?\\])");
    return std::regex_replace(s, special, R"(\$&)");
}

inline std::vector<Justification> find_justifications(const std::string& raw, std::vector<std::string>& warnings) {
    std::string text = canonical_symbols(raw);
    static const std::regex key(
        R"((Output Phase|Output Window|Applied Rule|Required Input Trend Window|Assigned Input Trends|Justification)\s*:)");
    std::vector<std::pair<std::string, std::string>> fields;
    auto begin = std::sregex_iterator(text.begin(), text.end(), key);
    std::vector<std::smatch> hits(begin, std::sregex_iterator());
    for (std::size_t i = 0; i < hits.size(); ++i) {
        const auto start = static_cast<std::size_t>(hits[i].position(0) + hits[i].length(0));
        const auto stop = i + 1 < hits.size() ? static_cast<std::size_t>(hits[i + 1].position(0)) : text.size();
        std::string value = trim(text.substr(start, stop - start));
        while (!value.empty() && (value.back() == ',' || value.back() == '-')) value = trim(value.substr(0, value.size() - 1));
        fields.emplace_back(hits[i][1].str(), value);
    }
    std::vector<Justification> out;
    for (const auto& [k, v] : fields) {
        try {
            if (k == "Output Phase") {
                out.emplace_back();
                out.back().phase = parse_phase(v, static_cast<int>(out.size()));
                continue;
            }
            if (out.empty()) continue;
            auto& j = out.back();
            if (k == "Output Window") j.output_window = parse_window(v, static_cast<int>(out.size()));
            else if (k == "Required Input Trend Window") j.input_window = parse_window(v, static_cast<int>(out.size()));
            else if (k == "Applied Rule") j.rule_id = v;
            else if (k == "Assigned Input Trends") {
                static const std::regex pair(R"(([A-Za-z][\w,{}]*)\s*:\s*([A-Za-z]+))");
                for (auto it = std::sregex_iterator(v.begin(), v.end(), pair); it != std::sregex_iterator(); ++it)
                    if (auto t = trend_from_string((*it)[2].str())) j.trends.push_back({(*it)[1].str(), *t});
            } else if (k == "Justification") j.text = v;
        } catch (const Error& e) {
            warnings.push_back(std::string("justification block skipped: ") + e.what());
            if (k == "Output Phase") out.pop_back();
        }
    }
    return out;
}

}  // namespace detail

/// Labeled per-component arrays plus the phase-wise justification blocks.
/// Values outside the bounds are clamped and reported in `warnings`.
inline ParsedGeneration parse_generation_reply(const std::string& text, const InputSpec& spec) {
    ParsedGeneration g;
    std::string flat = text;
    for (std::string_view s : {"$", "*", "`", "\\"}) detail::replace_all(flat, s, "");
    for (std::size_t j = 0; j < spec.size(); ++j) {
        const auto& c = spec[j];
        std::optional<std::vector<double>> arr = detail::find_array(flat, detail::regex_escape(c.name));
        if (!arr) arr = detail::find_array(flat, R"(X_?\{?t,\s*)" + std::to_string(j + 1) + R"(\}?)");
        if (!arr) throw MalformedReply("reply has no array for component " + c.name);
        const auto k = static_cast<std::size_t>(spec.changepoints(j));
        if (arr->size() != k)
            throw LengthMismatch("component " + c.name + " expects " + std::to_string(k) + " values, reply has " +
                                 std::to_string(arr->size()));
        for (std::size_t i = 0; i < arr->size(); ++i) {
            double& v = (*arr)[i];
            if (!c.bounds.contains(v)) {
                const double clamped = c.bounds.clamp(v);
                g.warnings.push_back(c.name + "[" + std::to_string(i) + "] = " + format_number(v) + " clamped to " +
                                     format_number(clamped));
                v = clamped;
            }
        }
        g.values.push_back(std::move(*arr));
    }
    g.justifications = detail::find_justifications(text, g.warnings);
    return g;
}

}  // namespace rulexplain
