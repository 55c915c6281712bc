#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "rulexplain/context.hpp"
#include "rulexplain/learner.hpp"
#include "rulexplain/mismatch.hpp"
#include "rulexplain/prompts.hpp"
#include "rulexplain/rules.hpp"
#include "rulexplain/synthesizer.hpp"

namespace rulexplain {

using Json = nlohmann::json;

namespace detail {

template <class F>
auto schema_guard(const char* what, F&& f) {
    try {
        return f();
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string(what) + ": " + e.what());
    }
}

}  // namespace detail

inline Json to_json(const SeriesWindow& w) { return Json::array({w.start, w.end}); }
inline SeriesWindow window_from_json(const Json& j) { return SeriesWindow{j.at(0).get<int>(), j.at(1).get<int>()}; }

inline Json to_json(const InputSpec& spec) {
    Json comps = Json::array();
    for (const auto& c : spec.components())
        comps.push_back({{"name", c.name}, {"lower", c.bounds.lower}, {"upper", c.bounds.upper}, {"interval", c.interval}});
    return {{"horizon", spec.horizon()}, {"components", comps}};
}

inline InputSpec spec_from_json(const Json& j) {
    return detail::schema_guard("input spec", [&] {
        std::vector<ComponentSpec> comps;
        for (const auto& c : j.at("components"))
            comps.push_back({c.at("name").get<std::string>(),
                             {c.at("lower").get<double>(), c.at("upper").get<double>()},
                             c.at("interval").get<int>()});
        return InputSpec(std::move(comps), j.at("horizon").get<int>());
    });
}

inline Json to_json(const InputSeries& x) { return {{"spec", to_json(x.spec())}, {"values", x.values()}}; }

inline InputSeries input_from_json(const Json& j) {
    return detail::schema_guard("input series", [&] {
        return InputSeries(spec_from_json(j.at("spec")), j.at("values").get<std::vector<std::vector<double>>>());
    });
}

inline Json to_json(const OutputSeries& y) { return {{"name", y.name()}, {"values", y.values()}}; }

inline OutputSeries output_from_json(const Json& j) {
    return detail::schema_guard("output series", [&] {
        return OutputSeries(j.at("values").get<std::vector<double>>(), j.value("name", std::string()));
    });
}

inline Json to_json(const Candidate& c) {
    return {{"input", to_json(c.input)}, {"output", to_json(c.output)}, {"l_out", c.l_out},
            {"d_arch", c.d_arch},        {"objective", c.objective},    {"trial_index", c.trial_index},
            {"seed", c.seed}};
}

inline Candidate candidate_from_json(const Json& j) {
    return detail::schema_guard("candidate", [&] {
        Candidate c;
        c.input = input_from_json(j.at("input"));
        c.output = output_from_json(j.at("output"));
        c.l_out = j.at("l_out").get<double>();
        c.d_arch = j.at("d_arch").get<double>();
        c.objective = j.at("objective").get<double>();
        c.trial_index = j.at("trial_index").get<int>();
        c.seed = j.at("seed").get<std::uint64_t>();
        return c;
    });
}

inline Json to_json(const Archive& a) {
    Json members = Json::array();
    for (const auto& c : a.members()) members.push_back(to_json(c));
    return {{"baseline", to_json(a.baseline())}, {"lambda_arch", a.lambda_arch()}, {"members", members}};
}

inline Archive archive_from_json(const Json& j) {
    return detail::schema_guard("archive", [&] {
        Archive a(output_from_json(j.at("baseline")), j.at("lambda_arch").get<double>());
        for (const auto& m : j.at("members")) a.append(candidate_from_json(m));
        return a;
    });
}

/// FNV-1a over the archive's serialized form.
inline std::string archive_hash(const Archive& a) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    detail::fnv_mix(h, to_json(a).dump());
    return detail::hex64(h);
}

inline Json to_json(const Point2& p) { return Json::array({p[0], p[1]}); }

inline Json to_json(const ClusterContext& c, const Archive* archive = nullptr) {
    Json emb = Json::array(), cen = Json::array(), meds = Json::array();
    for (const auto& p : c.embedding) emb.push_back(to_json(p));
    for (const auto& p : c.centroids) cen.push_back(to_json(p));
    for (const auto& m : c.medoids) meds.push_back(to_json(m));
    Json j = {{"k", c.k},
              {"seed", c.seed},
              {"medoid_indices", c.medoid_indices},
              {"medoids", meds},
              {"baseline", to_json(c.baseline)},
              {"embedding", emb},
              {"assignments", c.assignments},
              {"centroids", cen},
              {"warnings", c.warnings},
              {"medoid_hash", medoid_hash(c)}};
    if (archive) j["archive_hash"] = archive_hash(*archive);
    return j;
}

inline ClusterContext context_from_json(const Json& j) {
    return detail::schema_guard("context", [&] {
        ClusterContext c;
        c.k = j.at("k").get<int>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.medoid_indices = j.at("medoid_indices").get<std::vector<std::size_t>>();
        for (const auto& m : j.at("medoids")) c.medoids.push_back(candidate_from_json(m));
        c.baseline = output_from_json(j.at("baseline"));
        for (const auto& p : j.at("embedding")) c.embedding.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
        c.assignments = j.at("assignments").get<std::vector<int>>();
        for (const auto& p : j.at("centroids")) c.centroids.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
        c.warnings = j.at("warnings").get<std::vector<std::string>>();
        return c;
    });
}

inline Json to_json(const Ruleset& rs) {
    Json rules = Json::array();
    for (const auto& r : rs.rules) {
        Json ante = Json::array();
        for (const auto& c : r.antecedent) ante.push_back({{"component", c.component}, {"trend", to_string(c.trend)}});
        rules.push_back({{"id", r.id},
                         {"input_window", to_json(r.input_window)},
                         {"antecedent", ante},
                         {"output_window", to_json(r.output_window)},
                         {"phase", to_string(r.phase)}});
    }
    return {{"horizon", rs.horizon}, {"interval", rs.interval}, {"components", rs.components}, {"rules", rules},
            {"table", format_ruleset(rs)}};
}

inline Ruleset ruleset_from_json(const Json& j) {
    return detail::schema_guard("ruleset", [&] {
        Ruleset rs;
        rs.horizon = j.at("horizon").get<int>();
        rs.interval = j.at("interval").get<int>();
        rs.components = j.at("components").get<std::vector<std::string>>();
        for (const auto& r : j.at("rules")) {
            std::vector<Conjunct> ante;
            for (const auto& c : r.at("antecedent")) {
                const auto label = c.at("trend").get<std::string>();
                auto t = trend_from_string(label);
                if (!t) throw SchemaError("unknown trend '" + label + "'");
                ante.push_back({c.at("component").get<std::string>(), *t});
            }
            const auto plabel = r.at("phase").get<std::string>();
            auto p = phase_from_string(plabel);
            if (!p) throw SchemaError("unknown phase '" + plabel + "'");
            rs.rules.emplace_back(r.at("id").get<std::string>(), window_from_json(r.at("input_window")), std::move(ante),
                                  window_from_json(r.at("output_window")), *p);
        }
        return rs;
    });
}

inline Json to_json(const MismatchReport& m) {
    Json phases = Json::array();
    for (const auto& p : m.phases)
        phases.push_back({{"phase", to_string(p.phase)},
                          {"window", to_json(p.window)},
                          {"lag", p.lag},
                          {"magnitude_ratio", p.magnitude_ratio},
                          {"window_mse", p.window_mse}});
    return {{"l_out", m.l_out}, {"nmse", m.nmse}, {"phases", phases}};
}

inline MismatchReport mismatch_from_json(const Json& j) {
    return detail::schema_guard("mismatch report", [&] {
        MismatchReport m;
        m.l_out = j.at("l_out").get<double>();
        m.nmse = j.at("nmse").get<double>();
        for (const auto& p : j.at("phases")) {
            PhaseMismatch pm;
            const auto label = p.at("phase").get<std::string>();
            auto ph = phase_from_string(label);
            if (!ph) throw SchemaError("unknown phase '" + label + "'");
            pm.phase = *ph;
            pm.window = window_from_json(p.at("window"));
            pm.lag = p.at("lag").get<int>();
            pm.magnitude_ratio = p.at("magnitude_ratio").get<double>();
            pm.window_mse = p.at("window_mse").get<double>();
            m.phases.push_back(pm);
        }
        return m;
    });
}

inline Json to_json(const ConstraintNote& n) { return {{"text", n.text}, {"iteration", n.iteration}}; }

inline ConstraintNote constraint_from_json(const Json& j) {
    return detail::schema_guard("constraint note", [&] {
        return ConstraintNote(j.at("text").get<std::string>(), j.at("iteration").get<int>());
    });
}

inline Json to_json(const Justification& js) {
    Json trends = Json::array();
    for (const auto& c : js.trends) trends.push_back({{"component", c.component}, {"trend", to_string(c.trend)}});
    return {{"phase", to_string(js.phase)},        {"output_window", to_json(js.output_window)},
            {"rule_id", js.rule_id},               {"input_window", to_json(js.input_window)},
            {"trends", trends},                    {"text", js.text}};
}

inline Justification justification_from_json(const Json& j) {
    return detail::schema_guard("justification", [&] {
        Justification js;
        const auto label = j.at("phase").get<std::string>();
        auto ph = phase_from_string(label);
        if (!ph) throw SchemaError("unknown phase '" + label + "'");
        js.phase = *ph;
        js.output_window = window_from_json(j.at("output_window"));
        js.rule_id = j.at("rule_id").get<std::string>();
        js.input_window = window_from_json(j.at("input_window"));
        for (const auto& c : j.at("trends")) {
            const auto tl = c.at("trend").get<std::string>();
            auto t = trend_from_string(tl);
            if (!t) throw SchemaError("unknown trend '" + tl + "'");
            js.trends.push_back({c.at("component").get<std::string>(), *t});
        }
        js.text = j.at("text").get<std::string>();
        return js;
    });
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    out << text;
    if (!out) throw Error("failed writing " + path);
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_json_file(const std::string& path, const Json& j) { write_text_file(path, j.dump(2) + "\n"); }

inline Json read_json_file(const std::string& path) {
    const auto text = read_text_file(path);
    try {
        return Json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(path + ": " + e.what());
    }
}

}  // namespace rulexplain
