#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "rulexplain/error.hpp"
#include "rulexplain/series.hpp"

namespace rulexplain {

enum class TrendLabel { Low, Moderate, HighStable, SharpSpike, SlowRise, DipThenRise, LowModerate };
enum class PhaseLabel { InitialGrowth, PeakFormation, PostPeak, Decline, Resurgence };

inline constexpr std::array<TrendLabel, 7> kAllTrends = {TrendLabel::Low,        TrendLabel::Moderate,
                                                         TrendLabel::HighStable, TrendLabel::SharpSpike,
                                                         TrendLabel::SlowRise,   TrendLabel::DipThenRise,
                                                         TrendLabel::LowModerate};
inline constexpr std::array<PhaseLabel, 5> kAllPhases = {PhaseLabel::InitialGrowth, PhaseLabel::PeakFormation,
                                                         PhaseLabel::PostPeak, PhaseLabel::Decline,
                                                         PhaseLabel::Resurgence};

inline std::string_view to_string(TrendLabel t) {
    switch (t) {
        case TrendLabel::Low: return "Low";
        case TrendLabel::Moderate: return "Moderate";
        case TrendLabel::HighStable: return "HighStable";
        case TrendLabel::SharpSpike: return "SharpSpike";
        case TrendLabel::SlowRise: return "SlowRise";
        case TrendLabel::DipThenRise: return "DipThenRise";
        case TrendLabel::LowModerate: return "LowModerate";
    }
    return "?";
}

inline std::string_view to_string(PhaseLabel p) {
    switch (p) {
        case PhaseLabel::InitialGrowth: return "InitialGrowth";
        case PhaseLabel::PeakFormation: return "PeakFormation";
        case PhaseLabel::PostPeak: return "PostPeak";
        case PhaseLabel::Decline: return "Decline";
        case PhaseLabel::Resurgence: return "Resurgence";
    }
    return "?";
}

inline std::optional<TrendLabel> trend_from_string(std::string_view s) {
    for (auto t : kAllTrends)
        if (to_string(t) == s) return t;
    return std::nullopt;
}

inline std::optional<PhaseLabel> phase_from_string(std::string_view s) {
    for (auto p : kAllPhases)
        if (to_string(p) == s) return p;
    return std::nullopt;
}

/// Corruption involution: Low<->HighStable, SlowRise<->SharpSpike,
/// Moderate<->DipThenRise, LowModerate fixed.
inline TrendLabel invert(TrendLabel t) {
    switch (t) {
        case TrendLabel::Low: return TrendLabel::HighStable;
        case TrendLabel::HighStable: return TrendLabel::Low;
        case TrendLabel::SlowRise: return TrendLabel::SharpSpike;
        case TrendLabel::SharpSpike: return TrendLabel::SlowRise;
        case TrendLabel::Moderate: return TrendLabel::DipThenRise;
        case TrendLabel::DipThenRise: return TrendLabel::Moderate;
        case TrendLabel::LowModerate: return TrendLabel::LowModerate;
    }
    return t;
}

struct Conjunct {
    std::string component;
    TrendLabel trend;

    friend bool operator==(const Conjunct&, const Conjunct&) = default;
};

/// □[t1,t2](∧ trends) → ◇[t3,t4] phase.
struct Rule {
    std::string id;
    SeriesWindow input_window;
    std::vector<Conjunct> antecedent;
    SeriesWindow output_window;
    PhaseLabel phase = PhaseLabel::InitialGrowth;

    Rule() = default;
    Rule(std::string id_, SeriesWindow in, std::vector<Conjunct> ante, SeriesWindow out, PhaseLabel ph)
        : id(std::move(id_)), input_window(in), antecedent(std::move(ante)), output_window(out), phase(ph) {
        if (antecedent.empty()) throw InvalidSpec("rule " + id + " has an empty antecedent");
    }

    // δ = t3 - t2; negative when the effect window opens inside the cause window.
    int delay() const { return output_window.start - input_window.end; }

    const Conjunct* find(const std::string& component) const {
        for (const auto& c : antecedent)
            if (c.component == component) return &c;
        return nullptr;
    }

    friend bool operator==(const Rule&, const Rule&) = default;
};

struct Ruleset {
    std::vector<Rule> rules;
    std::vector<std::string> components;  // column order of the table dialect
    int horizon = 100;
    int interval = 7;

    friend bool operator==(const Ruleset&, const Ruleset&) = default;
};

enum class Dialect { MarkdownTable, Symbolic };
enum class PhasePolicy { Periodic, Strict };

struct ParseOptions {
    int horizon = 100;
    int interval = 7;
};

// ---------------------------------------------------------------------------
// Text helpers

namespace detail {

inline std::string trim(std::string_view s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return std::string(s.substr(a, b - a));
}

inline void replace_all(std::string& s, std::string_view from, std::string_view to) {
    if (from.empty()) return;
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
}

inline std::vector<std::string> split_lines(std::string_view text) {
    std::vector<std::string> lines;
    std::string cur;
    for (char c : text) {
        if (c == '\n') {
            if (!cur.empty() && cur.back() == '\r') cur.pop_back();
            lines.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) lines.push_back(std::move(cur));
    return lines;
}

/// Rewrites LaTeX / ASCII spellings of the rule operators into the canonical
/// Unicode forms and strips markup that LLM replies like to add.
inline std::string canonical_symbols(std::string s) {
    static const std::pair<const char*, const char*> kReplacements[] = {
        {"\\Box", "□"},   {"\\Diamond", "◇"},     {"\\diamond", "◇"}, {"\\land", "∧"}, {"\\wedge", "∧"},
        {"\\rightarrow", "→"}, {"\\to", "→"},     {"\\implies", "→"}, {"[]_", "□_"}, {"<>_", "◇_"},
        {"->", "→"},      {"&&", "∧"},            {"\\,", ""},        {"\\;", ""},     {"\\ ", " "},
    };
    for (const auto& [from, to] : kReplacements) replace_all(s, from, to);
    for (const char* cmd : {"\\text", "\\mathrm", "\\textrm", "\\mathit", "\\operatorname"}) replace_all(s, cmd, "");
    std::string out;
    out.reserve(s.size());
    for (char c : s)
        if (c != '$' && c != '{' && c != '}' && c != '*' && c != '`') out.push_back(c);
    replace_all(out, "&", "∧");
    return out;
}

inline std::vector<std::string> split_table_row(const std::string& line) {
    std::string s = trim(line);
    if (!s.empty() && s.front() == '|') s.erase(0, 1);
    if (!s.empty() && s.back() == '|') s.pop_back();
    std::vector<std::string> cells;
    std::string cur;
    for (char c : s) {
        if (c == '|') {
            cells.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    cells.push_back(trim(cur));
    return cells;
}

inline bool is_separator_row(const std::vector<std::string>& cells) {
    if (cells.empty()) return false;
    for (const auto& c : cells) {
        if (c.empty()) return false;
        for (char ch : c)
            if (ch != '-' && ch != ':' && ch != ' ') return false;
    }
    return true;
}

inline std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

/// Parses "[a, b]" (whitespace tolerant).
inline SeriesWindow parse_window(const std::string& cell, int row) {
    std::string s = canonical_symbols(cell);
    const auto open = s.find('[');
    const auto close = s.find(']', open == std::string::npos ? 0 : open);
    if (open == std::string::npos || close == std::string::npos)
        throw SyntaxError("malformed window '" + cell + "'", row);
    const std::string inner = s.substr(open + 1, close - open - 1);
    const auto comma = inner.find(',');
    if (comma == std::string::npos) throw SyntaxError("malformed window '" + cell + "'", row);
    int a = 0, b = 0;
    try {
        std::size_t used = 0;
        const std::string lhs = trim(inner.substr(0, comma)), rhs = trim(inner.substr(comma + 1));
        a = std::stoi(lhs, &used);
        if (used != lhs.size()) throw std::invalid_argument("a");
        b = std::stoi(rhs, &used);
        if (used != rhs.size()) throw std::invalid_argument("b");
    } catch (const std::exception&) {
        throw SyntaxError("malformed window '" + cell + "'", row);
    }
    if (a < 0 || a >= b) throw SyntaxError("window '" + cell + "' must satisfy 0 <= start < end", row);
    return SeriesWindow(a, b);
}

inline bool is_absent_cell(const std::string& cell) {
    return cell.empty() || cell == "-" || cell == "—" || cell == "–" || lower(cell) == "n/a" || lower(cell) == "none";
}

inline TrendLabel parse_trend(const std::string& cell, int row) {
    const std::string token = trim(canonical_symbols(cell));
    if (auto t = trend_from_string(token)) return *t;
    throw VocabularyError(token, row);
}

inline PhaseLabel parse_phase(const std::string& cell, int row) {
    const std::string token = trim(canonical_symbols(cell));
    if (auto p = phase_from_string(token)) return *p;
    throw VocabularyError(token, row);
}

/// "$X_{t,1}$ Trend" -> "X_t,1"
inline std::string component_from_header(const std::string& cell) {
    std::string s = trim(canonical_symbols(cell));
    const std::string l = lower(s);
    const auto pos = l.rfind("trend");
    if (pos != std::string::npos) s = s.substr(0, pos);
    return trim(s);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Formatting

/// `□_[t1,t2](Trend(X) ∧ ...) → ◇_[t3,t4] Phase(Y)`
inline std::string symbolic_formula(const Rule& r) {
    std::string out = "□_[" + std::to_string(r.input_window.start) + "," + std::to_string(r.input_window.end) + "](";
    for (std::size_t i = 0; i < r.antecedent.size(); ++i) {
        if (i) out += " ∧ ";
        out += std::string(to_string(r.antecedent[i].trend)) + "(" + r.antecedent[i].component + ")";
    }
    out += ") → ◇_[" + std::to_string(r.output_window.start) + "," + std::to_string(r.output_window.end) + "] " +
           std::string(to_string(r.phase)) + "(Y)";
    return out;
}

inline std::string format_ruleset(const Ruleset& rs, Dialect dialect = Dialect::MarkdownTable) {
    std::ostringstream os;
    auto window = [](const SeriesWindow& w) {
        return "[" + std::to_string(w.start) + ", " + std::to_string(w.end) + "]";
    };
    if (dialect == Dialect::Symbolic) {
        os << "# components:";
        for (const auto& c : rs.components) os << ' ' << c;
        os << '\n';
        for (const auto& r : rs.rules) os << r.id << ": " << symbolic_formula(r) << '\n';
        return os.str();
    }
    os << "| Rule ID | Input Trend Window |";
    for (const auto& c : rs.components) os << ' ' << c << " Trend |";
    os << " Output Phase Window | Y Phase | Symbolic Rule |\n|";
    for (std::size_t i = 0; i < rs.components.size() + 5; ++i) os << "---|";
    os << '\n';
    for (const auto& r : rs.rules) {
        os << "| " << r.id << " | " << window(r.input_window) << " |";
        for (const auto& c : rs.components) {
            const Conjunct* cj = r.find(c);
            os << ' ' << (cj ? std::string(to_string(cj->trend)) : std::string("-")) << " |";
        }
        os << ' ' << window(r.output_window) << " | " << to_string(r.phase) << " | " << symbolic_formula(r) << " |\n";
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

// Parses one symbolic formula (no id prefix).
inline Rule parse_formula(const std::string& raw, const std::string& id, int row) {
    std::string s = canonical_symbols(raw);
    const auto box = s.find("□");
    if (box == std::string::npos) throw SyntaxError("missing □ operator", row);
    const auto in_open = s.find('[', box);
    const auto in_close = s.find(']', in_open == std::string::npos ? box : in_open);
    if (in_open == std::string::npos || in_close == std::string::npos) throw SyntaxError("malformed input window", row);
    const SeriesWindow in_w = parse_window(s.substr(in_open, in_close - in_open + 1), row);

    const auto arrow = s.find("→", in_close);
    if (arrow == std::string::npos) throw SyntaxError("missing → operator", row);
    std::string ante = trim(s.substr(in_close + 1, arrow - in_close - 1));
    if (ante.size() >= 2 && ante.front() == '(' && ante.back() == ')') ante = trim(ante.substr(1, ante.size() - 2));

    std::vector<Conjunct> conjuncts;
    std::size_t pos = 0;
    while (pos <= ante.size()) {
        auto next = ante.find("∧", pos);
        const std::string term = trim(ante.substr(pos, next == std::string::npos ? std::string::npos : next - pos));
        const auto lp = term.find('(');
        const auto rp = term.rfind(')');
        if (lp == std::string::npos || rp == std::string::npos || rp < lp)
            throw SyntaxError("malformed conjunct '" + term + "'", row);
        const std::string label = trim(term.substr(0, lp));
        const std::string comp = trim(term.substr(lp + 1, rp - lp - 1));
        if (comp.empty()) throw SyntaxError("conjunct without component", row);
        conjuncts.push_back({comp, parse_trend(label, row)});
        if (next == std::string::npos) break;
        pos = next + std::string_view("∧").size();
    }

    const auto dia = s.find("◇", arrow);
    if (dia == std::string::npos) throw SyntaxError("missing ◇ operator", row);
    const auto out_open = s.find('[', dia);
    const auto out_close = s.find(']', out_open == std::string::npos ? dia : out_open);
    if (out_open == std::string::npos || out_close == std::string::npos) throw SyntaxError("malformed output window", row);
    const SeriesWindow out_w = parse_window(s.substr(out_open, out_close - out_open + 1), row);
    std::string phase = trim(s.substr(out_close + 1));
    if (const auto lp = phase.find('('); lp != std::string::npos) phase = trim(phase.substr(0, lp));
    return Rule(id, in_w, std::move(conjuncts), out_w, parse_phase(phase, row));
}

inline Ruleset parse_table(const std::string& text, const ParseOptions& opt) {
    const auto lines = split_lines(text);
    std::size_t i = 0;
    // Locate the first header row that looks like a rule table.
    for (; i < lines.size(); ++i) {
        const std::string t = trim(lines[i]);
        if (t.empty() || t.front() != '|') continue;
        const auto cells = split_table_row(t);
        bool has_rule = false, has_phase = false;
        for (const auto& c : cells) {
            const std::string l = lower(canonical_symbols(c));
            if (l.find("rule") != std::string::npos && l.find("symbolic") == std::string::npos) has_rule = true;
            if (l.find("phase") != std::string::npos && l.find("window") == std::string::npos) has_phase = true;
        }
        if (has_rule && has_phase) break;
    }
    if (i >= lines.size()) throw SyntaxError("no rule table found", 0);

    const auto header = split_table_row(lines[i]);
    int col_id = -1, col_in = -1, col_out = -1, col_phase = -1, col_sym = -1;
    std::vector<std::pair<int, std::string>> trend_cols;
    for (std::size_t c = 0; c < header.size(); ++c) {
        const std::string l = lower(canonical_symbols(header[c]));
        const int ci = static_cast<int>(c);
        if (l.find("symbolic") != std::string::npos) col_sym = ci;
        else if (l.find("input") != std::string::npos && l.find("window") != std::string::npos) col_in = ci;
        else if (l.find("output") != std::string::npos && l.find("window") != std::string::npos) col_out = ci;
        else if (l.find("rule") != std::string::npos) col_id = ci;
        else if (l.find("phase") != std::string::npos) col_phase = ci;
        else if (l.find("trend") != std::string::npos) trend_cols.emplace_back(ci, component_from_header(header[c]));
    }
    if (col_id < 0 || col_in < 0 || col_out < 0 || col_phase < 0)
        throw SyntaxError("rule table header lacks required columns", 0);
    if (trend_cols.empty() && col_sym < 0) throw SyntaxError("rule table has no trend columns", 0);

    Ruleset rs;
    rs.horizon = opt.horizon;
    rs.interval = opt.interval;
    for (const auto& [c, name] : trend_cols) rs.components.push_back(name);

    int row = 0;
    for (++i; i < lines.size(); ++i) {
        const std::string t = trim(lines[i]);
        if (t.empty() || t.front() != '|') break;
        auto cells = split_table_row(t);
        if (is_separator_row(cells)) continue;
        ++row;
        if (cells.size() < header.size()) throw SyntaxError("row has too few cells", row);
        const std::string id = trim(canonical_symbols(cells[static_cast<std::size_t>(col_id)]));
        if (id.empty()) throw SyntaxError("empty rule id", row);
        if (trend_cols.empty()) {
            rs.rules.push_back(parse_formula(cells[static_cast<std::size_t>(col_sym)], id, row));
            continue;
        }
        const SeriesWindow in_w = parse_window(cells[static_cast<std::size_t>(col_in)], row);
        const SeriesWindow out_w = parse_window(cells[static_cast<std::size_t>(col_out)], row);
        std::vector<Conjunct> ante;
        for (const auto& [c, name] : trend_cols) {
            const std::string& cell = cells[static_cast<std::size_t>(c)];
            if (is_absent_cell(cell)) continue;
            ante.push_back({name, parse_trend(cell, row)});
        }
        if (ante.empty()) throw SyntaxError("rule " + id + " has no antecedent trends", row);
        rs.rules.emplace_back(id, in_w, std::move(ante), out_w, parse_phase(cells[static_cast<std::size_t>(col_phase)], row));
    }
    if (rs.rules.empty()) throw SyntaxError("rule table has no data rows", 0);
    if (rs.components.empty()) {
        for (const auto& r : rs.rules)
            for (const auto& cj : r.antecedent)
                if (std::find(rs.components.begin(), rs.components.end(), cj.component) == rs.components.end())
                    rs.components.push_back(cj.component);
    }
    return rs;
}

inline Ruleset parse_symbolic(const std::string& text, const ParseOptions& opt) {
    Ruleset rs;
    rs.horizon = opt.horizon;
    rs.interval = opt.interval;
    bool declared = false;
    int row = 0;
    for (const auto& raw : split_lines(text)) {
        std::string line = trim(raw);
        if (line.empty()) continue;
        if (line.rfind("# components:", 0) == 0) {
            std::stringstream ss(line.substr(13));
            std::string name;
            while (ss >> name) rs.components.push_back(name);
            declared = true;
            continue;
        }
        if (line.front() == '#') continue;
        if (canonical_symbols(line).find("□") == std::string::npos) continue;
        ++row;
        std::string id = "R" + std::to_string(row);
        const auto colon = line.find(':');
        if (colon != std::string::npos && canonical_symbols(line.substr(0, colon)).find("□") == std::string::npos) {
            id = trim(canonical_symbols(line.substr(0, colon)));
            line = line.substr(colon + 1);
        }
        rs.rules.push_back(parse_formula(line, id, row));
    }
    if (rs.rules.empty()) throw SyntaxError("no symbolic rules found", 0);
    if (!declared) {
        for (const auto& r : rs.rules)
            for (const auto& cj : r.antecedent)
                if (std::find(rs.components.begin(), rs.components.end(), cj.component) == rs.components.end())
                    rs.components.push_back(cj.component);
    }
    return rs;
}

}  // namespace detail

inline Ruleset parse_ruleset(const std::string& text, Dialect dialect = Dialect::MarkdownTable,
                             const ParseOptions& opt = {}) {
    if (detail::trim(text).empty()) throw PreconditionError("empty ruleset text");
    Ruleset rs = dialect == Dialect::MarkdownTable ? detail::parse_table(text, opt) : detail::parse_symbolic(text, opt);
    std::set<std::string> ids;
    for (std::size_t i = 0; i < rs.rules.size(); ++i)
        if (!ids.insert(rs.rules[i].id).second)
            throw SyntaxError("duplicate rule id " + rs.rules[i].id, static_cast<int>(i) + 1);
    return rs;
}

// ---------------------------------------------------------------------------
// Validation

enum class ViolationKind {
    CoverageGap,
    CoverageOverlap,
    Misaligned,
    Overshoot,
    EffectBeforeCause,
    DuplicatePhase,
    UnknownComponent,
    OutputOutOfRange,
};

inline std::string_view to_string(ViolationKind k) {
    switch (k) {
        case ViolationKind::CoverageGap: return "coverage-gap";
        case ViolationKind::CoverageOverlap: return "coverage-overlap";
        case ViolationKind::Misaligned: return "misaligned";
        case ViolationKind::Overshoot: return "overshoot";
        case ViolationKind::EffectBeforeCause: return "effect-before-cause";
        case ViolationKind::DuplicatePhase: return "duplicate-phase";
        case ViolationKind::UnknownComponent: return "unknown-component";
        case ViolationKind::OutputOutOfRange: return "output-out-of-range";
    }
    return "?";
}

struct Violation {
    ViolationKind kind;
    std::vector<std::string> rule_ids;
    std::string message;
};

/// Structural checks. Violations are data; an empty list means valid.
/// `spec` may be null to skip component checks.
inline std::vector<Violation> validate_ruleset(const Ruleset& rs, const InputSpec* spec,
                                               PhasePolicy policy = PhasePolicy::Periodic) {
    std::vector<Violation> out;
    const int T = rs.horizon, d = rs.interval;
    if (rs.rules.empty()) {
        out.push_back({ViolationKind::CoverageGap, {}, "ruleset is empty; [0," + std::to_string(T) + "] uncovered"});
        return out;
    }

    // (a) input windows concatenate 0 -> T in order, (b) alignment.
    int expect = 0;
    for (std::size_t i = 0; i < rs.rules.size(); ++i) {
        const Rule& r = rs.rules[i];
        const auto& w = r.input_window;
        if (w.start > expect) {
            const std::string prev = i ? rs.rules[i - 1].input_window.str() : std::string("[0,0]");
            out.push_back({ViolationKind::CoverageGap,
                           {i ? rs.rules[i - 1].id : std::string(), r.id},
                           "coverage gap between " + prev + " and " + w.str()});
        } else if (w.start < expect) {
            out.push_back({ViolationKind::CoverageOverlap,
                           {rs.rules[i - 1].id, r.id},
                           "input window " + w.str() + " overlaps " + rs.rules[i - 1].input_window.str()});
        }
        const bool last = i + 1 == rs.rules.size();
        if (w.start % d != 0)
            out.push_back({ViolationKind::Misaligned, {r.id}, r.id + " input window start " + std::to_string(w.start) +
                                                                   " is not a multiple of " + std::to_string(d)});
        if (!last && w.end % d != 0)
            out.push_back({ViolationKind::Misaligned, {r.id}, r.id + " input window end " + std::to_string(w.end) +
                                                                 " is not a multiple of " + std::to_string(d)});
        if (last) {
            if (w.end < T) {
                out.push_back({ViolationKind::CoverageGap, {r.id},
                               "coverage gap between " + w.str() + " and horizon " + std::to_string(T)});
            } else if (w.end > T) {
                // Overshoot is tolerated (and clipped) when shorter than one interval.
                if (w.end % d != 0)
                    out.push_back({ViolationKind::Misaligned, {r.id}, r.id + " final endpoint " + std::to_string(w.end) +
                                                                         " is neither T nor a multiple of " +
                                                                         std::to_string(d)});
                else if (w.end - T >= d)
                    out.push_back({ViolationKind::Overshoot, {r.id},
                                   r.id + " final window " + w.str() + " overshoots T by a full interval"});
            }
        } else if (w.end > T) {
            out.push_back({ViolationKind::Overshoot, {r.id}, r.id + " window " + w.str() + " ends past T"});
        }
        expect = w.end;

        // (c) the effect window never opens before the cause window.
        if (r.output_window.start < w.start)
            out.push_back({ViolationKind::EffectBeforeCause, {r.id},
                           r.id + " output window " + r.output_window.str() + " starts before input window " + w.str()});
        if (r.output_window.end > T + d - 1 && r.output_window.end > T)
            out.push_back({ViolationKind::OutputOutOfRange, {r.id},
                           r.id + " output window " + r.output_window.str() + " lies past the horizon"});

        if (spec) {
            for (const auto& cj : r.antecedent)
                if (spec->index_of(cj.component) < 0)
                    out.push_back({ViolationKind::UnknownComponent, {r.id},
                                   r.id + " references unknown component '" + cj.component + "'"});
        }
    }

    // (d) phase uniqueness under the strict policy.
    if (policy == PhasePolicy::Strict) {
        std::map<PhaseLabel, std::vector<std::string>> by_phase;
        for (const auto& r : rs.rules) by_phase[r.phase].push_back(r.id);
        for (const auto& [phase, ids] : by_phase) {
            if (ids.size() < 2) continue;
            std::string joined;
            for (std::size_t k = 0; k < ids.size(); ++k) joined += (k ? "/" : "") + ids[k];
            out.push_back({ViolationKind::DuplicatePhase, ids,
                           "duplicate phase " + std::string(to_string(phase)) + " " + joined});
        }
    }
    return out;
}

inline std::vector<Violation> validate_ruleset(const Ruleset& rs, const InputSpec& spec,
                                               PhasePolicy policy = PhasePolicy::Periodic) {
    return validate_ruleset(rs, &spec, policy);
}

// ---------------------------------------------------------------------------
// Corruption

/// Inverts every antecedent trend of ceil(fraction * n) rules chosen by `seed`.
inline Ruleset corrupt_ruleset(const Ruleset& rs, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw PreconditionError("corruption fraction must lie in (0, 1]");
    const std::size_t n = rs.rules.size();
    const auto m = std::min(n, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-12)));
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    // Fisher-Yates with explicit draws so the selection does not depend on std::shuffle's implementation.
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(idx[i - 1], idx[j]);
    }
    Ruleset out = rs;
    for (std::size_t k = 0; k < m; ++k)
        for (auto& cj : out.rules[idx[k]].antecedent) cj.trend = invert(cj.trend);
    return out;
}

}  // namespace rulexplain
