#include "playtest/persona.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace playtest {

double UtilityTable::reward(const EventSet& events) const {
    double r = step_weight;
    for (auto e : events.events())
        if (e != GameEvent::Step) r += weight(e);
    return r;
}

const char* to_string(CriterionKind k) {
    switch (k) {
        case CriterionKind::MonstersKilledPct: return "MonstersKilledPct";
        case CriterionKind::TreasuresCollectedPct: return "TreasuresCollectedPct";
        case CriterionKind::RemainingHealthPct: return "RemainingHealthPct";
    }
    return "?";
}

CriterionKind criterion_kind_from_string(std::string_view s) {
    if (s == "MonstersKilledPct") return CriterionKind::MonstersKilledPct;
    if (s == "TreasuresCollectedPct") return CriterionKind::TreasuresCollectedPct;
    if (s == "RemainingHealthPct") return CriterionKind::RemainingHealthPct;
    throw ValidationError("unknown criterion kind '" + std::string(s) + "'");
}

InteractionLedger InteractionLedger::from_state(const LevelSpec& level, const GameState& state) {
    InteractionLedger l;
    l.monsters_total = static_cast<int>(level.monsters.size());
    l.monsters_killed = l.monsters_total - state.alive_monster_count();
    l.treasures_total = static_cast<int>(level.treasures.size());
    l.treasures_collected = l.treasures_total - state.remaining_treasure_count();
    l.hp_max = level.avatar_hp;
    l.hp_now = std::clamp(state.avatar_hp, 0, level.avatar_hp);
    return l;
}

Criterion::Evaluation Criterion::evaluate(const InteractionLedger& ledger) const {
    int num = 0, den = 0;
    switch (kind) {
        case CriterionKind::MonstersKilledPct: num = ledger.monsters_killed, den = ledger.monsters_total; break;
        case CriterionKind::TreasuresCollectedPct: num = ledger.treasures_collected, den = ledger.treasures_total; break;
        case CriterionKind::RemainingHealthPct: num = ledger.hp_now, den = ledger.hp_max; break;
    }
    Evaluation ev;
    if (den <= 0) {
        ev.holds = true;
        ev.fulfillment = 1.0;
        ev.vacuous = true;
        return ev;
    }
    const double pct = 100.0 * num / den;
    if (direction == CriterionDirection::AtLeast) {
        // integer form avoids rounding at the boundary: num/den >= thr/100
        ev.holds = 100.0 * num >= threshold * den;
        ev.fulfillment = threshold <= 0.0 ? 1.0 : std::min(1.0, pct / threshold);
    } else {
        ev.holds = 100.0 * num <= threshold * den;
        ev.fulfillment = threshold >= 100.0 ? 1.0 : std::clamp((100.0 - pct) / (100.0 - threshold), 0.0, 1.0);
    }
    if (ev.holds) ev.fulfillment = 1.0;
    return ev;
}

DevelopingPersona::DevelopingPersona(std::string name, std::vector<Goal> goals, TransitionMode mode,
                                     double activation_pct)
    : name_(std::move(name)), goals_(std::move(goals)), mode_(mode), activation_pct_(activation_pct) {
    if (goals_.empty()) throw ValidationError("persona '" + name_ + "' has no goals");
    if (activation_pct_ < 0.0 || activation_pct_ > 100.0) throw ValidationError("activation_pct outside [0, 100]");
    for (const auto& g : goals_) {
        for (const auto& c : g.criteria)
            if (c.threshold < 0.0 || c.threshold > 100.0)
                throw ValidationError("criterion threshold outside [0, 100] in goal '" + g.name + "'");
        for (const auto& [e, w] : g.utility.weights)
            if (!std::isfinite(w)) throw ValidationError("non-finite utility weight in goal '" + g.name + "'");
        if (!std::isfinite(g.utility.step_weight) || g.utility.step_weight > 0.0)
            throw ValidationError("step_weight must be finite and <= 0 in goal '" + g.name + "'");
    }
}

double DevelopingPersona::reward(const EventSet& events) const {
    double r = goals_[static_cast<std::size_t>(cursor_)].utility.reward(events);
    if (coactive_) r += goals_[static_cast<std::size_t>(cursor_ + 1)].utility.reward(events);
    return r;
}

AdvanceResult DevelopingPersona::advance(const InteractionLedger& ledger) {
    AdvanceResult result;
    if (completed_) {
        result.kind = AdvanceResult::Kind::Completed;
        result.cursor = cursor_;
        return result;
    }
    const int n = static_cast<int>(goals_.size());
    bool advanced = false;
    bool coactivated = false;
    for (;;) {
        const Goal& goal = goals_[static_cast<std::size_t>(cursor_)];
        if (goal.criteria.empty()) break;
        bool all = true;
        double fulfillment = 0.0;
        for (const auto& c : goal.criteria) {
            auto ev = c.evaluate(ledger);
            if (ev.vacuous)
                result.warnings.push_back("criterion " + std::string(to_string(c.kind)) + " of goal '" + goal.name +
                                          "' has a zero denominator; treated as fulfilled");
            all = all && ev.holds;
            fulfillment += ev.fulfillment;
        }
        fulfillment /= static_cast<double>(goal.criteria.size());
        if (all) {
            coactive_ = false;
            if (cursor_ + 1 >= n) {
                completed_ = true;
                result.kind = AdvanceResult::Kind::Completed;
                result.cursor = cursor_;
                return result;
            }
            ++cursor_;
            advanced = true;
            continue;
        }
        if (mode_ == TransitionMode::Fuzzy && !coactive_ && cursor_ + 1 < n &&
            fulfillment * 100.0 >= activation_pct_) {
            coactive_ = true;
            coactivated = true;
        }
        break;
    }
    result.cursor = cursor_;
    if (advanced) result.kind = AdvanceResult::Kind::Advanced;
    else if (coactivated) result.kind = AdvanceResult::Kind::CoActivated;
    return result;
}

void DevelopingPersona::reset() {
    cursor_ = 0;
    coactive_ = false;
    completed_ = false;
}

double persona_reward(const DevelopingPersona& persona, const EventSet& events) { return persona.reward(events); }

namespace goals {

Goal killer() {
    return {"Killer",
            {{{GameEvent::MonsterKilled, 1.0}, {GameEvent::Death, -1.0}}, 0.0},
            {{CriterionKind::MonstersKilledPct, 50.0, CriterionDirection::AtLeast}}};
}

Goal collector() {
    return {"Collector",
            {{{GameEvent::TreasureCollected, 1.0}, {GameEvent::Death, -1.0}}, 0.0},
            {{CriterionKind::TreasuresCollectedPct, 50.0, CriterionDirection::AtLeast}}};
}

Goal exit() { return {"Exit", {{{GameEvent::ExitDoor, 1.0}, {GameEvent::Death, -1.0}}, 0.0}, {}}; }

Goal completionist() {
    return {"Completionist",
            {{{GameEvent::MonsterKilled, 1.0}, {GameEvent::TreasureCollected, 1.0}, {GameEvent::Death, -1.0}}, 0.0},
            {{CriterionKind::MonstersKilledPct, 100.0, CriterionDirection::AtLeast},
             {CriterionKind::TreasuresCollectedPct, 100.0, CriterionDirection::AtLeast}}};
}

}  // namespace goals

namespace {

std::string slug(std::string_view name) {
    std::string out;
    for (char ch : name) {
        if (std::isalnum(static_cast<unsigned char>(ch))) out += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        else if ((ch == ' ' || ch == '-' || ch == '_') && !out.empty() && out.back() != '-') out += '-';
    }
    while (!out.empty() && out.back() == '-') out.pop_back();
    return out;
}

DevelopingPersona procedural(std::string name, UtilityTable utility) {
    return DevelopingPersona(std::move(name), {Goal{"Main", std::move(utility), {}}});
}

}  // namespace

std::vector<DevelopingPersona> builtin_personas() {
    using GE = GameEvent;
    std::vector<DevelopingPersona> out;
    out.push_back(procedural("Exit", {{{GE::ExitDoor, 1.0}, {GE::Death, -1.0}}, 0.0}));
    out.push_back(procedural("Monster Killer", {{{GE::ExitDoor, 0.5}, {GE::MonsterKilled, 1.0}, {GE::Death, -1.0}}, 0.0}));
    out.push_back(
        procedural("Treasure Collector", {{{GE::ExitDoor, 0.5}, {GE::TreasureCollected, 1.0}, {GE::Death, -1.0}}, 0.0}));
    out.push_back(
        procedural("Completionist", {{{GE::MonsterKilled, 1.0}, {GE::TreasureCollected, 1.0}, {GE::Death, -1.0}}, 0.0}));

    out.emplace_back("Dev. Killer", std::vector<Goal>{goals::killer(), goals::exit()});
    out.emplace_back("Dev. Collector", std::vector<Goal>{goals::collector(), goals::exit()});
    out.emplace_back("Dev. Raider", std::vector<Goal>{goals::killer(), goals::collector(), goals::exit()});
    out.emplace_back("Dev. Completionist", std::vector<Goal>{goals::completionist(), goals::exit()});

    Goal casual = goals::completionist();
    casual.name = "Casual Completionist";
    casual.criteria = {{CriterionKind::RemainingHealthPct, 50.0, CriterionDirection::AtMost}};
    out.emplace_back("Dev. Casual Completionist", std::vector<Goal>{casual, goals::exit()});
    return out;
}

std::vector<std::string> builtin_persona_names() {
    std::vector<std::string> names;
    for (const auto& p : builtin_personas()) names.push_back(p.name());
    return names;
}

DevelopingPersona builtin_persona(std::string_view name) {
    const auto key = slug(name);
    for (auto& p : builtin_personas())
        if (slug(p.name()) == key) return p;
    throw ValidationError("unknown persona '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Persona definition files

namespace {

struct Token {
    std::string text;
    int column;
    bool quoted;
};

std::vector<Token> tokenize(std::string_view line, int line_no) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < line.size()) {
        char ch = line[i];
        if (ch == ' ' || ch == '\t' || ch == '\r') {
            ++i;
            continue;
        }
        if (ch == '#') break;
        if (ch == '"') {
            const auto end = line.find('"', i + 1);
            if (end == std::string_view::npos) throw ParseError("unterminated string", line_no, static_cast<int>(i) + 1);
            out.push_back({std::string(line.substr(i + 1, end - i - 1)), static_cast<int>(i) + 1, true});
            i = end + 1;
            continue;
        }
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r' && line[j] != '#') ++j;
        out.push_back({std::string(line.substr(i, j - i)), static_cast<int>(i) + 1, false});
        i = j;
    }
    return out;
}

double number_token(const Token& t, int line_no) {
    try {
        std::size_t used = 0;
        double v = std::stod(t.text, &used);
        if (used != t.text.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ParseError("expected a number, got '" + t.text + "'", line_no, t.column);
    }
}

}  // namespace

DevelopingPersona parse_persona(std::string_view text) {
    std::string name;
    TransitionMode mode = TransitionMode::Sudden;
    double activation = 50.0;
    std::vector<Goal> goals;
    bool in_goal = false;
    int line_no = 0;

    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() : nl + 1;
        ++line_no;
        auto tokens = tokenize(line, line_no);
        if (tokens.empty()) continue;
        const auto& head = tokens.front();
        auto need = [&](std::size_t n) {
            if (tokens.size() != n)
                throw ParseError("'" + head.text + "' expects " + std::to_string(n - 1) + " argument(s)", line_no,
                                 head.column);
        };

        if (head.text == "}") {
            if (!in_goal) throw ParseError("unmatched '}'", line_no, head.column);
            in_goal = false;
        } else if (head.text == "persona") {
            need(2);
            name = tokens[1].text;
        } else if (head.text == "mode") {
            if (tokens.size() < 2) throw ParseError("mode needs a value", line_no, head.column);
            if (tokens[1].text == "sudden") {
                need(2);
                mode = TransitionMode::Sudden;
            } else if (tokens[1].text == "fuzzy") {
                mode = TransitionMode::Fuzzy;
                if (tokens.size() == 3) activation = number_token(tokens[2], line_no);
                else need(2);
            } else {
                throw ParseError("unknown mode '" + tokens[1].text + "'", line_no, tokens[1].column);
            }
        } else if (head.text == "goal") {
            if (in_goal) throw ParseError("nested goal block", line_no, head.column);
            if (tokens.size() != 3 || tokens[2].text != "{")
                throw ParseError("expected: goal \"name\" {", line_no, head.column);
            goals.push_back(Goal{tokens[1].text, {}, {}});
            in_goal = true;
        } else if (!in_goal) {
            throw ParseError("'" + head.text + "' outside a goal block", line_no, head.column);
        } else if (head.text == "weight") {
            need(3);
            GameEvent e;
            try {
                e = event_from_string(tokens[1].text);
            } catch (const ValidationError&) {
                throw ParseError("unknown event '" + tokens[1].text + "'", line_no, tokens[1].column);
            }
            goals.back().utility.weights[e] = number_token(tokens[2], line_no);
        } else if (head.text == "step_weight") {
            need(2);
            goals.back().utility.step_weight = number_token(tokens[1], line_no);
        } else if (head.text == "criterion") {
            need(4);
            Criterion c;
            try {
                c.kind = criterion_kind_from_string(tokens[1].text);
            } catch (const ValidationError&) {
                throw ParseError("unknown criterion '" + tokens[1].text + "'", line_no, tokens[1].column);
            }
            if (tokens[2].text == ">=") c.direction = CriterionDirection::AtLeast;
            else if (tokens[2].text == "<=") c.direction = CriterionDirection::AtMost;
            else throw ParseError("expected >= or <=", line_no, tokens[2].column);
            c.threshold = number_token(tokens[3], line_no);
            goals.back().criteria.push_back(c);
        } else {
            throw ParseError("unknown directive '" + head.text + "'", line_no, head.column);
        }
    }
    if (in_goal) throw ParseError("unterminated goal block", line_no, 1);
    if (name.empty()) throw ValidationError("persona file has no 'persona' line");
    return DevelopingPersona(name, std::move(goals), mode, activation);
}

std::string persona_to_text(const DevelopingPersona& persona) {
    std::ostringstream out;
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    out << "persona \"" << persona.name() << "\"\n";
    if (persona.mode() == TransitionMode::Sudden) out << "mode sudden\n";
    else out << "mode fuzzy " << persona.activation_pct() << "\n";
    for (const auto& g : persona.goals()) {
        out << "goal \"" << g.name << "\" {\n";
        for (const auto& [e, w] : g.utility.weights) out << "  weight " << to_string(e) << ' ' << w << '\n';
        out << "  step_weight " << g.utility.step_weight << '\n';
        for (const auto& c : g.criteria)
            out << "  criterion " << to_string(c.kind) << (c.direction == CriterionDirection::AtLeast ? " >= " : " <= ")
                << c.threshold << '\n';
        out << "}\n";
    }
    return out.str();
}

DevelopingPersona load_persona_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open persona file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_persona(ss.str());
}

DevelopingPersona resolve_persona(const std::string& ref) {
    for (const auto& name : builtin_persona_names())
        if (slug(name) == slug(ref)) return builtin_persona(name);
    std::ifstream probe(ref);
    if (probe) return load_persona_file(ref);
    throw ValidationError("unknown persona '" + ref + "' (not a catalogue name or readable file)");
}

}  // namespace playtest
