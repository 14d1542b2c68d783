#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "playtest/dungeon.hpp"

namespace playtest {

// Per-event rewards that replace the environment's native reward.
struct UtilityTable {
    std::map<GameEvent, double> weights;  // absent events are worth 0
    double step_weight = 0.0;             // paid once per step, <= 0

    double weight(GameEvent e) const {
        auto it = weights.find(e);
        return it == weights.end() ? 0.0 : it->second;
    }
    // step_weight plus the weight of every event in the set (Step itself carries no extra weight).
    double reward(const EventSet& events) const;

    bool operator==(const UtilityTable&) const = default;
};

enum class CriterionKind { MonstersKilledPct, TreasuresCollectedPct, RemainingHealthPct };
enum class CriterionDirection { AtLeast, AtMost };

const char* to_string(CriterionKind k);
CriterionKind criterion_kind_from_string(std::string_view s);

struct InteractionLedger {
    int monsters_killed = 0;
    int monsters_total = 0;
    int treasures_collected = 0;
    int treasures_total = 0;
    int hp_now = 1;
    int hp_max = 1;

    static InteractionLedger from_state(const LevelSpec& level, const GameState& state);
};

struct Criterion {
    CriterionKind kind = CriterionKind::MonstersKilledPct;
    double threshold = 0.0;  // percent
    CriterionDirection direction = CriterionDirection::AtLeast;

    struct Evaluation {
        bool holds = false;
        double fulfillment = 0.0;  // in [0, 1], used by fuzzy transitions
        bool vacuous = false;      // zero denominator
    };
    Evaluation evaluate(const InteractionLedger& ledger) const;

    bool operator==(const Criterion&) const = default;
};

struct Goal {
    std::string name;
    UtilityTable utility;
    std::vector<Criterion> criteria;  // conjunction

    bool operator==(const Goal&) const = default;
};

enum class TransitionMode { Sudden, Fuzzy };

struct AdvanceResult {
    enum class Kind { Unchanged, CoActivated, Advanced, Completed };
    Kind kind = Kind::Unchanged;
    int cursor = 0;
    std::vector<std::string> warnings;
};

// Ordered goal sequence with an active-goal cursor. A single-goal persona is a
// procedural persona.
class DevelopingPersona {
public:
    DevelopingPersona() = default;
    DevelopingPersona(std::string name, std::vector<Goal> goals, TransitionMode mode = TransitionMode::Sudden,
                      double activation_pct = 50.0);

    const std::string& name() const { return name_; }
    const std::vector<Goal>& goals() const { return goals_; }
    TransitionMode mode() const { return mode_; }
    double activation_pct() const { return activation_pct_; }
    int cursor() const { return cursor_; }
    bool coactive() const { return coactive_; }
    bool completed() const { return completed_; }

    // Reward of the active goal (both goals while a fuzzy transition is in progress).
    double reward(const EventSet& events) const;
    // Evaluate the active goal's criteria and move the cursor forward.
    AdvanceResult advance(const InteractionLedger& ledger);
    void reset();

    // Number of goals contributing reward right now (1 or 2).
    int active_goal_count() const { return coactive_ ? 2 : 1; }

    bool operator==(const DevelopingPersona&) const = default;

private:
    std::string name_;
    std::vector<Goal> goals_;
    TransitionMode mode_ = TransitionMode::Sudden;
    double activation_pct_ = 50.0;
    int cursor_ = 0;
    bool coactive_ = false;
    bool completed_ = false;
};

double persona_reward(const DevelopingPersona& persona, const EventSet& events);

// Named catalogue: four procedural personas and five developing ones.
std::vector<std::string> builtin_persona_names();
DevelopingPersona builtin_persona(std::string_view name);
std::vector<DevelopingPersona> builtin_personas();

// Goal building blocks shared by the catalogue.
namespace goals {
Goal killer();
Goal collector();
Goal exit();
Goal completionist();
}  // namespace goals

// Persona definition files:
//
//   persona "Dev. Killer"
//   mode sudden                # or: mode fuzzy 50
//   goal "Killer" {
//     weight MonsterKilled 1
//     weight Death -1
//     step_weight 0
//     criterion MonstersKilledPct >= 50
//   }
DevelopingPersona parse_persona(std::string_view text);
std::string persona_to_text(const DevelopingPersona& persona);
DevelopingPersona load_persona_file(const std::string& path);

// Accepts a catalogue name (or its slug) or a path to a persona file.
DevelopingPersona resolve_persona(const std::string& ref);

}  // namespace playtest
