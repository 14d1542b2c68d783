#include "doctest.h"
#include "oracles.hpp"
#include "playtest/persona.hpp"

using namespace playtest;

namespace {

InteractionLedger ledger(int killed, int monsters, int collected, int treasures, int hp = 1, int hp_max = 1) {
    InteractionLedger l;
    l.monsters_killed = killed;
    l.monsters_total = monsters;
    l.treasures_collected = collected;
    l.treasures_total = treasures;
    l.hp_now = hp;
    l.hp_max = hp_max;
    return l;
}

}  // namespace

TEST_CASE("utility weights from the persona tables") {
    CHECK(builtin_persona("Exit").reward({GameEvent::ExitDoor}) == 1.0);
    CHECK(builtin_persona("Monster Killer").reward({GameEvent::ExitDoor}) == 0.5);
    CHECK(builtin_persona("Monster Killer").reward({GameEvent::MonsterKilled}) == 1.0);
    CHECK(builtin_persona("Treasure Collector").reward({GameEvent::TreasureCollected, GameEvent::Step}) == 1.0);
    for (const auto& p : builtin_personas()) {
        CAPTURE(p.name());
        CHECK(p.reward({}) == p.goals()[0].utility.step_weight);
        CHECK(p.reward({GameEvent::Death}) == -1.0);
    }
}

TEST_CASE("completionist is a single goal with the three weights") {
    const auto p = builtin_persona("Completionist");
    REQUIRE(p.goals().size() == 1);
    const auto& w = p.goals()[0].utility.weights;
    CHECK(w.size() == 3);
    CHECK(w.at(GameEvent::MonsterKilled) == 1.0);
    CHECK(w.at(GameEvent::TreasureCollected) == 1.0);
    CHECK(w.at(GameEvent::Death) == -1.0);
}

TEST_CASE("developing persona goal sequences") {
    auto names = [](const DevelopingPersona& p) {
        std::vector<std::string> out;
        for (const auto& g : p.goals()) out.push_back(g.name);
        return out;
    };
    CHECK(names(builtin_persona("Dev. Raider")) == std::vector<std::string>{"Killer", "Collector", "Exit"});
    CHECK(names(builtin_persona("Dev. Killer")) == std::vector<std::string>{"Killer", "Exit"});
    const auto casual = builtin_persona("Dev. Casual Completionist");
    REQUIRE(casual.goals()[0].criteria.size() == 1);
    CHECK(casual.goals()[0].criteria[0].kind == CriterionKind::RemainingHealthPct);
    CHECK(casual.goals()[0].criteria[0].direction == CriterionDirection::AtMost);
    CHECK(casual.goals()[0].criteria[0].threshold == 50.0);
    CHECK(builtin_persona_names().size() == 9);
    CHECK(resolve_persona("dev-raider") == builtin_persona("Dev. Raider"));
}

TEST_CASE("sudden transitions") {
    SUBCASE("killer advances at half the monsters") {
        auto p = builtin_persona("Dev. Killer");
        CHECK(p.advance(ledger(2, 6, 0, 8)).kind == AdvanceResult::Kind::Unchanged);
        const auto r = p.advance(ledger(3, 6, 0, 8));
        CHECK(r.kind == AdvanceResult::Kind::Advanced);
        CHECK(p.cursor() == 1);
        CHECK(p.reward({GameEvent::MonsterKilled}) == 0.0);
        CHECK(p.reward({GameEvent::ExitDoor}) == 1.0);
    }
    SUBCASE("exit persona never moves") {
        auto p = builtin_persona("Exit");
        CHECK(p.advance(ledger(6, 6, 8, 8)).kind == AdvanceResult::Kind::Unchanged);
        CHECK(p.cursor() == 0);
    }
    SUBCASE("completionist needs everything") {
        auto p = builtin_persona("Dev. Completionist");
        CHECK(p.advance(ledger(6, 6, 7, 8)).kind == AdvanceResult::Kind::Unchanged);
        CHECK(p.advance(ledger(6, 6, 8, 8)).kind == AdvanceResult::Kind::Advanced);
        CHECK(p.cursor() == 1);
    }
    SUBCASE("raider can skip a goal in one call") {
        auto p = builtin_persona("Dev. Raider");
        CHECK(p.advance(ledger(3, 6, 4, 8)).kind == AdvanceResult::Kind::Advanced);
        CHECK(p.cursor() == 2);
    }
    SUBCASE("zero denominators are vacuous and warn") {
        auto p = builtin_persona("Dev. Killer");
        const auto r = p.advance(ledger(0, 0, 0, 0));
        CHECK(r.kind == AdvanceResult::Kind::Advanced);
        CHECK(r.warnings.size() == 1);
    }
    SUBCASE("completed past the last goal") {
        DevelopingPersona p("two", {goals::killer(), goals::collector()});
        CHECK(p.advance(ledger(3, 6, 4, 8)).kind == AdvanceResult::Kind::Completed);
        CHECK(p.completed());
        CHECK(p.advance(ledger(3, 6, 4, 8)).kind == AdvanceResult::Kind::Completed);
    }
}

TEST_CASE("fuzzy transitions co-activate then hand over") {
    auto base = builtin_persona("Dev. Killer");
    DevelopingPersona p(base.name(), base.goals(), TransitionMode::Fuzzy, 50.0);
    CHECK(p.advance(ledger(1, 6, 0, 8)).kind == AdvanceResult::Kind::Unchanged);  // 1/3 of the criterion
    const auto r = p.advance(ledger(2, 6, 0, 8));  // 2/3 >= 50%
    CHECK(r.kind == AdvanceResult::Kind::CoActivated);
    CHECK(p.coactive());
    CHECK(p.active_goal_count() == 2);
    CHECK(p.reward({GameEvent::MonsterKilled, GameEvent::ExitDoor}) == 2.0);
    CHECK(p.advance(ledger(3, 6, 0, 8)).kind == AdvanceResult::Kind::Advanced);
    CHECK_FALSE(p.coactive());
    CHECK(p.cursor() == 1);
}

TEST_CASE("advance matches the hand-written goal machine on a ledger sweep") {
    using F = oracle::PersonaFsm;
    struct Case {
        const char* name;
        std::vector<F::Need> needs;
    };
    const std::vector<Case> cases = {{"Dev. Killer", {F::KillHalf, F::None}},
                                     {"Dev. Collector", {F::CollectHalf, F::None}},
                                     {"Dev. Raider", {F::KillHalf, F::CollectHalf, F::None}},
                                     {"Dev. Completionist", {F::All, F::None}},
                                     {"Dev. Casual Completionist", {F::HealthHalf, F::None}}};
    for (const auto& c : cases)
        for (bool fuzzy : {false, true}) {
            CAPTURE(c.name);
            CAPTURE(fuzzy);
            const auto base = builtin_persona(c.name);
            DevelopingPersona p(base.name(), base.goals(), fuzzy ? TransitionMode::Fuzzy : TransitionMode::Sudden);
            F fsm{c.needs, fuzzy, 50.0};
            // monotone ledger walk: kills, then treasures, then damage
            for (int k = 0; k <= 4; ++k)
                for (int t = 0; t <= 5; ++t) {
                    const int hp = 4 - (k + t) / 3;
                    p.advance(ledger(k, 4, t, 5, hp, 4));
                    fsm.observe(k, 4, t, 5, hp, 4);
                    CHECK(p.cursor() == fsm.cursor);
                    CHECK(p.coactive() == fsm.coactive);
                    CHECK(p.completed() == fsm.completed);
                }
        }
}

TEST_CASE("persona files round trip") {
    for (const auto& p : builtin_personas()) {
        CAPTURE(p.name());
        CHECK(parse_persona(persona_to_text(p)) == p);
    }
    DevelopingPersona fuzzy("F", builtin_persona("Dev. Raider").goals(), TransitionMode::Fuzzy, 40.0);
    CHECK(parse_persona(persona_to_text(fuzzy)) == fuzzy);
}

TEST_CASE("persona validation") {
    CHECK_THROWS_AS(DevelopingPersona("empty", {}), ValidationError);
    Goal bad = goals::exit();
    bad.utility.step_weight = 0.1;
    CHECK_THROWS_AS(DevelopingPersona("bad", {bad}), ValidationError);
    CHECK_THROWS_AS(parse_persona("persona \"x\"\ngoal \"g\" {\n  weight Nope 1\n}\n"), Error);
    CHECK_THROWS_AS(builtin_persona("Nobody"), ValidationError);
}
