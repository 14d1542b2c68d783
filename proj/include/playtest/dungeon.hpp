#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "playtest/common.hpp"

namespace playtest {

struct Cell {
    int row = 0;
    int col = 0;

    auto operator<=>(const Cell&) const = default;
};

enum class Tile : std::uint8_t { Floor, Wall };
enum class Facing : std::uint8_t { Up, Down, Left, Right };
enum class Action : std::uint8_t { NoOp, Attack, Left, Right, Up, Down };
enum class GameEvent : std::uint8_t { MonsterKilled, TreasureCollected, ExitDoor, Death, Step };
enum class MonsterPolicy : std::uint8_t { Static, RandomWalk };
enum class TerminationCause : std::uint8_t { None, ExitDoor, Death, Timeout };

inline constexpr int kNumActions = 6;
inline constexpr int kNumEvents = 5;

const char* to_string(Action a);
const char* to_string(Facing f);
const char* to_string(GameEvent e);
const char* to_string(TerminationCause c);
const char* to_string(MonsterPolicy p);
Action action_from_string(std::string_view s);
GameEvent event_from_string(std::string_view s);
TerminationCause termination_from_string(std::string_view s);
Facing facing_from_string(std::string_view s);

inline Action action_from_index(int i) { return static_cast<Action>(i); }
inline int index_of(Action a) { return static_cast<int>(a); }

Cell neighbor(Cell c, Facing f);
// Facing for the four movement actions; nullopt for NoOp and Attack.
std::optional<Facing> direction_of(Action a);

// Small set of game events; a step emits each event at most once.
class EventSet {
public:
    EventSet() = default;
    EventSet(std::initializer_list<GameEvent> events) {
        for (auto e : events) insert(e);
    }

    void insert(GameEvent e) { bits_ |= bit(e); }
    bool contains(GameEvent e) const { return (bits_ & bit(e)) != 0; }
    bool empty() const { return bits_ == 0; }
    std::uint8_t bits() const { return bits_; }
    static EventSet from_bits(std::uint8_t b) {
        EventSet s;
        s.bits_ = b;
        return s;
    }
    std::vector<GameEvent> events() const;

    bool operator==(const EventSet&) const = default;

private:
    static std::uint8_t bit(GameEvent e) { return static_cast<std::uint8_t>(1u << static_cast<unsigned>(e)); }
    std::uint8_t bits_ = 0;
};

// Comma separated event names, "-" for the empty set.
std::string format_events(const EventSet& events);
EventSet parse_events(std::string_view text);

struct LevelSpec {
    std::string name;
    int width = 0;
    int height = 0;
    std::vector<Tile> tiles;  // row-major
    Cell avatar_start;
    Facing start_facing = Facing::Up;
    std::vector<Cell> monsters;
    std::vector<Cell> treasures;
    std::vector<Cell> doors;
    int max_timesteps = 200;
    double step_penalty = 0.0;
    MonsterPolicy monster_policy = MonsterPolicy::Static;
    int avatar_hp = 1;
    int monster_damage = 1;

    bool in_bounds(Cell c) const { return c.row >= 0 && c.col >= 0 && c.row < height && c.col < width; }
    Tile tile(Cell c) const { return tiles[static_cast<std::size_t>(c.row * width + c.col)]; }
    bool is_floor(Cell c) const { return in_bounds(c) && tile(c) == Tile::Floor; }
    bool is_door(Cell c) const;
    bool is_deterministic() const { return monster_policy == MonsterPolicy::Static; }

    // Throws ValidationError when an invariant is broken.
    void validate() const;
};

// ASCII level grammar: W wall, . floor, A avatar (facing Up), M monster,
// T treasure, D door. Optional leading "#key=value" header lines.
LevelSpec load_level(std::string_view text, std::string name = "level");
LevelSpec load_level_file(const std::string& path);
std::string level_to_text(const LevelSpec& level);
std::uint64_t level_hash(const LevelSpec& level);

struct MonsterState {
    Cell pos;
    bool alive = true;

    bool operator==(const MonsterState&) const = default;
};

struct GameState {
    Cell avatar_pos;
    Facing avatar_facing = Facing::Up;
    int avatar_hp = 1;
    std::vector<MonsterState> monsters;  // indexed like LevelSpec::monsters
    std::vector<bool> treasures;         // true while still on the map
    int t = 0;
    TerminationCause termination_cause = TerminationCause::None;

    bool terminal() const { return termination_cause != TerminationCause::None; }
    int alive_monster_count() const;
    int remaining_treasure_count() const;
    std::set<Cell> alive_monsters() const;
    std::set<Cell> remaining_treasures(const LevelSpec& level) const;

    bool operator==(const GameState&) const = default;
};

GameState initial_state(const LevelSpec& level);

struct StepResult {
    GameState state;
    EventSet events;
};

StepResult step(const LevelSpec& level, const GameState& state, Action action, Rng& rng);

// 3-bit grayscale frame, row-major.
struct Observation {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y * width + x)]; }
    std::uint64_t hash() const;
    bool operator==(const Observation&) const = default;
};

// Gray levels for each rendered entity.
namespace gray {
inline constexpr std::uint8_t kFloor = 0;
inline constexpr std::uint8_t kWall = 2;
inline constexpr std::uint8_t kDoor = 3;
inline constexpr std::uint8_t kTreasure = 4;
inline constexpr std::uint8_t kMonster = 5;
inline constexpr std::uint8_t kFacingMark = 6;
inline constexpr std::uint8_t kAvatar = 7;
}  // namespace gray

struct RenderConfig {
    int block = 3;       // pixels per tile side
    int out_width = 0;   // 0 keeps the native width
    int out_height = 0;  // 0 keeps the native height

    bool operator==(const RenderConfig&) const = default;
};

Observation render(const LevelSpec& level, const GameState& state, const RenderConfig& config = {});

// Area-average resample followed by rounding back to 3 bits.
Observation resize_observation(const Observation& obs, int out_width, int out_height);

}  // namespace playtest
