#include "playtest/dungeon.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

namespace playtest {

namespace {

constexpr std::array<const char*, kNumActions> kActionNames = {"NoOp", "Attack", "Left", "Right", "Up", "Down"};
constexpr std::array<const char*, 4> kFacingNames = {"Up", "Down", "Left", "Right"};
constexpr std::array<const char*, kNumEvents> kEventNames = {"MonsterKilled", "TreasureCollected", "ExitDoor", "Death",
                                                             "Step"};
constexpr std::array<const char*, 4> kCauseNames = {"None", "ExitDoor", "Death", "Timeout"};

template <std::size_t N>
int lookup(const std::array<const char*, N>& names, std::string_view s, const char* what) {
    for (std::size_t i = 0; i < N; ++i)
        if (s == names[i]) return static_cast<int>(i);
    throw ValidationError(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    return s;
}

template <typename T>
T parse_number(std::string_view text, int line, int column) {
    T value{};
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size())
        throw ParseError("malformed number '" + std::string(text) + "'", line, column);
    return value;
}

double parse_double(std::string_view text, int line, int column) {
    try {
        std::size_t used = 0;
        std::string s(text);
        double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ParseError("malformed number '" + std::string(text) + "'", line, column);
    }
}

}  // namespace

const char* to_string(Action a) { return kActionNames[static_cast<std::size_t>(a)]; }
const char* to_string(Facing f) { return kFacingNames[static_cast<std::size_t>(f)]; }
const char* to_string(GameEvent e) { return kEventNames[static_cast<std::size_t>(e)]; }
const char* to_string(TerminationCause c) { return kCauseNames[static_cast<std::size_t>(c)]; }
const char* to_string(MonsterPolicy p) { return p == MonsterPolicy::Static ? "Static" : "RandomWalk"; }

Action action_from_string(std::string_view s) { return static_cast<Action>(lookup(kActionNames, s, "action")); }
GameEvent event_from_string(std::string_view s) { return static_cast<GameEvent>(lookup(kEventNames, s, "event")); }
TerminationCause termination_from_string(std::string_view s) {
    return static_cast<TerminationCause>(lookup(kCauseNames, s, "termination cause"));
}
Facing facing_from_string(std::string_view s) { return static_cast<Facing>(lookup(kFacingNames, s, "facing")); }

Cell neighbor(Cell c, Facing f) {
    switch (f) {
        case Facing::Up: return {c.row - 1, c.col};
        case Facing::Down: return {c.row + 1, c.col};
        case Facing::Left: return {c.row, c.col - 1};
        case Facing::Right: return {c.row, c.col + 1};
    }
    return c;
}

std::optional<Facing> direction_of(Action a) {
    switch (a) {
        case Action::Left: return Facing::Left;
        case Action::Right: return Facing::Right;
        case Action::Up: return Facing::Up;
        case Action::Down: return Facing::Down;
        default: return std::nullopt;
    }
}

std::vector<GameEvent> EventSet::events() const {
    std::vector<GameEvent> out;
    for (int i = 0; i < kNumEvents; ++i)
        if (contains(static_cast<GameEvent>(i))) out.push_back(static_cast<GameEvent>(i));
    return out;
}

std::string format_events(const EventSet& events) {
    if (events.empty()) return "-";
    std::string out;
    for (auto e : events.events()) {
        if (!out.empty()) out += ',';
        out += to_string(e);
    }
    return out;
}

EventSet parse_events(std::string_view text) {
    EventSet out;
    text = trim(text);
    if (text == "-" || text.empty()) return out;
    while (!text.empty()) {
        auto comma = text.find(',');
        out.insert(event_from_string(trim(text.substr(0, comma))));
        if (comma == std::string_view::npos) break;
        text.remove_prefix(comma + 1);
    }
    return out;
}

bool LevelSpec::is_door(Cell c) const { return std::find(doors.begin(), doors.end(), c) != doors.end(); }

void LevelSpec::validate() const {
    if (width <= 0 || height <= 0) throw ValidationError("level has no cells");
    if (tiles.size() != static_cast<std::size_t>(width * height)) throw ValidationError("tile grid size mismatch");
    if (doors.empty()) throw ValidationError("level has no door");
    if (max_timesteps <= 0) throw ValidationError("max_timesteps must be positive");
    if (step_penalty < 0.0) throw ValidationError("step_penalty must be non-negative");
    if (avatar_hp <= 0) throw ValidationError("avatar_hp must be positive");
    if (monster_damage < 0) throw ValidationError("monster_damage must be non-negative");

    std::set<Cell> used;
    auto claim = [&](Cell c, const char* what) {
        if (!is_floor(c)) throw ValidationError(std::string(what) + " is not on a floor cell");
        if (!used.insert(c).second) throw ValidationError(std::string(what) + " shares a cell with another entity");
    };
    claim(avatar_start, "avatar");
    for (auto c : monsters) claim(c, "monster");
    for (auto c : treasures) claim(c, "treasure");
    for (auto c : doors) claim(c, "door");
}

LevelSpec load_level(std::string_view text, std::string name) {
    LevelSpec level;
    level.name = std::move(name);
    std::vector<std::string> rows;
    std::vector<int> row_lines;
    bool have_avatar = false;
    int line_no = 0;
    bool in_grid = false;

    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (line.empty()) {
            // blank lines are only allowed after the grid (trailing newline)
            if (in_grid) in_grid = false;
            continue;
        }
        if (line.front() == '#') {
            if (!rows.empty()) throw ParseError("header line after grid rows", line_no, 1);
            auto body = line.substr(1);
            auto eq = body.find('=');
            if (eq == std::string_view::npos) throw ParseError("header line without '='", line_no, 2);
            auto key = trim(body.substr(0, eq));
            auto value = trim(body.substr(eq + 1));
            const int vcol = static_cast<int>(eq) + 3;
            if (key == "max_timesteps") {
                level.max_timesteps = parse_number<int>(value, line_no, vcol);
            } else if (key == "step_penalty") {
                level.step_penalty = parse_double(value, line_no, vcol);
            } else if (key == "avatar_hp") {
                level.avatar_hp = parse_number<int>(value, line_no, vcol);
            } else if (key == "monster_damage") {
                level.monster_damage = parse_number<int>(value, line_no, vcol);
            } else if (key == "monster_policy") {
                if (value == "Static" || value == "static") level.monster_policy = MonsterPolicy::Static;
                else if (value == "RandomWalk" || value == "random_walk") level.monster_policy = MonsterPolicy::RandomWalk;
                else throw ParseError("unknown monster_policy '" + std::string(value) + "'", line_no, vcol);
            } else if (key == "name") {
                level.name = std::string(value);
            } else {
                throw ParseError("unknown header key '" + std::string(key) + "'", line_no, 2);
            }
            continue;
        }
        if (!rows.empty() && !in_grid) throw ParseError("grid rows must be contiguous", line_no, 1);
        in_grid = true;
        if (!rows.empty() && line.size() != rows.front().size())
            throw ParseError("jagged row: expected " + std::to_string(rows.front().size()) + " columns, got " +
                                 std::to_string(line.size()),
                             line_no, static_cast<int>(std::min(line.size(), rows.front().size())) + 1);
        const int r = static_cast<int>(rows.size());
        for (std::size_t c = 0; c < line.size(); ++c) {
            const Cell cell{r, static_cast<int>(c)};
            switch (line[c]) {
                case 'W': break;
                case '.': break;
                case 'A':
                    if (have_avatar) throw ParseError("second avatar", line_no, static_cast<int>(c) + 1);
                    have_avatar = true;
                    level.avatar_start = cell;
                    break;
                case 'M': level.monsters.push_back(cell); break;
                case 'T': level.treasures.push_back(cell); break;
                case 'D': level.doors.push_back(cell); break;
                default:
                    throw ParseError(std::string("unexpected character '") + line[c] + "'", line_no,
                                     static_cast<int>(c) + 1);
            }
        }
        rows.emplace_back(line);
        row_lines.push_back(line_no);
    }

    if (rows.empty()) throw ValidationError("level has no grid rows");
    level.height = static_cast<int>(rows.size());
    level.width = static_cast<int>(rows.front().size());
    level.tiles.reserve(static_cast<std::size_t>(level.width * level.height));
    for (const auto& row : rows)
        for (char ch : row) level.tiles.push_back(ch == 'W' ? Tile::Wall : Tile::Floor);
    if (!have_avatar) throw ValidationError("level has no avatar");
    level.validate();
    return level;
}

LevelSpec load_level_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open level file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    auto name = path;
    if (auto slash = name.find_last_of('/'); slash != std::string::npos) name = name.substr(slash + 1);
    if (auto dot = name.find_last_of('.'); dot != std::string::npos) name = name.substr(0, dot);
    return load_level(ss.str(), name);
}

std::string level_to_text(const LevelSpec& level) {
    std::ostringstream out;
    out << "#max_timesteps=" << level.max_timesteps << '\n';
    out << "#step_penalty=" << level.step_penalty << '\n';
    out << "#avatar_hp=" << level.avatar_hp << '\n';
    out << "#monster_damage=" << level.monster_damage << '\n';
    out << "#monster_policy=" << to_string(level.monster_policy) << '\n';
    for (int r = 0; r < level.height; ++r) {
        for (int c = 0; c < level.width; ++c) {
            const Cell cell{r, c};
            char ch = level.tile(cell) == Tile::Wall ? 'W' : '.';
            if (cell == level.avatar_start) ch = 'A';
            else if (std::find(level.monsters.begin(), level.monsters.end(), cell) != level.monsters.end()) ch = 'M';
            else if (std::find(level.treasures.begin(), level.treasures.end(), cell) != level.treasures.end()) ch = 'T';
            else if (level.is_door(cell)) ch = 'D';
            out << ch;
        }
        out << '\n';
    }
    return out.str();
}

std::uint64_t level_hash(const LevelSpec& level) { return fnv1a(level_to_text(level)); }

int GameState::alive_monster_count() const {
    return static_cast<int>(std::count_if(monsters.begin(), monsters.end(), [](const auto& m) { return m.alive; }));
}

int GameState::remaining_treasure_count() const {
    return static_cast<int>(std::count(treasures.begin(), treasures.end(), true));
}

std::set<Cell> GameState::alive_monsters() const {
    std::set<Cell> out;
    for (const auto& m : monsters)
        if (m.alive) out.insert(m.pos);
    return out;
}

std::set<Cell> GameState::remaining_treasures(const LevelSpec& level) const {
    std::set<Cell> out;
    for (std::size_t i = 0; i < treasures.size(); ++i)
        if (treasures[i]) out.insert(level.treasures[i]);
    return out;
}

GameState initial_state(const LevelSpec& level) {
    GameState s;
    s.avatar_pos = level.avatar_start;
    s.avatar_facing = level.start_facing;
    s.avatar_hp = level.avatar_hp;
    for (auto c : level.monsters) s.monsters.push_back({c, true});
    s.treasures.assign(level.treasures.size(), true);
    return s;
}

namespace {

int live_monster_at(const GameState& s, Cell c) {
    for (std::size_t i = 0; i < s.monsters.size(); ++i)
        if (s.monsters[i].alive && s.monsters[i].pos == c) return static_cast<int>(i);
    return -1;
}

int treasure_at(const LevelSpec& level, const GameState& s, Cell c) {
    for (std::size_t i = 0; i < level.treasures.size(); ++i)
        if (s.treasures[i] && level.treasures[i] == c) return static_cast<int>(i);
    return -1;
}

}  // namespace

StepResult step(const LevelSpec& level, const GameState& state, Action action, Rng& rng) {
    if (state.terminal()) throw ContractViolation("step called on a terminal state");
    StepResult result{state, {}};
    GameState& s = result.state;
    EventSet& events = result.events;

    // Avatar resolves first.
    if (action == Action::Attack) {
        const int m = live_monster_at(s, neighbor(s.avatar_pos, s.avatar_facing));
        if (m >= 0) {
            s.monsters[static_cast<std::size_t>(m)].alive = false;
            events.insert(GameEvent::MonsterKilled);
        }
    } else if (auto dir = direction_of(action)) {
        if (*dir != s.avatar_facing) {
            s.avatar_facing = *dir;
        } else {
            const Cell target = neighbor(s.avatar_pos, *dir);
            if (level.is_floor(target)) {
                s.avatar_pos = target;
                if (int t = treasure_at(level, s, target); t >= 0) {
                    s.treasures[static_cast<std::size_t>(t)] = false;
                    events.insert(GameEvent::TreasureCollected);
                }
                if (level.is_door(target)) {
                    events.insert(GameEvent::ExitDoor);
                    s.termination_cause = TerminationCause::ExitDoor;
                }
            }
        }
    }

    if (!s.terminal()) {
        if (level.monster_policy == MonsterPolicy::RandomWalk) {
            for (auto& m : s.monsters) {
                if (!m.alive) continue;
                // 0 = stay, 1..4 = Up, Down, Left, Right
                const auto choice = rng.uniform_int(5);
                if (choice == 0) continue;
                const Cell target = neighbor(m.pos, static_cast<Facing>(choice - 1));
                if (!level.is_floor(target) || level.is_door(target) || treasure_at(level, s, target) >= 0 ||
                    live_monster_at(s, target) >= 0)
                    continue;
                m.pos = target;
            }
        }
        int hits = 0;
        for (const auto& m : s.monsters)
            if (m.alive && m.pos == s.avatar_pos) ++hits;
        if (hits > 0) {
            s.avatar_hp -= hits * level.monster_damage;
            if (s.avatar_hp <= 0) {
                s.avatar_hp = 0;
                events.insert(GameEvent::Death);
                s.termination_cause = TerminationCause::Death;
            }
        }
    }

    s.t += 1;
    events.insert(GameEvent::Step);
    if (!s.terminal() && s.t >= level.max_timesteps) s.termination_cause = TerminationCause::Timeout;
    return result;
}

std::uint64_t Observation::hash() const {
    Fnv1a h;
    h.add_value(width);
    h.add_value(height);
    h.add_bytes(pixels.data(), pixels.size());
    return h.value();
}

Observation render(const LevelSpec& level, const GameState& state, const RenderConfig& config) {
    if (config.block <= 0) throw ValidationError("render block size must be positive");
    const int k = config.block;
    Observation obs;
    obs.width = level.width * k;
    obs.height = level.height * k;
    obs.pixels.assign(static_cast<std::size_t>(obs.width * obs.height), gray::kFloor);

    auto fill = [&](Cell c, std::uint8_t v) {
        for (int dy = 0; dy < k; ++dy)
            for (int dx = 0; dx < k; ++dx)
                obs.pixels[static_cast<std::size_t>((c.row * k + dy) * obs.width + c.col * k + dx)] = v;
    };

    for (int r = 0; r < level.height; ++r)
        for (int c = 0; c < level.width; ++c)
            if (level.tile({r, c}) == Tile::Wall) fill({r, c}, gray::kWall);
    for (auto d : level.doors) fill(d, gray::kDoor);
    for (std::size_t i = 0; i < level.treasures.size(); ++i)
        if (i < state.treasures.size() && state.treasures[i]) fill(level.treasures[i], gray::kTreasure);
    for (const auto& m : state.monsters)
        if (m.alive) fill(m.pos, gray::kMonster);
    if (level.in_bounds(state.avatar_pos)) {
        fill(state.avatar_pos, gray::kAvatar);
        if (k >= 3) {
            // facing marker: centre of the block edge the avatar faces
            int mx = k / 2, my = k / 2;
            switch (state.avatar_facing) {
                case Facing::Up: my = 0; break;
                case Facing::Down: my = k - 1; break;
                case Facing::Left: mx = 0; break;
                case Facing::Right: mx = k - 1; break;
            }
            obs.pixels[static_cast<std::size_t>((state.avatar_pos.row * k + my) * obs.width + state.avatar_pos.col * k +
                                                mx)] = gray::kFacingMark;
        }
    }

    if (config.out_width > 0 || config.out_height > 0) {
        const int w = config.out_width > 0 ? config.out_width : obs.width;
        const int h = config.out_height > 0 ? config.out_height : obs.height;
        return resize_observation(obs, w, h);
    }
    return obs;
}

Observation resize_observation(const Observation& obs, int out_width, int out_height) {
    if (out_width <= 0 || out_height <= 0) throw ValidationError("resize target must be positive");
    if (out_width == obs.width && out_height == obs.height) return obs;
    Observation out;
    out.width = out_width;
    out.height = out_height;
    out.pixels.resize(static_cast<std::size_t>(out_width * out_height));
    for (int y = 0; y < out_height; ++y) {
        const double y0 = static_cast<double>(y) * obs.height / out_height;
        const double y1 = static_cast<double>(y + 1) * obs.height / out_height;
        for (int x = 0; x < out_width; ++x) {
            const double x0 = static_cast<double>(x) * obs.width / out_width;
            const double x1 = static_cast<double>(x + 1) * obs.width / out_width;
            double sum = 0.0, area = 0.0;
            for (int sy = static_cast<int>(y0); sy < static_cast<int>(std::ceil(y1)) && sy < obs.height; ++sy) {
                const double wy = std::min<double>(sy + 1, y1) - std::max<double>(sy, y0);
                for (int sx = static_cast<int>(x0); sx < static_cast<int>(std::ceil(x1)) && sx < obs.width; ++sx) {
                    const double wx = std::min<double>(sx + 1, x1) - std::max<double>(sx, x0);
                    sum += wx * wy * obs.at(sx, sy);
                    area += wx * wy;
                }
            }
            const long v = std::lround(sum / area);
            out.pixels[static_cast<std::size_t>(y * out_width + x)] = static_cast<std::uint8_t>(std::clamp(v, 0L, 7L));
        }
    }
    return out;
}

}  // namespace playtest
