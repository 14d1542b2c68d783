#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "playtest/apf.hpp"
#include "playtest/dungeon.hpp"

namespace playtest {

struct TrajectoryStep {
    Action action = Action::NoOp;
    EventSet events;
    double env_reward = 0.0;
    double apf_feedback = 0.0;  // emitted (capped) APF term, 0 without a modulator
    Cell avatar;                // avatar cell after the step

    bool operator==(const TrajectoryStep&) const = default;
};

struct GoalActivation {
    int t = 0;
    int cursor = 0;
    bool coactive = false;

    bool operator==(const GoalActivation&) const = default;
};

// One episode. Frames are not stored: replaying the actions with env_seed
// regenerates every state, stochastic monsters included.
struct Trajectory {
    std::string level_name;
    std::uint64_t level_hash = 0;
    std::string persona;
    std::uint64_t seed = 0;
    std::uint64_t env_seed = 0;
    Cell start;
    std::vector<TrajectoryStep> steps;
    std::vector<GoalActivation> goal_trace;
    TerminationCause termination = TerminationCause::None;

    int length() const { return static_cast<int>(steps.size()); }
    std::vector<Action> actions() const;
    // Start cell followed by the avatar cell after every step.
    std::vector<Cell> cells() const;
    std::set<Cell> cell_set(bool include_start = true) const;
    int count(GameEvent e) const;
    double discounted_env_return(double gamma) const;
    double discounted_modulated_return(double gamma) const;

    bool operator==(const Trajectory&) const = default;
};

// Visited-cell sets, start excluded, share no cell.
bool space_disjoint(const Trajectory& a, const Trajectory& b);
bool same_path(const Trajectory& a, const Trajectory& b);

inline constexpr int kTrajectoryFormatVersion = 1;

std::string trajectories_to_text(const std::vector<Trajectory>& trajectories);
std::vector<Trajectory> trajectories_from_text(std::string_view text);
// Written to a temporary file and renamed into place.
void save_trajectories(const std::string& path, const std::vector<Trajectory>& trajectories);
std::vector<Trajectory> load_trajectories(const std::string& path);

struct Replay {
    std::vector<GameState> states;  // steps + 1 states
    std::vector<EventSet> events;
};

// Throws DivergenceError when the level differs or the replay disagrees
// with the recorded steps.
Replay replay(const LevelSpec& level, const Trajectory& trajectory);
FrameSequence replay_frames(const LevelSpec& level, const Trajectory& trajectory, const RenderConfig& render);

}  // namespace playtest
