#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "playtest/agent.hpp"
#include "playtest/apf.hpp"
#include "playtest/trajectory.hpp"

namespace playtest {

// 1 evaluation for deterministic levels, 1000 otherwise.
int default_evaluation_count(const LevelSpec& level);

struct DiscoveryConfig {
    AgentConfig agent;
    APFConfig apf;
    long budget = 100000;
    int max_rounds = 4;
    bool cumulative = false;  // train each APF on all earlier distinct paths
};

struct DiscoveryRound {
    int round = 0;
    Trajectory path;
    bool terminated = false;  // reached a door or died before max_timesteps
    int duplicate_of = -1;    // index into DiscoveryResult::paths, -1 when new
};

// Discovery stops at the first round whose path repeats an earlier one or
// does not terminate; that round is kept in rounds but not in paths.
struct DiscoveryResult {
    std::vector<Trajectory> paths;  // distinct, in discovery order
    std::vector<DiscoveryRound> rounds;
};

DiscoveryResult discover_alternatives(const LevelSpec& level, const DevelopingPersona& persona,
                                      const DiscoveryConfig& config, std::uint64_t seed);

// rows[i][j]: discounted return of path j replayed under a modulator trained
// on path i. baseline[j] uses env rewards only.
struct ReturnMatrix {
    double gamma = 0.99;
    std::vector<double> baseline;
    std::vector<std::vector<double>> rows;

    std::size_t size() const { return baseline.size(); }
    bool operator==(const ReturnMatrix&) const = default;
};

// Discounted env + capped APF return of one replayed path.
double modulated_return(const LevelSpec& level, const Trajectory& path, const ApfModulator& mod, double gamma);

ReturnMatrix return_matrix(const LevelSpec& level, const std::vector<Trajectory>& paths, const APFConfig& config,
                           double gamma = 0.99);
std::string format_return_matrix(const ReturnMatrix& m);

// Paths i and j are linked when each one's modulator lowers the other's
// return below baseline; classes are the connected components.
std::vector<std::vector<int>> equivalence_classes(const ReturnMatrix& m);

struct InteractionRow {
    std::string persona;
    int evaluations = 0;
    MeanSd kills, treasures, doors, deaths;
};

struct InteractionTable {
    std::vector<InteractionRow> rows;

    const InteractionRow& row(const std::string& persona) const;
};

InteractionTable interaction_table(const std::vector<std::pair<std::string, EvaluationResult>>& evaluations);
// Exact counts for single evaluations, mean ± sd otherwise.
std::string format_interaction_table(const InteractionTable& t);

struct PathRendering {
    int width = 0;   // pixels
    int height = 0;
    std::vector<std::uint8_t> rgb;
    std::string ascii;

    std::string ppm() const;
};

// Labels are 1..9 then a..z. Cells visited by several paths carry every label.
PathRendering render_paths(const LevelSpec& level, const std::vector<Trajectory>& paths);
char path_label(int index);

}  // namespace playtest
