#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "playtest/apf.hpp"
#include "playtest/persona.hpp"
#include "playtest/trajectory.hpp"

namespace playtest {

enum class AgentKind { TabularQ, PPO };
enum class ExplorationKind { None, PseudoCount, Curiosity };

const char* to_string(AgentKind k);
AgentKind agent_kind_from_string(std::string_view s);
const char* to_string(ExplorationKind k);
ExplorationKind exploration_from_string(std::string_view s);

struct Exploration {
    ExplorationKind kind = ExplorationKind::None;
    double beta = 0.0;

    bool operator==(const Exploration&) const = default;
};

inline constexpr int kCapBins = 4;

struct AgentConfig {
    AgentKind kind = AgentKind::TabularQ;
    double discount = 0.99;
    double learning_rate = 5e-4;

    // TabularQ: step size and a linear epsilon schedule over the first
    // epsilon_decay fraction of the budget.
    double q_learning_rate = 0.5;
    double epsilon_start = 1.0;
    double epsilon_end = 0.05;
    double epsilon_decay = 0.8;

    // PPO
    int horizon = 256;
    int num_minibatch = 8;
    int num_epochs = 3;
    double gae_lambda = 0.95;
    double clipping_param = 0.2;
    double entropy_coeff = 0.01;
    double vf_coeff = 0.5;
    double max_grad_norm = 0.5;
    int num_actors = 16;
    int hidden = 64;

    Exploration exploration;
    // Frames fed to the PPO network and to the exploration models.
    RenderConfig observation{1, 0, 0};
    int icm_state_features = 64;
    FilterShape cts_filter = FilterShape::LShaped;

    void validate() const;
    bool operator==(const AgentConfig&) const = default;
};

// persona reward (minus the level step penalty) -> + exploration -> + APF.
struct RewardStack {
    DevelopingPersona persona;
    std::shared_ptr<const ApfModulator> apf;
};

// Two tanh hidden layers shared by a softmax policy head and a value head.
// Batches are column-major.
struct ActorCritic {
    Eigen::MatrixXd w1, w2, wp, wv;
    Eigen::VectorXd b1, b2, bp, bv;

    static ActorCritic init(int input_dim, int hidden, Rng& rng);

    int input_dim() const { return static_cast<int>(w1.cols()); }
    Eigen::Index parameter_count() const;
    Eigen::VectorXd parameters() const;
    void set_parameters(const Eigen::VectorXd& flat);

    struct Cache {
        Eigen::MatrixXd x, h1, h2, logits;
        Eigen::RowVectorXd values;
    };
    Cache forward(const Eigen::MatrixXd& x) const;
    Eigen::VectorXd backward(const Cache& c, const Eigen::MatrixXd& d_logits, const Eigen::RowVectorXd& d_values) const;

    bool operator==(const ActorCritic& o) const;
};

using QValues = std::array<double, kNumActions>;

class Policy {
public:
    Policy() = default;
    Policy(AgentConfig config, int goal_count, int frame_width, int frame_height);

    AgentKind kind() const { return config_.kind; }
    const AgentConfig& config() const { return config_; }
    int goal_count() const { return goal_count_; }
    int frame_width() const { return frame_width_; }
    int frame_height() const { return frame_height_; }

    // Greedy (TabularQ) or mode (PPO) action; ties go to the lowest index.
    // ledger is read only by TabularQ policies trained under an APF; null
    // means a full budget.
    Action act(const LevelSpec& level, const GameState& state, const DevelopingPersona& persona,
               const CapLedger* ledger = nullptr) const;
    // Action distribution; one-hot on the greedy action for TabularQ.
    std::array<double, kNumActions> action_probs(const LevelSpec& level, const GameState& state,
                                                 const DevelopingPersona& persona,
                                                 const CapLedger* ledger = nullptr) const;

    // TabularQ under an APF keys states on the remaining positive budget,
    // quantised to this many bins, so capped feedback stays Markov. 0 = off.
    int cap_bins() const { return cap_bins_; }
    void set_cap_bins(int bins) { cap_bins_ = bins; }
    std::uint64_t table_key(const GameState& state, const DevelopingPersona& persona, const CapLedger* ledger) const;

    std::unordered_map<std::uint64_t, QValues>& q_table() { return q_; }
    const std::unordered_map<std::uint64_t, QValues>& q_table() const { return q_; }
    ActorCritic& network() { return net_; }
    const ActorCritic& network() const { return net_; }

    Eigen::VectorXd features(const LevelSpec& level, const GameState& state, const DevelopingPersona& persona) const;
    int input_dim() const { return frame_width_ * frame_height_ + 4 + goal_count_ + 1; }

    void save(std::ostream& out) const;
    static Policy load(std::istream& in);
    void save_file(const std::string& path) const;
    static Policy load_file(const std::string& path);

    bool operator==(const Policy& o) const;

private:
    AgentConfig config_;
    int goal_count_ = 1;
    int frame_width_ = 0;
    int frame_height_ = 0;
    int cap_bins_ = 0;
    std::unordered_map<std::uint64_t, QValues> q_;
    ActorCritic net_;
};

// Key of everything the next step depends on, persona progress included.
// budget_bin < 0 leaves the APF budget out of the key.
std::uint64_t state_key(const GameState& state, const DevelopingPersona& persona, int budget_bin = -1);
// Same without the persona part: identifies the rendered frame.
std::uint64_t world_key(const GameState& state);

struct EpisodeRecord {
    int episode = 0;
    int steps = 0;
    double env_return = 0.0;  // undiscounted
    double train_return = 0.0;
    double exploration_total = 0.0;
    double apf_total = 0.0;
    int kills = 0;
    int treasures = 0;
    TerminationCause termination = TerminationCause::None;
    std::vector<GoalActivation> goal_trace;
};

struct TrainResult {
    Policy policy;
    std::vector<EpisodeRecord> log;
};

// budget counts environment steps.
TrainResult train(const AgentConfig& config, const LevelSpec& level, const RewardStack& rewards, std::uint64_t seed,
                  long budget);

// One JSON object per line.
void write_training_log(std::ostream& out, const std::vector<EpisodeRecord>& log);

struct MeanSd {
    double mean = 0.0;
    double sd = 0.0;
};
MeanSd mean_sd(const std::vector<double>& xs);

struct EpisodeSummary {
    int kills = 0;
    int treasures = 0;
    bool door = false;
    bool death = false;
    TerminationCause termination = TerminationCause::None;
    double env_return = 0.0;        // discounted
    double modulated_return = 0.0;  // discounted, APF term included
};

struct EvaluationResult {
    std::vector<Trajectory> trajectories;
    std::vector<EpisodeSummary> episodes;
    MeanSd kills, treasures, doors, deaths, env_return, modulated_return;
};

EvaluationResult evaluate(const Policy& policy, const LevelSpec& level, const RewardStack& rewards, std::uint64_t seed,
                          int episodes);

// GAE over a flat step sequence. next_values[t] is V(s_{t+1}) (0 after a
// true terminal); episode_end[t] cuts the recursion (terminal or truncated).
struct GaeResult {
    std::vector<double> advantages;
    std::vector<double> returns;
};
GaeResult compute_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                      const std::vector<double>& next_values, const std::vector<bool>& episode_end, double gamma,
                      double lambda);

struct RolloutBatch {
    Eigen::MatrixXd observations;  // input_dim x N
    std::vector<int> actions;
    std::vector<double> old_log_probs;
    std::vector<double> advantages;
    std::vector<double> returns;

    int size() const { return static_cast<int>(actions.size()); }
};

struct PpoStats {
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;
    double approx_kl = 0.0;
    double max_grad_norm_pre_clip = 0.0;
    double max_grad_norm_post_clip = 0.0;
};

// Adam state for the PPO learner.
struct AdamState {
    Eigen::VectorXd m, v;
    long t = 0;
};

PpoStats ppo_update(ActorCritic& net, AdamState& adam, const RolloutBatch& batch, const AgentConfig& config, Rng& rng);

// First policy layer restricted to the pixel inputs, as a frozen tanh encoder.
FeatureEncoder transfer_encoder(const Policy& policy);

}  // namespace playtest
