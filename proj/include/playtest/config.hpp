#pragma once

#include <string>
#include <string_view>

#include "json.hpp"
#include "playtest/agent.hpp"
#include "playtest/apf.hpp"

namespace playtest {

// Everything a CLI run needs. JSON files use flat keys named after the
// hyperparameter tables: horizon, num_minibatch, gae_lambda, discount,
// learning_rate, num_epochs, entropy_coeff, vf_coeff, clipping_param,
// max_grad_norm, num_actors, cts_beta, cts_filter, icm_state_features,
// icm_beta, pos_cap, neg_cap, apf_beta, ...
struct ExperimentConfig {
    AgentConfig agent;
    APFConfig apf;
    long timesteps = 100000;
    int eval_episodes = 1;  // 0 picks 1 for deterministic levels and 1000 otherwise
    int max_rounds = 4;
    bool cumulative = false;  // discover: train each APF on every earlier path
};

ExperimentConfig parse_experiment_config(const nlohmann::json& j);
ExperimentConfig parse_experiment_config_text(std::string_view text);
ExperimentConfig load_experiment_config(const std::string& path);

nlohmann::json to_json(const AgentConfig& c);
nlohmann::json to_json(const APFConfig& c);
nlohmann::json to_json(const ExperimentConfig& c);

AgentConfig agent_config_from_json(const nlohmann::json& j);
APFConfig apf_config_from_json(const nlohmann::json& j);

}  // namespace playtest
