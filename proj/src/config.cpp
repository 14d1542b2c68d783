#include "playtest/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace playtest {

namespace {

using nlohmann::json;

template <typename T>
void take(const json& j, const char* key, T& out, std::set<std::string>& used) {
    used.insert(key);
    auto it = j.find(key);
    if (it == j.end()) return;
    try {
        out = it->get<T>();
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config key '") + key + "': " + e.what());
    }
}

void take_string(const json& j, const char* key, std::string& out, std::set<std::string>& used) {
    take(j, key, out, used);
}

struct Parsed {
    AgentConfig agent;
    APFConfig apf;
    ExperimentConfig exp;
};

Parsed parse_all(const json& j, bool strict) {
    if (!j.is_object()) throw ValidationError("config must be a JSON object");
    std::set<std::string> used;
    Parsed p;
    auto& a = p.agent;

    std::string kind = to_string(a.kind);
    take_string(j, "agent", kind, used);
    a.kind = agent_kind_from_string(kind);
    take(j, "discount", a.discount, used);
    take(j, "learning_rate", a.learning_rate, used);
    take(j, "q_learning_rate", a.q_learning_rate, used);
    take(j, "epsilon_start", a.epsilon_start, used);
    take(j, "epsilon_end", a.epsilon_end, used);
    take(j, "epsilon_decay", a.epsilon_decay, used);
    take(j, "horizon", a.horizon, used);
    take(j, "num_minibatch", a.num_minibatch, used);
    take(j, "num_epochs", a.num_epochs, used);
    take(j, "gae_lambda", a.gae_lambda, used);
    take(j, "clipping_param", a.clipping_param, used);
    take(j, "entropy_coeff", a.entropy_coeff, used);
    take(j, "vf_coeff", a.vf_coeff, used);
    take(j, "max_grad_norm", a.max_grad_norm, used);
    take(j, "num_actors", a.num_actors, used);
    take(j, "hidden", a.hidden, used);
    take(j, "observation_block", a.observation.block, used);
    take(j, "icm_state_features", a.icm_state_features, used);
    std::string cts_filter = to_string(a.cts_filter);
    take_string(j, "cts_filter", cts_filter, used);
    a.cts_filter = filter_shape_from_string(cts_filter);

    std::string exploration = to_string(a.exploration.kind);
    take_string(j, "exploration", exploration, used);
    a.exploration.kind = exploration_from_string(exploration);
    double cts_beta = 0.05, icm_beta = 0.2;
    take(j, "cts_beta", cts_beta, used);
    take(j, "icm_beta", icm_beta, used);
    a.exploration.beta = a.exploration.kind == ExplorationKind::PseudoCount ? cts_beta
                         : a.exploration.kind == ExplorationKind::Curiosity ? icm_beta
                                                                             : 0.0;

    std::string backend = "CTS";
    take_string(j, "apf_backend", backend, used);
    p.apf = APFConfig::defaults(apf_backend_from_string(backend));
    auto& f = p.apf;
    take(j, "apf_beta", f.beta, used);
    take(j, "pos_cap", f.pos_cap, used);
    take(j, "neg_cap", f.neg_cap, used);
    take(j, "apf_block", f.render.block, used);
    std::string filter = to_string(f.filter);
    take_string(j, "apf_filter", filter, used);
    f.filter = filter_shape_from_string(filter);
    std::string estimator = to_string(f.estimator);
    take_string(j, "apf_estimator", estimator, used);
    f.estimator = estimator_from_string(estimator);
    take(j, "apf_alpha", f.alpha, used);
    std::string encoder = to_string(f.encoder);
    take_string(j, "apf_encoder", encoder, used);
    f.encoder = encoder_mode_from_string(encoder);
    take(j, "apf_icm_features", f.icm_features, used);
    take(j, "apf_icm_hidden", f.icm_hidden, used);
    take(j, "apf_icm_epochs", f.icm_epochs, used);
    take(j, "apf_icm_learning_rate", f.icm_learning_rate, used);
    take(j, "apf_icm_forward_weight", f.icm_forward_weight, used);
    take(j, "apf_icm_seed", f.icm_seed, used);

    take(j, "timesteps", p.exp.timesteps, used);
    take(j, "eval_episodes", p.exp.eval_episodes, used);
    take(j, "max_rounds", p.exp.max_rounds, used);
    take(j, "cumulative", p.exp.cumulative, used);

    if (strict)
        for (auto it = j.begin(); it != j.end(); ++it)
            if (!used.count(it.key())) throw ValidationError("unknown config key '" + it.key() + "'");
    a.validate();
    f.validate();
    if (p.exp.timesteps <= 0) throw ValidationError("timesteps must be positive");
    if (p.exp.eval_episodes < 0) throw ValidationError("eval_episodes must be >= 0");
    if (p.exp.max_rounds < 1) throw ValidationError("max_rounds must be >= 1");
    return p;
}

}  // namespace

ExperimentConfig parse_experiment_config(const json& j) {
    auto p = parse_all(j, true);
    p.exp.agent = p.agent;
    p.exp.apf = p.apf;
    return p.exp;
}

ExperimentConfig parse_experiment_config_text(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        // the parser reports a byte offset; convert it to line and column
        int line = 1, col = 1;
        for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw ParseError("invalid JSON config", line, col);
    }
    return parse_experiment_config(j);
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_experiment_config_text(ss.str());
}

json to_json(const AgentConfig& a) {
    json j;
    j["agent"] = to_string(a.kind);
    j["discount"] = a.discount;
    j["learning_rate"] = a.learning_rate;
    j["q_learning_rate"] = a.q_learning_rate;
    j["epsilon_start"] = a.epsilon_start;
    j["epsilon_end"] = a.epsilon_end;
    j["epsilon_decay"] = a.epsilon_decay;
    j["horizon"] = a.horizon;
    j["num_minibatch"] = a.num_minibatch;
    j["num_epochs"] = a.num_epochs;
    j["gae_lambda"] = a.gae_lambda;
    j["clipping_param"] = a.clipping_param;
    j["entropy_coeff"] = a.entropy_coeff;
    j["vf_coeff"] = a.vf_coeff;
    j["max_grad_norm"] = a.max_grad_norm;
    j["num_actors"] = a.num_actors;
    j["hidden"] = a.hidden;
    j["observation_block"] = a.observation.block;
    j["icm_state_features"] = a.icm_state_features;
    j["cts_filter"] = to_string(a.cts_filter);
    j["exploration"] = to_string(a.exploration.kind);
    if (a.exploration.kind == ExplorationKind::PseudoCount) j["cts_beta"] = a.exploration.beta;
    if (a.exploration.kind == ExplorationKind::Curiosity) j["icm_beta"] = a.exploration.beta;
    return j;
}

json to_json(const APFConfig& f) {
    json j;
    j["apf_backend"] = to_string(f.backend);
    j["apf_beta"] = f.beta;
    j["pos_cap"] = f.pos_cap;
    j["neg_cap"] = f.neg_cap;
    j["apf_block"] = f.render.block;
    j["apf_filter"] = to_string(f.filter);
    j["apf_estimator"] = to_string(f.estimator);
    j["apf_alpha"] = f.alpha;
    j["apf_encoder"] = to_string(f.encoder);
    j["apf_icm_features"] = f.icm_features;
    j["apf_icm_hidden"] = f.icm_hidden;
    j["apf_icm_epochs"] = f.icm_epochs;
    j["apf_icm_learning_rate"] = f.icm_learning_rate;
    j["apf_icm_forward_weight"] = f.icm_forward_weight;
    j["apf_icm_seed"] = f.icm_seed;
    return j;
}

json to_json(const ExperimentConfig& c) {
    json j = to_json(c.agent);
    j.update(to_json(c.apf));
    j["timesteps"] = c.timesteps;
    j["eval_episodes"] = c.eval_episodes;
    j["max_rounds"] = c.max_rounds;
    j["cumulative"] = c.cumulative;
    return j;
}

AgentConfig agent_config_from_json(const json& j) { return parse_all(j, false).agent; }
APFConfig apf_config_from_json(const json& j) { return parse_all(j, false).apf; }

}  // namespace playtest
