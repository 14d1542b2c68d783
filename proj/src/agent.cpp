#include "playtest/agent.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>

#include "json.hpp"
#include "playtest/binary_io.hpp"
#include "playtest/config.hpp"

namespace playtest {

namespace {

constexpr std::uint32_t kPolicyVersion = 1;

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    Rng r(a ^ (b * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL));
    return r.next_u64();
}

int argmax(const double* v, int n) {
    int best = 0;
    for (int i = 1; i < n; ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

bool true_terminal(const GameState& s) {
    return s.termination_cause == TerminationCause::ExitDoor || s.termination_cause == TerminationCause::Death;
}

Eigen::MatrixXd xavier(int rows, int cols, Rng& rng, double gain = 1.0) {
    Eigen::MatrixXd m(rows, cols);
    const double s = gain * std::sqrt(6.0 / (rows + cols));
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = (2.0 * rng.uniform() - 1.0) * s;
    return m;
}

template <typename M>
void put(Eigen::VectorXd& flat, Eigen::Index& o, const M& m) {
    flat.segment(o, m.size()) = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
    o += m.size();
}

template <typename M>
void get(const Eigen::VectorXd& flat, Eigen::Index& o, M& m) {
    Eigen::Map<Eigen::VectorXd>(m.data(), m.size()) = flat.segment(o, m.size());
    o += m.size();
}

// Column-wise softmax with max shift.
Eigen::MatrixXd softmax(const Eigen::MatrixXd& logits) {
    Eigen::MatrixXd p(logits.rows(), logits.cols());
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
        const double m = logits.col(j).maxCoeff();
        const Eigen::VectorXd e = (logits.col(j).array() - m).exp();
        p.col(j) = e / e.sum();
    }
    return p;
}

// Mutable per-episode world: state, persona progress, APF budget.
struct Env {
    const LevelSpec* level = nullptr;
    DevelopingPersona persona;
    GameState state;
    Rng rng;
    std::uint64_t env_seed = 0;
    CapLedger ledger;
    std::vector<GoalActivation> trace;
    std::vector<TrajectoryStep> steps;
    double env_return = 0.0;
    double train_return = 0.0;
    double exploration_total = 0.0;
    double apf_total = 0.0;

    void reset(const LevelSpec& lv, const DevelopingPersona& base, std::uint64_t seed, const ApfModulator* apf) {
        level = &lv;
        persona = base;
        persona.reset();
        state = initial_state(lv);
        rng = Rng(seed);
        env_seed = seed;
        if (apf) ledger.reset(apf->config());
        steps.clear();
        persona.advance(InteractionLedger::from_state(lv, state));
        trace.assign(1, GoalActivation{0, persona.cursor(), persona.coactive()});
        env_return = train_return = exploration_total = apf_total = 0.0;
    }
};

// Raw APF feedback memoised on (world, action, world'); the modulator is
// immutable so the value never changes.
class ApfCache {
public:
    explicit ApfCache(const ApfModulator* apf) : apf_(apf) {}

    double raw(const LevelSpec& level, const GameState& prev, Action a, const GameState& next) {
        Fnv1a h;
        h.add_value(world_key(prev));
        h.add_value(index_of(a));
        h.add_value(world_key(next));
        const auto key = h.value();
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
        const auto& rc = apf_->config().render;
        const double v = apf_->raw_feedback(render(level, prev, rc), a, render(level, next, rc));
        cache_.emplace(key, v);
        return v;
    }

private:
    const ApfModulator* apf_;
    std::unordered_map<std::uint64_t, double> cache_;
};

class ExplorationModel {
public:
    ExplorationModel(const AgentConfig& config, const LevelSpec& level) : config_(config) {
        const auto frame = render(level, initial_state(level), config.observation);
        if (config.exploration.kind == ExplorationKind::PseudoCount) {
            DensityConfig dc;
            dc.width = frame.width;
            dc.height = frame.height;
            dc.filter = ContextFilter::from_shape(config.cts_filter);
            dc.estimator = EstimatorKind::LaplaceTable;
            density_.emplace(dc);
        } else if (config.exploration.kind == ExplorationKind::Curiosity) {
            IcmConfig ic;
            ic.seed = 0x1c3;
            icm_.emplace(Icm::create(
                FeatureEncoder::random_projection(frame.width, frame.height, config.icm_state_features, 0x1c3), ic));
        }
    }

    bool active() const { return config_.exploration.kind != ExplorationKind::None; }

    double bonus(const LevelSpec& level, const GameState& prev, Action a, const GameState& next) {
        switch (config_.exploration.kind) {
            case ExplorationKind::None: return 0.0;
            case ExplorationKind::PseudoCount:
                return pseudo_count_bonus(*density_, render(level, next, config_.observation), config_.exploration.beta);
            case ExplorationKind::Curiosity: {
                Transition t{render(level, prev, config_.observation), a, render(level, next, config_.observation)};
                const double q = prediction_error(*icm_, t.frame, t.action, t.next_frame);
                pending_.push_back(std::move(t));
                return curiosity_bonus(q, config_.exploration.beta);
            }
        }
        return 0.0;
    }

    void end_episode() {
        if (icm_ && !pending_.empty()) {
            IcmTrainConfig tc;
            tc.epochs = 1;
            train_icm(*icm_, pending_, tc);
        }
        pending_.clear();
    }

private:
    AgentConfig config_;
    std::optional<DensityModel> density_;
    std::optional<Icm> icm_;
    std::vector<Transition> pending_;
};

struct StepOut {
    Action action = Action::NoOp;
    EventSet events;
    double env_reward = 0.0;
    double exploration = 0.0;
    double apf = 0.0;
    double train_reward = 0.0;
    bool done = false;
};

StepOut env_step(Env& env, Action a, ExplorationModel* explore, ApfCache* apf_cache) {
    const LevelSpec& level = *env.level;
    const GameState prev = env.state;
    auto res = step(level, prev, a, env.rng);
    StepOut out;
    out.action = a;
    out.events = res.events;
    out.env_reward = env.persona.reward(res.events) - level.step_penalty;
    const int cursor = env.persona.cursor();
    const bool coactive = env.persona.coactive();
    env.persona.advance(InteractionLedger::from_state(level, res.state));
    if (env.persona.cursor() != cursor || env.persona.coactive() != coactive)
        env.trace.push_back({res.state.t, env.persona.cursor(), env.persona.coactive()});
    if (explore) out.exploration = explore->bonus(level, prev, a, res.state);
    if (apf_cache) out.apf = env.ledger.spend(apf_cache->raw(level, prev, a, res.state));
    out.train_reward = out.env_reward + out.exploration + out.apf;
    if (!std::isfinite(out.train_reward))
        throw DivergenceError("non-finite reward at t=" + std::to_string(prev.t) + " (env " +
                              std::to_string(out.env_reward) + ", exploration " + std::to_string(out.exploration) + ")");
    env.state = std::move(res.state);
    out.done = env.state.terminal();
    env.steps.push_back({a, out.events, out.env_reward, out.apf, env.state.avatar_pos});
    env.env_return += out.env_reward;
    env.train_return += out.train_reward;
    env.exploration_total += out.exploration;
    env.apf_total += out.apf;
    return out;
}

EpisodeRecord finish_record(const Env& env, int episode) {
    EpisodeRecord r;
    r.episode = episode;
    r.steps = static_cast<int>(env.steps.size());
    r.env_return = env.env_return;
    r.train_return = env.train_return;
    r.exploration_total = env.exploration_total;
    r.apf_total = env.apf_total;
    for (const auto& s : env.steps) {
        r.kills += s.events.contains(GameEvent::MonsterKilled) ? 1 : 0;
        r.treasures += s.events.contains(GameEvent::TreasureCollected) ? 1 : 0;
    }
    r.termination = env.state.termination_cause;
    r.goal_trace = env.trace;
    return r;
}

void check_budget(long budget) {
    if (budget <= 0) throw ValidationError("training budget must be positive, got " + std::to_string(budget));
}

TrainResult train_tabular(const AgentConfig& config, const LevelSpec& level, const RewardStack& rewards,
                          std::uint64_t seed, long budget) {
    const auto frame = render(level, initial_state(level), config.observation);
    TrainResult result{Policy(config, static_cast<int>(rewards.persona.goals().size()), frame.width, frame.height), {}};
    auto& q = result.policy.q_table();
    if (rewards.apf) result.policy.set_cap_bins(kCapBins);
    const Policy& policy = result.policy;
    Rng rng(seed);
    std::optional<ExplorationModel> explore;
    if (config.exploration.kind != ExplorationKind::None) explore.emplace(config, level);
    std::optional<ApfCache> apf_cache;
    if (rewards.apf) apf_cache.emplace(rewards.apf.get());

    const double decay_steps = std::max(1.0, config.epsilon_decay * static_cast<double>(budget));
    long steps = 0;
    int episode = 0;
    Env env;
    while (steps < budget) {
        env.reset(level, rewards.persona, mix_seed(seed, static_cast<std::uint64_t>(episode)), rewards.apf.get());
        while (!env.state.terminal() && steps < budget) {
            const double frac = std::min(1.0, static_cast<double>(steps) / decay_steps);
            const double eps = config.epsilon_start + (config.epsilon_end - config.epsilon_start) * frac;
            const CapLedger* ledger = rewards.apf ? &env.ledger : nullptr;
            const auto key = policy.table_key(env.state, env.persona, ledger);
            QValues& qs = q[key];
            int a;
            if (rng.uniform() < eps)
                a = static_cast<int>(rng.uniform_int(kNumActions));
            else
                a = argmax(qs.data(), kNumActions);
            const StepOut out = env_step(env, action_from_index(a), explore ? &*explore : nullptr,
                                         apf_cache ? &*apf_cache : nullptr);
            ++steps;
            double target = out.train_reward;
            if (!true_terminal(env.state)) {
                const QValues& next = q[policy.table_key(env.state, env.persona, ledger)];
                target += config.discount * *std::max_element(next.begin(), next.end());
            }
            // q[...] above may rehash; re-fetch the entry.
            QValues& cur = q[key];
            cur[static_cast<std::size_t>(a)] += config.q_learning_rate * (target - cur[static_cast<std::size_t>(a)]);
            if (!std::isfinite(cur[static_cast<std::size_t>(a)]))
                throw DivergenceError("Q value became non-finite in episode " + std::to_string(episode));
        }
        if (explore) explore->end_episode();
        result.log.push_back(finish_record(env, episode));
        ++episode;
    }
    return result;
}

TrainResult train_ppo(const AgentConfig& config, const LevelSpec& level, const RewardStack& rewards, std::uint64_t seed,
                      long budget) {
    const auto frame = render(level, initial_state(level), config.observation);
    TrainResult result{Policy(config, static_cast<int>(rewards.persona.goals().size()), frame.width, frame.height), {}};
    Policy& policy = result.policy;
    Rng rng(seed);
    policy.network() = ActorCritic::init(policy.input_dim(), config.hidden, rng);
    AdamState adam;
    std::optional<ExplorationModel> explore;
    if (config.exploration.kind != ExplorationKind::None) explore.emplace(config, level);
    std::optional<ApfCache> apf_cache;
    if (rewards.apf) apf_cache.emplace(rewards.apf.get());

    const int n_actors = config.num_actors;
    std::vector<Env> envs(static_cast<std::size_t>(n_actors));
    int next_episode = 0;
    std::vector<int> episode_of(static_cast<std::size_t>(n_actors));
    for (int i = 0; i < n_actors; ++i) {
        episode_of[static_cast<std::size_t>(i)] = next_episode;
        envs[static_cast<std::size_t>(i)].reset(level, rewards.persona,
                                                mix_seed(seed, static_cast<std::uint64_t>(next_episode++)),
                                                rewards.apf.get());
    }
    const int dim = policy.input_dim();
    auto features_of = [&](const Env& e) { return policy.features(level, e.state, e.persona); };

    long steps = 0;
    while (steps < budget) {
        const long remaining = budget - steps;
        const int horizon =
            static_cast<int>(std::min<long>(config.horizon, (remaining + n_actors - 1) / n_actors));
        const int n = horizon * n_actors;
        // actor-major layout: index = actor * horizon + t
        Eigen::MatrixXd obs(dim, n);
        std::vector<int> actions(static_cast<std::size_t>(n));
        std::vector<double> logp(static_cast<std::size_t>(n)), rew(static_cast<std::size_t>(n)),
            val(static_cast<std::size_t>(n)), next_val(static_cast<std::size_t>(n));
        std::vector<bool> ends(static_cast<std::size_t>(n));

        Eigen::MatrixXd x(dim, n_actors);
        for (int i = 0; i < n_actors; ++i) x.col(i) = features_of(envs[static_cast<std::size_t>(i)]);
        for (int t = 0; t < horizon; ++t) {
            const auto c = policy.network().forward(x);
            const Eigen::MatrixXd probs = softmax(c.logits);
            Eigen::MatrixXd xn(dim, n_actors);
            std::vector<bool> terminal(static_cast<std::size_t>(n_actors));
            for (int i = 0; i < n_actors; ++i) {
                const auto idx = static_cast<std::size_t>(i * horizon + t);
                const double u = rng.uniform();
                int a = kNumActions - 1;
                double acc = 0.0;
                for (int k = 0; k < kNumActions; ++k) {
                    acc += probs(k, i);
                    if (u < acc) {
                        a = k;
                        break;
                    }
                }
                obs.col(static_cast<Eigen::Index>(idx)) = x.col(i);
                actions[idx] = a;
                logp[idx] = std::log(std::max(probs(a, i), 1e-300));
                val[idx] = c.values(i);
                auto& e = envs[static_cast<std::size_t>(i)];
                const StepOut out = env_step(e, action_from_index(a), explore ? &*explore : nullptr,
                                             apf_cache ? &*apf_cache : nullptr);
                rew[idx] = out.train_reward;
                ends[idx] = out.done;
                terminal[static_cast<std::size_t>(i)] = true_terminal(e.state);
                xn.col(i) = features_of(e);
            }
            steps += n_actors;
            const auto cn = policy.network().forward(xn);
            for (int i = 0; i < n_actors; ++i) {
                const auto idx = static_cast<std::size_t>(i * horizon + t);
                next_val[idx] = terminal[static_cast<std::size_t>(i)] ? 0.0 : cn.values(i);
                auto& e = envs[static_cast<std::size_t>(i)];
                if (ends[idx]) {
                    if (explore) explore->end_episode();
                    result.log.push_back(finish_record(e, episode_of[static_cast<std::size_t>(i)]));
                    episode_of[static_cast<std::size_t>(i)] = next_episode;
                    e.reset(level, rewards.persona, mix_seed(seed, static_cast<std::uint64_t>(next_episode++)),
                            rewards.apf.get());
                    xn.col(i) = features_of(e);
                }
            }
            x = std::move(xn);
        }
        // rollout boundary cuts every actor's chain
        for (int i = 0; i < n_actors; ++i) ends[static_cast<std::size_t>(i * horizon + horizon - 1)] = true;
        const auto gae = compute_gae(rew, val, next_val, ends, config.discount, config.gae_lambda);
        RolloutBatch batch{std::move(obs), std::move(actions), std::move(logp), gae.advantages, gae.returns};
        if (batch.size() < config.num_minibatch) break;
        ppo_update(policy.network(), adam, batch, config, rng);
    }
    return result;
}

}  // namespace

const char* to_string(AgentKind k) { return k == AgentKind::TabularQ ? "TabularQ" : "PPO"; }

AgentKind agent_kind_from_string(std::string_view s) {
    if (s == "TabularQ" || s == "tabular" || s == "q") return AgentKind::TabularQ;
    if (s == "PPO" || s == "ppo") return AgentKind::PPO;
    throw ValidationError("unknown agent kind '" + std::string(s) + "'");
}

const char* to_string(ExplorationKind k) {
    switch (k) {
        case ExplorationKind::None: return "None";
        case ExplorationKind::PseudoCount: return "PseudoCount";
        case ExplorationKind::Curiosity: return "Curiosity";
    }
    return "?";
}

ExplorationKind exploration_from_string(std::string_view s) {
    if (s == "None" || s == "none") return ExplorationKind::None;
    if (s == "PseudoCount" || s == "cts") return ExplorationKind::PseudoCount;
    if (s == "Curiosity" || s == "icm") return ExplorationKind::Curiosity;
    throw ValidationError("unknown exploration '" + std::string(s) + "'");
}

void AgentConfig::validate() const {
    if (!(discount > 0.0 && discount <= 1.0)) throw ValidationError("discount must be in (0, 1]");
    if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
    if (!(q_learning_rate > 0.0 && q_learning_rate <= 1.0)) throw ValidationError("q_learning_rate must be in (0, 1]");
    if (epsilon_start < 0.0 || epsilon_start > 1.0 || epsilon_end < 0.0 || epsilon_end > 1.0)
        throw ValidationError("epsilon values must be in [0, 1]");
    if (!(epsilon_decay > 0.0)) throw ValidationError("epsilon_decay must be positive");
    if (horizon <= 0 || num_minibatch <= 0 || num_epochs <= 0) throw ValidationError("PPO sizes must be positive");
    if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw ValidationError("gae_lambda must be in [0, 1]");
    if (!(clipping_param > 0.0)) throw ValidationError("clipping_param must be positive");
    if (entropy_coeff < 0.0 || vf_coeff < 0.0) throw ValidationError("loss coefficients must be >= 0");
    if (!(max_grad_norm > 0.0)) throw ValidationError("max_grad_norm must be positive");
    if (num_actors < 1) throw ValidationError("num_actors must be >= 1");
    if (hidden <= 0) throw ValidationError("hidden must be positive");
    if (observation.block <= 0) throw ValidationError("observation block must be positive");
    if (icm_state_features <= 0) throw ValidationError("icm_state_features must be positive");
    if (exploration.kind != ExplorationKind::None && !(exploration.beta >= 0.0))
        throw ValidationError("exploration beta must be >= 0");
}

ActorCritic ActorCritic::init(int input_dim, int hidden, Rng& rng) {
    ActorCritic n;
    n.w1 = xavier(hidden, input_dim, rng);
    n.b1 = Eigen::VectorXd::Zero(hidden);
    n.w2 = xavier(hidden, hidden, rng);
    n.b2 = Eigen::VectorXd::Zero(hidden);
    n.wp = xavier(kNumActions, hidden, rng, 0.01);
    n.bp = Eigen::VectorXd::Zero(kNumActions);
    n.wv = xavier(1, hidden, rng);
    n.bv = Eigen::VectorXd::Zero(1);
    return n;
}

Eigen::Index ActorCritic::parameter_count() const {
    return w1.size() + b1.size() + w2.size() + b2.size() + wp.size() + bp.size() + wv.size() + bv.size();
}

Eigen::VectorXd ActorCritic::parameters() const {
    Eigen::VectorXd p(parameter_count());
    Eigen::Index o = 0;
    put(p, o, w1);
    put(p, o, b1);
    put(p, o, w2);
    put(p, o, b2);
    put(p, o, wp);
    put(p, o, bp);
    put(p, o, wv);
    put(p, o, bv);
    return p;
}

void ActorCritic::set_parameters(const Eigen::VectorXd& flat) {
    if (flat.size() != parameter_count()) throw DimensionError("parameter vector size mismatch");
    Eigen::Index o = 0;
    get(flat, o, w1);
    get(flat, o, b1);
    get(flat, o, w2);
    get(flat, o, b2);
    get(flat, o, wp);
    get(flat, o, bp);
    get(flat, o, wv);
    get(flat, o, bv);
}

ActorCritic::Cache ActorCritic::forward(const Eigen::MatrixXd& x) const {
    if (x.rows() != w1.cols()) throw DimensionError("network input has the wrong size");
    Cache c;
    c.x = x;
    c.h1 = ((w1 * x).colwise() + b1).array().tanh().matrix();
    c.h2 = ((w2 * c.h1).colwise() + b2).array().tanh().matrix();
    c.logits = (wp * c.h2).colwise() + bp;
    c.values = ((wv * c.h2).colwise() + bv).row(0);
    return c;
}

Eigen::VectorXd ActorCritic::backward(const Cache& c, const Eigen::MatrixXd& d_logits,
                                      const Eigen::RowVectorXd& d_values) const {
    const Eigen::MatrixXd d_wp = d_logits * c.h2.transpose();
    const Eigen::VectorXd d_bp = d_logits.rowwise().sum();
    const Eigen::MatrixXd d_wv = d_values * c.h2.transpose();
    Eigen::VectorXd d_bv(1);
    d_bv[0] = d_values.sum();
    const Eigen::MatrixXd d_h2 = wp.transpose() * d_logits + wv.transpose() * d_values;
    const Eigen::MatrixXd d_a2 = d_h2.array() * (1.0 - c.h2.array().square());
    const Eigen::MatrixXd d_w2 = d_a2 * c.h1.transpose();
    const Eigen::VectorXd d_b2 = d_a2.rowwise().sum();
    const Eigen::MatrixXd d_a1 = (w2.transpose() * d_a2).array() * (1.0 - c.h1.array().square());
    const Eigen::MatrixXd d_w1 = d_a1 * c.x.transpose();
    const Eigen::VectorXd d_b1 = d_a1.rowwise().sum();
    Eigen::VectorXd g(parameter_count());
    Eigen::Index o = 0;
    put(g, o, d_w1);
    put(g, o, d_b1);
    put(g, o, d_w2);
    put(g, o, d_b2);
    put(g, o, d_wp);
    put(g, o, d_bp);
    put(g, o, d_wv);
    put(g, o, d_bv);
    return g;
}

bool ActorCritic::operator==(const ActorCritic& o) const {
    auto same = [](const auto& a, const auto& b) { return a.rows() == b.rows() && a.cols() == b.cols() && a == b; };
    return same(w1, o.w1) && same(b1, o.b1) && same(w2, o.w2) && same(b2, o.b2) && same(wp, o.wp) &&
           same(bp, o.bp) && same(wv, o.wv) && same(bv, o.bv);
}

std::uint64_t world_key(const GameState& s) {
    Fnv1a h;
    h.add_value(s.avatar_pos.row);
    h.add_value(s.avatar_pos.col);
    h.add_value(static_cast<int>(s.avatar_facing));
    for (const auto& m : s.monsters) {
        h.add_value(m.alive);
        h.add_value(m.pos.row);
        h.add_value(m.pos.col);
    }
    for (bool t : s.treasures) h.add_value(t);
    return h.value();
}

std::uint64_t state_key(const GameState& s, const DevelopingPersona& persona, int budget_bin) {
    Fnv1a h;
    h.add_value(world_key(s));
    h.add_value(s.avatar_hp);
    h.add_value(persona.cursor());
    h.add_value(persona.coactive());
    if (budget_bin >= 0) h.add_value(budget_bin);
    return h.value();
}

std::uint64_t Policy::table_key(const GameState& state, const DevelopingPersona& persona,
                                const CapLedger* ledger) const {
    if (cap_bins_ == 0) return state_key(state, persona);
    return state_key(state, persona, ledger ? ledger->pos_bin(cap_bins_) : cap_bins_);
}

Policy::Policy(AgentConfig config, int goal_count, int frame_width, int frame_height)
    : config_(std::move(config)), goal_count_(goal_count), frame_width_(frame_width), frame_height_(frame_height) {
    config_.validate();
    if (goal_count_ < 1) throw ValidationError("policy needs at least one goal");
}

Eigen::VectorXd Policy::features(const LevelSpec& level, const GameState& state, const DevelopingPersona& persona) const {
    const auto frame = render(level, state, config_.observation);
    if (frame.width != frame_width_ || frame.height != frame_height_)
        throw DimensionError("level renders to " + std::to_string(frame.width) + "x" + std::to_string(frame.height) +
                             ", policy expects " + std::to_string(frame_width_) + "x" + std::to_string(frame_height_));
    Eigen::VectorXd x = Eigen::VectorXd::Zero(input_dim());
    const auto np = static_cast<Eigen::Index>(frame.pixels.size());
    for (Eigen::Index i = 0; i < np; ++i) x[i] = frame.pixels[static_cast<std::size_t>(i)] / 7.0;
    x[np + static_cast<int>(state.avatar_facing)] = 1.0;
    x[np + 4 + std::min(persona.cursor(), goal_count_ - 1)] = 1.0;
    x[np + 4 + goal_count_] = persona.coactive() ? 1.0 : 0.0;
    return x;
}

std::array<double, kNumActions> Policy::action_probs(const LevelSpec& level, const GameState& state,
                                                     const DevelopingPersona& persona, const CapLedger* ledger) const {
    std::array<double, kNumActions> out{};
    if (config_.kind == AgentKind::TabularQ) {
        auto it = q_.find(table_key(state, persona, ledger));
        const QValues zeros{};
        const QValues& qs = it == q_.end() ? zeros : it->second;
        out[static_cast<std::size_t>(argmax(qs.data(), kNumActions))] = 1.0;
        return out;
    }
    const auto c = net_.forward(features(level, state, persona));
    const Eigen::MatrixXd p = softmax(c.logits);
    for (int k = 0; k < kNumActions; ++k) out[static_cast<std::size_t>(k)] = p(k, 0);
    return out;
}

Action Policy::act(const LevelSpec& level, const GameState& state, const DevelopingPersona& persona,
                   const CapLedger* ledger) const {
    if (config_.kind == AgentKind::TabularQ) {
        auto it = q_.find(table_key(state, persona, ledger));
        if (it == q_.end()) return action_from_index(0);
        return action_from_index(argmax(it->second.data(), kNumActions));
    }
    const auto c = net_.forward(features(level, state, persona));
    return action_from_index(argmax(c.logits.data(), kNumActions));
}

void Policy::save(std::ostream& out) const {
    io::Writer w(out);
    w.header("PTAG", kPolicyVersion);
    w.string(to_json(config_).dump());
    w.pod(static_cast<std::int32_t>(goal_count_));
    w.pod(static_cast<std::int32_t>(frame_width_));
    w.pod(static_cast<std::int32_t>(frame_height_));
    w.pod(static_cast<std::int32_t>(cap_bins_));
    if (config_.kind == AgentKind::TabularQ) {
        std::vector<std::uint64_t> keys;
        keys.reserve(q_.size());
        for (const auto& [k, v] : q_) keys.push_back(k);
        std::sort(keys.begin(), keys.end());
        w.pod(static_cast<std::uint64_t>(keys.size()));
        for (auto k : keys) {
            w.pod(k);
            w.pod(q_.at(k));
        }
    } else {
        const Eigen::VectorXd p = net_.parameters();
        w.pod(static_cast<std::int32_t>(net_.w1.rows()));
        w.pod(static_cast<std::int32_t>(net_.w1.cols()));
        w.vector(std::vector<double>(p.data(), p.data() + p.size()));
    }
}

Policy Policy::load(std::istream& in) {
    io::Reader r(in);
    r.header("PTAG", kPolicyVersion);
    AgentConfig config;
    try {
        config = agent_config_from_json(nlohmann::json::parse(r.string()));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("policy file has a corrupt config: ") + e.what());
    }
    const int goals = r.pod<std::int32_t>();
    const int fw = r.pod<std::int32_t>();
    const int fh = r.pod<std::int32_t>();
    Policy p(config, goals, fw, fh);
    p.cap_bins_ = r.pod<std::int32_t>();
    if (p.cap_bins_ < 0) throw FormatError("negative cap bin count in policy file");
    if (config.kind == AgentKind::TabularQ) {
        const auto n = r.pod<std::uint64_t>();
        for (std::uint64_t i = 0; i < n; ++i) {
            const auto k = r.pod<std::uint64_t>();
            p.q_[k] = r.pod<QValues>();
        }
    } else {
        const int hidden = r.pod<std::int32_t>();
        const int input = r.pod<std::int32_t>();
        if (input != p.input_dim()) throw FormatError("policy network input size does not match its metadata");
        Rng dummy(0);
        p.net_ = ActorCritic::init(input, hidden, dummy);
        auto flat = r.vector<double>();
        if (static_cast<Eigen::Index>(flat.size()) != p.net_.parameter_count())
            throw FormatError("policy network parameter count mismatch");
        p.net_.set_parameters(Eigen::Map<Eigen::VectorXd>(flat.data(), static_cast<Eigen::Index>(flat.size())));
    }
    return p;
}

void Policy::save_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    save(out);
    if (!out) throw IoError("write failed for " + path);
}

Policy Policy::load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    return load(in);
}

bool Policy::operator==(const Policy& o) const {
    return config_ == o.config_ && goal_count_ == o.goal_count_ && frame_width_ == o.frame_width_ &&
           frame_height_ == o.frame_height_ && cap_bins_ == o.cap_bins_ && q_ == o.q_ && net_ == o.net_;
}

TrainResult train(const AgentConfig& config, const LevelSpec& level, const RewardStack& rewards, std::uint64_t seed,
                  long budget) {
    check_budget(budget);
    config.validate();
    level.validate();
    if (config.kind == AgentKind::TabularQ) return train_tabular(config, level, rewards, seed, budget);
    return train_ppo(config, level, rewards, seed, budget);
}

void write_training_log(std::ostream& out, const std::vector<EpisodeRecord>& log) {
    for (const auto& r : log) {
        nlohmann::json j;
        j["episode"] = r.episode;
        j["steps"] = r.steps;
        j["env_return"] = r.env_return;
        j["train_return"] = r.train_return;
        j["exploration_total"] = r.exploration_total;
        j["apf_total"] = r.apf_total;
        j["kills"] = r.kills;
        j["treasures"] = r.treasures;
        j["termination"] = to_string(r.termination);
        auto trace = nlohmann::json::array();
        for (const auto& g : r.goal_trace) trace.push_back({g.t, g.cursor, g.coactive});
        j["goal_trace"] = trace;
        out << j.dump() << '\n';
    }
}

MeanSd mean_sd(const std::vector<double>& xs) {
    MeanSd r;
    if (xs.empty()) return r;
    r.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    if (xs.size() < 2) return r;
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    return r;
}

EvaluationResult evaluate(const Policy& policy, const LevelSpec& level, const RewardStack& rewards, std::uint64_t seed,
                          int episodes) {
    if (episodes < 1) throw ValidationError("evaluate needs at least one episode");
    const double gamma = policy.config().discount;
    std::optional<ApfCache> apf_cache;
    if (rewards.apf) apf_cache.emplace(rewards.apf.get());
    EvaluationResult res;
    std::vector<double> kills, treasures, doors, deaths, env_ret, mod_ret;
    Env env;
    for (int ep = 0; ep < episodes; ++ep) {
        const std::uint64_t env_seed = mix_seed(seed ^ 0x5eed, static_cast<std::uint64_t>(ep));
        env.reset(level, rewards.persona, env_seed, rewards.apf.get());
        const CapLedger* ledger = rewards.apf ? &env.ledger : nullptr;
        while (!env.state.terminal())
            env_step(env, policy.act(level, env.state, env.persona, ledger), nullptr, apf_cache ? &*apf_cache : nullptr);
        Trajectory t;
        t.level_name = level.name;
        t.level_hash = level_hash(level);
        t.persona = rewards.persona.name();
        t.seed = seed;
        t.env_seed = env_seed;
        t.start = level.avatar_start;
        t.steps = env.steps;
        t.goal_trace = env.trace;
        t.termination = env.state.termination_cause;
        EpisodeSummary s;
        s.kills = t.count(GameEvent::MonsterKilled);
        s.treasures = t.count(GameEvent::TreasureCollected);
        s.door = t.termination == TerminationCause::ExitDoor;
        s.death = t.termination == TerminationCause::Death;
        s.termination = t.termination;
        s.env_return = t.discounted_env_return(gamma);
        s.modulated_return = t.discounted_modulated_return(gamma);
        kills.push_back(s.kills);
        treasures.push_back(s.treasures);
        doors.push_back(s.door ? 1.0 : 0.0);
        deaths.push_back(s.death ? 1.0 : 0.0);
        env_ret.push_back(s.env_return);
        mod_ret.push_back(s.modulated_return);
        res.episodes.push_back(s);
        res.trajectories.push_back(std::move(t));
    }
    res.kills = mean_sd(kills);
    res.treasures = mean_sd(treasures);
    res.doors = mean_sd(doors);
    res.deaths = mean_sd(deaths);
    res.env_return = mean_sd(env_ret);
    res.modulated_return = mean_sd(mod_ret);
    return res;
}

GaeResult compute_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                      const std::vector<double>& next_values, const std::vector<bool>& episode_end, double gamma,
                      double lambda) {
    const std::size_t n = rewards.size();
    if (values.size() != n || next_values.size() != n || episode_end.size() != n)
        throw DimensionError("GAE inputs must have equal lengths");
    GaeResult r;
    r.advantages.assign(n, 0.0);
    r.returns.assign(n, 0.0);
    double running = 0.0;
    for (std::size_t k = n; k-- > 0;) {
        if (episode_end[k]) running = 0.0;
        const double delta = rewards[k] + gamma * next_values[k] - values[k];
        running = delta + gamma * lambda * running;
        r.advantages[k] = running;
        r.returns[k] = running + values[k];
    }
    return r;
}

PpoStats ppo_update(ActorCritic& net, AdamState& adam, const RolloutBatch& batch, const AgentConfig& config, Rng& rng) {
    const int n = batch.size();
    if (n < config.num_minibatch)
        throw ContractViolation("batch of " + std::to_string(n) + " is smaller than num_minibatch " +
                                std::to_string(config.num_minibatch));
    if (batch.observations.cols() != n || static_cast<int>(batch.advantages.size()) != n ||
        static_cast<int>(batch.returns.size()) != n || static_cast<int>(batch.old_log_probs.size()) != n)
        throw DimensionError("rollout batch fields have different lengths");

    std::vector<double> adv = batch.advantages;
    {
        const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / n;
        double var = 0.0;
        for (double a : adv) var += (a - mean) * (a - mean);
        const double sd = std::sqrt(var / n);
        for (double& a : adv) a = (a - mean) / (sd + 1e-8);
    }

    const Eigen::Index np = net.parameter_count();
    if (adam.m.size() != np) {
        adam.m = Eigen::VectorXd::Zero(np);
        adam.v = Eigen::VectorXd::Zero(np);
        adam.t = 0;
    }
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-5;

    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    PpoStats stats;
    int updates = 0;
    const int mb = n / config.num_minibatch;
    for (int epoch = 0; epoch < config.num_epochs; ++epoch) {
        for (int i = n - 1; i > 0; --i)
            std::swap(order[static_cast<std::size_t>(i)], order[rng.uniform_int(static_cast<std::uint64_t>(i) + 1)]);
        for (int b = 0; b < config.num_minibatch; ++b) {
            const int start = b * mb;
            const int end = b + 1 == config.num_minibatch ? n : start + mb;
            const int m = end - start;
            Eigen::MatrixXd x(batch.observations.rows(), m);
            for (int k = 0; k < m; ++k) x.col(k) = batch.observations.col(order[static_cast<std::size_t>(start + k)]);
            const auto c = net.forward(x);
            const Eigen::MatrixXd probs = softmax(c.logits);
            Eigen::MatrixXd d_logits = Eigen::MatrixXd::Zero(kNumActions, m);
            Eigen::RowVectorXd d_values(m);
            double pg = 0.0, vl = 0.0, ent = 0.0, kl = 0.0;
            for (int k = 0; k < m; ++k) {
                const auto idx = static_cast<std::size_t>(order[static_cast<std::size_t>(start + k)]);
                const int a = batch.actions[idx];
                const double lp = std::log(std::max(probs(a, k), 1e-300));
                const double ratio = std::exp(lp - batch.old_log_probs[idx]);
                const double A = adv[idx];
                const double clipped = std::clamp(ratio, 1.0 - config.clipping_param, 1.0 + config.clipping_param);
                const double s1 = ratio * A, s2 = clipped * A;
                pg -= std::min(s1, s2);
                // the clipped branch has zero gradient when it is the active minimum
                const bool grad_flows = s1 <= s2 || clipped == ratio;
                const double d_lp = grad_flows ? -ratio * A / m : 0.0;
                double h = 0.0;
                for (int j = 0; j < kNumActions; ++j) {
                    const double pj = probs(j, k);
                    if (pj > 0.0) h -= pj * std::log(pj);
                }
                ent += h;
                for (int j = 0; j < kNumActions; ++j) {
                    const double pj = probs(j, k);
                    const double lpj = pj > 0.0 ? std::log(pj) : 0.0;
                    double g = d_lp * ((j == a ? 1.0 : 0.0) - pj);
                    // d(-c H)/dz_j = c p_j (log p_j + H)
                    g += config.entropy_coeff / m * pj * (lpj + h);
                    d_logits(j, k) = g;
                }
                const double diff = c.values(k) - batch.returns[idx];
                vl += 0.5 * diff * diff;
                d_values(k) = config.vf_coeff * diff / m;
                kl += batch.old_log_probs[idx] - lp;
            }
            pg /= m;
            vl /= m;
            ent /= m;
            kl /= m;
            const double loss = pg + config.vf_coeff * vl - config.entropy_coeff * ent;
            if (!std::isfinite(loss))
                throw DivergenceError("PPO loss became non-finite (policy " + std::to_string(pg) + ", value " +
                                      std::to_string(vl) + ")");
            Eigen::VectorXd g = net.backward(c, d_logits, d_values);
            const double norm = g.norm();
            if (!std::isfinite(norm)) throw DivergenceError("PPO gradient became non-finite");
            if (norm > config.max_grad_norm) g *= config.max_grad_norm / norm;
            stats.max_grad_norm_pre_clip = std::max(stats.max_grad_norm_pre_clip, norm);
            stats.max_grad_norm_post_clip = std::max(stats.max_grad_norm_post_clip, g.norm());
            ++adam.t;
            adam.m = b1 * adam.m + (1.0 - b1) * g;
            adam.v = b2 * adam.v + (1.0 - b2) * g.cwiseProduct(g);
            const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam.t));
            const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam.t));
            const Eigen::VectorXd step =
                config.learning_rate * (adam.m / c1).array() / ((adam.v / c2).array().sqrt() + eps);
            net.set_parameters(net.parameters() - step);
            stats.policy_loss += pg;
            stats.value_loss += vl;
            stats.entropy += ent;
            stats.approx_kl += kl;
            ++updates;
        }
    }
    stats.policy_loss /= updates;
    stats.value_loss /= updates;
    stats.entropy /= updates;
    stats.approx_kl /= updates;
    return stats;
}

FeatureEncoder transfer_encoder(const Policy& policy) {
    if (policy.kind() != AgentKind::PPO) throw ValidationError("only a PPO policy has layers to transfer");
    const int pixels = policy.frame_width() * policy.frame_height();
    const auto& net = policy.network();
    return FeatureEncoder::transferred(policy.frame_width(), policy.frame_height(), net.w1.leftCols(pixels), net.b1,
                                       Activation::Tanh);
}

}  // namespace playtest
