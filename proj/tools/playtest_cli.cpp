#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "playtest/config.hpp"
#include "playtest/harness.hpp"
#include "playtest/levels.hpp"

using namespace playtest;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Only the default output directory comes from the environment.
constexpr const char* kOutDirEnv = "PLAYTEST_OUT_DIR";

int exit_code(const std::string& category) {
    static const std::map<std::string, int> codes = {{"parse", 2},      {"validation", 3}, {"dimension", 4},
                                                     {"contract", 5},   {"format", 6},     {"divergence", 7},
                                                     {"io", 8},         {"usage", 64}};
    const auto it = codes.find(category);
    return it == codes.end() ? 70 : it->second;
}

int fail(const std::string& category, const std::string& message) {
    std::cerr << json{{"error", {{"category", category}, {"message", message}}}}.dump() << '\n';
    return exit_code(category);
}

struct Common {
    std::string level = "fig5";
    std::string persona = "Exit";
    std::uint64_t seed = 1;
    std::string config;
    std::string out;

    void add_to(CLI::App& cmd, bool with_persona = true) {
        cmd.add_option("--level", level, "builtin level name, builtin:<name>, or level file")->capture_default_str();
        if (with_persona) cmd.add_option("--persona", persona, "persona name or persona file")->capture_default_str();
        cmd.add_option("--seed", seed, "random seed")->capture_default_str();
        cmd.add_option("--config", config, "experiment config (JSON)");
        cmd.add_option("--out", out, std::string("output directory (default $") + kOutDirEnv + " or ./playtest-out)");
    }

    LevelSpec load_level() const {
        for (const auto& name : builtin_level_names())
            if (name == level) return builtin_level(level);
        return resolve_level(level);
    }

    // Flag overrides are merged into the raw config keys so they go through the same validation.
    ExperimentConfig experiment(const json& overrides) const {
        json j = json::object();
        if (!config.empty()) {
            std::ifstream in(config);
            if (!in) throw IoError("cannot open " + config);
            std::stringstream ss;
            ss << in.rdbuf();
            parse_experiment_config_text(ss.str());  // reports parse errors with line and column
            j = json::parse(ss.str());
        }
        for (const auto& [k, v] : overrides.items()) j[k] = v;
        return parse_experiment_config(j);
    }

    fs::path out_dir() const {
        fs::path dir = out;
        if (dir.empty()) {
            const char* env = std::getenv(kOutDirEnv);
            dir = env && *env ? env : "playtest-out";
        }
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
        return dir;
    }
};

void write_text(const fs::path& path, const std::string& text) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out || !(out << text)) throw IoError("cannot write " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

std::shared_ptr<const ApfModulator> load_apf(const std::string& path) {
    if (path.empty()) return nullptr;
    return std::make_shared<const ApfModulator>(ApfModulator::load_file(path));
}

json summary_json(const EvaluationResult& r) {
    auto ms = [](const MeanSd& m) { return json{{"mean", m.mean}, {"sd", m.sd}}; };
    return {{"episodes", r.episodes.size()},      {"kills", ms(r.kills)},
            {"treasures", ms(r.treasures)},       {"doors", ms(r.doors)},
            {"deaths", ms(r.deaths)},             {"env_return", ms(r.env_return)},
            {"modulated_return", ms(r.modulated_return)}};
}

int evaluation_count(const ExperimentConfig& c, const LevelSpec& level) {
    return c.eval_episodes > 0 ? c.eval_episodes : default_evaluation_count(level);
}

std::vector<Trajectory> select(const std::vector<Trajectory>& all, const std::vector<int>& indices) {
    if (indices.empty()) return all;
    std::vector<Trajectory> out;
    for (int i : indices) {
        if (i < 0 || i >= static_cast<int>(all.size()))
            throw ValidationError("path index " + std::to_string(i) + " outside [0, " + std::to_string(all.size()) + ")");
        out.push_back(all[static_cast<std::size_t>(i)]);
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Persona playtesting agents with alternative path finders"};
    app.require_subcommand(1);

    Common common;
    long budget = 0;
    int episodes = 0;
    std::string apf_path, policy_path, traj_path, backend;
    std::vector<int> indices;
    std::vector<std::string> personas;
    int rounds = 0;
    bool cumulative = false;

    auto* train_cmd = app.add_subcommand("train", "train an agent for a persona");
    common.add_to(*train_cmd);
    train_cmd->add_option("--budget", budget, "environment steps (overrides timesteps)");
    train_cmd->add_option("--apf", apf_path, "modulator bundle to shape rewards with");

    auto* eval_cmd = app.add_subcommand("evaluate", "evaluate a trained policy");
    common.add_to(*eval_cmd);
    eval_cmd->add_option("--policy", policy_path, "policy file from train")->required();
    eval_cmd->add_option("--episodes", episodes, "evaluation episodes (overrides eval_episodes)");
    eval_cmd->add_option("--apf", apf_path, "modulator bundle to report modulated returns with");

    auto* apf_cmd = app.add_subcommand("apf-train", "train an alternative path finder on stored paths");
    common.add_to(*apf_cmd, false);
    apf_cmd->add_option("--trajectories", traj_path, "trajectory file")->required();
    apf_cmd->add_option("--path", indices, "indices of the paths to train on (default all)");
    apf_cmd->add_option("--backend", backend, "CTS or ICM (overrides apf_backend)");
    apf_cmd->add_option("--policy", policy_path, "policy whose first layer supplies a transferred ICM encoder");

    auto* disc_cmd = app.add_subcommand("discover", "find alternative paths round by round");
    common.add_to(*disc_cmd);
    disc_cmd->add_option("--budget", budget, "environment steps per round (overrides timesteps)");
    disc_cmd->add_option("--rounds", rounds, "maximum rounds (overrides max_rounds)");
    disc_cmd->add_option("--backend", backend, "CTS or ICM (overrides apf_backend)");
    disc_cmd->add_flag("--cumulative", cumulative, "train each APF on every earlier path");

    auto* matrix_cmd = app.add_subcommand("matrix", "discounted return matrix over stored paths");
    common.add_to(*matrix_cmd, false);
    matrix_cmd->add_option("--trajectories", traj_path, "trajectory file")->required();
    matrix_cmd->add_option("--path", indices, "indices of the paths to include (default all)");
    matrix_cmd->add_option("--backend", backend, "CTS or ICM (overrides apf_backend)");

    auto* inter_cmd = app.add_subcommand("interactions", "train and evaluate personas, then tabulate interactions");
    common.add_to(*inter_cmd, false);
    inter_cmd->add_option("--persona", personas, "persona (repeatable; default the developing personas)");
    inter_cmd->add_option("--budget", budget, "environment steps per persona (overrides timesteps)");
    inter_cmd->add_option("--episodes", episodes, "evaluation episodes (overrides eval_episodes)");

    auto* render_cmd = app.add_subcommand("render", "draw stored paths over a level");
    common.add_to(*render_cmd, false);
    render_cmd->add_option("--trajectories", traj_path, "trajectory file (default: the bare level)");
    render_cmd->add_option("--path", indices, "indices of the paths to draw (default all)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("usage", e.what());
    }

    try {
        json overrides = json::object();
        if (budget > 0) overrides["timesteps"] = budget;
        if (episodes > 0) overrides["eval_episodes"] = episodes;
        if (rounds > 0) overrides["max_rounds"] = rounds;
        if (cumulative) overrides["cumulative"] = true;
        if (!backend.empty()) overrides["apf_backend"] = backend;
        const auto cfg = common.experiment(overrides);
        const auto level = common.load_level();

        if (*train_cmd) {
            const RewardStack rewards{resolve_persona(common.persona), load_apf(apf_path)};
            const auto result = train(cfg.agent, level, rewards, common.seed, cfg.timesteps);
            const auto dir = common.out_dir();
            result.policy.save_file((dir / "policy.bin").string());
            std::ostringstream log;
            write_training_log(log, result.log);
            write_text(dir / "train_log.jsonl", log.str());
            const auto eval = evaluate(result.policy, level, rewards, common.seed, evaluation_count(cfg, level));
            save_trajectories((dir / "trajectories.traj").string(), eval.trajectories);
            std::cout << json{{"policy", (dir / "policy.bin").string()}, {"episodes_trained", result.log.size()},
                              {"evaluation", summary_json(eval)}}
                             .dump()
                      << '\n';
        } else if (*eval_cmd) {
            const RewardStack rewards{resolve_persona(common.persona), load_apf(apf_path)};
            const auto policy = Policy::load_file(policy_path);
            const auto eval = evaluate(policy, level, rewards, common.seed, evaluation_count(cfg, level));
            const auto dir = common.out_dir();
            save_trajectories((dir / "trajectories.traj").string(), eval.trajectories);
            const json j = summary_json(eval);
            write_text(dir / "evaluation.json", j.dump(2) + "\n");
            std::cout << j.dump() << '\n';
        } else if (*apf_cmd) {
            const auto paths = select(load_trajectories(traj_path), indices);
            std::vector<FrameSequence> seqs;
            for (const auto& p : paths) seqs.push_back(replay_frames(level, p, cfg.apf.render));
            std::optional<FeatureEncoder> transferred;
            if (!policy_path.empty()) transferred = transfer_encoder(Policy::load_file(policy_path));
            const auto mod = train_apf(cfg.apf, seqs, {}, transferred);
            const auto dir = common.out_dir();
            mod.save_file((dir / "apf.bin").string());
            std::cout << json{{"apf", (dir / "apf.bin").string()}, {"backend", to_string(mod.backend())},
                              {"boundary", mod.boundary()}, {"training_size", mod.training_size()}}
                             .dump()
                      << '\n';
        } else if (*disc_cmd) {
            DiscoveryConfig dc;
            dc.agent = cfg.agent;
            dc.apf = cfg.apf;
            dc.budget = cfg.timesteps;
            dc.max_rounds = cfg.max_rounds;
            dc.cumulative = cfg.cumulative;
            const auto res = discover_alternatives(level, resolve_persona(common.persona), dc, common.seed);
            const auto dir = common.out_dir();
            save_trajectories((dir / "paths.traj").string(), res.paths);
            const auto picture = render_paths(level, res.paths);
            write_text(dir / "paths.txt", picture.ascii);
            write_text(dir / "paths.ppm", picture.ppm());
            auto rounds_json = json::array();
            for (const auto& r : res.rounds)
                rounds_json.push_back({{"round", r.round},
                                       {"length", r.path.length()},
                                       {"termination", to_string(r.path.termination)},
                                       {"terminated", r.terminated},
                                       {"duplicate_of", r.duplicate_of}});
            const json j{{"paths", res.paths.size()}, {"rounds", rounds_json}};
            write_text(dir / "discovery.json", j.dump(2) + "\n");
            std::cout << picture.ascii << j.dump() << '\n';
        } else if (*matrix_cmd) {
            const auto paths = select(load_trajectories(traj_path), indices);
            const auto m = return_matrix(level, paths, cfg.apf, cfg.agent.discount);
            const auto classes = equivalence_classes(m);
            const auto dir = common.out_dir();
            write_text(dir / "matrix.tsv", format_return_matrix(m));
            write_text(dir / "matrix.json",
                       json{{"gamma", m.gamma}, {"baseline", m.baseline}, {"rows", m.rows}, {"classes", classes}}.dump(2) +
                           "\n");
            std::cout << format_return_matrix(m) << json{{"classes", classes}}.dump() << '\n';
        } else if (*inter_cmd) {
            if (personas.empty()) personas = {"Exit", "Dev. Killer", "Dev. Collector", "Dev. Raider", "Dev. Completionist"};
            std::vector<std::pair<std::string, EvaluationResult>> evals;
            for (const auto& ref : personas) {
                const RewardStack rewards{resolve_persona(ref), nullptr};
                const auto policy = train(cfg.agent, level, rewards, common.seed, cfg.timesteps).policy;
                evals.emplace_back(rewards.persona.name(),
                                   evaluate(policy, level, rewards, common.seed, evaluation_count(cfg, level)));
            }
            const auto text = format_interaction_table(interaction_table(evals));
            const auto dir = common.out_dir();
            write_text(dir / "interactions.tsv", text);
            std::cout << text;
        } else if (*render_cmd) {
            std::vector<Trajectory> paths;
            if (!traj_path.empty()) paths = select(load_trajectories(traj_path), indices);
            const auto picture = render_paths(level, paths);
            const auto dir = common.out_dir();
            write_text(dir / "paths.txt", picture.ascii);
            write_text(dir / "paths.ppm", picture.ppm());
            std::cout << picture.ascii;
        }
    } catch (const Error& e) {
        return fail(e.category(), e.what());
    } catch (const std::exception& e) {
        return fail("internal", e.what());
    }
    return 0;
}
