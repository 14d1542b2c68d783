#include "playtest/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

namespace playtest {

int default_evaluation_count(const LevelSpec& level) { return level.is_deterministic() ? 1 : 1000; }

DiscoveryResult discover_alternatives(const LevelSpec& level, const DevelopingPersona& persona,
                                      const DiscoveryConfig& config, std::uint64_t seed) {
    if (config.max_rounds < 1) throw ValidationError("max_rounds must be >= 1");
    config.apf.validate();
    DiscoveryResult out;
    std::optional<Policy> previous_policy;
    for (int round = 0; round < config.max_rounds; ++round) {
        RewardStack rewards{persona, nullptr};
        if (round > 0) {
            APFConfig apf = config.apf;
            std::optional<FeatureEncoder> encoder;
            if (apf.backend == ApfBackend::ICM && apf.encoder == EncoderMode::Transferred) {
                encoder = transfer_encoder(*previous_policy);
                apf.render = config.agent.observation;
            }
            std::vector<FrameSequence> training;
            if (config.cumulative) {
                for (const auto& p : out.paths) training.push_back(replay_frames(level, p, apf.render));
            } else {
                training.push_back(replay_frames(level, out.rounds.back().path, apf.render));
            }
            rewards.apf = std::make_shared<ApfModulator>(train_apf(apf, training, {}, encoder));
        }
        const std::uint64_t round_seed = seed + static_cast<std::uint64_t>(round) * 0x9e3779b97f4a7c15ULL;
        auto trained = train(config.agent, level, rewards, round_seed, config.budget);
        auto eval = evaluate(trained.policy, level, rewards, round_seed, 1);
        DiscoveryRound r;
        r.round = round;
        r.path = std::move(eval.trajectories.front());
        r.terminated = r.path.termination == TerminationCause::ExitDoor || r.path.termination == TerminationCause::Death;
        for (std::size_t i = 0; i < out.paths.size(); ++i)
            if (same_path(out.paths[i], r.path)) r.duplicate_of = static_cast<int>(i);
        previous_policy = std::move(trained.policy);
        // A repeat or a run that never ends means no further alternative.
        const bool stop = r.duplicate_of >= 0 || !r.terminated;
        if (!stop) out.paths.push_back(r.path);
        out.rounds.push_back(std::move(r));
        if (stop) break;
    }
    return out;
}

double modulated_return(const LevelSpec& level, const Trajectory& path, const ApfModulator& mod, double gamma) {
    const auto frames = replay_frames(level, path, mod.config().render);
    CapLedger ledger(mod.config());
    double g = 1.0, total = 0.0;
    for (std::size_t t = 0; t < path.steps.size(); ++t) {
        total += g * modulate(mod, ledger, path.steps[t].env_reward, frames.frames[t], path.steps[t].action,
                              frames.frames[t + 1]);
        g *= gamma;
    }
    return total;
}

ReturnMatrix return_matrix(const LevelSpec& level, const std::vector<Trajectory>& paths, const APFConfig& config,
                           double gamma) {
    if (paths.empty()) throw ValidationError("return matrix needs at least one path");
    if (config.backend == ApfBackend::ICM && config.encoder == EncoderMode::Transferred)
        throw ValidationError("return matrix cannot build a transferred encoder without a policy");
    ReturnMatrix m;
    m.gamma = gamma;
    for (const auto& p : paths) m.baseline.push_back(p.discounted_env_return(gamma));
    for (const auto& trained_on : paths) {
        const auto mod = train_apf(config, {replay_frames(level, trained_on, config.render)});
        std::vector<double> row;
        for (const auto& p : paths) row.push_back(modulated_return(level, p, mod, gamma));
        m.rows.push_back(std::move(row));
    }
    return m;
}

std::string format_return_matrix(const ReturnMatrix& m) {
    std::ostringstream o;
    char buf[32];
    o << "trained-on";
    for (std::size_t j = 0; j < m.size(); ++j) o << "\tpath" << j + 1;
    o << "\nbaseline";
    for (double v : m.baseline) {
        std::snprintf(buf, sizeof buf, "\t%.4f", v);
        o << buf;
    }
    o << '\n';
    for (std::size_t i = 0; i < m.rows.size(); ++i) {
        o << "path" << i + 1;
        for (double v : m.rows[i]) {
            std::snprintf(buf, sizeof buf, "\t%.4f", v);
            o << buf;
        }
        o << '\n';
    }
    return o.str();
}

std::vector<std::vector<int>> equivalence_classes(const ReturnMatrix& m) {
    const int n = static_cast<int>(m.size());
    std::vector<int> parent(static_cast<std::size_t>(n));
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
        while (parent[static_cast<std::size_t>(x)] != x) x = parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
        return x;
    };
    auto penalised = [&](int i, int j) {
        return m.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] < m.baseline[static_cast<std::size_t>(j)];
    };
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (penalised(i, j) && penalised(j, i)) parent[static_cast<std::size_t>(find(i))] = find(j);
    std::map<int, std::vector<int>> groups;
    for (int i = 0; i < n; ++i) groups[find(i)].push_back(i);
    std::vector<std::vector<int>> out;
    for (auto& [root, members] : groups) out.push_back(std::move(members));
    std::sort(out.begin(), out.end());
    return out;
}

const InteractionRow& InteractionTable::row(const std::string& persona) const {
    for (const auto& r : rows)
        if (r.persona == persona) return r;
    throw ValidationError("no interaction row for persona '" + persona + "'");
}

InteractionTable interaction_table(const std::vector<std::pair<std::string, EvaluationResult>>& evaluations) {
    if (evaluations.empty()) throw ValidationError("interaction table needs at least one evaluation");
    InteractionTable t;
    for (const auto& [name, ev] : evaluations) {
        if (ev.episodes.empty()) throw ValidationError("persona '" + name + "' has no evaluations");
        InteractionRow r;
        r.persona = name;
        r.evaluations = static_cast<int>(ev.episodes.size());
        r.kills = ev.kills;
        r.treasures = ev.treasures;
        r.doors = ev.doors;
        r.deaths = ev.deaths;
        t.rows.push_back(std::move(r));
    }
    return t;
}

std::string format_interaction_table(const InteractionTable& t) {
    std::ostringstream o;
    o << "persona\tevaluations\tmonsters\ttreasures\tdoor\tdeaths\n";
    char buf[64];
    auto cell = [&](const MeanSd& v, bool exact) {
        if (exact)
            std::snprintf(buf, sizeof buf, "\t%g", v.mean);
        else
            std::snprintf(buf, sizeof buf, "\t%.2f ± %.2f", v.mean, v.sd);
        o << buf;
    };
    for (const auto& r : t.rows) {
        const bool exact = r.evaluations == 1;
        o << r.persona << '\t' << r.evaluations;
        cell(r.kills, exact);
        cell(r.treasures, exact);
        cell(r.doors, exact);
        cell(r.deaths, exact);
        o << '\n';
    }
    return o.str();
}

char path_label(int index) {
    if (index < 0) throw ContractViolation("negative path index");
    if (index < 9) return static_cast<char>('1' + index);
    if (index < 9 + 26) return static_cast<char>('a' + index - 9);
    throw ValidationError("at most 35 paths can be labelled");
}

std::string PathRendering::ppm() const {
    std::string out = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(rgb.data()), rgb.size());
    return out;
}

PathRendering render_paths(const LevelSpec& level, const std::vector<Trajectory>& paths) {
    // labels per cell
    std::vector<std::vector<int>> labels(static_cast<std::size_t>(level.width * level.height));
    for (std::size_t p = 0; p < paths.size(); ++p) {
        path_label(static_cast<int>(p));
        for (const auto& c : paths[p].cells()) {
            if (!level.in_bounds(c))
                throw ValidationError("path " + std::to_string(p + 1) + " leaves the level at (" +
                                      std::to_string(c.row) + ", " + std::to_string(c.col) + ")");
            auto& l = labels[static_cast<std::size_t>(c.row * level.width + c.col)];
            if (std::find(l.begin(), l.end(), static_cast<int>(p)) == l.end()) l.push_back(static_cast<int>(p));
        }
    }
    std::size_t field = 1;
    for (const auto& l : labels) field = std::max(field, l.size());

    auto base_char = [&](Cell c) {
        if (level.tile(c) == Tile::Wall) return 'W';
        if (level.is_door(c)) return 'D';
        if (c == level.avatar_start) return 'A';
        if (std::find(level.monsters.begin(), level.monsters.end(), c) != level.monsters.end()) return 'M';
        if (std::find(level.treasures.begin(), level.treasures.end(), c) != level.treasures.end()) return 'T';
        return '.';
    };

    PathRendering out;
    std::ostringstream a;
    for (int r = 0; r < level.height; ++r) {
        for (int c = 0; c < level.width; ++c) {
            const auto& l = labels[static_cast<std::size_t>(r * level.width + c)];
            std::string s;
            if (l.empty())
                s = std::string(1, base_char({r, c}));
            else
                for (int p : l) s += path_label(p);
            s.resize(field, ' ');
            a << s;
            if (field > 1 && c + 1 < level.width) a << ' ';
        }
        a << '\n';
    }
    for (std::size_t p = 0; p < paths.size(); ++p)
        a << path_label(static_cast<int>(p)) << ": " << paths[p].length() << " steps, "
          << to_string(paths[p].termination) << '\n';
    out.ascii = a.str();

    constexpr int kTile = 12;
    static const std::uint8_t palette[][3] = {{230, 25, 75},  {60, 180, 75},  {0, 130, 200},  {245, 130, 48},
                                              {145, 30, 180}, {70, 240, 240}, {240, 50, 230}, {128, 128, 0},
                                              {0, 128, 128},  {170, 110, 40}};
    out.width = level.width * kTile;
    out.height = level.height * kTile;
    out.rgb.assign(static_cast<std::size_t>(out.width * out.height * 3), 0);
    auto paint = [&](int x, int y, const std::uint8_t* col) {
        auto* px = &out.rgb[static_cast<std::size_t>((y * out.width + x) * 3)];
        px[0] = col[0];
        px[1] = col[1];
        px[2] = col[2];
    };
    for (int r = 0; r < level.height; ++r) {
        for (int c = 0; c < level.width; ++c) {
            const char b = base_char({r, c});
            std::uint8_t col[3];
            switch (b) {
                case 'W': col[0] = col[1] = col[2] = 60; break;
                case 'D': col[0] = 120, col[1] = 72, col[2] = 0; break;
                case 'M': col[0] = 200, col[1] = 0, col[2] = 0; break;
                case 'T': col[0] = 255, col[1] = 215, col[2] = 0; break;
                case 'A': col[0] = 0, col[1] = 0, col[2] = 0; break;
                default: col[0] = col[1] = col[2] = 235; break;
            }
            const auto& l = labels[static_cast<std::size_t>(r * level.width + c)];
            for (int y = 0; y < kTile; ++y)
                for (int x = 0; x < kTile; ++x) {
                    const bool inner = x >= 3 && x < kTile - 3 && y >= 3 && y < kTile - 3;
                    if (inner && !l.empty()) {
                        // one vertical stripe per path through the cell
                        const auto k = static_cast<std::size_t>((x - 3) * static_cast<int>(l.size()) / (kTile - 6));
                        paint(c * kTile + x, r * kTile + y, palette[l[k] % 10]);
                    } else {
                        paint(c * kTile + x, r * kTile + y, col);
                    }
                }
        }
    }
    return out;
}

}  // namespace playtest
