#include "playtest/trajectory.hpp"

#include <cerrno>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace playtest {

std::vector<Action> Trajectory::actions() const {
    std::vector<Action> out;
    out.reserve(steps.size());
    for (const auto& s : steps) out.push_back(s.action);
    return out;
}

std::vector<Cell> Trajectory::cells() const {
    std::vector<Cell> out{start};
    for (const auto& s : steps) out.push_back(s.avatar);
    return out;
}

std::set<Cell> Trajectory::cell_set(bool include_start) const {
    std::set<Cell> out;
    if (include_start) out.insert(start);
    for (const auto& s : steps)
        if (include_start || !(s.avatar == start)) out.insert(s.avatar);
    return out;
}

int Trajectory::count(GameEvent e) const {
    int n = 0;
    for (const auto& s : steps) n += s.events.contains(e) ? 1 : 0;
    return n;
}

double Trajectory::discounted_env_return(double gamma) const {
    double g = 1.0, total = 0.0;
    for (const auto& s : steps) {
        total += g * s.env_reward;
        g *= gamma;
    }
    return total;
}

double Trajectory::discounted_modulated_return(double gamma) const {
    double g = 1.0, total = 0.0;
    for (const auto& s : steps) {
        total += g * (s.env_reward + s.apf_feedback);
        g *= gamma;
    }
    return total;
}

bool space_disjoint(const Trajectory& a, const Trajectory& b) {
    const auto sa = a.cell_set(false);
    for (const auto& c : b.cell_set(false))
        if (sa.count(c)) return false;
    return true;
}

bool same_path(const Trajectory& a, const Trajectory& b) { return a.cell_set() == b.cell_set(); }

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_hex(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
    return buf;
}

class LineReader {
public:
    explicit LineReader(std::string_view text) : text_(text) {}

    bool done() const { return pos_ >= text_.size(); }
    int line() const { return line_; }
    std::size_t offset() const { return pos_; }

    std::string_view next() {
        if (done()) throw ParseError("unexpected end of file", line_ + 1, 1);
        const auto nl = text_.find('\n', pos_);
        const auto end = nl == std::string_view::npos ? text_.size() : nl;
        auto out = text_.substr(pos_, end - pos_);
        pos_ = nl == std::string_view::npos ? text_.size() : nl + 1;
        ++line_;
        return out;
    }

    // "key rest" -> rest
    std::string_view field(std::string_view key) {
        const auto l = next();
        if (l.substr(0, key.size()) != key || (l.size() > key.size() && l[key.size()] != ' '))
            throw ParseError("expected '" + std::string(key) + "'", line_, 1);
        return l.size() > key.size() ? l.substr(key.size() + 1) : std::string_view{};
    }

    ParseError error(const std::string& what, int column = 1) const { return ParseError(what, line_, column); }

private:
    std::string_view text_;
    std::size_t pos_ = 0;
    int line_ = 0;
};

std::vector<std::string_view> split(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && s[i] == ' ') ++i;
        const auto j = s.find(' ', i);
        const auto end = j == std::string_view::npos ? s.size() : j;
        if (end > i) out.push_back(s.substr(i, end - i));
        i = end;
    }
    return out;
}

template <typename T>
T parse_int(std::string_view s, const LineReader& r, int base = 10) {
    std::string tmp(s);
    char* end = nullptr;
    errno = 0;
    const auto v = std::strtoll(tmp.c_str(), &end, base);
    if (tmp.empty() || *end != '\0' || errno) throw r.error("bad integer '" + tmp + "'");
    return static_cast<T>(v);
}

std::uint64_t parse_u64(std::string_view s, const LineReader& r, int base = 10) {
    std::string tmp(s);
    char* end = nullptr;
    errno = 0;
    const auto v = std::strtoull(tmp.c_str(), &end, base);
    if (tmp.empty() || *end != '\0' || errno) throw r.error("bad unsigned integer '" + tmp + "'");
    return v;
}

double parse_double(std::string_view s, const LineReader& r) {
    std::string tmp(s);
    char* end = nullptr;
    const double v = std::strtod(tmp.c_str(), &end);
    if (tmp.empty() || *end != '\0') throw r.error("bad number '" + tmp + "'");
    return v;
}

}  // namespace

std::string trajectories_to_text(const std::vector<Trajectory>& trajectories) {
    std::ostringstream o;
    o << "playtest-trajectories " << kTrajectoryFormatVersion << '\n';
    o << "count " << trajectories.size() << '\n';
    for (const auto& t : trajectories) {
        o << "trajectory\n";
        o << "level " << t.level_name << '\n';
        o << "level_hash " << fmt_hex(t.level_hash) << '\n';
        o << "persona " << t.persona << '\n';
        o << "seed " << t.seed << '\n';
        o << "env_seed " << t.env_seed << '\n';
        o << "start " << t.start.row << ' ' << t.start.col << '\n';
        o << "termination " << to_string(t.termination) << '\n';
        o << "goals " << t.goal_trace.size() << '\n';
        for (const auto& g : t.goal_trace) o << g.t << ' ' << g.cursor << ' ' << (g.coactive ? 1 : 0) << '\n';
        o << "steps " << t.steps.size() << '\n';
        for (const auto& s : t.steps)
            o << to_string(s.action) << ' ' << format_events(s.events) << ' ' << fmt_double(s.env_reward) << ' '
              << fmt_double(s.apf_feedback) << ' ' << s.avatar.row << ' ' << s.avatar.col << '\n';
        o << "end\n";
    }
    const std::string body = o.str();
    return body + "checksum " + fmt_hex(fnv1a(body)) + "\n";
}

std::vector<Trajectory> trajectories_from_text(std::string_view text) {
    const auto ck = text.rfind("checksum ");
    if (ck == std::string_view::npos || (ck > 0 && text[ck - 1] != '\n'))
        throw FormatError("trajectory file has no checksum line");
    {
        LineReader head(text);
        const auto magic = split(head.next());
        if (magic.size() != 2 || magic[0] != "playtest-trajectories") throw FormatError("not a trajectory file");
        const int version = parse_int<int>(magic[1], head);
        if (version != kTrajectoryFormatVersion)
            throw FormatError("trajectory version mismatch: file has " + std::to_string(version) + ", expected " +
                              std::to_string(kTrajectoryFormatVersion));
    }
    std::string_view tail = text.substr(ck + 9);
    while (!tail.empty() && (tail.back() == '\n' || tail.back() == '\r')) tail.remove_suffix(1);
    if (tail != fmt_hex(fnv1a(text.substr(0, ck)))) throw FormatError("trajectory checksum mismatch (corrupt file)");

    LineReader r(text.substr(0, ck));
    r.next();
    const auto count = parse_int<std::size_t>(r.field("count"), r);
    std::vector<Trajectory> out;
    for (std::size_t i = 0; i < count; ++i) {
        if (r.next() != "trajectory") throw r.error("expected 'trajectory'");
        Trajectory t;
        t.level_name = std::string(r.field("level"));
        t.level_hash = parse_u64(r.field("level_hash"), r, 16);
        t.persona = std::string(r.field("persona"));
        t.seed = parse_u64(r.field("seed"), r);
        t.env_seed = parse_u64(r.field("env_seed"), r);
        const auto st = split(r.field("start"));
        if (st.size() != 2) throw r.error("start needs row and column");
        t.start = {parse_int<int>(st[0], r), parse_int<int>(st[1], r)};
        try {
            t.termination = termination_from_string(r.field("termination"));
        } catch (const ValidationError& e) {
            throw r.error(e.what());
        }
        const auto goals = parse_int<std::size_t>(r.field("goals"), r);
        for (std::size_t g = 0; g < goals; ++g) {
            const auto f = split(r.next());
            if (f.size() != 3) throw r.error("goal record needs t, cursor and coactive");
            t.goal_trace.push_back({parse_int<int>(f[0], r), parse_int<int>(f[1], r), f[2] == "1"});
        }
        const auto steps = parse_int<std::size_t>(r.field("steps"), r);
        t.steps.reserve(steps);
        for (std::size_t k = 0; k < steps; ++k) {
            const auto f = split(r.next());
            if (f.size() != 6) throw r.error("step record needs 6 fields");
            TrajectoryStep s;
            try {
                s.action = action_from_string(f[0]);
                s.events = parse_events(f[1]);
            } catch (const ValidationError& e) {
                throw r.error(e.what());
            }
            s.env_reward = parse_double(f[2], r);
            s.apf_feedback = parse_double(f[3], r);
            s.avatar = {parse_int<int>(f[4], r), parse_int<int>(f[5], r)};
            t.steps.push_back(s);
        }
        if (r.next() != "end") throw r.error("expected 'end'");
        out.push_back(std::move(t));
    }
    if (!r.done()) throw r.error("trailing data before checksum");
    return out;
}

void save_trajectories(const std::string& path, const std::vector<Trajectory>& trajectories) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot write " + tmp);
        out << trajectories_to_text(trajectories);
        if (!out) throw IoError("write failed for " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

std::vector<Trajectory> load_trajectories(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return trajectories_from_text(ss.str());
}

Replay replay(const LevelSpec& level, const Trajectory& trajectory) {
    if (trajectory.level_hash != 0 && trajectory.level_hash != level_hash(level))
        throw DivergenceError("trajectory was recorded on a different level than '" + level.name + "'");
    Replay out;
    Rng rng(trajectory.env_seed);
    GameState s = initial_state(level);
    out.states.push_back(s);
    for (std::size_t k = 0; k < trajectory.steps.size(); ++k) {
        const auto& rec = trajectory.steps[k];
        if (s.terminal()) throw DivergenceError("replay ended before step " + std::to_string(k));
        auto r = step(level, s, rec.action, rng);
        if (!(r.state.avatar_pos == rec.avatar) || !(r.events == rec.events))
            throw DivergenceError("replay diverges from the recording at step " + std::to_string(k));
        s = std::move(r.state);
        out.states.push_back(s);
        out.events.push_back(r.events);
    }
    return out;
}

FrameSequence replay_frames(const LevelSpec& level, const Trajectory& trajectory, const RenderConfig& render_config) {
    const auto rp = replay(level, trajectory);
    FrameSequence fs;
    fs.actions = trajectory.actions();
    fs.frames.reserve(rp.states.size());
    for (const auto& s : rp.states) fs.frames.push_back(render(level, s, render_config));
    return fs;
}

}  // namespace playtest
