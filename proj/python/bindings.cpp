#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "playtest/config.hpp"
#include "playtest/harness.hpp"
#include "playtest/levels.hpp"

namespace py = pybind11;
using namespace playtest;

namespace {

ExperimentConfig config_from(const std::string& text) {
    return text.empty() ? ExperimentConfig{} : parse_experiment_config_text(text);
}

py::list cells(const std::vector<Cell>& cs) {
    py::list out;
    for (const auto& c : cs) out.append(py::make_tuple(c.row, c.col));
    return out;
}

py::dict summary(const EvaluationResult& r) {
    py::dict d;
    auto put = [&](const char* key, const MeanSd& m) { d[key] = py::make_tuple(m.mean, m.sd); };
    d["episodes"] = r.episodes.size();
    put("kills", r.kills);
    put("treasures", r.treasures);
    put("doors", r.doors);
    put("deaths", r.deaths);
    put("env_return", r.env_return);
    put("modulated_return", r.modulated_return);
    return d;
}

std::shared_ptr<const ApfModulator> shared(const std::optional<ApfModulator>& apf) {
    return apf ? std::make_shared<const ApfModulator>(*apf) : nullptr;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Persona playtesting agents with alternative path finders";

    // Errors surface as PlaytestError(category, message).
    static py::exception<Error> error(m, "PlaytestError");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            PyErr_SetObject(error.ptr(), py::make_tuple(e.category(), e.what()).ptr());
        }
    });

    py::class_<LevelSpec>(m, "Level")
        .def_readonly("name", &LevelSpec::name)
        .def_readonly("width", &LevelSpec::width)
        .def_readonly("height", &LevelSpec::height)
        .def_readonly("max_timesteps", &LevelSpec::max_timesteps)
        .def_property_readonly("start", [](const LevelSpec& l) { return py::make_tuple(l.avatar_start.row, l.avatar_start.col); })
        .def_property_readonly("doors", [](const LevelSpec& l) { return cells(l.doors); })
        .def_property_readonly("monsters", [](const LevelSpec& l) { return cells(l.monsters); })
        .def_property_readonly("treasures", [](const LevelSpec& l) { return cells(l.treasures); })
        .def_property_readonly("deterministic", &LevelSpec::is_deterministic)
        .def_property_readonly("hash", [](const LevelSpec& l) { return level_hash(l); })
        .def("to_text", [](const LevelSpec& l) { return level_to_text(l); });

    m.def("level_names", &builtin_level_names);
    m.def("builtin_level", [](const std::string& name) { return builtin_level(name); }, py::arg("name"));
    m.def("load_level", [](const std::string& text, const std::string& name) { return load_level(text, name); },
          py::arg("text"), py::arg("name") = "level");

    py::class_<DevelopingPersona>(m, "Persona")
        .def_property_readonly("name", &DevelopingPersona::name)
        .def_property_readonly("goal_count", [](const DevelopingPersona& p) { return p.goals().size(); })
        .def("to_text", [](const DevelopingPersona& p) { return persona_to_text(p); });

    m.def("persona_names", &builtin_persona_names);
    m.def("persona", &resolve_persona, py::arg("ref"), "catalogue name, slug, or persona file");
    m.def("parse_persona", [](const std::string& text) { return parse_persona(text); }, py::arg("text"));

    m.def("cts_feedback", &cts_feedback, py::arg("log_p_new"), py::arg("log_p_min"), py::arg("beta"));
    m.def("icm_feedback", &icm_feedback, py::arg("q_new"), py::arg("q_mean"), py::arg("beta"));

    py::class_<Trajectory>(m, "Trajectory")
        .def_readonly("level_name", &Trajectory::level_name)
        .def_readonly("persona", &Trajectory::persona)
        .def_readonly("seed", &Trajectory::seed)
        .def_property_readonly("length", &Trajectory::length)
        .def_property_readonly("termination", [](const Trajectory& t) { return std::string(to_string(t.termination)); })
        .def_property_readonly("actions", [](const Trajectory& t) {
            std::vector<std::string> out;
            for (auto a : t.actions()) out.emplace_back(to_string(a));
            return out;
        })
        .def_property_readonly("cells", [](const Trajectory& t) { return cells(t.cells()); })
        .def("discounted_env_return", &Trajectory::discounted_env_return, py::arg("gamma") = 0.99)
        .def("space_disjoint", [](const Trajectory& a, const Trajectory& b) { return space_disjoint(a, b); })
        .def("__eq__", [](const Trajectory& a, const Trajectory& b) { return a == b; });

    m.def("trajectories_to_text", &trajectories_to_text);
    m.def("trajectories_from_text", [](const std::string& text) { return trajectories_from_text(text); });
    m.def("save_trajectories", &save_trajectories, py::arg("path"), py::arg("trajectories"));
    m.def("load_trajectories", &load_trajectories, py::arg("path"));

    py::class_<ApfModulator>(m, "Modulator")
        .def_property_readonly("backend", [](const ApfModulator& a) { return std::string(to_string(a.backend())); })
        .def_property_readonly("boundary", &ApfModulator::boundary)
        .def_property_readonly("training_size", &ApfModulator::training_size)
        .def("raw_feedback",
             [](const ApfModulator& a, const LevelSpec& level, const Trajectory& t) {
                 const auto seq = replay_frames(level, t, a.config().render);
                 std::vector<double> out;
                 for (std::size_t i = 0; i < seq.actions.size(); ++i)
                     out.push_back(a.raw_feedback(seq.frames[i], seq.actions[i], seq.frames[i + 1]));
                 return out;
             },
             py::arg("level"), py::arg("trajectory"), "uncapped feedback of every step of a replayed trajectory")
        .def("save", &ApfModulator::save_file, py::arg("path"))
        .def_static("load", &ApfModulator::load_file, py::arg("path"));

    m.def("train_apf",
          [](const LevelSpec& level, const std::vector<Trajectory>& paths, const std::string& config) {
              const auto cfg = config_from(config);
              std::vector<FrameSequence> seqs;
              for (const auto& p : paths) seqs.push_back(replay_frames(level, p, cfg.apf.render));
              py::gil_scoped_release release;
              return train_apf(cfg.apf, seqs);
          },
          py::arg("level"), py::arg("paths"), py::arg("config") = "");

    py::class_<Policy>(m, "Policy")
        .def("save", &Policy::save_file, py::arg("path"))
        .def_static("load", &Policy::load_file, py::arg("path"));

    py::class_<EvaluationResult>(m, "Evaluation")
        .def_readonly("trajectories", &EvaluationResult::trajectories)
        .def_property_readonly("summary", &summary);

    m.def("train",
          [](const LevelSpec& level, const DevelopingPersona& persona, std::uint64_t seed, long budget,
             const std::string& config, const std::optional<ApfModulator>& apf) {
              const auto cfg = config_from(config);
              const RewardStack rewards{persona, shared(apf)};
              py::gil_scoped_release release;
              return train(cfg.agent, level, rewards, seed, budget > 0 ? budget : cfg.timesteps).policy;
          },
          py::arg("level"), py::arg("persona"), py::arg("seed") = 1, py::arg("budget") = 0, py::arg("config") = "",
          py::arg("apf") = py::none(), "budget 0 takes timesteps from the config");

    m.def("evaluate",
          [](const Policy& policy, const LevelSpec& level, const DevelopingPersona& persona, std::uint64_t seed,
             int episodes, const std::optional<ApfModulator>& apf) {
              const RewardStack rewards{persona, shared(apf)};
              py::gil_scoped_release release;
              return evaluate(policy, level, rewards, seed, episodes > 0 ? episodes : default_evaluation_count(level));
          },
          py::arg("policy"), py::arg("level"), py::arg("persona"), py::arg("seed") = 1, py::arg("episodes") = 0,
          py::arg("apf") = py::none());

    m.def("discover",
          [](const LevelSpec& level, const DevelopingPersona& persona, std::uint64_t seed, const std::string& config) {
              const auto cfg = config_from(config);
              DiscoveryConfig dc;
              dc.agent = cfg.agent;
              dc.apf = cfg.apf;
              dc.budget = cfg.timesteps;
              dc.max_rounds = cfg.max_rounds;
              dc.cumulative = cfg.cumulative;
              DiscoveryResult res;
              {
                  py::gil_scoped_release release;
                  res = discover_alternatives(level, persona, dc, seed);
              }
              py::list rounds;
              for (const auto& r : res.rounds) {
                  py::dict d;
                  d["round"] = r.round;
                  d["path"] = r.path;
                  d["terminated"] = r.terminated;
                  d["duplicate_of"] = r.duplicate_of;
                  rounds.append(d);
              }
              return py::make_tuple(res.paths, rounds);
          },
          py::arg("level"), py::arg("persona"), py::arg("seed") = 1, py::arg("config") = "",
          "returns (distinct paths, per-round records)");

    m.def("return_matrix",
          [](const LevelSpec& level, const std::vector<Trajectory>& paths, const std::string& config, double gamma) {
              const auto mat = return_matrix(level, paths, config_from(config).apf, gamma);
              py::dict d;
              d["baseline"] = mat.baseline;
              d["rows"] = mat.rows;
              d["classes"] = equivalence_classes(mat);
              d["text"] = format_return_matrix(mat);
              return d;
          },
          py::arg("level"), py::arg("paths"), py::arg("config") = "", py::arg("gamma") = 0.99);

    m.def("interaction_table",
          [](const std::vector<std::pair<std::string, EvaluationResult>>& evals) {
              return format_interaction_table(interaction_table(evals));
          },
          py::arg("evaluations"), "list of (persona name, Evaluation) pairs; returns the tab-separated table");

    m.def("render_paths",
          [](const LevelSpec& level, const std::vector<Trajectory>& paths) {
              const auto r = render_paths(level, paths);
              return py::make_tuple(r.ascii, py::bytes(r.ppm()));
          },
          py::arg("level"), py::arg("paths"), "returns (ascii overlay, binary PPM)");
}
