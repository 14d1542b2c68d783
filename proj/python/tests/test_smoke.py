import math

import pytest

import playtest


def test_levels_and_personas():
    assert "fig5" in playtest.level_names()
    level = playtest.builtin_level("fig5")
    assert (level.height, level.width) == (14, 20)
    assert len(level.doors) == 5
    assert "Dev. Raider" in playtest.persona_names()
    assert playtest.persona("Dev. Raider").goal_count == 3


def test_feedback_boundaries():
    assert playtest.cts_feedback(-3.0, -3.0, 0.01) == 0.0
    assert playtest.cts_feedback(-4.0, -5.0, 0.01) == pytest.approx(-0.005, rel=1e-12)
    assert playtest.icm_feedback(math.e * 0.2, 0.2, 0.01) == pytest.approx(0.005, rel=1e-12)


def test_train_evaluate_and_trajectory_round_trip(tmp_path):
    level = playtest.builtin_level("corridor")
    exit_persona = playtest.persona("Exit")
    policy = playtest.train(level, exit_persona, seed=1, budget=5000)
    ev = playtest.evaluate(policy, level, exit_persona)
    assert ev.summary["doors"] == (1.0, 0.0)
    path = tmp_path / "run.traj"
    playtest.save_trajectories(str(path), ev.trajectories)
    assert playtest.load_trajectories(str(path)) == ev.trajectories
    table = playtest.interaction_table([("Exit", ev)])
    assert "Exit\t1\t0\t0\t1\t0" in table


def test_discovery_and_matrix():
    level = playtest.builtin_level("two_door")
    paths, rounds = playtest.discover(level, playtest.persona("Exit"), seed=3,
                                      config={"timesteps": 20000, "max_rounds": 4})
    assert len(paths) == 2
    assert paths[0].space_disjoint(paths[1])
    assert rounds[-1]["duplicate_of"] >= 0
    m = playtest.return_matrix(level, paths)
    for i in range(2):
        assert m["rows"][i][i] < m["baseline"][i]
        assert m["rows"][i][1 - i] > m["baseline"][1 - i]
    ascii_map, ppm = playtest.render_paths(level, paths)
    assert "12" in ascii_map and ppm.startswith(b"P6")


def test_apf_sign_separation():
    level = playtest.builtin_level("two_door")
    paths, _ = playtest.discover(level, playtest.persona("Exit"), seed=3,
                                 config={"timesteps": 20000, "max_rounds": 2})
    mod = playtest.train_apf(level, paths[:1], config={"apf_backend": "CTS"})
    assert sum(mod.raw_feedback(level, paths[0])) <= 0.0
    assert sum(mod.raw_feedback(level, paths[1])) > 0.0


def test_errors_carry_a_category():
    with pytest.raises(playtest.PlaytestError) as err:
        playtest.builtin_level("nowhere")
    assert err.value.args[0] == "validation"
    with pytest.raises(playtest.PlaytestError) as err:
        playtest.train(playtest.builtin_level("corridor"), playtest.persona("Exit"), config={"horizonn": 1})
    assert err.value.args[0] == "validation"
