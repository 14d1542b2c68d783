"""Persona playtesting agents with alternative path finders.

Configs may be given as dicts or JSON strings using the same keys as the CLI.
"""
import json as _json

from . import _core
from ._core import (
    Evaluation,
    Level,
    Modulator,
    Persona,
    PlaytestError,
    Policy,
    Trajectory,
    builtin_level,
    cts_feedback,
    icm_feedback,
    interaction_table,
    level_names,
    load_level,
    load_trajectories,
    parse_persona,
    persona,
    persona_names,
    render_paths,
    save_trajectories,
    trajectories_from_text,
    trajectories_to_text,
)


def _config(config):
    if config is None:
        return ""
    return config if isinstance(config, str) else _json.dumps(config)


def train(level, persona, seed=1, budget=0, config=None, apf=None):
    return _core.train(level, persona, seed, budget, _config(config), apf)


def evaluate(policy, level, persona, seed=1, episodes=0, apf=None):
    return _core.evaluate(policy, level, persona, seed, episodes, apf)


def train_apf(level, paths, config=None):
    return _core.train_apf(level, paths, _config(config))


def discover(level, persona, seed=1, config=None):
    return _core.discover(level, persona, seed, _config(config))


def return_matrix(level, paths, config=None, gamma=0.99):
    return _core.return_matrix(level, paths, _config(config), gamma)
