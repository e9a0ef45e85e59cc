"""The side-effect experiment: vanilla versus AUP agents scored by delayed specification.

For each seed both agents are trained by tabular Q-learning on the same
gridworld. Each greedy policy is scored by correcting it at step
``t_correct`` under three held-out reward distributions. The residual of a
row is its score minus the vanilla score for the same seed and distribution.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .aup import AupConfig, build_aup_reward, q_learning
from .delayed import delayed_spec_scores
from .dists import weighted_atoms
from .gridworlds import GAMMA, GridworldEnv, build_gridworld, ground_truth_dists
from .power import solve_batch

DIST_ORDER = ("rand", "true", "true-inv")


@dataclass(frozen=True)
class ExperimentConfig:
    lam: float = 0.01
    n_aux: int = 20
    gamma: float = GAMMA
    episodes: int = 5000
    epsilon: float = 0.1
    q_init: float = 1.0
    t_correct: int = 10
    n_rand: int = 1000
    dist_seed: int = 0


@dataclass(frozen=True)
class ExperimentRow:
    env: str
    seed: int
    condition: str
    dist: str
    score: float
    residual: float


@dataclass(frozen=True)
class AgentOutcome:
    env: str
    seed: int
    condition: str
    policy: np.ndarray
    reached_goal: bool
    side_effect: bool


def train_agents(env: GridworldEnv, seed: int, config: ExperimentConfig = ExperimentConfig()):
    """Greedy policies of the vanilla and AUP Q-learners for one seed."""
    mdp = env.mdp
    R_env = env.env_reward(config.gamma)
    aup = AupConfig.uniform(mdp.n_states, config.n_aux, config.lam, "noop", config.gamma, seed)
    rewards = {"vanilla": R_env, "aup": build_aup_reward(mdp, R_env, aup)}
    out = {}
    for condition, R in rewards.items():
        result = q_learning(mdp, R, config.gamma, config.episodes, seed, env.start, env.horizon,
                            config.epsilon, q_init=config.q_init)
        path = env.rollout(result.policy)
        out[condition] = AgentOutcome(env.name, seed, condition, result.policy,
                                      bool(env.goal_mask[path[-1]]),
                                      bool(env.side_effect_mask[path].any()))
    return out


def score_atoms(env: GridworldEnv, config: ExperimentConfig = ExperimentConfig()) -> dict:
    """``(weights, R, V*)`` per held-out distribution, computed once per environment."""
    atoms = {}
    for key, spec in ground_truth_dists(env).items():
        w, R, _ = weighted_atoms(spec, env.mdp.n_states, config.n_rand, config.dist_seed)
        atoms[key] = (w, R, solve_batch(env.mdp, R, config.gamma)[0])
    return atoms


def run_experiment(name: str, seeds=range(5), config: ExperimentConfig = ExperimentConfig()):
    """``(rows, outcomes)`` for every seed, condition and distribution."""
    env = build_gridworld(name)
    atoms = score_atoms(env, config)
    rows, outcomes = [], []
    for seed in seeds:
        agents = train_agents(env, seed, config)
        outcomes.extend(agents.values())
        scores = {}
        for condition, agent in agents.items():
            for key in DIST_ORDER:
                w, R, V = atoms[key]
                per = delayed_spec_scores(env.mdp, agent.policy, (R, V), config.gamma,
                                          config.t_correct, env.start)
                scores[condition, key] = math.fsum(w * per)
        for condition in agents:
            for key in DIST_ORDER:
                rows.append(ExperimentRow(name, seed, condition, key, scores[condition, key],
                                          scores[condition, key] - scores["vanilla", key]))
    return rows, outcomes


def mean_residual(rows, dist: str) -> float:
    vals = [r.residual for r in rows if r.condition == "aup" and r.dist == dist]
    return math.fsum(vals) / len(vals)
