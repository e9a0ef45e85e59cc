"""Attainable utility preservation (AUP) rewards and tabular Q-learning.

The AUP reward charges each action for how much it changes the agent's
optimal Q-values for a set of auxiliary rewards, relative to doing nothing:

    R_aup(s, a) = R_env(s, a) - lambda / |aux| * sum_i |Q*_i(s, a) - Q*_i(s, noop)|.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .mdp import RewardlessMdp, policy_iteration, state_action_reward
from .power import q_batch, solve_batch


@dataclass(frozen=True)
class AupConfig:
    """Penalty coefficient, auxiliary rewards (rows over states), no-op action and discount."""

    lam: float
    auxiliary: np.ndarray
    noop: object
    gamma: float

    def __post_init__(self):
        aux = np.atleast_2d(np.asarray(self.auxiliary, dtype=float))
        if not np.isfinite(self.lam) or self.lam < 0:
            raise InputError("penalty coefficient must be finite and non-negative")
        if self.lam > 0 and aux.size == 0:
            raise InputError("a positive penalty needs at least one auxiliary reward")
        object.__setattr__(self, "auxiliary", aux)

    @classmethod
    def uniform(cls, n_states: int, n_aux: int, lam: float, noop, gamma: float, seed: int = 0):
        """``n_aux`` auxiliary rewards drawn uniformly from ``[0, 1]^S``."""
        rng = np.random.default_rng(seed)
        return cls(lam, rng.random((n_aux, n_states)), noop, gamma)


def auxiliary_q(mdp: RewardlessMdp, config: AupConfig) -> np.ndarray:
    """Optimal Q-tables of the auxiliary rewards, shape (n_aux, |S|, |A|)."""
    V, _ = solve_batch(mdp, config.auxiliary, config.gamma)
    return q_batch(mdp, config.auxiliary, V, config.gamma)


def aup_penalty(mdp: RewardlessMdp, config: AupConfig, Q_aux: np.ndarray | None = None) -> np.ndarray:
    """``lambda / |aux| * sum_i |Q*_i(s, a) - Q*_i(s, noop)|``, shape (|S|, |A|)."""
    try:
        noop = mdp.action_index(config.noop)
    except InputError:
        raise InputError(f"no-op action {config.noop!r} is not an action of this MDP") from None
    if config.lam == 0:
        return np.zeros((mdp.n_states, mdp.n_actions))
    Q = auxiliary_q(mdp, config) if Q_aux is None else Q_aux
    gaps = np.abs(Q - Q[:, :, [noop]])
    return config.lam / len(Q) * gaps.sum(axis=0)


def build_aup_reward(mdp: RewardlessMdp, R_env, config: AupConfig,
                     Q_aux: np.ndarray | None = None) -> np.ndarray:
    """State-action AUP reward, shape (|S|, |A|)."""
    return state_action_reward(mdp, R_env) - aup_penalty(mdp, config, Q_aux)


# -- tabular Q-learning -----------------------------------------------------------

@dataclass(frozen=True)
class QLearningResult:
    Q: np.ndarray
    visits: np.ndarray

    @property
    def policy(self) -> np.ndarray:
        return self.Q.argmax(axis=1)


def _successor_table(mdp: RewardlessMdp) -> np.ndarray:
    succ = mdp.T.argmax(axis=2)
    if not np.allclose(np.take_along_axis(mdp.T, succ[:, :, None], axis=2), 1.0):
        raise InputError("tabular Q-learning here expects deterministic transitions")
    return succ


def q_learning(mdp: RewardlessMdp, R, gamma: float, episodes: int = 5000, seed: int = 0,
               start=0, horizon: int = 20, epsilon: float = 0.1, alpha: float = 1.0,
               q_init: float = 1.0) -> QLearningResult:
    """Epsilon-greedy tabular Q-learning on a deterministic MDP.

    ``R`` is a state or state-action reward received on leaving a state.
    Episodes restart at ``start`` after ``horizon`` steps and do not end at
    any goal. Greedy ties are broken uniformly at random. The default
    ``q_init = 1`` is optimistic for rewards bounded by ``1 - gamma`` per step,
    which keeps a penalized agent from settling on the no-op before it has
    found the goal.
    """
    if not 0 <= gamma < 1:
        raise InputError("Q-learning needs gamma in [0, 1)")
    if not 0 <= epsilon <= 1 or not 0 < alpha <= 1:
        raise InputError("epsilon must lie in [0, 1] and alpha in (0, 1]")
    Rsa = state_action_reward(mdp, R)
    succ = _successor_table(mdp)
    S, A = Rsa.shape
    Q = [[float(q_init)] * A for _ in range(S)]
    visits = np.zeros((S, A), dtype=np.int64)
    rewards, successors = Rsa.tolist(), succ.tolist()
    rng = np.random.default_rng(seed)
    s0 = mdp.state_index(start)
    for _ in range(episodes):
        s = s0
        explore = (rng.random(horizon) < epsilon).tolist()
        randoms = rng.integers(A, size=horizon).tolist()
        ties = rng.random(horizon).tolist()
        for k in range(horizon):
            row = Q[s]
            if explore[k]:
                a = randoms[k]
            else:
                top = max(row)
                best = [j for j in range(A) if row[j] == top]
                a = best[int(ties[k] * len(best))]
            nxt = successors[s][a]
            target = rewards[s][a] + gamma * max(Q[nxt])
            row[a] += alpha * (target - row[a])
            visits[s, a] += 1
            s = nxt
    Q = np.array(Q)
    return QLearningResult(Q, visits)


def greedy_matches_optimal(mdp: RewardlessMdp, R, gamma: float, result: QLearningResult,
                           path, tol: float = 1e-9) -> bool:
    """Whether the greedy action at every state of ``path`` is optimal for ``R``."""
    Rsa = state_action_reward(mdp, R)
    V, _ = policy_iteration(mdp, Rsa, gamma)
    Q = Rsa + gamma * mdp.T @ V
    pi = result.policy
    return all(Q[s, pi[s]] >= Q[s].max() - tol for s in path)
