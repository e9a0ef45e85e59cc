"""Delayed-specification games: the true reward is revealed at a random time.

Before the reveal the agent follows a stationary prefix policy ``pi``; from
the reveal time ``t`` onward it acts optimally for the revealed ``R``. The
expected value of this switching policy is

    (1 - gamma) E_{t, R}[ sum_{i<t} gamma^i mu_i . R + gamma^t mu_t . V*_R ],

where ``mu_i`` is the state distribution after ``i`` steps of ``pi``.
Everything here is computed by exact propagation of ``mu_i``; only the
reward distribution is sampled, and only when it has no finite support.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .dists import RewardDistributionSpec, weighted_atoms
from .errors import DomainError, InputError
from .mdp import RewardlessMdp, as_policy, enumerate_policies, evaluate_policy, policy_iteration
from .power import DEFAULT_CI, EstimateWithCI, hoeffding_radius, solve_batch

TAIL_TOL = 1e-12
DEFAULT_SAMPLES = 10_000


# -- correction-time distributions ---------------------------------------------

@dataclass(frozen=True)
class Geometric:
    """``P(t) = (1-p)^(t-1) p`` for ``t >= 1``; the mean correction time is ``1/p``."""

    p: float

    def __post_init__(self):
        if not 0 < self.p < 1:
            raise InputError(f"geometric parameter {self.p} must lie in (0, 1)")

    def pmf(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t)
        return np.where(t >= 1, (1 - self.p) ** np.maximum(t - 1, 0) * self.p, 0.0)

    def horizon(self, bound: float, tol: float = TAIL_TOL) -> int:
        """Smallest ``N`` with ``P(t > N) * bound <= tol``."""
        if bound <= tol:
            return 1
        return max(1, math.ceil(math.log(tol / bound) / math.log1p(-self.p)))

    def tail(self, N: int) -> float:
        return (1 - self.p) ** N

    @classmethod
    def from_mean(cls, t_avg: float) -> "Geometric":
        """The maximum-entropy choice when only the mean correction time is known."""
        if t_avg <= 1:
            raise InputError("mean correction time must exceed 1")
        return cls(1.0 / t_avg)


@dataclass(frozen=True)
class CorrectionTable:
    """Explicit finite table: ``probs[t]`` is the probability of correction at step ``t``."""

    probs: tuple

    def __post_init__(self):
        w = np.asarray(self.probs, dtype=float)
        if w.ndim != 1 or len(w) == 0 or np.any(w < 0) or abs(w.sum() - 1) > 1e-9:
            raise InputError("correction-time table must be non-negative and sum to 1")
        object.__setattr__(self, "probs", tuple(float(x) for x in w))

    def pmf(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t)
        w = np.asarray(self.probs)
        inside = (t >= 0) & (t < len(w))
        return np.where(inside, w[np.clip(t, 0, len(w) - 1)], 0.0)

    def horizon(self, bound: float = 0.0, tol: float = TAIL_TOL) -> int:
        return len(self.probs) - 1

    def tail(self, N: int) -> float:
        return 0.0


# -- propagation -------------------------------------------------------------

def state_distributions(mdp: RewardlessMdp, pi, s0, steps: int) -> np.ndarray:
    """``mu[i]`` for ``i = 0..steps`` under stationary ``pi`` from ``s0``, shape (steps+1, |S|)."""
    P = mdp.T[np.arange(mdp.n_states), as_policy(mdp, pi)]
    mu = np.zeros((steps + 1, mdp.n_states))
    mu[0, mdp.state_index(s0)] = 1.0
    for i in range(steps):
        mu[i + 1] = mu[i] @ P
    return mu


def _distributions_batch(mdp: RewardlessMdp, policies: np.ndarray, s0: int, steps: int):
    """State distributions for many policies at once, shape (steps+1, m, |S|)."""
    m, S = len(policies), mdp.n_states
    P = mdp.T[np.arange(S)[None, :], policies]
    mu = np.zeros((steps + 1, m, S))
    mu[0, :, s0] = 1.0
    for i in range(steps):
        mu[i + 1] = np.einsum("ms,mst->mt", mu[i], P)
    return mu


# -- the game ----------------------------------------------------------------

@dataclass
class DelayedSpecGame:
    """Reward distribution, correction-time distribution and discount.

    ``atoms`` are the support points of finite specs or ``n`` seeded draws;
    every derived quantity (mean reward, average optimal value, scores)
    uses the same atoms so sampled quantities share random numbers.
    """

    mdp: RewardlessMdp
    spec: RewardDistributionSpec
    gamma: float
    correction: object
    n: int = DEFAULT_SAMPLES
    seed: int = 0
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise DomainError("delayed-specification games need gamma in (0, 1)")
        if not isinstance(self.correction, (Geometric, CorrectionTable)):
            raise InputError("correction must be Geometric or CorrectionTable")

    @cached_property
    def _atoms(self):
        return weighted_atoms(self.spec, self.mdp.n_states, self.n, self.seed)

    @property
    def weights(self) -> np.ndarray:
        return self._atoms[0]

    @property
    def rewards(self) -> np.ndarray:
        return self._atoms[1]

    @property
    def exact(self) -> bool:
        return self._atoms[2]

    @cached_property
    def optimal_values(self) -> np.ndarray:
        """``V*_R`` for every atom, shape (m, |S|)."""
        return solve_batch(self.mdp, self.rewards, self.gamma)[0]

    @cached_property
    def r_bar(self) -> np.ndarray:
        return self.weights @ self.rewards

    @cached_property
    def v_avg(self) -> np.ndarray:
        return self.weights @ self.optimal_values

    @property
    def power(self) -> np.ndarray:
        """POWER at every state under the game's atoms."""
        return (1 - self.gamma) / self.gamma * (self.v_avg - self.r_bar)

    @property
    def p(self) -> float:
        if not isinstance(self.correction, Geometric):
            raise InputError("p is defined for geometric correction times only")
        return self.correction.p

    @property
    def gamma_aup(self) -> float:
        return (1 - self.p) * self.gamma

    @property
    def surrogate_reward(self) -> np.ndarray:
        """``R'(s) = (1-p) R_bar(s) + p Vavg(s)``."""
        return (1 - self.p) * self.r_bar + self.p * self.v_avg

    def _bound(self) -> float:
        return float(np.abs(self.rewards).max())

    def horizon(self, tol: float = TAIL_TOL) -> int:
        return self.correction.horizon(self._bound(), tol)


def expected_switch_value(game: DelayedSpecGame, pi, s0, tol: float = TAIL_TOL) -> float:
    """Normalized expected value of following ``pi`` until the reveal, then ``pi*_R``.

    Geometric correction times are truncated where the neglected mass times
    the largest reward magnitude is below ``tol``.
    """
    pi = as_policy(game.mdp, pi)
    return float(expected_switch_values(game, pi[None, :], s0, tol)[0])


def expected_switch_values(game: DelayedSpecGame, policies: np.ndarray, s0,
                           tol: float = TAIL_TOL) -> np.ndarray:
    """:func:`expected_switch_value` for a batch of policies, shape (m,)."""
    s0 = game.mdp.state_index(s0)
    N = game.horizon(tol)
    mu = _distributions_batch(game.mdp, np.atleast_2d(policies), s0, N)
    g = game.gamma
    disc = g ** np.arange(N + 1)
    r = mu @ game.r_bar
    v = mu @ game.v_avg
    prefix = np.concatenate([np.zeros((1, r.shape[1])),
                             np.cumsum(disc[:N, None] * r[:N], axis=0)])
    per_t = prefix + disc[:, None] * v
    w = game.correction.pmf(np.arange(N + 1))
    return (1 - g) * (w @ per_t)


def switch_value_decomposition(game: DelayedSpecGame, pi, s0) -> dict:
    """Two routes to the expected switch value under a finite correction table.

    ``direct`` averages each atom's own switching return. ``recombined`` is
    the mean-reward prefix (through step ``t``) plus ``gamma^(t+1)`` times
    POWER at ``s_t``.
    """
    if not isinstance(game.correction, CorrectionTable):
        raise InputError("the decomposition check needs a finite correction table")
    N = game.horizon()
    mu = state_distributions(game.mdp, pi, s0, N)
    g = game.gamma
    disc = g ** np.arange(N + 1)
    w = np.asarray(game.correction.probs)
    per_atom = mu @ game.rewards.T
    per_atom_v = mu @ game.optimal_values.T
    prefix = np.concatenate([np.zeros((1, per_atom.shape[1])),
                             np.cumsum(disc[:N, None] * per_atom[:N], axis=0)])
    direct_atoms = (1 - g) * (w @ (prefix + disc[:, None] * per_atom_v))
    direct = math.fsum(game.weights * direct_atoms)
    r = mu @ game.r_bar
    through_t = np.cumsum(disc * r)
    prefix_term = (1 - g) * (w @ through_t)
    power_term = w @ (g * disc * (mu @ game.power))
    return {"direct": direct, "prefix_term": float(prefix_term),
            "power_term": float(power_term), "recombined": float(prefix_term + power_term)}


# -- solvers -----------------------------------------------------------------

class DelayedSolution(NamedTuple):
    surrogate_reward: np.ndarray
    gamma_aup: float
    policy: np.ndarray
    game: DelayedSpecGame


def solve_delayed_geometric(mdp: RewardlessMdp, spec: RewardDistributionSpec, p: float,
                            gamma: float, n: int = DEFAULT_SAMPLES, seed: int = 0) -> DelayedSolution:
    """Optimal stationary prefix policy for geometric correction times.

    The policy is optimal for ``R' = (1-p) R_bar + p Vavg`` at discount
    ``(1-p) gamma``. Averages are exact for finite specs and use ``n``
    seeded draws otherwise.
    """
    game = DelayedSpecGame(mdp, spec, gamma, Geometric(p), n, seed)
    R = game.surrogate_reward
    _, pi = policy_iteration(mdp, R, game.gamma_aup)
    return DelayedSolution(R, game.gamma_aup, pi, game)


@dataclass(frozen=True)
class AssistReward:
    """Time-indexed reward ``R^A(s_i | s0) = state_part(s_i) - baseline[i]``.

    ``state_part = R_bar + c Vavg`` and ``baseline[i] = c E[Vavg(s_i^0)]``
    along the reference policy, with ``c = p / (1 - p)``.
    """

    state_part: np.ndarray
    coefficient: float
    reference_values: np.ndarray
    gamma_aup: float
    s0: int

    def baseline(self, i: int) -> float:
        return self.coefficient * float(self.reference_values[i])

    def __call__(self, s: int, i: int) -> float:
        return float(self.state_part[s]) - self.baseline(i)


def assist_alternate_reward(mdp: RewardlessMdp, spec: RewardDistributionSpec, p: float,
                            gamma: float, pi_null, s0=0, n: int = DEFAULT_SAMPLES, seed: int = 0,
                            tol: float = TAIL_TOL) -> AssistReward:
    """Reward penalizing loss of average optimal value relative to a reference policy."""
    game = DelayedSpecGame(mdp, spec, gamma, Geometric(p), n, seed)
    c = p / (1 - p)
    bound = c * float(np.abs(game.v_avg).max()) / (1 - game.gamma_aup)
    steps = 1 if bound <= tol else max(1, math.ceil(math.log(tol / bound) / math.log(game.gamma_aup)))
    mu0 = state_distributions(mdp, pi_null, s0, steps)
    return AssistReward(game.r_bar + c * game.v_avg, c, mu0 @ game.v_avg, game.gamma_aup,
                        mdp.state_index(s0))


def assist_policy_values(mdp: RewardlessMdp, reward: AssistReward, policies: np.ndarray) -> np.ndarray:
    """Discounted ``R^A`` return from ``s0`` for each policy, by explicit time-indexed sums."""
    steps = len(reward.reference_values) - 1
    mu = _distributions_batch(mdp, np.atleast_2d(policies), reward.s0, steps)
    disc = reward.gamma_aup ** np.arange(steps + 1)
    per_step = mu @ reward.state_part - reward.coefficient * reward.reference_values[:, None]
    return disc @ per_step


def assist_optimal_actions(mdp: RewardlessMdp, reward: AssistReward, tol: float = 1e-9):
    """Per-state optimal action sets for ``R^A``; the baseline shifts every action equally."""
    V = evaluate_policy(mdp, policy_iteration(mdp, reward.state_part, reward.gamma_aup)[1],
                        reward.state_part, reward.gamma_aup)
    Q = reward.state_part[:, None] + reward.gamma_aup * mdp.T @ V
    scale = tol * (1 + np.abs(Q).max())
    return tuple(frozenset(np.flatnonzero(Q[s] >= Q[s].max() - scale).tolist())
                 for s in range(mdp.n_states))


def enumeration_maximum(game: DelayedSpecGame, s0, cap: int = 10 ** 5,
                        tol: float = TAIL_TOL) -> tuple[float, np.ndarray]:
    """Largest expected switch value over every stationary deterministic policy."""
    policies = np.array(list(enumerate_policies(game.mdp, cap)))
    values = expected_switch_values(game, policies, s0, tol)
    return float(values.max()), values


# -- scoring -----------------------------------------------------------------

def delayed_spec_scores(env_mdp: RewardlessMdp, pi, atoms, gamma: float, t_correct: int,
                        s0=0) -> np.ndarray:
    """Per-atom score ``sum_{i<t} gamma^i mu_i . R + gamma^t mu_t . V*_R`` for ``atoms = (R, V*)``."""
    if t_correct < 0:
        raise InputError("correction time must be non-negative")
    R, V = atoms
    mu = state_distributions(env_mdp, pi, s0, t_correct)
    disc = gamma ** np.arange(t_correct)
    return disc @ (mu[:t_correct] @ R.T) + gamma ** t_correct * (V @ mu[t_correct])


def delayed_spec_score(env_mdp: RewardlessMdp, pi, spec: RewardDistributionSpec, gamma: float,
                       t_correct: int = 10, s0=0, n: int = 1000, seed: int = 0,
                       ci: float = DEFAULT_CI) -> EstimateWithCI:
    """Expected score of correcting the agent at step ``t_correct``.

    The reward draws are the only randomness; exact for finite specs.
    """
    if not 0 < gamma < 1:
        raise DomainError("scoring needs gamma in (0, 1)")
    w, R, exact = weighted_atoms(spec, env_mdp.n_states, n, seed)
    V = solve_batch(env_mdp, R, gamma)[0]
    scores = delayed_spec_scores(env_mdp, pi, (R, V), gamma, t_correct, s0)
    est = math.fsum(w * scores)
    if exact:
        radius = 0.0
    else:
        b, c = spec.bounds()
        radius = hoeffding_radius((c - b) / (1 - gamma), n, ci)
    return EstimateWithCI("delayed_spec_score", est, radius, n if not exact else len(w), seed, ci,
                          {"exact": exact})
