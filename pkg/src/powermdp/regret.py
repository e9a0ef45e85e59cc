"""Proportional regret and its bounds.

``pregret(pi | R, s, gamma)`` is the fraction of the attainable normalized
value range ``[Vmin, V*]`` lost by following ``pi`` from ``s``, where
``Vmin = -V*_{-R}``. It is invariant to positive affine transforms of ``R``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chains import cesaro_limit
from .delayed import state_distributions
from .errors import DomainError, InputError
from .mdp import RewardlessMdp, as_policy, evaluate_policy, normalized_optimal_value, optimal_value

DEGENERATE_TOL = 1e-12
SUPPORT_TOL = 1e-15


@dataclass(frozen=True)
class SwitchPolicy:
    """Follow ``policy`` for ``t`` steps, then an optimal policy for the true reward."""

    policy: tuple
    t: int

    def __post_init__(self):
        if self.t < 0:
            raise InputError("switch time must be non-negative")
        object.__setattr__(self, "policy", tuple(int(a) for a in self.policy))


@dataclass(frozen=True)
class RegretReport:
    pregret: float
    v_star: float
    v_pi: float
    v_min: float

    @property
    def degenerate(self) -> bool:
        return self.v_star - self.v_min <= DEGENERATE_TOL * (1 + abs(self.v_star))


def normalized_policy_value(mdp: RewardlessMdp, pi, R, s, gamma: float) -> float:
    """Normalized value of a stationary policy or a :class:`SwitchPolicy` from ``s``."""
    R = np.asarray(R, dtype=float)
    s = mdp.state_index(s)
    if not 0 <= gamma <= 1:
        raise DomainError("discount must lie in [0, 1]")
    if gamma == 0:
        return float(R[s])
    if isinstance(pi, SwitchPolicy):
        mu = state_distributions(mdp, list(pi.policy), s, pi.t)
        after = normalized_optimal_value(mdp, R, gamma)
        if gamma == 1:
            return float(mu[pi.t] @ after)
        disc = gamma ** np.arange(pi.t)
        return float((1 - gamma) * (disc @ (mu[:pi.t] @ R)) + gamma ** pi.t * (mu[pi.t] @ after))
    pi = as_policy(mdp, pi)
    if gamma == 1:
        P = mdp.T[np.arange(mdp.n_states), pi]
        return float(cesaro_limit(P)[s] @ R)
    return float((1 - gamma) * evaluate_policy(mdp, pi, R, gamma)[s])


def proportional_regret(mdp: RewardlessMdp, pi, R, s, gamma: float) -> RegretReport:
    """``(V* - V^pi) / (V* - Vmin)`` on normalized values; 0 when ``V* = Vmin``."""
    R = np.asarray(R, dtype=float)
    if R.shape != (mdp.n_states,):
        raise InputError("proportional regret is defined for state-based rewards")
    s_idx = mdp.state_index(s)
    v_star = float(normalized_optimal_value(mdp, R, gamma)[s_idx])
    v_min = -float(normalized_optimal_value(mdp, -R, gamma)[s_idx])
    v_pi = normalized_policy_value(mdp, pi, R, s_idx, gamma)
    denom = v_star - v_min
    if denom <= DEGENERATE_TOL * (1 + abs(v_star)):
        return RegretReport(0.0, v_star, v_pi, v_min)
    return RegretReport(float(np.clip((v_star - v_pi) / denom, 0.0, 1.0)), v_star, v_pi, v_min)


# -- no free lunch -------------------------------------------------------------

@dataclass(frozen=True)
class NoFreeLunch:
    regret: float
    regret_negated: float
    nondegenerate: bool

    @property
    def worst(self) -> float:
        return max(self.regret, self.regret_negated)

    def holds(self, tol: float = 1e-9) -> bool:
        return not self.nondegenerate or self.worst >= 0.5 - tol


def no_free_lunch_check(mdp: RewardlessMdp, pi, R, s, gamma: float) -> NoFreeLunch:
    """Regret of a fixed policy for ``R`` and for ``-R``; one of them is at least 1/2."""
    first = proportional_regret(mdp, pi, R, s, gamma)
    second = proportional_regret(mdp, pi, -np.asarray(R, dtype=float), s, gamma)
    return NoFreeLunch(first.pregret, second.pregret, not first.degenerate)


# -- corrigibility ---------------------------------------------------------------

def sure_return_steps(mdp: RewardlessMdp, s) -> np.ndarray:
    """Fewest steps from which some policy reaches ``s`` with probability 1; ``inf`` if never.

    ``W_0 = {s}`` and ``W_{j+1} = W_j`` plus every state with an action whose
    successors all lie in ``W_j``.
    """
    s = mdp.state_index(s)
    steps = np.full(mdp.n_states, np.inf)
    steps[s] = 0
    inside = steps < np.inf
    support = mdp.T > SUPPORT_TOL
    for j in range(1, mdp.n_states):
        closed = ~(support & ~inside[None, None, :]).any(axis=2)
        new = closed.any(axis=1) & ~inside
        if not new.any():
            break
        steps[new] = j
        inside = inside | new
    return steps


@dataclass(frozen=True)
class CorrigibilityCheck:
    k: float
    bound: float
    worst_regret: float

    @property
    def holds(self) -> bool:
        return self.worst_regret <= self.bound + 1e-9


def corrigibility_bound_check(mdp: RewardlessMdp, pi, s, gamma: float, t: int,
                              rewards) -> CorrigibilityCheck:
    """Compare the regret of switching after ``t`` steps with ``1 - gamma^(t+k)``.

    ``k`` is the largest sure-return time over the states ``pi`` can occupy
    at step ``t``.
    """
    pi = as_policy(mdp, pi)
    mu = state_distributions(mdp, pi, s, t)[t]
    k = float(sure_return_steps(mdp, s)[mu > SUPPORT_TOL].max())
    if not np.isfinite(k):
        bound = 1.0
    elif gamma == 1:
        bound = 0.0
    else:
        bound = 1.0 - gamma ** (t + k)
    switch = SwitchPolicy(pi, t)
    worst = max(proportional_regret(mdp, switch, R, s, gamma).pregret for R in np.atleast_2d(rewards))
    return CorrigibilityCheck(k, bound, worst)


def sharp_bound_regret(gamma: float) -> float:
    """Closed form ``1 - gamma^2`` for the three-state bound-attaining example."""
    return 1.0 - gamma ** 2


def absolute_regret(mdp: RewardlessMdp, pi, R, s, gamma: float) -> float:
    """Unnormalized ``V*(s) - V^pi(s)`` for comparison with proportional regret."""
    if not 0 <= gamma < 1:
        raise DomainError("absolute regret needs gamma in [0, 1)")
    s = mdp.state_index(s)
    return float(optimal_value(mdp, R, gamma)[s] - evaluate_policy(mdp, pi, R, gamma)[s])
