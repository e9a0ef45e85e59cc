"""Finite rewardless MDPs and exact tabular solvers.

Transition tensors are stored as ``T[s, a, s']``. Rewards are either
state-based vectors ``r[s]`` or state-action matrices ``r[s, a]``; both are
received at the current state, so ``V = r_pi + gamma * P_pi V`` with
``P_pi[s, :] = T[s, pi(s), :]``.

``policy_matrix`` returns the column-stochastic convention ``T^pi`` whose
column ``s`` is ``T(s, pi(s))``.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DomainError, InputError, SizeCapError

ROW_TOL = 1e-9
EQUIV_TOL = 1e-12
OPT_TOL = 1e-9


class RewardlessMdp:
    """Finite state and action spaces with a stochastic transition tensor.

    Parameters
    ----------
    states, actions : sequences of hashable names (unique).
    transition : array of shape (|S|, |A|, |S|), each row a distribution.
    """

    def __init__(self, states: Sequence, actions: Sequence, transition):
        states = tuple(states)
        actions = tuple(actions)
        if len(states) == 0 or len(actions) == 0:
            raise InputError("an MDP needs at least one state and one action")
        if len(set(states)) != len(states):
            raise InputError("state names must be unique")
        if len(set(actions)) != len(actions):
            raise InputError("action names must be unique")
        T = np.array(transition, dtype=float)
        if T.shape != (len(states), len(actions), len(states)):
            raise InputError(f"transition tensor has shape {T.shape}, expected "
                             f"{(len(states), len(actions), len(states))}")
        if not np.all(np.isfinite(T)) or np.any(T < 0) or np.any(T > 1):
            raise InputError("transition probabilities must lie in [0, 1]")
        sums = T.sum(axis=2)
        bad = np.argwhere(np.abs(sums - 1.0) > ROW_TOL)
        if len(bad):
            s, a = bad[0]
            raise InputError(f"transition row ({states[s]!r}, {actions[a]!r}) "
                             f"sums to {sums[s, a]!r}, not 1")
        T.setflags(write=False)
        self.states = states
        self.actions = actions
        self.T = T
        self._sidx = {name: i for i, name in enumerate(states)}
        self._aidx = {name: i for i, name in enumerate(actions)}

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    def state_index(self, s) -> int:
        """Index of a state given by name or index."""
        if s in self._sidx:
            return self._sidx[s]
        if isinstance(s, (int, np.integer)) and 0 <= s < self.n_states:
            return int(s)
        raise InputError(f"unknown state {s!r}")

    def action_index(self, a) -> int:
        if a in self._aidx:
            return self._aidx[a]
        if isinstance(a, (int, np.integer)) and 0 <= a < self.n_actions:
            return int(a)
        raise InputError(f"unknown action {a!r}")

    def equivalent_actions(self, s: int) -> list[list[int]]:
        """Group the actions at ``s`` that induce the same next-state distribution."""
        groups: list[list[int]] = []
        for a in range(self.n_actions):
            for g in groups:
                if np.max(np.abs(self.T[s, a] - self.T[s, g[0]])) <= EQUIV_TOL:
                    g.append(a)
                    break
            else:
                groups.append([a])
        return groups

    def reachable(self, s: int) -> np.ndarray:
        """Sorted indices of the states reachable from ``s`` (including ``s``)."""
        adj = self.T.max(axis=1) > 0
        seen = np.zeros(self.n_states, dtype=bool)
        seen[s] = True
        frontier = [s]
        while frontier:
            nxt = []
            for u in frontier:
                for v in np.flatnonzero(adj[u] & ~seen):
                    seen[v] = True
                    nxt.append(int(v))
            frontier = nxt
        return np.flatnonzero(seen)

    # -- serialization -------------------------------------------------
    def to_dict(self) -> dict:
        trans = {}
        for i, s in enumerate(self.states):
            trans[str(s)] = {
                str(a): [[str(self.states[j]), float(self.T[i, k, j])]
                         for j in np.flatnonzero(self.T[i, k])]
                for k, a in enumerate(self.actions)
            }
        return {"states": [str(s) for s in self.states],
                "actions": [str(a) for a in self.actions],
                "transitions": trans}

    @classmethod
    def from_dict(cls, doc: Mapping) -> "RewardlessMdp":
        """Build an MDP from the JSON document layout.

        An action omitted at some state behaves like that state's first
        listed action, which lets figures with state-dependent action sets
        share one global action list.
        """
        for key in ("states", "actions", "transitions"):
            if key not in doc:
                raise InputError(f"missing field '{key}'")
        states = list(doc["states"])
        actions = list(doc["actions"])
        if not isinstance(doc["transitions"], Mapping):
            raise InputError("field 'transitions' must be an object")
        sidx = {s: i for i, s in enumerate(states)}
        if len(sidx) != len(states):
            raise InputError("field 'states' has duplicate names")
        T = np.zeros((len(states), len(actions), len(states)))
        for s in states:
            rows = doc["transitions"].get(s)
            if not rows:
                raise InputError(f"field 'transitions.{s}' is missing or empty")
            unknown = set(rows) - set(actions)
            if unknown:
                raise InputError(f"field 'transitions.{s}' names unknown actions {sorted(unknown)}")
            first = None
            for a in actions:
                if a not in rows:
                    continue
                for entry in rows[a]:
                    if (not isinstance(entry, (list, tuple)) or len(entry) != 2
                            or entry[0] not in sidx):
                        raise InputError(f"field 'transitions.{s}.{a}' has a bad entry {entry!r}")
                    try:
                        prob = float(entry[1])
                    except (TypeError, ValueError):
                        raise InputError(f"field 'transitions.{s}.{a}' has a non-numeric "
                                         f"probability {entry[1]!r}") from None
                    T[sidx[s], actions.index(a), sidx[entry[0]]] += prob
                total = T[sidx[s], actions.index(a)].sum()
                if abs(total - 1.0) > ROW_TOL:
                    raise InputError(f"field 'transitions.{s}.{a}' sums to {total!r}, not 1")
                if first is None:
                    first = actions.index(a)
            for k, a in enumerate(actions):
                if a not in rows:
                    T[sidx[s], k] = T[sidx[s], first]
        return cls(states, actions, T)

    def __repr__(self):
        return f"RewardlessMdp({self.n_states} states, {self.n_actions} actions)"


def load_mdp(path) -> RewardlessMdp:
    """Read an MDP JSON file; parse errors report the offending line."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    try:
        return RewardlessMdp.from_dict(doc)
    except InputError as exc:
        raise InputError(f"{path}: {exc}") from None


def save_mdp(mdp: RewardlessMdp, path) -> None:
    Path(path).write_text(json.dumps(mdp.to_dict(), indent=1) + "\n", encoding="utf-8")


# -- rewards and policies ----------------------------------------------

def state_action_reward(mdp: RewardlessMdp, R) -> np.ndarray:
    """Broadcast a state or state-action reward to shape (|S|, |A|)."""
    R = np.asarray(R, dtype=float)
    if R.shape == (mdp.n_states,):
        R = np.repeat(R[:, None], mdp.n_actions, axis=1)
    if R.shape != (mdp.n_states, mdp.n_actions):
        raise InputError(f"reward has shape {R.shape}; expected ({mdp.n_states},) "
                         f"or ({mdp.n_states}, {mdp.n_actions})")
    if not np.all(np.isfinite(R)):
        raise InputError("reward entries must be finite")
    return R


def as_policy(mdp: RewardlessMdp, pi) -> np.ndarray:
    """Normalize a policy given as a mapping or a sequence to an index array."""
    if isinstance(pi, Mapping):
        out = np.full(mdp.n_states, -1)
        for s, a in pi.items():
            out[mdp.state_index(s)] = mdp.action_index(a)
        if np.any(out < 0):
            missing = [mdp.states[i] for i in np.flatnonzero(out < 0)]
            raise InputError(f"policy is not total; missing states {missing}")
        return out
    seq = list(pi)
    if len(seq) != mdp.n_states:
        raise InputError(f"policy has {len(seq)} entries for {mdp.n_states} states")
    return np.array([mdp.action_index(a) for a in seq], dtype=int)


def _check_discount(gamma):
    if not 0 <= gamma < 1:
        raise DomainError(f"discount {gamma} must lie in [0, 1); use the limit operations at 1")


def policy_matrix(mdp: RewardlessMdp, pi) -> np.ndarray:
    """Column-stochastic ``T^pi``: column ``s`` is ``T(s, pi(s))``."""
    pi = as_policy(mdp, pi)
    return mdp.T[np.arange(mdp.n_states), pi].T.copy()


def row_matrix(mdp: RewardlessMdp, pi) -> np.ndarray:
    """Row-stochastic transition matrix of policy ``pi``."""
    pi = as_policy(mdp, pi)
    return mdp.T[np.arange(mdp.n_states), pi]


def evaluate_policy(mdp: RewardlessMdp, pi, R, gamma: float) -> np.ndarray:
    """On-policy value by a direct dense solve of ``(I - gamma P) V = r_pi``."""
    _check_discount(gamma)
    pi = as_policy(mdp, pi)
    Rsa = state_action_reward(mdp, R)
    P = mdp.T[np.arange(mdp.n_states), pi]
    r_pi = Rsa[np.arange(mdp.n_states), pi]
    return np.linalg.solve(np.eye(mdp.n_states) - gamma * P, r_pi)


def q_from_values(mdp: RewardlessMdp, R, V, gamma: float) -> np.ndarray:
    return state_action_reward(mdp, R) + gamma * mdp.T @ V


def policy_iteration(mdp: RewardlessMdp, R, gamma: float, max_iter: int = 1000):
    """Howard policy iteration with exact evaluation. Returns ``(V*, pi*)``."""
    _check_discount(gamma)
    Rsa = state_action_reward(mdp, R)
    pi = np.argmax(Rsa, axis=1)
    S = np.arange(mdp.n_states)
    for _ in range(max_iter):
        V = evaluate_policy(mdp, pi, Rsa, gamma)
        Q = Rsa + gamma * mdp.T @ V
        cur = Q[S, pi]
        best = Q.max(axis=1)
        slack = 1e-12 * (1.0 + np.abs(V).max())
        improve = best > cur + slack
        if not improve.any():
            return V, pi
        pi = np.where(improve, Q.argmax(axis=1), pi)
    raise RuntimeError("policy iteration did not converge")


def optimal_value(mdp: RewardlessMdp, R, gamma: float) -> np.ndarray:
    return policy_iteration(mdp, R, gamma)[0]


def optimal_q(mdp: RewardlessMdp, R, gamma: float) -> np.ndarray:
    V, _ = policy_iteration(mdp, R, gamma)
    return q_from_values(mdp, R, V, gamma)


@dataclass(frozen=True)
class PolicySetReport:
    """Per-state sets of admissible action indices."""

    actions: tuple
    tol: float
    gamma: float

    def names(self, mdp: RewardlessMdp) -> dict:
        return {mdp.states[s]: sorted(mdp.actions[a] for a in acts)
                for s, acts in enumerate(self.actions)}

    def contains(self, pi) -> bool:
        return all(int(a) in acts for a, acts in zip(pi, self.actions))

    def issubset(self, other: "PolicySetReport") -> bool:
        return all(a <= b for a, b in zip(self.actions, other.actions))


def _report_from_gaps(gaps: np.ndarray, bound: float, tol: float, gamma: float):
    sets = tuple(frozenset(int(a) for a in np.flatnonzero(row <= bound)) for row in gaps)
    return PolicySetReport(sets, tol, gamma)


def optimal_actions(mdp: RewardlessMdp, R, gamma: float, tol: float = OPT_TOL) -> PolicySetReport:
    """Actions whose optimal Q-value is within ``tol`` of the best at each state."""
    if tol <= 0:
        raise InputError("tolerance must be positive")
    Q = optimal_q(mdp, R, gamma)
    return _report_from_gaps(Q.max(axis=1, keepdims=True) - Q, tol, tol, gamma)


def normalized_optimal_value(mdp: RewardlessMdp, R, gamma: float) -> np.ndarray:
    """``(1-gamma) V*`` extended by its limits: ``R`` at 0 and the optimal gain at 1."""
    R = np.asarray(R, dtype=float)
    if gamma == 0:
        return R.copy()
    if gamma == 1:
        from .blackwell import blackwell_solve
        return blackwell_solve(mdp, R).gain
    _check_discount(gamma)
    return (1 - gamma) * optimal_value(mdp, R, gamma)


def eps_optimal_actions(mdp: RewardlessMdp, R, gamma: float, eps: float,
                        tol: float = OPT_TOL) -> PolicySetReport:
    """Actions whose next-state normalized optimal value is within ``eps`` of the best.

    ``tol`` is the Q-gap tolerance of :func:`optimal_actions`, converted to
    the normalized scale so that ``eps = 0`` reproduces the optimal set.
    """
    if eps < 0:
        raise InputError("eps must be non-negative")
    if not 0 <= gamma <= 1:
        raise DomainError("discount must lie in [0, 1]")
    R = np.asarray(R, dtype=float)
    if R.shape != (mdp.n_states,):
        raise InputError("eps-optimality is defined for state-based rewards")
    vhat = normalized_optimal_value(mdp, R, gamma)
    score = mdp.T @ vhat
    gaps = score.max(axis=1, keepdims=True) - score
    scale = (1 - gamma) / gamma if 0 < gamma < 1 else 1.0
    return _report_from_gaps(gaps, eps + tol * scale, tol, gamma)


def transfer_reward(mdp: RewardlessMdp, R, gamma: float, gamma_star: float) -> np.ndarray:
    """Reward whose optimal policies at ``gamma_star`` match those of ``R`` at ``gamma``."""
    if not (0 < gamma < 1 and 0 < gamma_star < 1):
        raise DomainError("discount transfer needs gamma and gamma* strictly inside (0, 1)")
    V = optimal_value(mdp, R, gamma)
    return V - gamma_star * (mdp.T @ V).max(axis=1)


def enumerate_policies(mdp: RewardlessMdp, cap: int = 10 ** 5):
    """Yield every deterministic stationary policy as an index array."""
    count = mdp.n_actions ** mdp.n_states
    if count > cap:
        raise SizeCapError("policy enumeration |A|^|S|", count, cap)
    for combo in itertools.product(range(mdp.n_actions), repeat=mdp.n_states):
        yield np.array(combo, dtype=int)


def random_mdp(n_states: int, n_actions: int, rng: np.random.Generator,
               deterministic: bool = False, sparsity: float = 0.5) -> RewardlessMdp:
    """Random MDP used by property tests; stochastic rows have random support."""
    T = np.zeros((n_states, n_actions, n_states))
    for s in range(n_states):
        for a in range(n_actions):
            if deterministic:
                T[s, a, rng.integers(n_states)] = 1.0
            else:
                support = rng.random(n_states) < sparsity
                support[rng.integers(n_states)] = True
                w = rng.random(n_states) * support
                T[s, a] = w / w.sum()
    return RewardlessMdp([f"s{i}" for i in range(n_states)],
                         [f"a{j}" for j in range(n_actions)], T)


def policy_keys(policy: np.ndarray, n_actions: int) -> np.ndarray:
    """Encode each policy row as one integer (mixed radix) when it fits in 63 bits."""
    S = policy.shape[1]
    if S * math.log2(max(n_actions, 2)) > 62:
        return None
    weights = n_actions ** np.arange(S, dtype=np.int64)
    return policy.astype(np.int64) @ weights


def group_policies(policy: np.ndarray, n_actions: int):
    """``(representatives, inverse)`` grouping identical policy rows."""
    keys = policy_keys(policy, n_actions)
    if keys is None:
        uniq, inverse = np.unique(policy, axis=0, return_inverse=True)
        return uniq, inverse.reshape(-1)
    _, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
    return policy[first], inverse.reshape(-1)
