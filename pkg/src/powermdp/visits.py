"""Visit distribution functions, recurrent state distributions and child distributions.

A visit distribution function maps a discount to the discounted state
occupancy ``f(gamma) = (I - gamma T^pi)^{-1} e_s`` of a deterministic policy
started at ``s``. Distinct functions are told apart by evaluating them at a
few witness discounts; rational functions of bounded degree that agree at
those points while differing elsewhere do not arise for these matrices in
practice, and the tests cross-check the count bounds.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .chains import cesaro_limit
from .errors import DomainError, SizeCapError
from .mdp import RewardlessMdp, as_policy, policy_matrix

WITNESS_GAMMAS = (0.25, 0.5, 0.75)
AGREE_TOL = 1e-10
ND_STRICT = 1e-9
ND_ZERO = 1e-12
VISIT_CAP = 10 ** 6


def visit_distribution(mdp: RewardlessMdp, pi, s, gamma: float) -> np.ndarray:
    """Discounted visit distribution of ``pi`` from ``s``."""
    if not 0 <= gamma < 1:
        raise DomainError("visit distributions need gamma in [0, 1); use rsd at 1")
    s = mdp.state_index(s)
    Tpi = policy_matrix(mdp, pi)
    e = np.zeros(mdp.n_states)
    e[s] = 1.0
    return np.linalg.solve(np.eye(mdp.n_states) - gamma * Tpi, e)


@dataclass(frozen=True, eq=False)
class VisitDistributionFunction:
    """``f^pi_s`` for a fixed policy and start state."""

    mdp: RewardlessMdp
    policy: np.ndarray
    start: int

    def __call__(self, gamma: float) -> np.ndarray:
        return visit_distribution(self.mdp, self.policy, self.start, gamma)

    def rsd(self) -> np.ndarray:
        return rsd(self.mdp, self.policy, self.start)


@dataclass(frozen=True)
class VisitSet:
    start: int
    functions: tuple
    witness_gammas: tuple = WITNESS_GAMMAS

    def __len__(self):
        return len(self.functions)

    def __iter__(self):
        return iter(self.functions)

    def matrix(self, gamma: float) -> np.ndarray:
        """Rows are the member functions evaluated at ``gamma``."""
        return np.array([f(gamma) for f in self.functions])


def _dedupe(features: np.ndarray, tol: float) -> list[int]:
    """Indices of representatives; rows within ``tol`` (sup norm) are merged."""
    keys = {}
    order = []
    for i, row in enumerate(np.round(features, 8)):
        k = row.tobytes()
        if k not in keys:
            keys[k] = i
            order.append(i)
    reps: list[int] = []
    for i in order:
        if reps and np.max(np.abs(features[reps] - features[i]), axis=1).min() <= tol:
            continue
        reps.append(i)
    return reps


def _local_choices(mdp: RewardlessMdp, reach: np.ndarray) -> list[list[int]]:
    """One representative action per distinct child distribution at each state."""
    return [[g[0] for g in mdp.equivalent_actions(int(u))] for u in reach]


def enumerate_policies_from(mdp: RewardlessMdp, s: int, cap: int = VISIT_CAP):
    """Policies differing only on states reachable from ``s``, up to action equivalence."""
    reach = mdp.reachable(s)
    choices = _local_choices(mdp, reach)
    count = int(np.prod([len(c) for c in choices], dtype=object))
    if count > cap:
        raise SizeCapError(f"visit enumeration from state {mdp.states[s]!r}", count, cap)
    base = np.zeros(mdp.n_states, dtype=int)
    for combo in itertools.product(*choices):
        pi = base.copy()
        pi[reach] = combo
        yield pi


def enumerate_visit_functions(mdp: RewardlessMdp, s, cap: int = VISIT_CAP) -> VisitSet:
    """All distinct visit distribution functions ``F(s)``.

    The enumeration covers one action per equivalence class at each reachable
    state, so its size is the product of the numbers of distinct child
    distributions; that product is checked against ``cap``.
    """
    s = mdp.state_index(s)
    policies = list(enumerate_policies_from(mdp, s, cap))
    feats = np.array([np.concatenate([visit_distribution(mdp, pi, s, g) for g in WITNESS_GAMMAS])
                      for pi in policies])
    reps = _dedupe(feats, AGREE_TOL)
    half = WITNESS_GAMMAS.index(0.5)
    S = mdp.n_states
    reps.sort(key=lambda i: tuple(feats[i, half * S:(half + 1) * S]))
    funcs = tuple(VisitDistributionFunction(mdp, policies[i], s) for i in reps)
    return VisitSet(s, funcs)


# -- strict optimality linear programs ------------------------------------

@dataclass(frozen=True)
class NdVerdict:
    """Outcome of the strict-optimality LP for one vector of a set."""

    index: int
    status: str  # "nondominated", "dominated" or "indeterminate"
    eps: float
    witness: np.ndarray = field(repr=False)
    margin: float


def strict_optimality(vectors) -> list[NdVerdict]:
    """For each vector, maximize the margin by which a reward in ``[-1, 1]^d`` prefers it.

    Solves ``max eps  s.t. (v_i - v_j) . r >= eps  for all j != i``. The optimum
    is never negative (``r = 0`` is feasible). The witness reward is re-checked
    directly and its margin reported.
    """
    V = np.atleast_2d(np.asarray(vectors, dtype=float))
    m, d = V.shape
    out = []
    for i in range(m):
        others = np.delete(np.arange(m), i)
        if len(others) == 0:
            out.append(NdVerdict(i, "nondominated", np.inf, np.zeros(d), np.inf))
            continue
        diff = V[i] - V[others]
        A_ub = np.hstack([-diff, np.ones((len(others), 1))])
        c = np.zeros(d + 1)
        c[-1] = -1.0
        bounds = [(-1.0, 1.0)] * d + [(None, None)]
        res = linprog(c, A_ub=A_ub, b_ub=np.zeros(len(others)), bounds=bounds, method="highs")
        if res.status != 0:
            raise RuntimeError(f"strict-optimality LP failed: {res.message}")
        eps = float(-res.fun)
        r = res.x[:d]
        margin = float(V[i] @ r - (V[others] @ r).max())
        if eps > ND_STRICT and margin > 0:
            status = "nondominated"
        elif eps < ND_ZERO:
            status = "dominated"
        else:
            status = "indeterminate"
        out.append(NdVerdict(i, status, eps, r, margin))
    return out


@dataclass(frozen=True)
class NdReport:
    members: tuple
    verdicts: tuple

    @property
    def nondominated(self) -> list:
        return [m for m, v in zip(self.members, self.verdicts) if v.status == "nondominated"]

    @property
    def dominated(self) -> list:
        return [m for m, v in zip(self.members, self.verdicts) if v.status == "dominated"]

    @property
    def indeterminate(self) -> list:
        return [m for m, v in zip(self.members, self.verdicts) if v.status == "indeterminate"]


def non_dominated(mdp: RewardlessMdp, s, visit_set: VisitSet | None = None,
                  gamma: float = 0.5) -> NdReport:
    """Classify each member of ``F(s)`` by strict optimality at one discount."""
    if visit_set is None:
        visit_set = enumerate_visit_functions(mdp, s)
    verdicts = strict_optimality(visit_set.matrix(gamma))
    return NdReport(visit_set.functions, tuple(verdicts))


# -- recurrent state distributions ------------------------------------

def rsd(mdp: RewardlessMdp, pi, s) -> np.ndarray:
    """Long-run state frequencies ``lim (1-gamma) f(gamma)`` from ``s`` under ``pi``."""
    s = mdp.state_index(s)
    pi = as_policy(mdp, pi)
    P = mdp.T[np.arange(mdp.n_states), pi]
    return cesaro_limit(P)[s]


@dataclass(frozen=True, eq=False)
class Rsd:
    vector: np.ndarray
    policy: np.ndarray
    start: int


def rsd_set(mdp: RewardlessMdp, s, cap: int = VISIT_CAP) -> list[Rsd]:
    """Distinct RSDs reachable from ``s``, sorted lexicographically."""
    s = mdp.state_index(s)
    policies = list(enumerate_policies_from(mdp, s, cap))
    vecs = np.array([rsd(mdp, pi, s) for pi in policies])
    reps = _dedupe(vecs, AGREE_TOL)
    reps.sort(key=lambda i: tuple(vecs[i]))
    return [Rsd(vecs[i], policies[i], s) for i in reps]


def rsd_nondominated(mdp: RewardlessMdp, s, rsds: list[Rsd] | None = None) -> NdReport:
    """Strict-optimality classification of the RSD vectors themselves."""
    if rsds is None:
        rsds = rsd_set(mdp, s)
    verdicts = strict_optimality([d.vector for d in rsds])
    return NdReport(tuple(rsds), tuple(verdicts))


# -- child distributions ------------------------------------------------

@dataclass(frozen=True, eq=False)
class ChildDistribution:
    vector: np.ndarray
    actions: tuple


def child_distributions(mdp: RewardlessMdp, s) -> list[ChildDistribution]:
    s = mdp.state_index(s)
    return [ChildDistribution(mdp.T[s, g[0]].copy(), tuple(g))
            for g in mdp.equivalent_actions(s)]


def nd_child_distributions(mdp: RewardlessMdp, s) -> NdReport:
    children = child_distributions(mdp, s)
    verdicts = strict_optimality([c.vector for c in children])
    return NdReport(tuple(children), tuple(verdicts))
