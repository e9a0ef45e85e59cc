"""State permutations, orbit votes and copy containment.

A permutation is stored as ``perm`` with ``perm[j] = phi(j)``. It acts on a
vector by moving entry ``j`` to position ``phi(j)``, which for reward vectors
and visit distributions is ``(phi . x)[phi(j)] = x[j]``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .dists import Product, RewardDistributionSpec, weighted_atoms
from .errors import InputError, SizeCapError
from .mdp import RewardlessMdp
from .power import ActionTarget, RsdTarget, VisitTarget, optimal_indicator, power_all_states

EXACT_ORBIT_CAP = math.factorial(10)
INVOLUTION_DIM_CAP = 12
VOTE_TOL = 1e-12


@dataclass(frozen=True)
class StatePermutation:
    perm: tuple

    def __post_init__(self):
        perm = tuple(int(p) for p in self.perm)
        if sorted(perm) != list(range(len(perm))):
            raise InputError(f"{perm} is not a permutation")
        object.__setattr__(self, "perm", perm)

    @classmethod
    def identity(cls, d: int) -> "StatePermutation":
        return cls(tuple(range(d)))

    @classmethod
    def transposition(cls, d: int, pairs) -> "StatePermutation":
        """Product of disjoint transpositions ``(i j)``."""
        perm = list(range(d))
        for i, j in pairs:
            perm[i], perm[j] = j, i
        return cls(tuple(perm))

    def __len__(self):
        return len(self.perm)

    @property
    def inverse(self) -> "StatePermutation":
        return StatePermutation(tuple(np.argsort(self.perm)))

    def compose(self, other: "StatePermutation") -> "StatePermutation":
        """``self o other``: apply ``other`` first."""
        return StatePermutation(tuple(self.perm[j] for j in other.perm))

    @property
    def is_involution(self) -> bool:
        return all(self.perm[p] == j for j, p in enumerate(self.perm))

    def fixes(self, j: int) -> bool:
        return self.perm[j] == j

    def apply(self, x) -> np.ndarray:
        """Permute the last axis of ``x``."""
        x = np.asarray(x)
        out = np.empty_like(x)
        out[..., list(self.perm)] = x
        return out

    def cycles(self) -> str:
        """Cycle notation without fixed points, e.g. ``(0 2)(1 3)``; ``()`` for the identity."""
        seen, parts = set(), []
        for start in range(len(self.perm)):
            if start in seen or self.perm[start] == start:
                continue
            cycle, j = [], start
            while j not in seen:
                seen.add(j)
                cycle.append(str(j))
                j = self.perm[j]
            parts.append("(" + " ".join(cycle) + ")")
        return "".join(parts) or "()"

    def as_matrix(self) -> np.ndarray:
        """``P[i, j] = 1`` iff ``i = phi(j)``."""
        d = len(self.perm)
        P = np.zeros((d, d))
        P[list(self.perm), np.arange(d)] = 1.0
        return P


# -- orbit votes ---------------------------------------------------------------

@dataclass(frozen=True)
class PowerQuantity:
    """Compare POWER at two states."""

    state: object
    other: object
    gamma: float


@dataclass(frozen=True)
class OptProbQuantity:
    """Compare the optimality probabilities of two targets at one state.

    ``action`` and ``other`` are action names or optimality targets
    (``ActionTarget``, ``VisitTarget``, ``RsdTarget``).
    """

    state: object
    action: object
    other: object
    gamma: float


@dataclass(frozen=True)
class OrbitVote:
    count_gt: int
    count_lt: int
    count_eq: int
    n_elements: int
    exact: bool
    notes: dict = field(default_factory=dict)

    def holds(self, ratio: float = 1.0) -> bool:
        """``count_gt >= ratio * count_lt``."""
        return self.count_gt >= ratio * self.count_lt


def _element_key(perm: np.ndarray, weights, atoms, spec, exact: bool):
    """A hashable description of ``phi . D`` that is equal for equal distributions."""
    if exact:
        moved = np.empty_like(atoms)
        moved[:, perm] = atoms
        rows = sorted(zip(np.round(weights, 12).tolist(), map(tuple, np.round(moved, 12).tolist())))
        return tuple(rows)
    if isinstance(spec, Product):
        labels = [None] * len(perm)
        for j, p in enumerate(perm):
            labels[p] = str(spec.marginals[j])
        return tuple(labels)
    return tuple(perm)


def _orbit_perms(d: int, exact: bool, n_perms: int | None, seed: int):
    if exact:
        if math.factorial(d) > EXACT_ORBIT_CAP:
            raise SizeCapError("exact orbit enumeration (|S|!)", math.factorial(d), EXACT_ORBIT_CAP)
        return [np.array(p) for p in itertools.permutations(range(d))]
    if not n_perms:
        raise SizeCapError("orbit without sampling (|S|!)", math.factorial(d), EXACT_ORBIT_CAP)
    rng = np.random.default_rng(seed)
    return [rng.permutation(d) for _ in range(n_perms)]


def _target(x):
    return x if isinstance(x, (ActionTarget, VisitTarget, RsdTarget)) else ActionTarget(x)


def _quantity_pairs(mdp: RewardlessMdp, quantity, R: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(quantity, PowerQuantity):
        s, t = mdp.state_index(quantity.state), mdp.state_index(quantity.other)
        P = power_all_states(mdp, R, quantity.gamma, states=[s, t])
        return P[:, s], P[:, t]
    if isinstance(quantity, OptProbQuantity):
        s = mdp.state_index(quantity.state)
        first = optimal_indicator(mdp, s, _target(quantity.action), quantity.gamma, R)
        second = optimal_indicator(mdp, s, _target(quantity.other), quantity.gamma, R)
        return first, second
    raise InputError(f"unknown orbit quantity {quantity!r}")


def orbit_vote(mdp: RewardlessMdp, quantity, spec: RewardDistributionSpec, exact: bool = True,
               n_perms: int | None = None, n: int = 10_000, seed: int = 0,
               batch_rows: int = 1 << 18) -> OrbitVote:
    """Tally the orbit elements ``phi . D`` by which side of the comparison wins.

    Distinct orbit elements are counted once. Finite-support specs are
    evaluated exactly on their atoms; other specs use ``n`` shared draws that
    every orbit element permutes (common random numbers). Iid specs have a
    single-element orbit.
    """
    d = mdp.n_states
    spec.check_dim(d)
    weights, atoms, exact_atoms = weighted_atoms(spec, d, n, seed)
    if spec.iid_marginal is not None:
        perms = [np.arange(d)]
    else:
        perms = _orbit_perms(d, exact, n_perms, seed)
    elements = {}
    for p in perms:
        elements.setdefault(_element_key(p, weights, atoms, spec, exact_atoms), p)
    reps = list(elements.values())
    m = len(atoms)
    per_batch = max(1, batch_rows // m)
    first = np.empty(len(reps))
    second = np.empty(len(reps))
    for start in range(0, len(reps), per_batch):
        chunk = reps[start:start + per_batch]
        R = np.empty((len(chunk) * m, d))
        for k, p in enumerate(chunk):
            R[k * m:(k + 1) * m][:, p] = atoms
        q1, q2 = _quantity_pairs(mdp, quantity, R)
        first[start:start + len(chunk)] = (q1.reshape(len(chunk), m) * weights).sum(axis=1)
        second[start:start + len(chunk)] = (q2.reshape(len(chunk), m) * weights).sum(axis=1)
    gap = first - second
    tol = VOTE_TOL * (1.0 + np.maximum(np.abs(first), np.abs(second)))
    gt = int((gap > tol).sum())
    lt = int((gap < -tol).sum())
    notes = {"atoms_exact": exact_atoms, "permutations_examined": len(perms)}
    if not exact_atoms:
        notes["samples"] = n
        notes["seed"] = seed
    return OrbitVote(gt, lt, len(reps) - gt - lt, len(reps), exact and exact_atoms, notes)


# -- copy containment -------------------------------------------------------

def involutions(d: int, fixed=(), cap: int = INVOLUTION_DIM_CAP):
    """Every involution on ``range(d)`` fixing the indices in ``fixed``."""
    if d > cap:
        raise SizeCapError("involution search dimension", d, cap)
    free = [i for i in range(d) if i not in set(fixed)]

    def rec(rest):
        if not rest:
            yield []
            return
        head, tail = rest[0], rest[1:]
        for pairs in rec(tail):
            yield pairs
        for k, partner in enumerate(tail):
            for pairs in rec(tail[:k] + tail[k + 1:]):
                yield [(head, partner)] + pairs

    for pairs in rec(free):
        yield StatePermutation.transposition(d, pairs)


def _as_set(X) -> np.ndarray:
    """Stack a vector set as (m, ..., d); visit sets are evaluated at their witness discounts."""
    if hasattr(X, "functions"):
        return np.stack([np.stack([f(g) for g in X.witness_gammas]) for f in X.functions])
    return np.asarray([np.asarray(x, dtype=float) for x in X])


def _keys(X: np.ndarray, decimals: int = 9) -> set:
    return {np.round(x, decimals).tobytes() for x in X + 0.0}


def check_copy_containment(X, Xp, fixed=(), cap: int = INVOLUTION_DIM_CAP) -> list[StatePermutation]:
    """All involutions ``phi`` with ``phi . X' ⊆ X``, honoring fixed points."""
    X, Xp = _as_set(X), _as_set(Xp)
    if X.shape[1:] != Xp.shape[1:]:
        raise InputError("vector sets have different shapes")
    target = _keys(X)
    return [phi for phi in involutions(X.shape[-1], fixed, cap)
            if _keys(phi.apply(Xp)) <= target]


def contains_copies(B, A, n: int, fixed=(), cap: int = INVOLUTION_DIM_CAP):
    """Involutions ``phi_1..phi_n`` witnessing that ``B`` contains ``n`` copies of ``A``.

    Each ``B_i = phi_i . A`` must lie in ``B`` and every ``phi_i`` must fix each
    other ``B_j`` as a set. Returns the first witness tuple found, or ``None``.
    """
    Bv, Av = _as_set(B), _as_set(A)
    witnesses = check_copy_containment(Bv, Av, fixed, cap)
    copies = [phi.apply(Av) for phi in witnesses]
    ok = [[i == j or _keys(witnesses[i].apply(copies[j])) == _keys(copies[j])
           for j in range(len(witnesses))] for i in range(len(witnesses))]

    def extend(chosen, start):
        if len(chosen) == n:
            return chosen
        for k in range(start, len(witnesses)):
            if all(ok[k][j] and ok[j][k] for j in chosen):
                found = extend(chosen + [k], k + 1)
                if found is not None:
                    return found
        return None

    found = extend([], 0)
    return None if found is None else tuple(witnesses[k] for k in found)
