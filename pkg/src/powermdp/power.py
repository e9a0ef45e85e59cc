"""POWER, average optimal value, optimality probability and attainable utility distance.

All estimators draw reward vectors from a :class:`RewardDistributionSpec`,
solve each sampled MDP exactly and average a per-sample quantity. Samples are
processed in fixed chunks whose partial sums are combined with ``math.fsum``
in chunk order, so results do not depend on the number of worker threads
(``POWERMDP_THREADS``).
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .blackwell import LEX_TOL, blackwell_batch, laurent_operators, n_laurent_terms
from .dists import RewardDistributionSpec, sample_rewards
from .errors import DomainError, InputError
from .mdp import OPT_TOL, RewardlessMdp, group_policies
from .visits import VisitDistributionFunction, child_distributions, rsd_set

CHUNK = 1 << 15
DEFAULT_CI = 0.95


# -- confidence intervals --------------------------------------------------

def hoeffding_radius(width: float, n: int, ci: float = DEFAULT_CI) -> float:
    """Two-sided Hoeffding radius for the mean of ``n`` draws in an interval of ``width``."""
    delta = 1.0 - ci
    return width * math.sqrt(math.log(2.0 / delta) / (2.0 * n))


@dataclass(frozen=True)
class EstimateWithCI:
    quantity: str
    estimate: float
    radius: float
    n: int
    seed: int
    ci: float = DEFAULT_CI
    notes: dict = field(default_factory=dict, compare=False)

    @property
    def interval(self) -> tuple[float, float]:
        return (self.estimate - self.radius, self.estimate + self.radius)

    def covers(self, value: float) -> bool:
        lo, hi = self.interval
        return lo <= value <= hi


# -- batched exact solvers -------------------------------------------------

def lookahead(mdp: RewardlessMdp, X: np.ndarray) -> np.ndarray:
    """``out[n, s, a] = T(s, a) . X[n]`` as one matrix product."""
    S, A = mdp.n_states, mdp.n_actions
    return (X @ mdp.T.reshape(S * A, S).T).reshape(len(X), S, A)


def solve_batch(mdp: RewardlessMdp, R: np.ndarray, gamma: float, max_iter: int = 500):
    """Optimal values for a batch of state rewards by policy iteration.

    Samples whose current policies coincide share one matrix inverse, so the
    cost grows with the number of distinct policies rather than samples.
    Returns ``(V, policy)`` with shapes (n, |S|).
    """
    if not 0 <= gamma < 1:
        raise DomainError("batched solves need gamma in [0, 1)")
    R = np.atleast_2d(R)
    n, S = R.shape
    rows = np.arange(S)
    policy = np.argmax(lookahead(mdp, R), axis=2)
    if gamma == 0:
        return R.copy(), policy
    cache: dict[bytes, np.ndarray] = {}
    V = np.empty((n, S))
    for _ in range(max_iter):
        uniq, inverse = group_policies(policy, mdp.n_actions)
        if len(uniq) == 1:
            pi = uniq[0]
            key = pi.tobytes()
            if key not in cache:
                cache[key] = np.linalg.inv(np.eye(S) - gamma * mdp.T[rows, pi])
            V = R @ cache[key].T
        else:
            order = np.argsort(inverse, kind="stable")
            bounds = np.searchsorted(inverse[order], np.arange(len(uniq) + 1))
            for g, pi in enumerate(uniq):
                key = pi.tobytes()
                if key not in cache:
                    cache[key] = np.linalg.inv(np.eye(S) - gamma * mdp.T[rows, pi])
                idx = order[bounds[g]:bounds[g + 1]]
                V[idx] = R[idx] @ cache[key].T
        Q = R[:, :, None] + gamma * lookahead(mdp, V)
        cur = np.take_along_axis(Q, policy[:, :, None], axis=2)[:, :, 0]
        slack = 1e-12 * (1.0 + np.abs(V).max(axis=1, keepdims=True))
        improve = Q.max(axis=2) > cur + slack
        if not improve.any():
            return V, policy
        policy = np.where(improve, Q.argmax(axis=2), policy)
    raise RuntimeError("batched policy iteration did not converge")


def q_batch(mdp: RewardlessMdp, R: np.ndarray, V: np.ndarray, gamma: float) -> np.ndarray:
    return R[:, :, None] + gamma * lookahead(mdp, V)


# -- chunked estimation -----------------------------------------------------

def n_workers() -> int:
    env = os.environ.get("POWERMDP_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            return max(1, min(int(env), cap))
        except ValueError:
            raise InputError("POWERMDP_THREADS must be an integer") from None
    return 1


def chunk_sums(spec: RewardDistributionSpec, d: int, n: int, seed: int, fn, chunk: int = CHUNK):
    """Evaluate ``fn(R_chunk) -> (m, k)`` over all samples; return per-column sums in order."""
    if n < 1:
        raise InputError("sample count must be at least 1")
    starts = list(range(0, n, chunk))

    def work(start):
        R = sample_rewards(spec, d, seed, start, min(chunk, n - start))
        vals = np.asarray(fn(R), dtype=float)
        return vals.reshape(len(R), -1).sum(axis=0)

    workers = n_workers()
    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, starts))
    else:
        parts = [work(s) for s in starts]
    parts = np.array(parts)
    return np.array([math.fsum(parts[:, j]) for j in range(parts.shape[1])])


def _check_bounded(spec):
    b, c = spec.bounds()
    if not (math.isfinite(b) and math.isfinite(c)):
        raise InputError("reward distribution must have bounded support")
    return b, c


def _estimate(quantity, spec, mdp, n, seed, fn, width, ci):
    total = chunk_sums(spec, mdp.n_states, n, seed, fn)[0]
    return EstimateWithCI(quantity, total / n, hoeffding_radius(width, n, ci), n, seed, ci)


# -- average optimal value and POWER ------------------------------------

def average_optimal_value(mdp: RewardlessMdp, s, gamma: float, spec: RewardDistributionSpec,
                          n: int, seed: int, ci: float = DEFAULT_CI) -> EstimateWithCI:
    """``E_R[V*_R(s, gamma)]``."""
    if not 0 <= gamma < 1:
        raise DomainError("average optimal value needs gamma in [0, 1)")
    s = mdp.state_index(s)
    b, c = _check_bounded(spec)
    return _estimate("vavg", spec, mdp, n, seed, lambda R: solve_batch(mdp, R, gamma)[0][:, s],
                     (c - b) / (1 - gamma), ci)


def power_samples(mdp: RewardlessMdp, R: np.ndarray, gamma: float) -> np.ndarray:
    """Per-sample POWER at every state, ``(1-gamma)/gamma (V* - R)``, shape (n, |S|)."""
    V, _ = solve_batch(mdp, R, gamma)
    return (1 - gamma) / gamma * (V - R)


def power(mdp: RewardlessMdp, s, gamma: float, spec: RewardDistributionSpec, n: int,
          seed: int, ci: float = DEFAULT_CI) -> EstimateWithCI:
    """Monte Carlo POWER; ``gamma`` in {0, 1} dispatches to :func:`power_limit`."""
    if gamma in (0, 1):
        return power_limit(mdp, s, int(gamma), spec, n, seed, ci)
    if not 0 < gamma < 1:
        raise DomainError("POWER needs gamma in [0, 1]")
    s = mdp.state_index(s)
    b, c = _check_bounded(spec)
    est = _estimate("power", spec, mdp, n, seed,
                    lambda R: power_samples(mdp, R, gamma)[:, s], c - b, ci)
    marginal = spec.iid_marginal
    if marginal is not None:
        lo, hi = marginal.mean(), marginal.expected_max(mdp.n_states)
        est.notes["iid_bounds"] = (lo, hi)
        est.notes["iid_bounds_ok"] = (est.estimate + est.radius >= lo
                                      and est.estimate - est.radius <= hi)
    return est


def power_states(mdp: RewardlessMdp, states, gamma: float, spec: RewardDistributionSpec,
                 n: int, seed: int, ci: float = DEFAULT_CI) -> list[EstimateWithCI]:
    """POWER at several states from one shared sample stream and one solve per chunk.

    Each estimate equals what :func:`power` returns for that state with the same seed.
    """
    if not 0 < gamma < 1:
        return [power(mdp, s, gamma, spec, n, seed, ci) for s in states]
    idx = [mdp.state_index(s) for s in states]
    b, c = _check_bounded(spec)
    totals = chunk_sums(spec, mdp.n_states, n, seed,
                        lambda R: power_samples(mdp, R, gamma)[:, idx])
    radius = hoeffding_radius(c - b, n, ci)
    return [EstimateWithCI("power", t / n, radius, n, seed, ci) for t in totals]


def _limit_vectors(mdp: RewardlessMdp, s: int, end: int) -> np.ndarray:
    if end == 0:
        return np.array([c.vector for c in child_distributions(mdp, s)])
    return np.array([d.vector for d in rsd_set(mdp, s)])


def exact_basis_count(vectors: np.ndarray, tol: float = 1e-12):
    """Number ``k`` of basis vectors if the max over ``vectors`` is a max of ``k`` coordinates.

    True when every vector is supported on coordinates whose standard basis
    vectors are themselves members; then ``max_d d.r = max_i r_i`` over those
    coordinates for every ``r``. Returns ``None`` otherwise.
    """
    basis = set()
    for v in vectors:
        nz = np.flatnonzero(np.abs(v) > tol)
        if len(nz) == 1 and abs(v[nz[0]] - 1) <= tol:
            basis.add(int(nz[0]))
    for v in vectors:
        if not set(np.flatnonzero(np.abs(v) > tol)) <= basis:
            return None
    return len(basis)


def power_limit(mdp: RewardlessMdp, s, end: int, spec: RewardDistributionSpec, n: int,
                seed: int, ci: float = DEFAULT_CI) -> EstimateWithCI:
    """POWER at ``gamma = 0`` (children) or ``gamma = 1`` (RSDs).

    ``E[max_v v.R]`` over child distributions or RSDs of ``s``. For uniform iid
    rewards where the max reduces to ``k`` coordinates the exact ``k/(k+1)`` is
    returned with zero radius.
    """
    if end not in (0, 1):
        raise DomainError("power_limit end must be 0 or 1")
    s = mdp.state_index(s)
    b, c = _check_bounded(spec)
    vecs = _limit_vectors(mdp, s, end)
    marginal = spec.iid_marginal
    if marginal is not None and str(marginal) == "uniform01" and end == 1:
        k = exact_basis_count(vecs)
        if k is not None:
            return EstimateWithCI(f"power_limit{end}", k / (k + 1), 0.0, n, seed, ci,
                                  {"exact": True, "k": k})
    return _estimate(f"power_limit{end}", spec, mdp, n, seed,
                     lambda R: (R @ vecs.T).max(axis=1), c - b, ci)


# -- optimality probability --------------------------------------------

@dataclass(frozen=True)
class ActionTarget:
    action: object


@dataclass(frozen=True)
class VisitTarget:
    functions: tuple


@dataclass(frozen=True)
class RsdTarget:
    vectors: tuple


def _lex_equal(a: np.ndarray, b: np.ndarray, tol: float) -> np.ndarray:
    """Rows of ``a`` and ``b`` (n, K) equal in every term up to a scaled tolerance."""
    scale = 1.0 + np.maximum(np.abs(a), np.abs(b))
    return (np.abs(a - b) <= tol * scale).all(axis=1)


def optimal_indicator(mdp: RewardlessMdp, s: int, target, gamma: float,
                      R: np.ndarray) -> np.ndarray:
    """Per-sample 0/1 indicator that ``target`` is optimal at ``s``."""
    S = mdp.n_states
    if isinstance(target, ActionTarget):
        a = mdp.action_index(target.action)
        if gamma == 1:
            mask, _, _ = blackwell_batch(mdp, R)
            return mask[:, s, a].astype(float)
        if gamma == 0:
            nxt = R @ mdp.T[s].T
        else:
            V, _ = solve_batch(mdp, R, gamma)
            nxt = q_batch(mdp, R, V, gamma)[:, s]
        return (nxt[:, a] >= nxt.max(axis=1) - OPT_TOL).astype(float)
    if isinstance(target, VisitTarget):
        funcs = target.functions
        if gamma == 1:
            _, _, _, Ystar = blackwell_batch(mdp, R, return_coeffs=True)
            K = n_laurent_terms(S)
            hit = np.zeros(len(R), dtype=bool)
            rows = np.arange(S)
            for f in funcs:
                L = laurent_operators(mdp.T[rows, f.policy], K)[:, s, :]
                hit |= _lex_equal(R @ L.T, Ystar[:, :, s], LEX_TOL)
            return hit.astype(float)
        if gamma == 0:
            nxt = R @ mdp.T[s].T
            ok = nxt >= nxt.max(axis=1, keepdims=True) - OPT_TOL
            return ok[:, [int(f.policy[s]) for f in funcs]].any(axis=1).astype(float)
        V, _ = solve_batch(mdp, R, gamma)
        F = np.array([f(gamma) for f in funcs])
        return ((R @ F.T).max(axis=1) >= V[:, s] - OPT_TOL).astype(float)
    if isinstance(target, RsdTarget):
        if gamma != 1:
            raise DomainError("RSD targets are only defined at gamma = 1")
        D = np.array(target.vectors)
        allv = np.array([d.vector for d in rsd_set(mdp, s)])
        return ((R @ D.T).max(axis=1) >= (R @ allv.T).max(axis=1) - OPT_TOL).astype(float)
    raise InputError(f"unknown optimality target {target!r}")


def optimality_probability(mdp: RewardlessMdp, s, target, gamma: float,
                           spec: RewardDistributionSpec, n: int, seed: int,
                           ci: float = DEFAULT_CI) -> EstimateWithCI:
    """Probability under ``spec`` that ``target`` is optimal at ``s``.

    ``gamma`` in (0, 1) uses a Q-gap tolerance, ``gamma = 0`` the greedy
    next-state comparison. At ``gamma = 1`` action and visit targets use
    Blackwell optimality and RSD targets use average optimality.
    """
    if not 0 <= gamma <= 1:
        raise DomainError("gamma must lie in [0, 1]")
    s = mdp.state_index(s)
    if isinstance(target, VisitTarget) and not target.functions:
        raise InputError("empty visit-distribution target")
    if isinstance(target, RsdTarget) and not target.vectors:
        raise InputError("empty RSD target")
    if isinstance(target, VisitTarget):
        for f in target.functions:
            if not isinstance(f, VisitDistributionFunction) or f.start != s:
                raise InputError("visit targets must be functions started at the queried state")
    _check_bounded(spec)
    return _estimate("optprob", spec, mdp, n, seed,
                     lambda R: optimal_indicator(mdp, s, target, gamma, R), 1.0, ci)


# -- POWER-seeking comparison ---------------------------------------------

def power_all_states(mdp: RewardlessMdp, R: np.ndarray, gamma: float, states=None) -> np.ndarray:
    """Per-sample POWER at each state in ``states`` (all by default), any gamma in [0, 1]."""
    states = range(mdp.n_states) if states is None else states
    out = np.zeros((len(R), mdp.n_states))
    if 0 < gamma < 1:
        return power_samples(mdp, R, gamma)
    for u in states:
        vecs = _limit_vectors(mdp, u, int(gamma))
        out[:, u] = (R @ vecs.T).max(axis=1)
    return out


@dataclass(frozen=True)
class Comparison:
    difference: EstimateWithCI

    @property
    def verdict(self) -> str:
        lo, hi = self.difference.interval
        if lo > 0:
            return "greater"
        if hi < 0:
            return "less"
        return "indistinguishable"


def power_seeking_compare(mdp: RewardlessMdp, s, a, a2, gamma: float,
                          spec: RewardDistributionSpec, n: int, seed: int,
                          ci: float = DEFAULT_CI) -> Comparison:
    """Paired estimate of ``E_{s'~T(s,a)} POWER(s') - E_{s'~T(s,a2)} POWER(s')``."""
    if not 0 <= gamma <= 1:
        raise DomainError("gamma must lie in [0, 1]")
    s = mdp.state_index(s)
    a, a2 = mdp.action_index(a), mdp.action_index(a2)
    b, c = _check_bounded(spec)
    diff = mdp.T[s, a] - mdp.T[s, a2]
    support = [int(u) for u in np.flatnonzero(np.abs(diff) > 0)]

    def fn(R):
        if not support:
            return np.zeros(len(R))
        return power_all_states(mdp, R, gamma, support) @ diff

    est = _estimate("power_compare", spec, mdp, n, seed, fn, 2 * (c - b), ci)
    return Comparison(est)


# -- attainable utility distance ------------------------------------------

def _as_distribution(mdp: RewardlessMdp, delta) -> np.ndarray:
    if not isinstance(delta, (list, tuple, np.ndarray)):
        v = np.zeros(mdp.n_states)
        v[mdp.state_index(delta)] = 1.0
        return v
    v = np.asarray(delta, dtype=float)
    if v.shape != (mdp.n_states,) or np.any(v < 0) or abs(v.sum() - 1) > 1e-9:
        raise InputError("state distributions must be probability vectors over states")
    return v


def _attainable(mdp, R, gamma, normalized):
    if gamma == 1:
        if not normalized:
            raise DomainError("unnormalized attainable utility distance needs gamma < 1")
        return blackwell_batch(mdp, R)[1]
    V, _ = solve_batch(mdp, R, gamma)
    return (1 - gamma) * V if normalized else V


def au_distance_matrix(mdp: RewardlessMdp, deltas, gamma: float, spec: RewardDistributionSpec,
                       n: int, seed: int, normalized: bool = False,
                       ci: float = DEFAULT_CI) -> tuple[np.ndarray, float]:
    """Pairwise attainable utility distances between state distributions.

    Every pair is averaged over the same reward samples. Returns the
    distance matrix and the common Hoeffding radius.
    """
    if not 0 <= gamma <= 1:
        raise DomainError("gamma must lie in [0, 1]")
    D = np.array([_as_distribution(mdp, d) for d in deltas])
    m = len(D)
    b, c = _check_bounded(spec)

    def fn(R):
        X = _attainable(mdp, R, gamma, normalized) @ D.T
        return np.abs(X[:, :, None] - X[:, None, :]).reshape(len(R), -1)

    sums = chunk_sums(spec, mdp.n_states, n, seed, fn)
    width = (c - b) if normalized else (c - b) / (1 - gamma)
    return sums.reshape(m, m) / n, hoeffding_radius(width, n, ci)


def au_distance(mdp: RewardlessMdp, delta, delta2, gamma: float, spec: RewardDistributionSpec,
                n: int, seed: int, ci: float = DEFAULT_CI) -> EstimateWithCI:
    """``E_R |E_delta V*_R - E_delta2 V*_R|``."""
    if not 0 <= gamma < 1:
        raise DomainError("attainable utility distance needs gamma in [0, 1); "
                          "use au_distance_normalized at 1")
    M, r = au_distance_matrix(mdp, [delta, delta2], gamma, spec, n, seed, False, ci)
    return EstimateWithCI("au_dist", float(M[0, 1]), r, n, seed, ci)


def au_distance_normalized(mdp: RewardlessMdp, delta, delta2, gamma: float,
                           spec: RewardDistributionSpec, n: int, seed: int,
                           ci: float = DEFAULT_CI) -> EstimateWithCI:
    """``(1-gamma) d_au``, using optimal gains at ``gamma = 1``."""
    M, r = au_distance_matrix(mdp, [delta, delta2], gamma, spec, n, seed, True, ci)
    return EstimateWithCI("au_dist_norm", float(M[0, 1]), r, n, seed, ci)
