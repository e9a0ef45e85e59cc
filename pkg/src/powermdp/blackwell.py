"""Optimality in the undiscounted limit via Laurent expansions of the value.

For a policy with row-stochastic matrix ``P`` and state reward ``r``,
``V_gamma = (1 + rho) * sum_{n >= -1} rho^n y_n`` with ``rho = (1-gamma)/gamma``,
``y_{-1} = P* r``, ``y_0 = H r`` and ``y_n = (-1)^n H^{n+1} r``, where ``P*`` is the
Cesaro limit and ``H`` the deviation matrix. Two policies are compared for
gamma near 1 by comparing these coefficient sequences lexicographically; a
policy that no action can lexicographically improve is Blackwell optimal.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chains import cesaro_limit, deviation_matrix
from .mdp import RewardlessMdp, as_policy, group_policies

LEX_TOL = 1e-9


def n_laurent_terms(n_states: int) -> int:
    """Coefficients ``y_{-1} .. y_{2|S|}``; enough to separate distinct rational values."""
    return 2 * n_states + 2


def laurent_operators(P: np.ndarray, n_terms: int) -> np.ndarray:
    """Stack ``L`` with ``y_{k-1} = L[k] @ r`` for ``k = 0 .. n_terms-1``."""
    Pstar = cesaro_limit(P)
    H = deviation_matrix(P, Pstar)
    ops = [Pstar, H]
    Hk = H
    for n in range(1, n_terms - 1):
        Hk = Hk @ H
        ops.append((-1) ** n * Hk)
    return np.stack(ops[:n_terms])


def policy_laurent(mdp: RewardlessMdp, pi, r, n_terms: int | None = None) -> np.ndarray:
    """Laurent coefficients ``(y_{-1}, y_0, ...)`` of a policy's value, shape (K, |S|)."""
    pi = as_policy(mdp, pi)
    P = mdp.T[np.arange(mdp.n_states), pi]
    K = n_terms or n_laurent_terms(mdp.n_states)
    return laurent_operators(P, K) @ np.asarray(r, dtype=float)


def laurent_value(coeffs: np.ndarray, gamma: float) -> np.ndarray:
    """Sum the (truncated) expansion at ``gamma``; accurate when rho is small."""
    rho = (1 - gamma) / gamma
    powers = rho ** np.arange(-1, len(coeffs) - 1)
    return (1 + rho) * np.tensordot(powers, coeffs, axes=1)


def _representatives(mdp: RewardlessMdp) -> np.ndarray:
    """``rep[s, a]``: first action at ``s`` with the same transition row as ``a``."""
    rep = np.tile(np.arange(mdp.n_actions), (mdp.n_states, 1))
    for s in range(mdp.n_states):
        for group in mdp.equivalent_actions(s):
            rep[s, list(group)] = group[0]
    return rep


def _lex_mask(mdp, R, Y, tol):
    """Lexicographically maximal actions given coefficient batch ``Y`` (n, K, S).

    Only one action per equivalence class competes; equivalent actions share
    its verdict. Samples drop out once every state has a single survivor.
    """
    n, K, S = Y.shape
    A = mdp.n_actions
    rep = _representatives(mdp)
    is_rep = rep == np.arange(A)[None, :]
    Tflat = mdp.T.reshape(S * A, S).T
    mask = np.broadcast_to(is_rep, (n, S, A)).copy()
    live = np.arange(n)
    for k in range(K):
        if not len(live):
            break
        term = (Y[live, k] @ Tflat).reshape(len(live), S, A)
        if k == 1:
            term = term + R[live, :, None]
        scale = 1.0 + np.abs(Y[live, k]).max(axis=1)[:, None, None]
        m = mask[live]
        best = np.where(m, term, -np.inf).max(axis=2, keepdims=True)
        m &= term >= best - tol * scale
        mask[live] = m
        live = live[(m.sum(axis=2) > 1).any(axis=1)]
    return np.take_along_axis(mask, np.broadcast_to(rep, (n, S, A)), axis=2)


def blackwell_batch(mdp: RewardlessMdp, R: np.ndarray, tol: float = LEX_TOL,
                    max_iter: int = 200, return_coeffs: bool = False):
    """Blackwell-optimal action masks for a batch of state rewards.

    Returns ``(mask, gain, policy)`` with shapes (n, |S|, |A|), (n, |S|), (n, |S|),
    plus the optimal Laurent coefficients (n, K, |S|) when ``return_coeffs``.
    Samples sharing a policy share one set of Laurent operators.
    """
    R = np.atleast_2d(np.asarray(R, dtype=float))
    n, S = R.shape
    K = n_laurent_terms(S)
    policy = np.argmax((R @ mdp.T.reshape(S * mdp.n_actions, S).T).reshape(n, S, -1), axis=2)
    cache: dict[bytes, np.ndarray] = {}
    rows = np.arange(S)
    for _ in range(max_iter):
        Y = np.empty((n, K, S))
        uniq, inverse = group_policies(policy, mdp.n_actions)
        order = np.argsort(inverse, kind="stable")
        bounds = np.searchsorted(inverse[order], np.arange(len(uniq) + 1))
        for g, pi in enumerate(uniq):
            key = pi.tobytes()
            if key not in cache:
                cache[key] = laurent_operators(mdp.T[rows, pi], K)
            idx = order[bounds[g]:bounds[g + 1]]
            Y[idx] = (R[idx] @ cache[key].reshape(K * S, S).T).reshape(len(idx), K, S)
        mask = _lex_mask(mdp, R, Y, tol)
        current_ok = np.take_along_axis(mask, policy[:, :, None], axis=2)[:, :, 0]
        if current_ok.all():
            if return_coeffs:
                return mask, Y[:, 0], policy, Y
            return mask, Y[:, 0], policy
        first = np.argmax(mask, axis=2)
        policy = np.where(current_ok, policy, first)
    raise RuntimeError("Blackwell policy iteration did not converge")


@dataclass(frozen=True)
class BlackwellResult:
    policy: np.ndarray
    gain: np.ndarray
    bias: np.ndarray
    action_sets: tuple


def blackwell_solve(mdp: RewardlessMdp, r, tol: float = LEX_TOL) -> BlackwellResult:
    """Single-reward convenience wrapper around :func:`blackwell_batch`."""
    r = np.asarray(r, dtype=float)
    mask, gain, policy = blackwell_batch(mdp, r[None, :], tol)
    coeffs = policy_laurent(mdp, policy[0], r, 2)
    sets = tuple(frozenset(int(a) for a in np.flatnonzero(m)) for m in mask[0])
    return BlackwellResult(policy[0], gain[0], coeffs[1], sets)
