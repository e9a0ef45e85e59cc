"""Long-run structure of finite Markov chains (row-stochastic matrices)."""
from __future__ import annotations

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

EDGE_TOL = 1e-15


def recurrent_classes(P: np.ndarray) -> list[np.ndarray]:
    """Closed strongly connected components of the transition graph of ``P``."""
    adj = P > EDGE_TOL
    n_comp, labels = connected_components(csr_matrix(adj), directed=True, connection="strong")
    classes = []
    for c in range(n_comp):
        members = np.flatnonzero(labels == c)
        outside = np.ones(len(P), dtype=bool)
        outside[members] = False
        if not adj[np.ix_(members, outside)].any():
            classes.append(members)
    return classes


def stationary(P: np.ndarray) -> np.ndarray:
    """Stationary distribution of an irreducible row-stochastic matrix."""
    n = len(P)
    A = np.vstack([P.T - np.eye(n), np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    mu = np.linalg.lstsq(A, b, rcond=None)[0]
    mu = np.clip(mu, 0.0, None)
    return mu / mu.sum()


def cesaro_limit(P: np.ndarray) -> np.ndarray:
    """Limiting matrix ``P* = lim (1/N) sum_{k<N} P^k``.

    Each recurrent class contributes its stationary distribution, weighted by
    the probability of absorption into that class.
    """
    n = len(P)
    classes = recurrent_classes(P)
    recurrent = np.zeros(n, dtype=bool)
    for c in classes:
        recurrent[c] = True
    transient = np.flatnonzero(~recurrent)
    Pstar = np.zeros((n, n))
    absorb = np.zeros((n, len(classes)))
    for k, c in enumerate(classes):
        absorb[c, k] = 1.0
    if len(transient):
        Q = P[np.ix_(transient, transient)]
        into = np.stack([P[np.ix_(transient, c)].sum(axis=1) for c in classes], axis=1)
        absorb[transient] = np.linalg.solve(np.eye(len(transient)) - Q, into)
    for k, c in enumerate(classes):
        mu = stationary(P[np.ix_(c, c)])
        Pstar[:, c] += absorb[:, [k]] * mu[None, :]
    return Pstar


def deviation_matrix(P: np.ndarray, Pstar: np.ndarray | None = None) -> np.ndarray:
    """``H = (I - P + P*)^{-1} (I - P*)``."""
    if Pstar is None:
        Pstar = cesaro_limit(P)
    n = len(P)
    return np.linalg.inv(np.eye(n) - P + Pstar) - Pstar
