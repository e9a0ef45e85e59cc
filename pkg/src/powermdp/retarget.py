"""Decision rules over finite sets of outcome lotteries and their orbit tendencies.

An ``OutcomeProblem`` holds lottery vectors ``C`` (rows) and two disjoint
index sets ``A`` and ``B``. A rule maps a subset ``X`` of row indices and a
utility vector ``u`` to the probability of picking a lottery in ``X``.
Expected utilities are summed with ``math.fsum`` so permuting ``u`` together
with the lotteries reproduces every probability bit for bit.
"""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, SizeCapError
from .power import hoeffding_radius

ORBIT_DIM_CAP = 8
TIE_TOL = 1e-12
N_ARMS = 5


@dataclass(frozen=True)
class OutcomeProblem:
    vectors: np.ndarray
    A: tuple
    B: tuple

    def __post_init__(self):
        V = np.atleast_2d(np.asarray(self.vectors, dtype=float))
        if not np.isfinite(V).all():
            raise InputError("outcome lotteries must be finite")
        A, B = tuple(int(i) for i in self.A), tuple(int(i) for i in self.B)
        if not A or not B:
            raise InputError("A and B must be non-empty")
        if set(A) & set(B):
            raise InputError("A and B must be disjoint")
        if any(not 0 <= i < len(V) for i in A + B):
            raise InputError("A and B must index rows of the lottery matrix")
        object.__setattr__(self, "vectors", V)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    @property
    def C(self) -> tuple:
        return tuple(sorted(set(self.A) | set(self.B)))

    def utilities(self, u) -> np.ndarray:
        """Expected utility of every lottery, each an exactly rounded sum."""
        u = np.asarray(u, dtype=float)
        if u.shape != (self.d,):
            raise InputError(f"utility vector must have {self.d} entries")
        return np.array([math.fsum(row * u) for row in self.vectors])


def _mask(problem: OutcomeProblem, X) -> np.ndarray:
    m = np.zeros(len(problem.vectors), dtype=bool)
    m[list(X)] = True
    if not set(X) <= set(problem.C):
        raise InputError("X must be a subset of C = A ∪ B")
    return m


class DecisionRule:
    """Base class; ``probs(values)`` gives a probability per element of ``C``."""

    def probs(self, values: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def prob(self, values: np.ndarray, in_x: np.ndarray) -> float:
        p = self.probs(values)
        return math.fsum(p[in_x])


def _levels(values: np.ndarray):
    """Distinct values ascending, with each element's level index."""
    levels, index = np.unique(values, return_inverse=True)
    return levels, index.reshape(-1)


@dataclass(frozen=True)
class Argmax(DecisionRule):
    """Indicator that ``X`` contains an optimal lottery (not a distribution over C)."""

    def probs(self, values):
        return (values == values.max()).astype(float)

    def prob(self, values, in_x):
        return float((values[in_x] == values.max()).any())


@dataclass(frozen=True)
class FractionOptimal(DecisionRule):
    """Uniform choice among the optimal lotteries."""

    def probs(self, values):
        best = values == values.max()
        return best / best.sum()

    def prob(self, values, in_x):
        best = values == values.max()
        return (best & in_x).sum() / best.sum()


@dataclass(frozen=True)
class AntiArgmax(DecisionRule):
    """Indicator that ``X`` contains a utility-minimizing lottery."""

    def probs(self, values):
        return Argmax().probs(-values)

    def prob(self, values, in_x):
        return Argmax().prob(-values, in_x)


@dataclass(frozen=True)
class Boltzmann(DecisionRule):
    """Softmax of expected utility divided by ``temperature``; argmax as it goes to 0."""

    temperature: float = 1.0

    def __post_init__(self):
        if not self.temperature > 0:
            raise InputError("Boltzmann temperature must be positive")

    def probs(self, values):
        w = np.exp((values - values.max()) / self.temperature)
        return w / math.fsum(w)

    def prob(self, values, in_x):
        w = np.exp((values - values.max()) / self.temperature)
        return math.fsum(w[in_x]) / math.fsum(w)


@dataclass(frozen=True)
class Satisfice(DecisionRule):
    """Uniform choice among lotteries with utility at least ``threshold``; all zero if none."""

    threshold: float

    def __post_init__(self):
        if not math.isfinite(self.threshold):
            raise InputError("satisficing threshold must be finite")

    def probs(self, values):
        ok = values >= self.threshold
        return ok / ok.sum() if ok.any() else np.zeros(len(values))

    def prob(self, values, in_x):
        ok = values >= self.threshold
        return (ok & in_x).sum() / ok.sum() if ok.any() else 0.0


@dataclass(frozen=True)
class BestOfK(DecisionRule):
    """Draw ``k`` lotteries uniformly with replacement and pick uniformly among the best drawn.

    Closed form: the best drawn level is ``w`` with probability
    ``((a_w + L_w)/m)^k - (a_w/m)^k``, where ``L_w`` lotteries sit at level ``w``
    and ``a_w`` below it; given that, each level-``w`` lottery is equally likely.
    """

    k: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise InputError("best-of-k needs an integer k >= 1")

    def probs(self, values):
        m = len(values)
        levels, index = _levels(values)
        size = np.bincount(index, minlength=len(levels))
        below = np.concatenate([[0], np.cumsum(size)[:-1]])
        top = ((below + size) / m) ** self.k - (below / m) ** self.k
        return top[index] / size[index]


@dataclass(frozen=True)
class Quantilizer(DecisionRule):
    """Top-``q`` quantile of base distribution ``P`` by expected utility, ties shared in proportion to ``P``.

    ``base`` gives ``P`` per element of ``C`` (uniform when omitted).
    """

    q: float
    base: tuple | None = None

    def __post_init__(self):
        if not 0 < self.q <= 1:
            raise InputError("quantile q must lie in (0, 1]")
        if self.base is not None:
            P = np.asarray(self.base, dtype=float)
            if (P < 0).any() or abs(math.fsum(P) - 1) > 1e-9:
                raise InputError("quantilizer base distribution must be a probability vector")

    def _base(self, m):
        if self.base is None:
            return np.full(m, 1.0 / m)
        if len(self.base) != m:
            raise InputError("quantilizer base distribution has the wrong length")
        return np.asarray(self.base, dtype=float)

    def threshold(self, values, P) -> float:
        """``inf {M : P(v > M) <= q}``; ``-inf`` when ``q >= 1``."""
        if self.q >= 1:
            return -math.inf
        for w in np.unique(values[P > 0]):
            if math.fsum(P[values > w]) <= self.q:
                return float(w)
        return float(values[P > 0].max())

    def probs(self, values):
        P = self._base(len(values))
        M = self.threshold(values, P)
        above = values > M
        at = (values == M) & (P > 0)
        out = np.where(above, P / self.q, 0.0)
        if at.any():
            spill = self.q - math.fsum(P[above])
            out = np.where(at, P / self.q * spill / math.fsum(P[at]), out)
        return out


@dataclass(frozen=True)
class UniformRandom(DecisionRule):
    def probs(self, values):
        return np.full(len(values), 1.0 / len(values))


@dataclass(frozen=True)
class Stubborn(DecisionRule):
    """Always picks the element at position ``index`` of ``C``, whatever the utility."""

    index: int

    def probs(self, values):
        out = np.zeros(len(values))
        out[self.index] = 1.0
        return out


def decision_prob(rule: DecisionRule, X, problem: OutcomeProblem, u) -> float:
    """``f(X | C, u)`` for the rule restricted to ``C = A ∪ B``."""
    C = list(problem.C)
    values = problem.utilities(u)[C]
    in_x = _mask(problem, X)[C]
    return float(rule.prob(values, in_x))


def quantilize_prob(q: float, P, X, problem: OutcomeProblem, u) -> float:
    return decision_prob(Quantilizer(q, None if P is None else tuple(P)), X, problem, u)


# -- orbit tendencies ----------------------------------------------------------

@dataclass(frozen=True)
class TendencyReport:
    count_b: int
    count_a: int
    count_tie: int
    n_elements: int
    ratio: float
    exact: bool
    rows: list = field(default_factory=list, repr=False)

    @property
    def holds(self) -> bool:
        return self.count_b >= self.ratio * self.count_a


def utility_orbit(u, exact: bool = True, n_perms: int | None = None, seed: int = 0) -> list[tuple]:
    """Distinct permutations of ``u`` in first-seen order."""
    u = tuple(float(x) for x in u)
    if exact:
        if len(u) > ORBIT_DIM_CAP:
            raise SizeCapError("utility orbit dimension", len(u), ORBIT_DIM_CAP)
        perms = itertools.permutations(range(len(u)))
    else:
        if not n_perms:
            raise SizeCapError("utility orbit without sampling", len(u), ORBIT_DIM_CAP)
        rng = np.random.default_rng(seed)
        perms = (rng.permutation(len(u)) for _ in range(n_perms))
    seen = {}
    for p in perms:
        v = [0.0] * len(u)
        for j, pj in enumerate(p):
            v[pj] = u[j]
        seen.setdefault(tuple(v), None)
    return list(seen)


def orbit_tendency_check(rule, problem: OutcomeProblem, u, n: float = 1.0,
                         exact: bool = True, n_perms: int | None = None,
                         seed: int = 0) -> TendencyReport:
    """Tally orbit elements ``u'`` with ``f(B|u') > f(A|u')`` against the reverse.

    ``rule`` is a :class:`DecisionRule` or any callable ``(X, problem, u) -> prob``.
    The verdict is ``count_B >= n * count_A``. Beyond dimension 8 pass
    ``exact=False`` with ``n_perms`` to tally sampled permutations instead.
    """
    if isinstance(rule, DecisionRule):
        def prob(X, problem, v):
            return decision_prob(rule, X, problem, v)
    else:
        prob = rule
    rows, nb, na = [], 0, 0
    for v in utility_orbit(u, exact, n_perms, seed):
        fb, fa = prob(problem.B, problem, v), prob(problem.A, problem, v)
        rows.append((v, fb, fa))
        if fb > fa + TIE_TOL:
            nb += 1
        elif fa > fb + TIE_TOL:
            na += 1
    return TendencyReport(nb, na, len(rows) - nb - na, len(rows), n, exact, rows)


# -- epsilon-greedy bandit ----------------------------------------------------

@dataclass(frozen=True)
class BanditConfig:
    utilities: tuple
    epsilon: float = 0.1
    trials: int = 100

    def __post_init__(self):
        if len(self.utilities) != N_ARMS:
            raise InputError(f"the bandit has exactly {N_ARMS} arms")
        if not 0 < self.epsilon < 1:
            raise InputError("epsilon must lie in (0, 1)")
        if self.trials < 0:
            raise InputError("trial count must be non-negative")


@dataclass(frozen=True)
class BanditEstimate:
    probs: np.ndarray
    radius: float
    sims: int
    seed: int


def _uniform_among(mask: np.ndarray, keys: np.ndarray) -> np.ndarray:
    """Index of a uniformly chosen ``True`` entry per row, driven by ``keys``."""
    return np.argmax(np.where(mask, keys, -1.0), axis=1)


def bandit_train_prob(config: BanditConfig, sims: int, seed: int,
                      ci: float = 0.95) -> BanditEstimate:
    """Probability that the trained greedy policy pulls each arm.

    Each trial exploits with probability ``1 - epsilon`` (greedy arm, ties
    broken uniformly) and otherwise explores one of the four other arms
    uniformly. The pulled arm's estimate becomes its utility (learning rate 1);
    estimates start at 0. The final policy is uniform over the greedy arms.
    """
    if sims < 1:
        raise InputError("need at least one simulation")
    u = np.asarray(config.utilities, dtype=float)
    rng = np.random.Generator(np.random.Philox(key=seed))
    Q = np.zeros((sims, N_ARMS))
    rows = np.arange(sims)
    for _ in range(config.trials):
        greedy = _uniform_among(Q == Q.max(axis=1, keepdims=True), rng.random((sims, N_ARMS)))
        explore = rng.random(sims) < config.epsilon
        other = (greedy + 1 + rng.integers(0, N_ARMS - 1, sims)) % N_ARMS
        arm = np.where(explore, other, greedy)
        Q[rows, arm] = u[arm]
    best = Q == Q.max(axis=1, keepdims=True)
    probs = (best / best.sum(axis=1, keepdims=True)).mean(axis=0)
    return BanditEstimate(probs, hoeffding_radius(1.0, sims, ci), sims, seed)


def bandit_problem() -> OutcomeProblem:
    """Arms as standard basis lotteries with ``A = {a1}`` and ``B = {a2..a5}``."""
    return OutcomeProblem(np.eye(N_ARMS), (0,), tuple(range(1, N_ARMS)))


def bandit_rule(epsilon: float = 0.1, trials: int = 100, sims: int = 10_000, seed: int = 0):
    """A ``(X, problem, u) -> prob`` callable backed by :func:`bandit_train_prob`.

    Every utility vector reuses ``seed``, so orbit elements share random numbers.
    """
    @functools.lru_cache(maxsize=None)
    def arm_probs(u):
        return bandit_train_prob(BanditConfig(u, epsilon, trials), sims, seed).probs

    def prob(X, problem, u):
        return float(arm_probs(tuple(float(x) for x in u))[list(X)].sum())
    return prob


def train_lower_bound(epsilon: float, trials: int) -> float:
    """``1 - (1 - epsilon/4)^T``."""
    return 1.0 - (1.0 - epsilon / 4) ** trials


# -- the card example -------------------------------------------------------

CARD_NAMES = ("spade", "heart", "diamond")


def cards_problem() -> OutcomeProblem:
    """Spade and heart in ``B``, diamond in ``A``; lotteries are basis vectors."""
    return OutcomeProblem(np.eye(3), (2,), (0, 1))
