"""Reward function distributions and reproducible sampling.

Every distribution turns a block of iid unit-interval draws into reward
vectors, so a sample is a deterministic function of ``(seed, index)``. The
draws come from a Philox generator keyed by the seed whose high counter
word holds the block number; each sample consumes a fixed number of
uniforms (``spec.width(d)``), so sample ``i`` never depends on how many
samples are drawn or on which worker draws them.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import integrate

from .errors import InputError

BLOCK = 4096


# -- unit-interval marginals ----------------------------------------------

class Marginal:
    lo = 0.0
    hi = 1.0

    def ppf(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def mean(self) -> float:
        return integrate.quad(lambda u: float(self.ppf(np.array(u))), 0, 1, limit=200)[0]

    def expected_max(self, k: int) -> float:
        """``E[max of k iid draws]``; the max has quantile function ``ppf(u^(1/k))``."""
        return integrate.quad(lambda u: float(self.ppf(np.array(u ** (1.0 / k)))), 0, 1,
                              limit=200)[0]


@dataclass(frozen=True)
class Uniform(Marginal):
    def ppf(self, u):
        return u

    def mean(self):
        return 0.5

    def expected_max(self, k):
        return k / (k + 1)

    def __str__(self):
        return "uniform01"


@dataclass(frozen=True)
class CdfPow(Marginal):
    """CDF ``x^k`` on the unit interval."""

    k: float

    def __post_init__(self):
        if not self.k > 0:
            raise InputError("cdfpow exponent must be positive")

    def ppf(self, u):
        return u ** (1.0 / self.k)

    def mean(self):
        return self.k / (self.k + 1)

    def expected_max(self, k):
        return self.k * k / (self.k * k + 1)

    def __str__(self):
        return f"cdfpow:{self.k:g}"


@dataclass(frozen=True)
class QuantileTable(Marginal):
    """Piecewise-linear quantile function through equally spaced knots."""

    knots: tuple

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float)
        if len(k) < 2 or np.any(np.diff(k) < 0) or k[0] < 0 or k[-1] > 1:
            raise InputError("quantile knots must be non-decreasing values in [0, 1]")

    def ppf(self, u):
        k = np.asarray(self.knots, dtype=float)
        return np.interp(u, np.linspace(0, 1, len(k)), k)

    def __str__(self):
        return "quantile:" + ",".join(f"{x:g}" for x in self.knots)


# -- reward vector distributions -----------------------------------------

class RewardDistributionSpec:
    """Distribution over reward vectors of dimension ``d``."""

    def width(self, d: int) -> int:
        raise NotImplementedError

    def transform(self, U: np.ndarray, d: int) -> np.ndarray:
        raise NotImplementedError

    def bounds(self) -> tuple[float, float]:
        raise NotImplementedError

    def mean(self, d: int) -> np.ndarray:
        raise NotImplementedError

    deterministic = False
    iid_marginal = None  # set when every state's reward is iid from one marginal

    def check_dim(self, d: int) -> None:
        pass


@dataclass(frozen=True)
class Iid(RewardDistributionSpec):
    marginal: Marginal

    @property
    def iid_marginal(self):
        return self.marginal

    def width(self, d):
        return d

    def transform(self, U, d):
        return self.marginal.ppf(U)

    def bounds(self):
        return (self.marginal.lo, self.marginal.hi)

    def mean(self, d):
        return np.full(d, self.marginal.mean())

    def __str__(self):
        return str(self.marginal)


@dataclass(frozen=True)
class Product(RewardDistributionSpec):
    """Independent per-state marginals, one per state."""

    marginals: tuple

    def check_dim(self, d):
        if len(self.marginals) != d:
            raise InputError(f"product distribution has {len(self.marginals)} marginals "
                             f"for {d} states")

    def width(self, d):
        self.check_dim(d)
        return d

    def transform(self, U, d):
        return np.stack([m.ppf(U[:, i]) for i, m in enumerate(self.marginals)], axis=1)

    def bounds(self):
        return (min(m.lo for m in self.marginals), max(m.hi for m in self.marginals))

    def mean(self, d):
        return np.array([m.mean() for m in self.marginals])

    def __str__(self):
        return "prod:" + ",".join(str(m) for m in self.marginals)


@dataclass(frozen=True)
class Degenerate(RewardDistributionSpec):
    vector: tuple
    deterministic = True

    def check_dim(self, d):
        if len(self.vector) != d:
            raise InputError(f"degenerate reward has {len(self.vector)} entries for {d} states")

    def width(self, d):
        self.check_dim(d)
        return 0

    def transform(self, U, d):
        return np.broadcast_to(np.asarray(self.vector, dtype=float), (len(U), d)).copy()

    def bounds(self):
        return (float(min(self.vector)), float(max(self.vector)))

    def mean(self, d):
        return np.asarray(self.vector, dtype=float)

    def __str__(self):
        return "degenerate:[" + ",".join(f"{x:g}" for x in self.vector) + "]"


@dataclass(frozen=True)
class Mixture(RewardDistributionSpec):
    weights: tuple
    components: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if len(w) != len(self.components) or len(w) == 0:
            raise InputError("mixture needs one weight per component")
        if np.any(w < 0) or abs(w.sum() - 1) > 1e-9:
            raise InputError("mixture weights must be non-negative and sum to 1")

    def check_dim(self, d):
        for c in self.components:
            c.check_dim(d)

    def width(self, d):
        return 1 + sum(c.width(d) for c in self.components)

    def transform(self, U, d):
        choice = np.searchsorted(np.cumsum(self.weights)[:-1], U[:, 0], side="right")
        out = np.empty((len(U), d))
        col = 1
        for k, c in enumerate(self.components):
            w = c.width(d)
            sel = choice == k
            if sel.any():
                out[sel] = c.transform(U[sel, col:col + w], d)
            col += w
        return out

    def bounds(self):
        bs = [c.bounds() for c in self.components]
        return (min(b for b, _ in bs), max(c for _, c in bs))

    def mean(self, d):
        return sum(w * c.mean(d) for w, c in zip(self.weights, self.components))

    @property
    def deterministic(self):
        return len(self.components) == 1 and self.components[0].deterministic

    @property
    def finite_support(self):
        return all(c.deterministic for c in self.components)

    def __str__(self):
        return "mix:" + "+".join(f"{w:g}*{c}" for w, c in zip(self.weights, self.components))


@dataclass(frozen=True)
class Permuted(RewardDistributionSpec):
    """Pushforward of ``base`` under a state permutation (``perm[j] = phi(j)``)."""

    base: RewardDistributionSpec
    perm: tuple

    def check_dim(self, d):
        if sorted(self.perm) != list(range(d)):
            raise InputError("permutation does not match the number of states")
        self.base.check_dim(d)

    def width(self, d):
        return self.base.width(d)

    def transform(self, U, d):
        R = self.base.transform(U, d)
        out = np.empty_like(R)
        out[:, list(self.perm)] = R
        return out

    def bounds(self):
        return self.base.bounds()

    def mean(self, d):
        m = self.base.mean(d)
        out = np.empty_like(m)
        out[list(self.perm)] = m
        return out

    @property
    def deterministic(self):
        return self.base.deterministic

    @property
    def iid_marginal(self):
        return self.base.iid_marginal

    def __str__(self):
        return f"perm:{list(self.perm)}*{self.base}"


def permute_spec(spec: RewardDistributionSpec, perm) -> RewardDistributionSpec:
    """``phi . D``; iid distributions are fixed by every permutation."""
    perm = tuple(int(p) for p in perm)
    if spec.iid_marginal is not None and not isinstance(spec, Permuted):
        return spec
    return Permuted(spec, perm)


def support_finite(spec) -> bool:
    return bool(getattr(spec, "finite_support", False) or spec.deterministic)


# -- sampling ------------------------------------------------------------

def uniform_block(seed: int, block: int, width: int) -> np.ndarray:
    """The ``BLOCK x width`` unit-interval draws of block ``block``."""
    if seed < 0:
        raise InputError("seed must be non-negative")
    bitgen = np.random.Philox(key=seed, counter=[0, 0, block, 0])
    return np.random.Generator(bitgen).random((BLOCK, width))


def sample_rewards(spec: RewardDistributionSpec, d: int, seed: int, start: int,
                   count: int) -> np.ndarray:
    """Reward vectors for sample indices ``start .. start+count-1``, shape (count, d)."""
    spec.check_dim(d)
    w = spec.width(d)
    if count == 0:
        return np.empty((0, d))
    if w == 0:
        return spec.transform(np.empty((count, 0)), d)
    first, last = start // BLOCK, (start + count - 1) // BLOCK
    U = np.concatenate([uniform_block(seed, b, w) for b in range(first, last + 1)])
    off = start - first * BLOCK
    return spec.transform(U[off:off + count], d)


def sample_reward(spec: RewardDistributionSpec, d: int, seed: int, index: int) -> np.ndarray:
    return sample_rewards(spec, d, seed, index, 1)[0]


def weighted_atoms(spec: RewardDistributionSpec, d: int, n: int, seed: int):
    """``(weights, vectors, exact)``: the support of a finite spec, else ``n`` equally weighted draws."""
    spec.check_dim(d)
    if isinstance(spec, Degenerate):
        return np.ones(1), np.asarray(spec.vector, dtype=float)[None, :], True
    if isinstance(spec, Mixture) and spec.finite_support:
        return (np.asarray(spec.weights, dtype=float),
                np.array([c.mean(d) for c in spec.components]), True)
    if n < 1:
        raise InputError("sample count must be at least 1")
    return np.full(n, 1.0 / n), sample_rewards(spec, d, seed, 0, n), False


# -- mini-language ---------------------------------------------------------

def _split_top(text: str, sep: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
        if ch == sep and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return parts


def parse_marginal(text: str) -> Marginal:
    text = text.strip()
    if text == "uniform01":
        return Uniform()
    if text.startswith("cdfpow:"):
        try:
            return CdfPow(float(text[7:]))
        except ValueError:
            raise InputError(f"bad cdfpow exponent in {text!r}") from None
    if text.startswith("quantile:"):
        try:
            return QuantileTable(tuple(float(x) for x in text[9:].split(",")))
        except ValueError:
            raise InputError(f"bad quantile table in {text!r}") from None
    raise InputError(f"unknown marginal {text!r}")


def read_vector(source: str, state_names) -> tuple:
    """Degenerate reward from a JSON list/object file or an inline ``[a,b,...]`` list."""
    source = source.strip()
    if source.startswith("["):
        try:
            doc = json.loads(source)
        except json.JSONDecodeError as exc:
            raise InputError(f"inline reward list, column {exc.colno}: {exc.msg}") from None
    else:
        path = Path(source)
        if not path.is_file():
            raise InputError(f"degenerate reward file {source!r} not found")
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise InputError(f"{source}: line {exc.lineno}: {exc.msg}") from None
    if isinstance(doc, dict):
        if state_names is None:
            raise InputError("a reward given by state name needs an MDP")
        missing = [s for s in state_names if s not in doc]
        if missing:
            raise InputError(f"reward file lacks states {missing}")
        doc = [doc[s] for s in state_names]
    try:
        vec = tuple(float(x) for x in doc)
    except (TypeError, ValueError):
        raise InputError("reward entries must be numbers") from None
    if not all(math.isfinite(x) for x in vec):
        raise InputError("reward entries must be finite")
    return vec


def parse_cycles(text: str, state_names, d: int) -> tuple:
    """Cycle notation such as ``(s1 s2)(s3 s4 s5)`` to ``perm`` with ``perm[j] = phi(j)``."""
    perm = list(range(d))
    lookup = {str(s): i for i, s in enumerate(state_names)} if state_names else {}
    cycles = re.findall(r"\(([^()]*)\)", text)
    if not cycles and text.strip() not in ("", "()"):
        raise InputError(f"bad cycle notation {text!r}")
    seen = set()
    for cyc in cycles:
        items = [x for x in re.split(r"[\s,]+", cyc.strip()) if x]
        idx = []
        for x in items:
            if x in lookup:
                idx.append(lookup[x])
            elif x.isdigit() and int(x) < d:
                idx.append(int(x))
            else:
                raise InputError(f"unknown state {x!r} in cycle notation")
        if seen & set(idx) or len(set(idx)) != len(idx):
            raise InputError("cycles must be disjoint")
        seen |= set(idx)
        for a, b in zip(idx, idx[1:] + idx[:1]):
            perm[a] = b
    return tuple(perm)


def parse_spec(text: str, d: int, state_names=None) -> RewardDistributionSpec:
    """Parse the distribution mini-language.

    ``uniform01`` | ``cdfpow:k`` | ``quantile:q0,..,qm`` (iid over states),
    ``degenerate:<file or [list]>``, ``mix:w1*spec1+w2*spec2``,
    ``perm:<cycles>*<spec>``, ``prod:<m1>,<m2>,...`` (one marginal per state).
    """
    text = text.strip()
    if text.startswith("mix:"):
        weights, comps = [], []
        for term in _split_top(text[4:], "+"):
            w, sep, sub = term.partition("*")
            if not sep:
                raise InputError(f"mixture term {term!r} needs the form w*spec")
            try:
                weights.append(float(w))
            except ValueError:
                raise InputError(f"bad mixture weight {w!r}") from None
            comps.append(parse_spec(sub, d, state_names))
        spec = Mixture(tuple(weights), tuple(comps))
    elif text.startswith("perm:"):
        m = re.match(r"^((?:\s*\([^()]*\))+)\s*\*", text[5:])
        if m is None:
            raise InputError("perm needs the form perm:(cycles)*spec")
        spec = Permuted(parse_spec(text[5 + m.end():], d, state_names),
                        parse_cycles(m.group(1), state_names, d))
    elif text.startswith("degenerate:"):
        spec = Degenerate(read_vector(text[11:], state_names))
    elif text.startswith("prod:"):
        spec = Product(tuple(parse_marginal(m) for m in _split_top(text[5:], ",")))
    else:
        spec = Iid(parse_marginal(text))
    spec.check_dim(d)
    return spec
