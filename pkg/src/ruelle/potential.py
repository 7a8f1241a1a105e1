"""Potentials on the truncated sequence space.

A potential is evaluated on integer word arrays of shape (k, D) with an
anchor tail; everything downstream (operator tables, Birkhoff sums, audits)
is built on :meth:`Potential.evaluate_words`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .alphabet import Alphabet, EvaluationError
from .seqspace import Grid, TruncatedPoint, pad_words

log = logging.getLogger(__name__)

INF_DEPTH = None  # declared depth of long-range potentials


def _node_table(alphabet: Alphabet, values=None, func=None, arity: int = 1) -> np.ndarray:
    """Tabulate a node function (arity 1) or node-pair function (arity 2)."""
    n = alphabet.size
    if values is not None:
        table = np.asarray(values, dtype=float)
        if table.shape != (n,) * arity:
            raise ValueError(f"table shape {table.shape} does not match {(n,) * arity}")
        return table
    nodes = alphabet.nodes
    if arity == 1:
        return np.array([float(func(a)) for a in nodes])
    return np.array([[float(func(a, b)) for b in nodes] for a in nodes])


class Potential:
    """Base class; subclasses define ``evaluate_words``."""

    name: str = "potential"
    depth: int | None = 0
    alpha: float = 1.0
    sup_bound: float = 0.0

    def evaluate_words(self, alphabet: Alphabet, words: np.ndarray, anchor: int = 0) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> dict:
        return {}

    def describe(self) -> dict:
        return {"family": self.name, "params": self.params()}

    def evaluate(self, x: TruncatedPoint, alphabet: Alphabet | None = None) -> float:
        alphabet = alphabet or x.alphabet
        if alphabet is None:
            raise ValueError("no alphabet to evaluate on")
        v = float(self.evaluate_words(alphabet, np.asarray([x.word]), x.anchor)[0])
        if not math.isfinite(v):
            raise EvaluationError(f"{self.name} is not finite at {x.word}", node=x.word)
        return v

    def grid_values(self, grid: Grid, depth: int | None = None) -> np.ndarray:
        """Values on every word of the given depth (default: grid depth), shaped (n,)*depth."""
        g = grid if depth is None else grid.with_depth(depth)
        vals = self.evaluate_words(grid.alphabet, g.words, grid.anchor)
        if not np.all(np.isfinite(vals)):
            bad = int(np.flatnonzero(~np.isfinite(vals))[0])
            raise EvaluationError(f"{self.name} is not finite on the grid", node=tuple(g.words[bad]))
        return vals.reshape(g.shape)

    def __add__(self, other):
        if isinstance(other, (int, float)):
            return LinearCombination(((1.0, self),), float(other))
        return LinearCombination(((1.0, self), (1.0, other)))

    __radd__ = __add__

    def __mul__(self, c):
        return LinearCombination(((float(c), self),))

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other if isinstance(other, Potential) else -float(other))


@dataclass(frozen=True, eq=False)
class Constant(Potential):
    c: float = 0.0
    name = "constant"
    depth = 0

    @property
    def sup_bound(self):
        return abs(self.c)

    def evaluate_words(self, alphabet, words, anchor=0):
        return np.full(len(words), float(self.c))

    def params(self):
        return {"c": self.c}


@dataclass(frozen=True, eq=False)
class OneSite(Potential):
    """f(x) = c(x_1) from a node table."""

    table: np.ndarray = field(default_factory=lambda: np.zeros(1))
    alpha: float = 1.0
    label: str = "first-coordinate"
    extra: dict = field(default_factory=dict)
    depth = 1

    @property
    def name(self):
        return self.label

    @property
    def sup_bound(self):
        return float(np.abs(self.table).max())

    def evaluate_words(self, alphabet, words, anchor=0):
        return self.table[pad_words(words, 1, anchor)[:, 0]]

    def params(self):
        return self.extra or {"values": [float(v) for v in self.table]}


@dataclass(frozen=True, eq=False)
class TwoSite(Potential):
    """f(x) = A(x_1, x_2)."""

    matrix: np.ndarray = field(default_factory=lambda: np.zeros((1, 1)))
    alpha: float = 1.0
    name = "two-coordinate"
    depth = 2

    @property
    def sup_bound(self):
        return float(np.abs(self.matrix).max())

    def evaluate_words(self, alphabet, words, anchor=0):
        w = pad_words(words, 2, anchor)
        return self.matrix[w[:, 0], w[:, 1]]

    def params(self):
        return {"matrix": np.asarray(self.matrix).tolist()}


@dataclass(frozen=True, eq=False)
class LongRange(Potential):
    """f(x) = -sum_{n>=1} J0 r^n g(x_1, x_n), g a node-pair table.

    The anchor tail is summed in closed form, so evaluation is exact for the
    induced sequence.
    """

    J0: float = 1.0
    r: float = 0.5
    coupling: np.ndarray = field(default_factory=lambda: np.ones((1, 1)))
    alpha: float = 1.0
    name = "long-range"
    depth = INF_DEPTH

    def __post_init__(self):
        if not 0 < self.r < 1 or self.J0 < 0:
            raise ValueError("long-range needs J0 >= 0 and r in (0, 1)")

    @property
    def sup_bound(self):
        return self.J0 * self.r / (1 - self.r) * float(np.abs(self.coupling).max())

    def evaluate_words(self, alphabet, words, anchor=0):
        g = self.coupling
        first = words[:, 0]
        depth = words.shape[1]
        powers = self.J0 * self.r ** np.arange(1, depth + 1)
        total = g[first[:, None], words] @ powers
        total += self.J0 * g[first, anchor] * self.r ** (depth + 1) / (1 - self.r)
        return -total

    def tail_bound(self, M: int) -> float:
        """sup |f - f_M| for the depth-M truncation."""
        return self.J0 * float(np.ptp(self.coupling)) * self.r ** (M + 1) / (1 - self.r)

    def params(self):
        return {"J0": self.J0, "r": self.r, "coupling": np.asarray(self.coupling).tolist()}


@dataclass(frozen=True, eq=False)
class Table(Potential):
    """Cylinder potential given by its values on words of length ``values.ndim``."""

    values: np.ndarray = field(default_factory=lambda: np.zeros(1))
    alpha: float = 1.0
    label: str = "table"

    @property
    def name(self):
        return self.label

    @property
    def depth(self):
        return self.values.ndim

    @property
    def sup_bound(self):
        return float(np.abs(self.values).max())

    def evaluate_words(self, alphabet, words, anchor=0):
        w = pad_words(words, self.values.ndim, anchor)
        return self.values[tuple(w.T)]

    def params(self):
        return {"values": np.asarray(self.values).tolist()}


@dataclass(frozen=True, eq=False)
class LinearCombination(Potential):
    terms: tuple = ()
    constant: float = 0.0
    name = "combination"

    @property
    def depth(self):
        depths = [p.depth for _, p in self.terms]
        if any(d is None for d in depths):
            return None
        return max(depths, default=0)

    @property
    def alpha(self):
        return min((p.alpha for _, p in self.terms), default=1.0)

    @property
    def sup_bound(self):
        return sum(abs(c) * p.sup_bound for c, p in self.terms) + abs(self.constant)

    def evaluate_words(self, alphabet, words, anchor=0):
        out = np.full(len(words), self.constant)
        for c, p in self.terms:
            if c != 0.0:
                out = out + c * p.evaluate_words(alphabet, words, anchor)
        return out

    def params(self):
        return {
            "constant": self.constant,
            "terms": [{"coef": c, **p.describe()} for c, p in self.terms],
        }


@dataclass(frozen=True, eq=False)
class Truncated(Potential):
    """x -> f(x_1..x_M, anchor tail)."""

    base: Potential = field(default_factory=Constant)
    M: int = 1
    name = "truncated"

    @property
    def depth(self):
        return self.M if self.base.depth is None else min(self.M, self.base.depth)

    @property
    def alpha(self):
        return self.base.alpha

    @property
    def sup_bound(self):
        return self.base.sup_bound

    def evaluate_words(self, alphabet, words, anchor=0):
        return self.base.evaluate_words(alphabet, pad_words(words, self.M, anchor), anchor)

    def params(self):
        return {"M": self.M, "base": self.base.describe()}


def truncate_depth(f: Potential, M: int) -> Potential:
    if M < 1:
        raise ValueError("M must be >= 1")
    if isinstance(f, Truncated) and f.M == M:
        return f
    if f.depth is not None and f.depth <= M:
        return f
    return Truncated(f, M)


def birkhoff_sum(f: Potential, x: TruncatedPoint, n: int, alphabet: Alphabet | None = None) -> float:
    """f_n(x) = sum_{k<n} f(sigma^k x); shifted words keep the anchor tail."""
    if n < 1:
        raise ValueError("n must be >= 1")
    alphabet = alphabet or x.alphabet
    need = n + (f.depth if f.depth is not None else 0)
    if f.depth is None or x.depth < need:
        log.debug("birkhoff_sum padded by the anchor tail; error <= D_alpha * 2^(-alpha*%d)", x.depth - n)
    seq = np.asarray(x.coordinates(x.depth + n))
    words = np.stack([seq[k : k + x.depth] for k in range(n)])
    return float(f.evaluate_words(alphabet, words, x.anchor).sum())


# --- named constructors --------------------------------------------------

def constant(c: float) -> Constant:
    return Constant(float(c))


def first_coordinate(values, alpha: float = 1.0) -> OneSite:
    return OneSite(np.asarray(values, dtype=float), alpha)


def node_function(alphabet: Alphabet, func: Callable, label: str, extra: dict, alpha: float = 1.0) -> OneSite:
    """One-site potential x -> func(node value of x_1)."""
    return OneSite(_node_table(alphabet, func=func), alpha, label, extra)


def two_coordinate(matrix, alpha: float = 1.0) -> TwoSite:
    return TwoSite(np.asarray(matrix, dtype=float), alpha)


def long_range(J0: float, r: float, coupling=None, alphabet: Alphabet | None = None, alpha: float | None = None) -> LongRange:
    """Long-range family; ``coupling`` is an (n, n) table, ``"one"`` or ``"distance"``."""
    if coupling is None or isinstance(coupling, str):
        if alphabet is None:
            raise ValueError("named couplings need the alphabet")
        kind = coupling or "one"
        if kind == "one":
            coupling = np.ones((alphabet.size, alphabet.size))
        elif kind == "distance":
            coupling = alphabet.clamped.copy()
        else:
            raise ValueError(f"unknown coupling {kind!r}")
    if alpha is None:
        alpha = min(1.0, math.log(1 / r) / math.log(2))
    return LongRange(float(J0), float(r), np.asarray(coupling, dtype=float), alpha)


def table(values, alpha: float = 1.0, label: str = "table") -> Table:
    return Table(np.asarray(values, dtype=float), alpha, label)


def audit_sup_bound(f: Potential, grid: Grid, probes: int = 10**4, seed: int = 0) -> float:
    """Max |f| over random words of depth grid.depth + 2; compare with sup_bound."""
    rng = np.random.default_rng(seed)
    words = rng.integers(0, grid.n, size=(probes, grid.depth + 2))
    return float(np.abs(f.evaluate_words(grid.alphabet, words, grid.anchor)).max())


def audit_declared_depth(f: Potential, grid: Grid, probes: int = 2000, seed: int = 0, atol: float = 1e-12) -> bool:
    """True if changing coordinate M+1 (and beyond) never changes f."""
    if f.depth is None:
        return True
    rng = np.random.default_rng(seed)
    D = f.depth + 3
    words = rng.integers(0, grid.n, size=(probes, D))
    other = words.copy()
    other[:, f.depth :] = rng.integers(0, grid.n, size=(probes, D - f.depth))
    a = f.evaluate_words(grid.alphabet, words, grid.anchor)
    b = f.evaluate_words(grid.alphabet, other, grid.anchor)
    return bool(np.all(np.abs(a - b) <= atol))
