"""Alphabets E and a priori probability measures p on them.

Every grid-backed measure exposes a finite node set with positive weights;
those nodes are the "grid alphabet" on which sequence-space functions are
tabulated.  The path-space alphabet has no grid and is only integrated by
Monte Carlo.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Any, Callable

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

KINDS = ("finite", "real-line", "circle", "path-space")


class EvaluationError(ValueError):
    """A function returned a non-finite value at an alphabet point."""

    def __init__(self, message: str, node: Any = None):
        super().__init__(message)
        self.node = node


@dataclass(frozen=True, eq=False)
class Alphabet:
    kind: str
    nodes: np.ndarray | None = None
    distances: np.ndarray | None = None
    dim: int = 1
    segments: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown alphabet kind {self.kind!r}")
        if self.kind == "path-space":
            if self.segments < 2 or self.dim < 1:
                raise ValueError("path-space alphabet needs segments >= 2 and dim >= 1")
            return
        if self.nodes is None or len(self.nodes) < 1:
            raise ValueError("alphabet needs at least one node")
        d = self.distances
        n = len(self.nodes)
        if d is None or d.shape != (n, n):
            raise ValueError("distance matrix must be (n, n)")
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise ValueError("distances must be finite and nonnegative")
        if np.any(np.diag(d) != 0) or not np.allclose(d, d.T, rtol=0, atol=1e-14):
            raise ValueError("distance matrix must be symmetric with zero diagonal")

    @property
    def size(self) -> int:
        if self.nodes is None:
            raise TypeError("path-space alphabet has no node set")
        return len(self.nodes)

    @cached_property
    def clamped(self) -> np.ndarray:
        """min(d_E, 1) on node pairs, the per-coordinate term of d_X."""
        return np.minimum(self.distances, 1.0)

    def points(self) -> list:
        if self.nodes is None:
            raise TypeError("path-space alphabet has no node set")
        return [self.nodes[i] for i in range(self.size)]

    def distance(self, a, b) -> float:
        """d_E between two raw alphabet points (not node indices)."""
        if self.kind == "finite":
            ia = _node_index(self.nodes, a)
            ib = _node_index(self.nodes, b)
            return float(self.distances[ia, ib])
        if self.kind == "real-line":
            return float(np.linalg.norm(np.atleast_1d(np.asarray(a, float) - np.asarray(b, float))))
        if self.kind == "circle":
            delta = abs(float(a) - float(b)) % (2 * np.pi)
            return min(delta, 2 * np.pi - delta)
        from .paths import hausdorff_distance

        return hausdorff_distance(a, b)


def _node_index(nodes, a) -> int:
    hits = np.flatnonzero(np.asarray(nodes) == a)
    if hits.size == 0:
        raise ValueError(f"{a!r} is not a node of this alphabet")
    return int(hits[0])


def finite_alphabet(nodes=None, size: int | None = None, distances=None) -> Alphabet:
    """Finite alphabet; the default metric is the discrete one (1 off the diagonal)."""
    if nodes is None:
        if size is None:
            raise ValueError("give nodes or size")
        nodes = np.arange(size)
    nodes = np.asarray(nodes)
    n = len(nodes)
    if distances is None:
        distances = 1.0 - np.eye(n)
    return Alphabet("finite", nodes, np.asarray(distances, dtype=float))


def real_line_alphabet(nodes: np.ndarray) -> Alphabet:
    nodes = np.asarray(nodes, dtype=float)
    pts = nodes.reshape(len(nodes), -1)
    d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
    return Alphabet("real-line", nodes, d, dim=pts.shape[1])


def circle_alphabet(nodes: np.ndarray) -> Alphabet:
    nodes = np.asarray(nodes, dtype=float)
    delta = np.abs(nodes[:, None] - nodes[None, :]) % (2 * np.pi)
    return Alphabet("circle", nodes, np.minimum(delta, 2 * np.pi - delta))


@dataclass(frozen=True, eq=False)
class AprioriMeasure:
    """A priori measure p: an alphabet plus an integration backend.

    ``backend`` is one of ``exact``, ``gauss-hermite``, ``trapezoid`` (grid
    backends with ``weights``) or ``monte-carlo`` (``samples`` draws with
    ``seed``).
    """

    alphabet: Alphabet
    backend: str
    weights: np.ndarray | None = None
    order: int | None = None
    samples: int | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.backend == "monte-carlo":
            if not self.samples or self.samples < 1 or self.seed is None:
                raise ValueError("monte-carlo backend needs samples >= 1 and a seed")
            return
        w = self.weights
        if w is None or len(w) != self.alphabet.size:
            raise ValueError("one weight per node required")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")

    @property
    def is_grid(self) -> bool:
        return self.backend != "monte-carlo"

    @property
    def size(self) -> int:
        return self.alphabet.size


def _probability(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and nonnegative")
    return w / w.sum()


def finite_measure(weights=None, nodes=None, size=None, distances=None) -> AprioriMeasure:
    if weights is not None and nodes is None and size is None:
        size = len(weights)
    alphabet = finite_alphabet(nodes, size, distances)
    if weights is None:
        weights = np.ones(alphabet.size)
    return AprioriMeasure(alphabet, "exact", _probability(weights))


def gaussian_measure(dim: int = 1, order: int = 21) -> AprioriMeasure:
    """Standard normal p on R^dim, discretised by a tensor Gauss-Hermite rule."""
    if order < 1 or dim < 1:
        raise ValueError("order and dim must be positive")
    x, w = hermegauss(order)
    w = w / np.sqrt(2 * np.pi)
    if dim == 1:
        nodes, weights = x, w
    else:
        grids = np.meshgrid(*([x] * dim), indexing="ij")
        nodes = np.stack([g.ravel() for g in grids], axis=1)
        weights = np.prod(np.meshgrid(*([w] * dim), indexing="ij"), axis=0).ravel()
    return AprioriMeasure(real_line_alphabet(nodes), "gauss-hermite", weights / weights.sum(), order=order)


def circle_measure(order: int = 64) -> AprioriMeasure:
    """Uniform measure on the circle via the periodic trapezoid rule."""
    nodes = 2 * np.pi * np.arange(order) / order
    return AprioriMeasure(circle_alphabet(nodes), "trapezoid", np.full(order, 1.0 / order), order=order)


def path_measure(segments: int, dim: int = 1, samples: int = 1000, seed: int = 0) -> AprioriMeasure:
    """Pushforward of iid standard Gaussian vertices to polygonal paths."""
    return AprioriMeasure(
        Alphabet("path-space", dim=dim, segments=segments), "monte-carlo", samples=samples, seed=seed
    )


def integrate(m: AprioriMeasure, g: Callable[[Any], float]) -> float:
    """Integral of ``g`` against p; exact weighted sum or a seeded MC mean."""
    if m.is_grid:
        points = m.alphabet.points()
        rng = None
    else:
        rng = np.random.default_rng(m.seed)
        points = [sample(m, rng) for _ in range(m.samples)]
    values = np.empty(len(points))
    for i, a in enumerate(points):
        v = float(g(a))
        if not np.isfinite(v):
            raise EvaluationError(f"integrand is not finite at node {a!r}", node=a)
        values[i] = v
    if m.is_grid:
        return float(m.weights @ values)
    return float(values.mean())


def sample(m: AprioriMeasure, rng: np.random.Generator):
    """One draw from p (the true law, not its quadrature surrogate)."""
    kind = m.alphabet.kind
    if kind == "finite":
        return m.alphabet.nodes[rng.choice(m.size, p=m.weights)]
    if kind == "real-line":
        if m.alphabet.dim == 1:
            return float(rng.standard_normal())
        return rng.standard_normal(m.alphabet.dim)
    if kind == "circle":
        return float(rng.uniform(0.0, 2 * np.pi))
    from .paths import sample_path

    return sample_path(m.alphabet.dim, m.alphabet.segments, rng)


def sample_nodes(m: AprioriMeasure, rng: np.random.Generator, size: int) -> np.ndarray:
    """Node indices drawn by weight; used wherever draws must stay on the grid."""
    return rng.choice(m.size, size=size, p=m.weights)
