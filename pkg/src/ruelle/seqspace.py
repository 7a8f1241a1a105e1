"""Truncated sequence space X = E^N over a grid alphabet.

Points are finite words of node indices extended by a constant anchor tail.
Cylinder functions live on the tensor grid of words of a fixed depth, stored
as numpy arrays of shape ``(n,) * depth``; the flat index of a word is its
mixed-radix row-major encoding, which is also the on-disk index.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .alphabet import Alphabet, AprioriMeasure

GRID_CAP = 10**6


def default_depth(n_nodes: int, cap: int = GRID_CAP) -> int:
    """Depth 8 for two nodes, reduced so the one-step extension table fits ``cap``."""
    if n_nodes <= 1:
        return 8
    return max(1, min(8, int(math.floor(math.log(cap) / math.log(n_nodes))) - 1))


@dataclass(frozen=True)
class TruncatedPoint:
    word: tuple[int, ...]
    anchor: int = 0
    alphabet: Alphabet | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if len(self.word) < 1:
            raise ValueError("a truncated point needs depth >= 1")
        if self.alphabet is not None and self.alphabet.nodes is not None:
            n = self.alphabet.size
            if any(not 0 <= a < n for a in self.word) or not 0 <= self.anchor < n:
                raise ValueError("word entries and anchor must be node indices of the alphabet")

    @property
    def depth(self) -> int:
        return len(self.word)

    def coordinates(self, length: int) -> tuple[int, ...]:
        """First ``length`` coordinates of the induced infinite sequence."""
        if length <= self.depth:
            return self.word[:length]
        return self.word + (self.anchor,) * (length - self.depth)

    def shift(self) -> "TruncatedPoint":
        word = self.word[1:] if self.depth > 1 else (self.anchor,)
        return TruncatedPoint(word, self.anchor, self.alphabet)


def prepend(a: int, x: TruncatedPoint) -> TruncatedPoint:
    """ax at the same depth: the last coordinate falls into the tail."""
    return TruncatedPoint((int(a),) + x.word[:-1], x.anchor, x.alphabet)


def metric_dX(x: TruncatedPoint, y: TruncatedPoint, alphabet: Alphabet | None = None) -> float:
    alphabet = _shared_alphabet(x, y, alphabet)
    depth = max(x.depth, y.depth)
    cx, cy = x.coordinates(depth), y.coordinates(depth)
    clamp = alphabet.clamped
    total = sum(clamp[a, b] * 0.5 ** (k + 1) for k, (a, b) in enumerate(zip(cx, cy)))
    # constant tails: sum_{n > depth} 2^-n = 2^-depth
    return float(total + clamp[x.anchor, y.anchor] * 0.5**depth)


def _shared_alphabet(x, y, alphabet):
    if alphabet is None:
        alphabet = x.alphabet
        if alphabet is None:
            raise ValueError("no alphabet attached to the points; pass one explicitly")
        if y.alphabet is not None and y.alphabet is not alphabet:
            raise ValueError("points belong to different alphabets")
    elif (x.alphabet is not None and x.alphabet is not alphabet) or (
        y.alphabet is not None and y.alphabet is not alphabet
    ):
        raise ValueError("points belong to different alphabets")
    return alphabet


def dbar_from_dX(dx, C_f: float, alpha: float):
    """min(1, 4 C_f d_X^alpha); zero on the diagonal."""
    out = np.minimum(1.0, 4.0 * C_f * np.power(dx, alpha))
    return float(out) if np.ndim(out) == 0 else out


def metric_dbar(x: TruncatedPoint, y: TruncatedPoint, C_f: float, alpha: float, alphabet=None) -> float:
    if C_f <= 0 or not 0 < alpha <= 1:
        raise ValueError("need C_f > 0 and alpha in (0, 1]")
    return dbar_from_dX(metric_dX(x, y, alphabet), C_f, alpha)


@dataclass(frozen=True, eq=False)
class Grid:
    """Words of length ``depth`` over the measure's nodes, anchored tail."""

    measure: AprioriMeasure
    depth: int
    anchor: int = 0

    def __post_init__(self):
        if not self.measure.is_grid:
            raise ValueError("grids need a grid-backed a priori measure")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if not 0 <= self.anchor < self.n:
            raise ValueError("anchor must be a node index")

    @property
    def alphabet(self) -> Alphabet:
        return self.measure.alphabet

    @property
    def n(self) -> int:
        return self.measure.size

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.depth

    @property
    def size(self) -> int:
        return self.n**self.depth

    @cached_property
    def words(self) -> np.ndarray:
        """All words, shape (size, depth), in row-major index order."""
        return np.indices(self.shape).reshape(self.depth, -1).T.copy()

    def index(self, x: TruncatedPoint) -> int:
        return int(np.ravel_multi_index(self.word_of(x), self.shape))

    def word_of(self, x: TruncatedPoint) -> tuple[int, ...]:
        if x.anchor != self.anchor:
            raise ValueError("point anchor differs from the grid anchor")
        return x.coordinates(self.depth)

    def point(self, index: int) -> TruncatedPoint:
        word = tuple(int(a) for a in np.unravel_index(index, self.shape))
        return TruncatedPoint(word, self.anchor, self.alphabet)

    def prepend_index(self, a, index):
        """Flat index of prepend(a, x) for flat index x (vectorised)."""
        return np.asarray(a) * self.n ** (self.depth - 1) + np.asarray(index) // self.n

    def with_depth(self, depth: int) -> "Grid":
        return Grid(self.measure, depth, self.anchor)


def pad_words(words: np.ndarray, length: int, anchor: int) -> np.ndarray:
    """Cut or anchor-pad an integer word array (k, D) to (k, length)."""
    k, d = words.shape
    if d >= length:
        return words[:, :length]
    pad = np.full((k, length - d), anchor, dtype=words.dtype)
    return np.concatenate([words, pad], axis=1)


def pairwise_dX(U: np.ndarray, V: np.ndarray, alphabet: Alphabet) -> np.ndarray:
    """d_X between word arrays sharing depth and anchor (tail terms vanish)."""
    clamp = alphabet.clamped
    depth = U.shape[1]
    out = np.zeros((len(U), len(V)))
    for k in range(depth):
        out += clamp[U[:, k][:, None], V[:, k][None, :]] * 0.5 ** (k + 1)
    return out


def rowwise_dX(U: np.ndarray, V: np.ndarray, alphabet: Alphabet) -> np.ndarray:
    clamp = alphabet.clamped
    weights = 0.5 ** np.arange(1, U.shape[1] + 1)
    return clamp[U, V] @ weights


@dataclass(frozen=True, eq=False)
class GridFunction:
    grid: Grid
    values: np.ndarray
    alpha: float = 1.0
    seminorm_hint: float | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            if v.size != self.grid.size:
                raise ValueError(f"need {self.grid.size} values, got {v.size}")
            v = v.reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def depth(self) -> int:
        return self.grid.depth

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def __call__(self, x: TruncatedPoint) -> float:
        return float(self.values[self.grid.word_of(x)])

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.grid, values, self.alpha)

    def lift(self) -> "GridFunction":
        g = self.grid.with_depth(self.depth + 1)
        return GridFunction(g, np.broadcast_to(self.values[..., None], g.shape), self.alpha)

    def restrict(self) -> "GridFunction":
        """Depth N-1 function: evaluate with the last coordinate set to the anchor."""
        if self.depth == 1:
            raise ValueError("cannot restrict below depth 1")
        return GridFunction(self.grid.with_depth(self.depth - 1), self.values[..., self.grid.anchor], self.alpha)

    def sup(self) -> float:
        return float(np.abs(self.values).max())


def constant_function(grid: Grid, c: float = 1.0, alpha: float = 1.0) -> GridFunction:
    return GridFunction(grid, np.full(grid.shape, float(c)), alpha)


def _pair_blocks(size: int, budget: int, seed: int, block: int = 4096):
    """Index pairs: exhaustive i<j if they fit the budget, else a seeded stream.

    The random stream is drawn in fixed-size blocks so a larger budget always
    sees a superset of the pairs a smaller one saw.
    """
    total = size * (size - 1) // 2
    if total <= budget:
        rows = np.arange(size)
        step = max(1, block // max(size, 1))
        for start in range(0, size, step):
            ii, jj = np.meshgrid(rows[start : start + step], rows, indexing="ij")
            mask = jj > ii
            yield ii[mask], jj[mask]
        return
    rng = np.random.default_rng(seed)
    drawn = 0
    while drawn < budget:
        pairs = rng.integers(0, size, size=(block, 2))
        take = min(block, budget - drawn)
        i, j = pairs[:take, 0], pairs[:take, 1]
        keep = i != j
        yield i[keep], j[keep]
        drawn += take


def holder_seminorm_estimate(f, alpha: float, probe_budget: int = 10**6, grid: Grid | None = None, seed: int = 0) -> float:
    """Lower bound on D_alpha(f) from grid pairs.

    Exhaustive (hence the exact supremum over the represented grid) when the
    number of pairs fits ``probe_budget``; otherwise a seeded random probe.
    ``f`` is a GridFunction or a Potential (then ``grid`` is required).
    """
    if probe_budget < 1:
        raise ValueError("probe_budget must be >= 1")
    if isinstance(f, GridFunction):
        grid = f.grid
        values = f.flat
    else:
        if grid is None:
            raise ValueError("a grid is needed to probe a potential")
        values = f.evaluate_words(grid.alphabet, grid.words, grid.anchor)
    words = grid.words
    best = 0.0
    for i, j in _pair_blocks(grid.size, probe_budget, seed):
        if len(i) == 0:
            continue
        d = rowwise_dX(words[i], words[j], grid.alphabet)
        num = np.abs(values[i] - values[j])
        ok = d > 0
        if np.any(ok):
            best = max(best, float(np.max(num[ok] / d[ok] ** alpha)))
    return best


def effective_depth(phi: GridFunction, rtol: float = 1e-12) -> int:
    """Smallest k such that phi depends only on the first k coordinates."""
    v = phi.values
    scale = max(float(np.abs(v).max()), 1e-300)
    for k in range(phi.depth + 1):
        block = v.reshape(phi.grid.n**k, -1)
        if float(np.max(block.max(axis=1) - block.min(axis=1))) <= rtol * scale:
            return k
    return phi.depth


def cylinder_dictionary(grid: Grid, size: int = 20, depth: int | None = None, seed: int = 0) -> list[GridFunction]:
    """Deterministic family of cylinder test functions of depth <= ``depth``.

    Cylinder indicators on the first coordinates come first, then seeded
    random cylinder functions with values in [-1, 1].
    """
    depth = grid.depth if depth is None else min(depth, grid.depth)
    out: list[GridFunction] = []
    if depth == 0:
        return [constant_function(grid)] * size
    n = grid.n
    words = grid.words
    for k in range(1, depth + 1):
        for w in range(n**k):
            if len(out) >= size // 2:
                break
            prefix = np.unravel_index(w, (n,) * k)
            ind = np.all(words[:, :k] == np.asarray(prefix), axis=1).astype(float)
            out.append(GridFunction(grid, ind))
    rng = np.random.default_rng(seed)
    while len(out) < size:
        k = 1 + len(out) % depth
        table = rng.uniform(-1, 1, size=n**k)
        idx = np.ravel_multi_index(tuple(words[:, :k].T), (n,) * k)
        out.append(GridFunction(grid, table[idx]))
    return out


# --- serialization -------------------------------------------------------

def fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_grid_function(phi: GridFunction, path) -> None:
    path = Path(path)
    if path.suffix == ".json":
        payload = {
            "depth": phi.depth,
            "nodes": phi.grid.n,
            "alpha": phi.alpha,
            "anchor": phi.grid.anchor,
            "values": [float(v) for v in phi.flat],
        }
        path.write_text(json.dumps(payload, indent=1) + "\n")
        return
    with open(path, "w", newline="") as fh:
        fh.write(f"# depth={phi.depth} nodes={phi.grid.n} alpha={fmt(phi.alpha)} anchor={phi.grid.anchor}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "value"])
        for i, v in enumerate(phi.flat):
            w.writerow([i, fmt(v)])


def read_grid_function(path, measure: AprioriMeasure) -> GridFunction:
    path = Path(path)
    if path.suffix == ".json":
        payload = json.loads(path.read_text())
        grid = Grid(measure, payload["depth"], payload.get("anchor", 0))
        _check_nodes(payload["nodes"], measure)
        return GridFunction(grid, np.asarray(payload["values"]), payload["alpha"])
    with open(path) as fh:
        header = fh.readline().lstrip("#").split()
        meta = dict(item.split("=") for item in header)
        rows = list(csv.reader(fh))[1:]
    _check_nodes(int(meta["nodes"]), measure)
    grid = Grid(measure, int(meta["depth"]), int(meta.get("anchor", 0)))
    values = np.empty(grid.size)
    for idx, val in rows:
        values[int(idx)] = float(val)
    return GridFunction(grid, values, float(meta["alpha"]))


def _check_nodes(n: int, measure: AprioriMeasure) -> None:
    if n != measure.size:
        raise ValueError(f"file has {n} nodes, measure has {measure.size}")


__all__ = [
    "Grid",
    "GridFunction",
    "TruncatedPoint",
    "constant_function",
    "default_depth",
    "effective_depth",
    "holder_seminorm_estimate",
    "metric_dX",
    "metric_dbar",
    "pairwise_dX",
    "prepend",
    "read_grid_function",
    "cylinder_dictionary",
    "write_grid_function",
]
