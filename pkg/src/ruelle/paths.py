"""Random polygonal paths, Hausdorff distances and path-sequence potentials.

A path is the piecewise-linear curve through L Gaussian vertices, read on
the time window [1, L].  Path space has no quadrature grid; the transfer
operator is evaluated by Monte Carlo over fresh paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

EXACT_MAX_DIM = 3


@dataclass(frozen=True, eq=False)
class PolygonalPath:
    points: np.ndarray  # (L, d)

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.shape[0] < 2:
            raise ValueError("a path needs at least two vertices")
        if not np.all(np.isfinite(pts)):
            raise ValueError("path vertices must be finite")
        object.__setattr__(self, "points", pts)

    @property
    def L(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def evaluate(self, t):
        """gamma(t) for t in [1, L]; gamma(n) is vertex n."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 1) or np.any(t > self.L):
            raise ValueError(f"t must lie in [1, {self.L}]")
        n = np.minimum(np.floor(t).astype(int), self.L - 1)
        frac = (t - n)[..., None]
        q = self.points
        return q[n - 1] + frac * (q[n] - q[n - 1])

    def translated(self, v) -> "PolygonalPath":
        return PolygonalPath(self.points + np.asarray(v, dtype=float))

    @property
    def segment_lengths(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.points, axis=0), axis=1)


def sample_path(d: int, L: int, rng: np.random.Generator) -> PolygonalPath:
    if d < 1 or L < 2:
        raise ValueError("need d >= 1 and L >= 2")
    return PolygonalPath(rng.standard_normal((L, d)))


def _as_points(g) -> np.ndarray:
    return g.points if isinstance(g, PolygonalPath) else np.atleast_2d(np.asarray(g, dtype=float))


def point_polyline_distance(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Distance from each point in P (..., k, d) to the polyline Q (..., L, d)."""
    A, B = Q[..., :-1, :], Q[..., 1:, :]
    U = B - A
    uu = (U * U).sum(-1)
    W = P[..., :, None, :] - A[..., None, :, :]
    safe = np.where(uu > 0, uu, 1.0)[..., None, :]
    s = np.clip((W * U[..., None, :, :]).sum(-1) / safe, 0.0, 1.0)
    diff = W - s[..., None] * U[..., None, :, :]
    return np.sqrt((diff * diff).sum(-1)).min(-1)


def _quad(W0, V):
    """Coefficients of |W0 + t V|^2 stacked on the last axis."""
    W0, V = np.broadcast_arrays(W0, V)
    return np.stack([(V * V).sum(-1), 2 * (W0 * V).sum(-1), (W0 * W0).sum(-1)], -1)


def _directed_exact(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """sup over the polyline P of the distance to the polyline Q, batched.

    P is (..., Lp, d) and Q is (..., Lq, d).  Along one segment of P the
    squared distance to a segment of Q is convex and piecewise quadratic in
    time (endpoint A, the line through AB, endpoint B), so the lower
    envelope peaks at a segment end, at a piece breakpoint, or where two
    pieces of different Q segments cross.  Every such candidate is
    evaluated exactly.
    """
    P0 = P[..., :-1, None, :]  # (..., k, 1, d)
    V = P[..., 1:, None, :] - P0
    A, B = Q[..., None, :-1, :], Q[..., None, 1:, :]  # (..., 1, m, d)
    U = B - A
    uu = (U * U).sum(-1)
    W0 = P0 - A
    cands = []
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = (U * V).sum(-1)
        w0u = (W0 * U).sum(-1)
        for target in (0.0, 1.0):
            cands.append((target * uu - w0u) / uv)  # (..., k, m)
        m = Q.shape[-2] - 1
        if m > 1:
            safe = np.where(uu > 0, uu, 1.0)[..., None]
            perp0 = W0 - (w0u[..., None] / safe) * U
            perpV = V - (uv[..., None] / safe) * U
            line = np.where((uu > 0)[..., None], _quad(perp0, perpV), _quad(W0, V))
            quad = np.stack([_quad(W0, V), _quad(P0 - B, V), line], -2)  # (..., k, m, 3, 3)
            iu, ju = np.triu_indices(m, 1)
            d = quad[..., iu, :, None, :] - quad[..., ju, None, :, :]  # (..., k, pairs, 3, 3, 3)
            a, b, c = d[..., 0], d[..., 1], d[..., 2]
            lin = np.abs(a) < 1e-14
            disc = b * b - 4 * a * c
            root = np.sqrt(np.where(disc >= 0, disc, np.nan))
            shape = a.shape[:-3] + (-1,)
            cands.append(np.where(lin, -c / b, np.nan).reshape(shape))
            cands.append(np.where(lin, np.nan, (-b + root) / (2 * a)).reshape(shape))
            cands.append(np.where(lin, np.nan, (-b - root) / (2 * a)).reshape(shape))
        t = np.concatenate(cands, -1)  # (..., k, c)
    # invalid candidates fall back to the segment start; every vertex is evaluated anyway
    t = np.where(np.isfinite(t) & (t > 0) & (t < 1), t, 0.0)
    pts = P0 + t[..., None] * V  # (..., k, c, d)
    pts = pts.reshape(pts.shape[:-3] + (-1, pts.shape[-1]))
    pts = np.concatenate([P, pts], -2)
    return point_polyline_distance(pts, Q).max(-1)


def _dense_points(P: np.ndarray, resolution: int) -> np.ndarray:
    t = np.linspace(0.0, 1.0, resolution + 1)
    segs = P[:-1, None, :] + t[None, :, None] * (P[1:] - P[:-1])[:, None, :]
    return segs.reshape(-1, P.shape[1])


def hausdorff_dense(g1, g2, resolution: int = 1000) -> float:
    """Hausdorff distance with each segment sampled at ``resolution`` steps.

    Distances to the other path are exact, so the result is a lower bound
    whose error is at most the longest segment length over ``resolution``.
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    P, Q = _as_points(g1), _as_points(g2)
    d1 = point_polyline_distance(_dense_points(P, resolution), Q).max()
    d2 = point_polyline_distance(_dense_points(Q, resolution), P).max()
    return float(max(d1, d2))


def hausdorff_distance(g1, g2, resolution: int = 1000) -> float:
    """Hausdorff distance between the images of two polygonal paths.

    Exact in dimension <= 3, dense sampling otherwise.
    """
    P, Q = _as_points(g1), _as_points(g2)
    if P.shape[1] != Q.shape[1]:
        raise ValueError("paths live in different dimensions")
    if P.shape[1] > EXACT_MAX_DIM:
        return hausdorff_dense(P, Q, resolution)
    return float(max(_directed_exact(P, Q), _directed_exact(Q, P)))


def hausdorff_to_many(g, others: Sequence) -> np.ndarray:
    """d_H(g, h) for every h in ``others`` (equal vertex counts), in one batch."""
    P = _as_points(g)
    Qs = np.stack([_as_points(h) for h in others])
    if Qs.shape[-1] > EXACT_MAX_DIM or Qs.shape[1] != P.shape[0]:
        return np.asarray([hausdorff_distance(P, h) for h in Qs])
    Ps = np.broadcast_to(P, Qs.shape)
    return np.maximum(_directed_exact(Ps, Qs), _directed_exact(Qs, Ps))


@dataclass(frozen=True)
class PathPotential:
    """f(g_1, g_2, ...) = -sum_{n=1}^K J0 r^n u(d_H(g_1, g_n)), u(x) = x^a / (1 + x^a)."""

    J0: float
    r: float
    alpha: float
    K: int

    def __post_init__(self):
        if self.J0 < 0 or not 0 < self.r < 1 or not 0 < self.alpha <= 1 or self.K < 1:
            raise ValueError("need J0 >= 0, r in (0, 1), alpha in (0, 1], K >= 1")

    @property
    def lower_bound(self) -> float:
        return -self.J0 * self.r / (1 - self.r)

    @property
    def tail_bound(self) -> float:
        """Largest possible contribution of the dropped terms n > K."""
        return self.J0 * self.r ** (self.K + 1) / (1 - self.r)

    def coupling(self, x) -> np.ndarray:
        xa = np.asarray(x, dtype=float) ** self.alpha
        return xa / (1 + xa)

    def __call__(self, seq: Sequence[PolygonalPath]) -> float:
        if len(seq) < self.K:
            raise ValueError(f"need at least {self.K} paths, got {len(seq)}")
        d = hausdorff_to_many(seq[0], seq[1 : self.K]) if self.K > 1 else np.zeros(0)
        weights = self.J0 * self.r ** np.arange(2, self.K + 1)
        return float(-(weights * self.coupling(d)).sum())

    def describe(self) -> dict:
        return {"family": "path-hausdorff", "params": {"J0": self.J0, "r": self.r, "alpha": self.alpha, "K": self.K}}


def path_potential(J0: float, r: float, alpha: float, K: int | None = None, tail_tol: float = 1e-9) -> PathPotential:
    """K defaults to the smallest value with J0 r^K / (1 - r) below ``tail_tol``."""
    if K is None:
        if J0 == 0:
            K = 1
        else:
            K = max(1, math.ceil(math.log(tail_tol * (1 - r) / J0) / math.log(r)))
            while J0 * r**K / (1 - r) >= tail_tol:
                K += 1
    return PathPotential(float(J0), float(r), float(alpha), int(K))


def zero_path_potential(seq) -> float:
    return 0.0


def mc_apply(
    f: Callable[[Sequence[PolygonalPath]], float],
    phi: Callable[[Sequence[PolygonalPath]], float],
    x: Sequence[PolygonalPath],
    K_samples: int,
    seed: int,
    d: int | None = None,
    L: int | None = None,
) -> tuple[float, float]:
    """Monte Carlo value of the transfer operator at x, with its standard error.

    Averages exp(f(g x)) phi(g x) over fresh Gaussian paths g.
    """
    if K_samples < 100:
        raise ValueError("K_samples must be >= 100")
    d = x[0].dim if d is None else d
    L = x[0].L if L is None else L
    rng = np.random.default_rng(seed)
    vals = np.empty(K_samples)
    for i in range(K_samples):
        seq = [sample_path(d, L, rng), *x]
        vals[i] = math.exp(f(seq)) * phi(seq)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(K_samples))
