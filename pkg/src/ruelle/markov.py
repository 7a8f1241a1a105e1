"""Markov chains driven by a normalised potential.

From state x the next state is a x, with the new symbol a drawn with
probability w_a exp(fbar(a x)).  States are depth-N grid words, so the
newest symbol is the first coordinate and the oldest one drops into the
anchor tail.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .potential import Potential
from .seqspace import Grid, GridFunction, TruncatedPoint
from .transfer import (
    DEFAULT_CAP,
    DiscreteMeasure,
    LogLinearFit,
    NormalizationError,
    dual_apply,
    eigen_triple,
    extension_table,
    kernel,
    loglinear_fit,
    metric_constants,
    wasserstein,
)

log = logging.getLogger(__name__)

CHUNK = 1000  # traces per spawned seed


class UnsupportedCaseError(ValueError):
    pass


class DegenerateError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Kernel:
    """Transition probabilities P[a, x] of the chain on grid words."""

    fbar: Potential
    grid: Grid
    probs: np.ndarray  # (n, size), columns sum to 1 up to the residual
    normalization_residual: float
    stationary: DiscreteMeasure

    @property
    def window_depth(self) -> int:
        return self.grid.depth

    def transition(self, x: TruncatedPoint | int) -> np.ndarray:
        i = x if isinstance(x, (int, np.integer)) else self.grid.index(x)
        p = self.probs[:, i]
        return p / p.sum()

    @property
    def cumulative(self) -> np.ndarray:
        c = np.cumsum(self.probs, axis=0)
        return c / c[-1]


def build_kernel(fbar: Potential, grid: Grid, tol: float = 1e-8) -> Kernel:
    """Kernel of a normalised potential; raises if L_fbar 1 is not 1."""
    P = kernel(fbar, grid).reshape(grid.n, grid.size)
    col = P.sum(axis=0)
    res = float(np.abs(col - 1.0).max())
    if res > tol:
        worst = int(np.abs(col - 1.0).argmax())
        raise NormalizationError(
            f"L_f 1 differs from 1 by {res:.3g} at word {grid.point(worst).word}; "
            "normalise the potential first",
            res,
            grid.point(worst),
        )
    nu = eigen_triple(fbar, grid).nu
    return Kernel(fbar, grid, P, res, nu)


def _draw(cum: np.ndarray, u):
    """Symbol whose cumulative probability first exceeds u (column-wise)."""
    return (u[None, ...] >= cum).sum(axis=0).clip(max=cum.shape[0] - 1)


def step_sample(k: Kernel, x: TruncatedPoint, rng: np.random.Generator) -> TruncatedPoint:
    i = k.grid.index(x)
    a = int(_draw(k.cumulative[:, i], np.asarray(rng.random())))
    return k.grid.point(int(k.grid.prepend_index(a, i)))


@dataclass
class ChainTrace:
    grid: Grid
    indices: np.ndarray
    seed: int | None

    @property
    def n(self) -> int:
        return len(self.indices) - 1

    @property
    def states(self) -> list[TruncatedPoint]:
        return [self.grid.point(int(i)) for i in self.indices]

    def first_coordinates(self) -> np.ndarray:
        return self.indices // self.grid.n ** (self.grid.depth - 1)


def sample_stationary(k: Kernel, rng: np.random.Generator, size=None):
    nu = k.stationary
    return nu.index[rng.choice(len(nu), size=size, p=nu.weights / nu.total_mass)]


def simulate_chain(k: Kernel, x0: TruncatedPoint | None, n: int, seed: int) -> ChainTrace:
    """Trace of n steps; x0=None starts from the stationary measure."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    i = int(sample_stationary(k, rng)) if x0 is None else k.grid.index(x0)
    cum = k.cumulative
    u = rng.random(n)
    out = np.empty(n + 1, dtype=np.int64)
    out[0] = i
    grid = k.grid
    shift = grid.n ** (grid.depth - 1)
    nsym = cum.shape[0]
    for t in range(n):
        a = min(int(np.searchsorted(cum[:, i], u[t], side="right")), nsym - 1)
        i = a * shift + i // grid.n
        out[t + 1] = i
    return ChainTrace(grid, out, seed)


def simulate_many(k: Kernel, n: int, samples: int, seed: int, observable: np.ndarray | None = None):
    """Stationary-start traces advanced in lockstep.

    Seeds come from SeedSequence(seed).spawn, one child per block of
    CHUNK traces, so results do not depend on how work is split.  Returns
    final states, and Birkhoff sums sum_{j=1..n} observable(x_j) if given.
    """
    grid = k.grid
    cum = k.cumulative
    shift = grid.n ** (grid.depth - 1)
    children = np.random.SeedSequence(seed).spawn(math.ceil(samples / CHUNK))
    finals, sums = [], []
    for c, ss in enumerate(children):
        m = min(CHUNK, samples - c * CHUNK)
        rng = np.random.default_rng(ss)
        idx = sample_stationary(k, rng, m)
        S = np.zeros(m)
        for _ in range(n):
            a = _draw(cum[:, idx], rng.random(m))
            idx = a * shift + idx // grid.n
            if observable is not None:
                S += observable[idx]
        finals.append(idx)
        sums.append(S)
    return np.concatenate(finals), np.concatenate(sums)


@dataclass
class MarginalReport:
    pi: np.ndarray
    pushed: np.ndarray
    residual: float

    @property
    def ok(self) -> bool:
        return self.residual <= 1e-8


def stationary_marginal_check(k: Kernel) -> MarginalReport:
    """pi = first marginal of the stationary law; check pi P = pi on symbols.

    Only meaningful when fbar depends on at most the first two coordinates,
    so that the next symbol depends on the current one alone.
    """
    depth = k.fbar.depth
    if depth is None or depth > 2:
        raise UnsupportedCaseError(
            f"first-coordinate stationarity needs a potential that depends on the first two "
            f"coordinates; this one has depth {depth}"
        )
    grid = k.grid
    pi = k.stationary.marginal(1) / k.stationary.total_mass
    # T[b, a] = w_a exp(fbar(a b ...)), read at any word starting with b
    starts = np.arange(grid.n) * grid.n ** (grid.depth - 1)
    T = k.probs[:, starts].T
    pushed = pi @ T
    return MarginalReport(pi, pushed, float(np.abs(pushed - pi).max()))


@dataclass
class ErgodicityFit:
    s_hat: float
    C_hat: float
    r2: float
    degenerate: bool
    nonincreasing: bool
    fit_from: int
    fits: list = field(default_factory=list)
    distances: list = field(default_factory=list)
    C_f: float = 0.0
    alpha: float = 1.0

    def as_dict(self) -> dict:
        return {
            "s_hat": self.s_hat,
            "C_hat": self.C_hat,
            "fit_r2": self.r2,
            "degenerate": self.degenerate,
            "nonincreasing": self.nonincreasing,
            "fit_from": self.fit_from,
            "C_f": self.C_f,
            "alpha": self.alpha,
            "per_start": [f.as_dict() for f in self.fits],
        }


def distance_curve(k: Kernel, x0: int, n_max: int, C_f: float, alpha: float, cap: int = DEFAULT_CAP) -> list[float]:
    """d(P^n(x0, .), nu) for n = 1..n_max."""
    mu = DiscreteMeasure.dirac(k.grid, int(x0))
    nu = k.stationary.normalized()
    out = []
    for _ in range(n_max):
        mu = dual_apply(k.fbar, mu, cap).normalized()
        out.append(wasserstein(mu, nu, C_f, alpha))
    return out


def geometric_ergodicity_fit(
    k: Kernel,
    x0s: list[TruncatedPoint | int],
    n_max: int | None = None,
    fit_from: int | None = None,
    C_f: float | None = None,
    alpha: float | None = None,
    cap: int = DEFAULT_CAP,
    floor: float = 1e-13,
    tol: float = 1e-9,
) -> ErgodicityFit:
    """Log-linear fit of d(P^n(x, .), nu) per start, pooled.

    Until n reaches the window depth the start word is still visible in the
    state, so the fit starts there by default.  The pooled rate is the
    geometric mean of the per-start rates; R^2 is the worst one.
    """
    grid = k.grid
    fit_from = grid.depth if fit_from is None else fit_from
    n_max = fit_from + 12 if n_max is None else n_max
    C_f, alpha = metric_constants(k.fbar, grid, C_f, alpha)
    fits, curves = [], []
    for x in x0s:
        i = x if isinstance(x, (int, np.integer)) else grid.index(x)
        d = distance_curve(k, int(i), n_max, C_f, alpha, cap)
        curves.append(d)
        ns = list(range(1, n_max + 1))
        fits.append(loglinear_fit(ns[fit_from - 1 :], d[fit_from - 1 :], floor))
    live = [f for f in fits if not f.degenerate]
    nonincreasing = all(b <= a + tol for d in curves for a, b in zip(d, d[1:]))
    if not live:
        return ErgodicityFit(0.0, 0.0, 0.0, True, nonincreasing, fit_from, fits, curves, C_f, alpha)
    s = float(np.exp(np.mean([np.log(f.s_hat) for f in live])))
    C = max(f.C_hat for f in live)
    r2 = min(f.r2 for f in live)
    return ErgodicityFit(s, C, r2, len(live) < len(fits), nonincreasing, fit_from, fits, curves, C_f, alpha)


@dataclass
class ContractionReport:
    t_hat: float
    ratios: list
    skipped: int
    m: int

    @property
    def contracts(self) -> bool:
        return self.t_hat < 1.0


def random_measure_pairs(grid: Grid, count: int, seed: int = 0, support: int = 8) -> list[tuple[DiscreteMeasure, DiscreteMeasure]]:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        pair = []
        for _ in range(2):
            idx = rng.choice(grid.size, size=min(support, grid.size), replace=False)
            pair.append(DiscreteMeasure(grid, idx, rng.dirichlet(np.ones(len(idx)))))
        out.append(tuple(pair))
    return out


def push(k: Kernel, mu: DiscreteMeasure, m: int, cap: int = DEFAULT_CAP) -> DiscreteMeasure:
    for _ in range(m):
        mu = dual_apply(k.fbar, mu, cap).normalized()
    return mu


def operator_contraction_estimate(
    k: Kernel,
    pairs: list[tuple[DiscreteMeasure, DiscreteMeasure]],
    m: int,
    C_f: float | None = None,
    alpha: float | None = None,
    cap: int = DEFAULT_CAP,
) -> ContractionReport:
    """max over pairs of d(P^m mu, P^m mu~) / d(mu, mu~)."""
    C_f, alpha = metric_constants(k.fbar, k.grid, C_f, alpha)
    ratios, skipped = [], 0
    for mu, nu in pairs:
        d0 = wasserstein(mu, nu, C_f, alpha)
        if d0 < 1e-12:
            skipped += 1
            log.info("pair skipped: measures coincide")
            continue
        ratios.append(wasserstein(push(k, mu, m, cap), push(k, nu, m, cap), C_f, alpha) / d0)
    return ContractionReport(max(ratios, default=0.0), ratios, skipped, m)


def centered_values(k: Kernel, xi: Potential) -> tuple[np.ndarray, float]:
    """xi on grid words minus its stationary mean."""
    vals = xi.grid_values(k.grid).ravel()
    mean = k.stationary.expect(vals) / k.stationary.total_mass
    return vals - mean, mean


@dataclass
class VarianceEstimate:
    s2: float
    s2_autocov: float
    s2_untapered: float
    s2_direct: float | None
    autocov: list
    used: str


def clt_variance(
    k: Kernel,
    xi: Potential,
    lag_max: int = 50,
    mc: tuple[int, int, int] | None = None,
) -> VarianceEstimate:
    """Long-run variance of the Birkhoff sums of xi under the stationary chain.

    c_j = <nu, xi_c . L^j xi_c> with L the kernel's transfer operator, summed
    with a Bartlett taper up to lag_max.  ``mc = (n, samples, seed)`` adds
    the direct estimate E[S_n^2]/n.
    """
    xc, _ = centered_values(k, xi)
    nu = k.stationary.normalized()
    P = k.probs
    grid = k.grid
    a = np.arange(grid.n)[:, None]
    succ = grid.prepend_index(a, np.arange(grid.size)[None, :])
    v = xc.copy()
    cov = [nu.expect(xc * v)]
    for _ in range(lag_max):
        v = (P * v[succ]).sum(axis=0)
        cov.append(nu.expect(xc * v))
    cov = np.asarray(cov)
    taper = 1.0 - np.arange(1, lag_max + 1) / (lag_max + 1)
    s2_auto = float(cov[0] + 2 * (taper * cov[1:]).sum())
    s2_raw = float(cov[0] + 2 * cov[1:].sum())
    direct = None
    if mc is not None:
        n, samples, seed = mc
        _, S = simulate_many(k, n, samples, seed, xc)
        direct = float((S**2).mean() / n)
    used = "autocovariance"
    s2 = s2_auto
    if s2_auto < 0:
        log.warning("autocovariance estimate %.3g is negative; using the direct estimate", s2_auto)
        if direct is None:
            raise DegenerateError("negative autocovariance variance and no direct estimate requested")
        s2, used = direct, "direct"
    return VarianceEstimate(max(s2, 0.0), s2_auto, s2_raw, direct, cov.tolist(), used)


@dataclass
class CLTResult:
    ks_stat: float
    threshold: float
    passed: bool
    s: float
    n: int
    samples: int
    seed: int
    normalized_sums: np.ndarray = field(repr=False, default=None)

    def as_dict(self) -> dict:
        return {
            "ks_stat": self.ks_stat,
            "threshold": self.threshold,
            "pass": self.passed,
            "s": self.s,
            "n": self.n,
            "samples": self.samples,
            "seed": self.seed,
        }


def ks_threshold(n: int, samples: int, c: float = 2.0) -> float:
    return max(0.02, 1.36 / math.sqrt(samples) + c / math.sqrt(n))


def clt_check(
    k: Kernel,
    xi: Potential,
    n: int,
    samples: int,
    seed: int,
    variance: VarianceEstimate | None = None,
    lag_max: int = 50,
) -> CLTResult:
    """KS distance of S_n / sqrt(n) from N(0, s^2) over stationary traces."""
    if variance is None:
        variance = clt_variance(k, xi, lag_max)
    # the Bartlett taper leaves an O(1/lag_max) residue when the true variance is zero
    scale = max(variance.autocov[0], 1e-300) if variance.autocov else 1.0
    if variance.s2 < 1e-12 or variance.s2_untapered < 1e-9 * scale:
        raise DegenerateError(
            f"asymptotic variance is zero (untapered sum {variance.s2_untapered:.3g}); xi is a coboundary"
        )
    s = math.sqrt(variance.s2)
    xc, _ = centered_values(k, xi)
    _, S = simulate_many(k, n, samples, seed, xc)
    z = S / math.sqrt(n)
    ks = float(stats.kstest(z, "norm", args=(0.0, s)).statistic)
    thr = ks_threshold(n, samples)
    return CLTResult(ks, thr, ks <= thr, s, n, samples, seed, z)


def coboundary(g: GridFunction | Potential) -> Potential:
    """xi = g - g o sigma for a cylinder potential g."""
    from .potential import Table

    if isinstance(g, GridFunction):
        g = Table(g.values, g.alpha)
    return _Coboundary(g)


@dataclass(frozen=True, eq=False)
class _Coboundary(Potential):
    g: Potential = None
    name = "coboundary"

    @property
    def depth(self):
        return None if self.g.depth is None else self.g.depth + 1

    @property
    def sup_bound(self):
        return 2 * self.g.sup_bound

    def evaluate_words(self, alphabet, words, anchor=0):
        tail = words[:, 1:] if words.shape[1] > 1 else np.full((len(words), 1), anchor)
        return self.g.evaluate_words(alphabet, words, anchor) - self.g.evaluate_words(alphabet, tail, anchor)

    def params(self):
        return {"g": self.g.describe()}
