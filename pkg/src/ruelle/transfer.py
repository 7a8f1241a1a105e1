"""The transfer operator on grid functions, its dual on discrete measures,
Perron eigen-triples and the spectral diagnostics built on them.

On a depth-N grid the operator reads

    (L_f phi)(x) = sum_a w_a exp(f(a x)) phi(prepend(a, x)),

where f is evaluated on the depth N+1 word (a, x_1..x_N) with the anchor tail.
This is a positive matrix on words, primitive after N steps, so power
iteration converges to its Perron data.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .potential import Potential
from .seqspace import (
    Grid,
    GridFunction,
    TruncatedPoint,
    _pair_blocks,
    dbar_from_dX,
    holder_seminorm_estimate,
    pad_words,
    pairwise_dX,
    rowwise_dX,
    cylinder_dictionary,
)

for _backend in ("TENSORFLOW", "PYTORCH", "JAX", "CUPY"):
    os.environ.setdefault(f"POT_BACKEND_DISABLE_{_backend}", "1")

log = logging.getLogger(__name__)

EXP_LIMIT = 700.0
DEFAULT_CAP = 4096
MAX_OT_ATOMS = 5000


class PotentialOverflowError(OverflowError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, history=None):
        super().__init__(message)
        self.history = list(history or [])


class NormalizationError(ValueError):
    def __init__(self, message: str, residual: float, worst: TruncatedPoint | None = None):
        super().__init__(message)
        self.residual = residual
        self.worst = worst


# --- operator tables -----------------------------------------------------

@lru_cache(maxsize=128)
def extension_table(f: Potential, grid: Grid) -> np.ndarray:
    """f on every depth N+1 word (a, x_1..x_N); shape (n,)*(N+1), axis 0 is a."""
    return f.grid_values(grid, grid.depth + 1)


def _weights_shape(grid: Grid) -> np.ndarray:
    return grid.measure.weights.reshape((grid.n,) + (1,) * grid.depth)


def kernel(f: Potential, grid: Grid, shift: float = 0.0) -> np.ndarray:
    """w_a exp(f(a x) - shift) on the extension grid."""
    F = extension_table(f, grid)
    top = float(F.max()) - shift
    if top > EXP_LIMIT:
        raise PotentialOverflowError(
            f"exp({top:.1f}) overflows; sup|f| = {f.sup_bound:.3g}, rescale the potential "
            "or work with a shifted copy"
        )
    return _weights_shape(grid) * np.exp(F - shift)


def _apply(K: np.ndarray, values: np.ndarray) -> np.ndarray:
    return (K * values[..., None]).sum(axis=0)


def _check_phi(f: Potential, phi: GridFunction) -> None:
    if f.depth is not None and f.depth > phi.depth + 1:
        log.debug("potential of depth %s truncated to the extension depth %d", f.depth, phi.depth + 1)


def apply_operator(f: Potential, phi: GridFunction) -> GridFunction:
    _check_phi(f, phi)
    return phi.with_values(_apply(kernel(f, phi.grid), phi.values))


def apply_n(f: Potential, phi: GridFunction, n: int) -> GridFunction:
    if n < 0:
        raise ValueError("n must be >= 0")
    K = kernel(f, phi.grid)
    v = phi.values
    for _ in range(n):
        v = _apply(K, v)
    return phi.with_values(v)


def pmn_apply(f: Potential, phi: GridFunction, m: int, n: int) -> GridFunction:
    """P^m_n(phi) = L^m(phi L^n 1) / L^{m+n} 1."""
    if m < 1 or n < 0:
        raise ValueError("need m >= 1 and n >= 0")
    grid = phi.grid
    K = kernel(f, grid, extension_table(f, grid).max())
    one = np.ones(grid.shape)
    ln1 = one
    for _ in range(n):
        ln1 = _apply(K, ln1)
    num = phi.values * ln1
    den = ln1
    for _ in range(m):
        num = _apply(K, num)
        den = _apply(K, den)
    assert np.all(den > 0), "L^{m+n} 1 vanished"
    return phi.with_values(num / den)


def extension_average(f: Potential, grid: Grid, G: np.ndarray, shift: float = 0.0) -> np.ndarray:
    """sum_a w_a exp(f(ax) - shift) G(ax) for G on the extension grid."""
    return (kernel(f, grid, shift) * G).sum(axis=0)


# --- discrete measures ---------------------------------------------------

@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Weighted atoms on grid words (flat indices, sorted, merged)."""

    grid: Grid
    index: np.ndarray
    weights: np.ndarray
    pruned_mass: float = 0.0

    def __post_init__(self):
        idx = np.asarray(self.index, dtype=np.int64).ravel()
        w = np.asarray(self.weights, dtype=float).ravel()
        if idx.shape != w.shape:
            raise ValueError("index and weights differ in length")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        if np.any((idx < 0) | (idx >= self.grid.size)):
            raise ValueError("atom index outside the grid")
        uniq, inv = np.unique(idx, return_inverse=True)
        if len(uniq) != len(idx):
            w = np.bincount(inv, weights=w, minlength=len(uniq))
            idx = uniq
        elif len(idx) and np.any(np.diff(idx) < 0):
            order = np.argsort(idx)
            idx, w = idx[order], w[order]
        object.__setattr__(self, "index", idx)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_atoms(cls, grid: Grid, atoms) -> "DiscreteMeasure":
        idx = [grid.index(x) for x, _ in atoms]
        return cls(grid, np.asarray(idx, dtype=np.int64), np.asarray([w for _, w in atoms], dtype=float))

    @classmethod
    def dirac(cls, grid: Grid, x: TruncatedPoint | int) -> "DiscreteMeasure":
        i = x if isinstance(x, (int, np.integer)) else grid.index(x)
        return cls(grid, np.asarray([i]), np.asarray([1.0]))

    @classmethod
    def from_dense(cls, grid: Grid, vec: np.ndarray) -> "DiscreteMeasure":
        vec = np.asarray(vec, dtype=float).ravel()
        nz = np.flatnonzero(vec)
        return cls(grid, nz, vec[nz])

    def __len__(self):
        return len(self.index)

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    @property
    def words(self) -> np.ndarray:
        return self.grid.words[self.index]

    def atoms(self) -> list[tuple[TruncatedPoint, float]]:
        return [(self.grid.point(int(i)), float(w)) for i, w in zip(self.index, self.weights)]

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.grid.size)
        out[self.index] = self.weights
        return out

    def normalized(self) -> "DiscreteMeasure":
        return DiscreteMeasure(self.grid, self.index, self.weights / self.total_mass, self.pruned_mass)

    def scaled(self, c: float) -> "DiscreteMeasure":
        return DiscreteMeasure(self.grid, self.index, self.weights * c, self.pruned_mass)

    def expect(self, phi) -> float:
        """<mu, phi> for a GridFunction, a flat value array, or a Potential."""
        if isinstance(phi, GridFunction):
            vals = phi.flat[self.index]
        elif isinstance(phi, Potential):
            vals = phi.evaluate_words(self.grid.alphabet, self.words, self.grid.anchor)
        else:
            vals = np.asarray(phi).ravel()[self.index]
        return float(self.weights @ vals)

    def reweighted(self, values: np.ndarray) -> "DiscreteMeasure":
        return DiscreteMeasure(self.grid, self.index, self.weights * np.asarray(values).ravel()[self.index])

    def marginal(self, k: int = 1) -> np.ndarray:
        """Law of the first k coordinates, flat over n**k words."""
        n = self.grid.n
        prefix = self.index // n ** (self.grid.depth - k)
        return np.bincount(prefix, weights=self.weights, minlength=n**k)


def product_measure(grid: Grid, q=None) -> DiscreteMeasure:
    """q^N on grid words; q defaults to the a priori weights."""
    q = grid.measure.weights if q is None else np.asarray(q, dtype=float)
    w = np.prod(q[grid.words], axis=1)
    return DiscreteMeasure(grid, np.arange(grid.size), w)


def l1_distance(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    return float(np.abs(mu.to_dense() - nu.to_dense()).sum())


def dual_apply(f: Potential, mu: DiscreteMeasure, cap: int = DEFAULT_CAP, shift: float = 0.0) -> DiscreteMeasure:
    """delta_x -> sum_a w_a exp(f(ax)) delta_{prepend(a, x)}, merged and pruned to ``cap``."""
    grid = mu.grid
    n = grid.n
    if cap < n:
        raise ValueError("atom cap must be at least the alphabet size")
    K = kernel(f, grid, shift).reshape(n, grid.size)
    a = np.arange(n)[:, None]
    new_idx = grid.prepend_index(a, mu.index[None, :]).ravel()
    new_w = (K[:, mu.index] * mu.weights[None, :]).ravel()
    return prune(DiscreteMeasure(grid, new_idx, new_w, mu.pruned_mass), cap)


def prune(mu: DiscreteMeasure, cap: int) -> DiscreteMeasure:
    """Keep the ``cap`` heaviest atoms (ties by word order), rescaled to the same mass."""
    if len(mu) <= cap:
        return mu
    order = np.lexsort((mu.index, -mu.weights))
    keep = np.sort(order[:cap])
    total = mu.total_mass
    kept_w = mu.weights[keep]
    dropped = total - kept_w.sum()
    return DiscreteMeasure(mu.grid, mu.index[keep], kept_w * (total / kept_w.sum()), mu.pruned_mass + dropped)


# --- Wasserstein ---------------------------------------------------------

def cost_matrix(mu: DiscreteMeasure, nu: DiscreteMeasure, C_f: float, alpha: float) -> np.ndarray:
    return dbar_from_dX(pairwise_dX(mu.words, nu.words, mu.grid.alphabet), C_f, alpha)


def wasserstein(mu: DiscreteMeasure, nu: DiscreteMeasure, C_f: float, alpha: float) -> float:
    """Exact optimal transport cost under min(1, 4 C_f d_X^alpha)."""
    if mu.grid is not nu.grid and (mu.grid.measure is not nu.grid.measure or mu.grid.depth != nu.grid.depth):
        raise ValueError("measures live on different grids")
    for m in (mu, nu):
        if abs(m.total_mass - 1.0) > 1e-10:
            raise ValueError(f"not a probability measure (mass {m.total_mass!r})")
        if len(m) > MAX_OT_ATOMS:
            raise ValueError(f"support of {len(m)} atoms exceeds {MAX_OT_ATOMS}")
    if C_f <= 0 or not 0 < alpha <= 1:
        raise ValueError("need C_f > 0 and alpha in (0, 1]")
    from ot import emd2

    M = cost_matrix(mu, nu, C_f, alpha)
    a = mu.weights / mu.weights.sum()
    b = nu.weights / nu.weights.sum()
    return max(0.0, float(emd2(a, b, M, numItermax=10**7)))


def audit_distortion(
    f: Potential, grid: Grid, n_max: int = 4, pair_budget: int = 200_000, word_budget: int = 256, seed: int = 0
) -> float:
    """Empirical C_f: max |1 - exp(f_n(ay) - f_n(ax))| / d_X(x, y)^alpha."""
    rng = np.random.default_rng(seed)
    X = grid.words
    alpha = f.alpha
    best = 0.0
    for n in range(1, n_max + 1):
        if grid.n**n <= word_budget:
            A = np.indices((grid.n,) * n).reshape(n, -1).T
        else:
            A = rng.integers(0, grid.n, size=(word_budget, n))
        full = np.concatenate([np.repeat(A, len(X), axis=0), np.tile(X, (len(A), 1))], axis=1)
        fn = np.zeros(len(full))
        for k in range(n):
            fn += f.evaluate_words(grid.alphabet, full[:, k:], grid.anchor)
        fn = fn.reshape(len(A), len(X))
        for i, j in _pair_blocks(grid.size, pair_budget, seed):
            if len(i) == 0:
                continue
            d = rowwise_dX(X[i], X[j], grid.alphabet) ** alpha
            delta = fn[:, j] - fn[:, i]
            ratio = np.maximum(np.abs(np.expm1(delta)), np.abs(np.expm1(-delta))) / d
            best = max(best, float(ratio.max()))
    return best


def metric_constants(f: Potential, grid: Grid, C_f: float | None = None, alpha: float | None = None) -> tuple[float, float]:
    """(C_f, alpha) for the Wasserstein ground metric.

    An audited C_f of zero (f with no distortion) makes min(1, 4 C_f d^alpha)
    vanish identically; 1/4 is used instead so that the metric is d_X^alpha.
    """
    alpha = f.alpha if alpha is None else alpha
    if C_f is None:
        C_f = audit_distortion(f, grid)
    return (C_f if C_f > 0 else 0.25), alpha


# --- eigen-triple --------------------------------------------------------

@dataclass
class EigenTriple:
    lam: float
    log_lam: float
    h: GridFunction
    nu: DiscreteMeasure
    residuals: dict
    iterations: int
    s_estimate: float
    history: list = field(default_factory=list)
    bracket: tuple = (0.0, 0.0)
    dual_iterations: int = 0
    log_lam_growth: float | None = None
    shift: float = 0.0

    def manifest(self) -> dict:
        return {
            "lambda": self.lam,
            "log_lambda": self.log_lam,
            "bracket": list(self.bracket),
            "residuals": self.residuals,
            "iterations": self.iterations,
            "dual_iterations": self.dual_iterations,
            "s_estimate": self.s_estimate,
            "log_lambda_growth": self.log_lam_growth,
            "pruned_mass": self.nu.pruned_mass,
            "history": [list(h) for h in self.history],
        }


def _ratio_rate(widths: list[float]) -> float:
    w = np.asarray([x for x in widths if x > 1e-14])
    if len(w) < 3:
        return 0.0
    r = w[1:] / w[:-1]
    tail = r[len(r) // 2 :]
    return float(np.clip(np.median(tail), 0.0, 1.0))


def eigen_triple(
    f: Potential,
    grid: Grid,
    tol: float = 1e-12,
    max_iter: int = 100_000,
    cap: int | None = None,
    init: np.ndarray | None = None,
    dual_tol: float | None = None,
) -> EigenTriple:
    """Perron data (lambda, h, nu) of L_f on the grid.

    Primal: sup-normalised power iteration with Collatz-Wielandt bracket
    [min L phi/phi, max L phi/phi], stopped when the bracket is narrower
    than ``tol`` relative to lambda.  Dual: iterate normalised L* from the
    Dirac mass at the anchor word until successive iterates agree in total
    variation to ``dual_tol``; ``cap`` optionally prunes nu.  Exponentials are shifted by max f so large
    potentials do not overflow; ``log_lam`` is exact in that case.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    dual_tol = tol if dual_tol is None else dual_tol
    shift = float(extension_table(f, grid).max())
    K = kernel(f, grid, shift)
    phi = np.ones(grid.shape) if init is None else np.array(init, dtype=float).reshape(grid.shape)
    if np.any(phi <= 0):
        raise ValueError("initial vector must be strictly positive")
    phi = phi / phi.max()
    history: list[tuple[float, float]] = []
    log_growth = 0.0
    for it in range(1, max_iter + 1):
        psi = _apply(K, phi)
        ratio = psi / phi
        lo, hi = float(ratio.min()), float(ratio.max())
        history.append((lo, hi))
        top = float(psi.max())
        log_growth += math.log(top)
        phi = psi / top
        if hi - lo <= tol * hi:
            break
    else:
        raise ConvergenceError(f"power iteration did not converge in {max_iter} steps", history)
    lam_s = 0.5 * (lo + hi)
    x0 = np.ravel_multi_index((grid.anchor,) * grid.depth, grid.shape)
    growth = None
    if init is None:
        growth = (log_growth + math.log(phi.ravel()[x0])) / it + shift

    # dense dual iteration: exact on the grid, so it converges to dual_tol
    Kd = K.reshape(grid.n, grid.size // grid.n, grid.n)
    mu = np.zeros(grid.size)
    mu[x0] = 1.0
    dual_history = []
    for dit in range(1, max_iter + 1):
        new = (Kd * mu.reshape(1, -1, grid.n)).sum(axis=2).ravel()
        new /= new.sum()
        diff = float(np.abs(new - mu).sum())
        dual_history.append(diff)
        mu = new
        if diff <= dual_tol:
            break
    else:
        raise ConvergenceError(f"dual iteration did not converge in {max_iter} steps", dual_history)
    nu = DiscreteMeasure.from_dense(grid, mu)
    if cap is not None:
        nu = prune(nu, cap)

    h_vals = phi / nu.expect(phi)
    h = GridFunction(grid, h_vals, f.alpha)
    Lh = _apply(K, h.values)
    eig_res = float(np.abs(Lh - lam_s * h.values).max() / np.abs(h.values).max() / lam_s)
    conf_res = 0.0
    for g in cylinder_dictionary(grid, 20):
        lhs = nu.expect(_apply(K, g.values)) / lam_s
        conf_res = max(conf_res, abs(lhs - nu.expect(g)) / max(g.sup(), 1e-300))
    lam_conformal = nu.expect(_apply(K, np.ones(grid.shape)))
    residuals = {
        "eigenfunction": eig_res,
        "conformality": conf_res,
        "lambda_conformal_gap": abs(lam_conformal - lam_s) / lam_s,
        "h_min": float(h.values.min()),
        "h_max": float(h.values.max()),
    }
    log_lam = shift + math.log(lam_s)
    try:
        lam = math.exp(log_lam)
    except OverflowError:
        lam = math.inf
    widths = [b - a for a, b in history]
    return EigenTriple(
        lam=lam,
        log_lam=log_lam,
        h=h,
        nu=nu,
        residuals=residuals,
        iterations=it,
        s_estimate=_ratio_rate(widths),
        history=history,
        bracket=(math.exp(shift) * lo if shift < EXP_LIMIT else math.inf, math.exp(shift) * hi if shift < EXP_LIMIT else math.inf),
        dual_iterations=dit,
        log_lam_growth=growth,
        shift=shift,
    )


# --- diagnostics ---------------------------------------------------------

@dataclass
class LogLinearFit:
    s_hat: float
    C_hat: float
    r2: float
    degenerate: bool
    ns: list = field(default_factory=list)
    values: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "s_hat": self.s_hat,
            "C_hat": self.C_hat,
            "fit_r2": self.r2,
            "degenerate": self.degenerate,
            "n": list(self.ns),
            "values": list(self.values),
        }


def loglinear_fit(ns, values, floor: float = 1e-14, c_scale: float = 1.0) -> LogLinearFit:
    """Least squares log v_n = log(c_scale C) + n log s over the entries above ``floor``."""
    ns = np.asarray(ns, dtype=float)
    values = np.asarray(values, dtype=float)
    ok = values > floor
    if ok.sum() < 2:
        return LogLinearFit(0.0, 0.0, 0.0, True, ns.tolist(), values.tolist())
    x, y = ns[ok], np.log(values[ok])
    slope, intercept = np.polyfit(x, y, 1)
    pred = intercept + slope * x
    ss_res = float(((y - pred) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return LogLinearFit(math.exp(slope), math.exp(intercept) / c_scale, r2, False, ns.tolist(), values.tolist())


def spectral_gap_estimate(f: Potential, triple: EigenTriple, n_max: int = 14, n_min: int = 1) -> LogLinearFit:
    """Fit e_n = ||L^n 1 / (lambda^n h) - 1||_inf ~ 2 C s^n."""
    grid = triple.h.grid
    K = kernel(f, grid, triple.shift)
    lam_s = math.exp(triple.log_lam - triple.shift)
    v = np.ones(grid.shape)
    ns, errs = [], []
    for n in range(1, n_max + 1):
        v = _apply(K, v) / lam_s
        if n >= n_min:
            ns.append(n)
            errs.append(float(np.abs(v / triple.h.values - 1.0).max()))
    return loglinear_fit(ns, errs, c_scale=2.0)


@dataclass
class DecayTable:
    entries: list
    sup_part: list
    holder_part: list
    commute_residual: float
    rate: float
    geometric: bool


def qnorm_decay(
    f: Potential, phi: GridFunction, triple: EigenTriple, n_max: int = 12, probe_budget: int = 10**6, floor: float = 1e-13
) -> DecayTable:
    """||Q^n phi - Pi phi||_inf + D_alpha(Q^n phi - Pi phi) for n = 1..n_max.

    Q(phi) = L(h phi) / (lambda h) and Pi(phi) = <nu, phi h>.
    """
    grid = phi.grid
    K = kernel(f, grid, triple.shift)
    lam_s = math.exp(triple.log_lam - triple.shift)
    h = triple.h.values
    nu = triple.nu
    alpha = phi.alpha

    def Q(v):
        return _apply(K, h * v) / (lam_s * h)

    def Pi(v):
        return nu.expect(v * h)

    pi_phi = Pi(phi.values)
    commute = max(abs(Pi(Q(phi.values)) - pi_phi), float(np.abs(Q(np.full(grid.shape, pi_phi)) - pi_phi).max()))
    sups, hols, entries = [], [], []
    v = phi.values
    for _ in range(n_max):
        v = Q(v)
        diff = v - pi_phi
        s = float(np.abs(diff).max())
        d = holder_seminorm_estimate(GridFunction(grid, diff), alpha, probe_budget) if s > 0 else 0.0
        sups.append(s)
        hols.append(d)
        entries.append(s + d)
    e = np.asarray(entries)
    live = e[e > floor]
    ratios = live[1:] / live[:-1] if len(live) > 1 else np.array([])
    tail = ratios[len(ratios) // 2 :]
    rate = float(np.median(tail)) if len(tail) else 0.0
    geometric = bool(len(tail) == 0 or np.all(tail < 1.0))
    return DecayTable(entries, sups, hols, commute, rate, geometric)


# --- normalisation -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class NormalizedPotential(Potential):
    """f + log h - log h o sigma - log lambda, with h cut to its effective depth."""

    base: Potential = None
    log_h: np.ndarray = None  # log h on words of length log_h.ndim (0-d: constant)
    log_lam: float = 0.0
    name = "normalized"

    @property
    def depth(self):
        k = self.log_h.ndim
        if k == 0:
            return self.base.depth
        if self.base.depth is None:
            return None
        return max(self.base.depth, k + 1)

    @property
    def alpha(self):
        return self.base.alpha

    @property
    def sup_bound(self):
        return self.base.sup_bound + 2 * float(np.abs(self.log_h).max()) + abs(self.log_lam)

    def evaluate_words(self, alphabet, words, anchor=0):
        out = self.base.evaluate_words(alphabet, words, anchor) - self.log_lam
        k = self.log_h.ndim
        if k == 0:
            return out
        shifted = words[:, 1:] if words.shape[1] > 1 else np.full((len(words), 1), anchor)
        here = pad_words(words, k, anchor)
        there = pad_words(shifted, k, anchor)
        return out + self.log_h[tuple(here.T)] - self.log_h[tuple(there.T)]

    def params(self):
        return {"base": self.base.describe(), "log_lambda": self.log_lam, "h_depth": int(self.log_h.ndim)}


def normalize_potential(
    f: Potential, grid: Grid, triple: EigenTriple | None = None, residual_tol: float = 1e-8, **eig_kwargs
) -> tuple[NormalizedPotential, EigenTriple]:
    from .seqspace import effective_depth

    if triple is None:
        triple = eigen_triple(f, grid, **eig_kwargs)
    h = triple.h
    k = effective_depth(h)
    block = h.values.reshape((grid.n,) * k + (-1,))[..., 0] if k < grid.depth else h.values
    if k == 0:
        log_h = np.asarray(0.0)
    else:
        log_h = np.log(block)
    fbar = NormalizedPotential(base=f, log_h=log_h, log_lam=triple.log_lam)
    one = (kernel(fbar, grid)).sum(axis=0)
    res = np.abs(one - 1.0)
    worst = int(res.argmax())
    if res.flat[worst] > residual_tol:
        raise NormalizationError(
            f"L_fbar 1 deviates from 1 by {res.flat[worst]:.3g} at word {grid.point(worst).word}",
            float(res.flat[worst]),
            grid.point(worst),
        )
    return fbar, triple
