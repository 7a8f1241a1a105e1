"""Pressure, variational entropy and equilibrium states on the grid."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .potential import Constant, Potential
from .seqspace import Grid, GridFunction, cylinder_dictionary
from .transfer import (
    ConvergenceError,
    DiscreteMeasure,
    EigenTriple,
    NormalizedPotential,
    eigen_triple,
    extension_average,
    extension_table,
    normalize_potential,
    product_measure,
)


class InvarianceError(ValueError):
    def __init__(self, message: str, residual: float, worst: int):
        super().__init__(message)
        self.residual = residual
        self.worst = worst


def pressure(f: Potential, grid: Grid, triple: EigenTriple | None = None, **eig_kwargs) -> float:
    """log lambda_f."""
    if triple is None:
        triple = eigen_triple(f, grid, **eig_kwargs)
    return triple.log_lam


def invariance_residual(mu: DiscreteMeasure, dictionary: list[GridFunction] | None = None) -> tuple[float, int]:
    """max_g |<mu, g o sigma> - <mu, g>| over cylinder tests of depth <= N-1."""
    grid = mu.grid
    if dictionary is None:
        dictionary = cylinder_dictionary(grid, 20, depth=grid.depth - 1)
    n = grid.n
    worst, idx = 0.0, 0
    for k, g in enumerate(dictionary):
        # g has depth <= N-1, so g(x_1..x_{N-1}) is read off any last coordinate
        g_short = g.values[..., 0] if grid.depth > 1 else g.values
        if grid.depth > 1:
            shifted = np.broadcast_to(g_short[None, ...], (n,) + g_short.shape).reshape(grid.size)
        else:
            shifted = np.full(grid.size, float(g.values[grid.anchor]))
        r = abs(mu.expect(shifted) - mu.expect(g))
        if r > worst:
            worst, idx = r, k
    return worst, idx


def extended_expectation(fbar: NormalizedPotential, mu: DiscreteMeasure, g: Potential) -> float:
    """<mu, g> with g read on depth N+1 words drawn through the kernel of fbar.

    This is the pairing of g against the one-step extension of mu, which
    sees one more genuine coordinate than the depth-N atoms do.
    """
    grid = mu.grid
    G = extension_table(g, grid)
    return mu.expect(extension_average(fbar, grid, G).ravel())


@dataclass
class EquilibriumState:
    measure: DiscreteMeasure
    entropy: float
    pressure: float
    potential_integral: float
    invariance_residual: float
    triple: EigenTriple
    fbar: NormalizedPotential
    worst_test: int = 0

    @property
    def variational_gap(self) -> float:
        return self.entropy + self.potential_integral - self.pressure

    def summary(self) -> dict:
        return {
            "entropy": self.entropy,
            "pressure": self.pressure,
            "potential_integral": self.potential_integral,
            "variational_gap": self.variational_gap,
            "invariance_residual": self.invariance_residual,
            "pruned_mass": self.measure.pruned_mass,
        }


def equilibrium_state(
    f: Potential,
    grid: Grid,
    triple: EigenTriple | None = None,
    residual_tol: float = 1e-8,
    **eig_kwargs,
) -> EquilibriumState:
    """mu_f = h nu (normalised), entropy -<mu_f, fbar>."""
    fbar, triple = normalize_potential(f, grid, triple, residual_tol, **eig_kwargs)
    mu = triple.nu.reweighted(triple.h.flat).normalized()
    entropy = 0.0 - extended_expectation(fbar, mu, fbar)
    integral = extended_expectation(fbar, mu, f)
    inv, worst = invariance_residual(mu)
    if inv > residual_tol:
        raise InvarianceError(f"equilibrium measure fails invariance test #{worst} by {inv:.3g}", inv, worst)
    return EquilibriumState(mu, entropy, triple.log_lam, integral, inv, triple, fbar, worst)


_EIG_CACHE: dict = {}


def _log_lambda(g: Potential, grid: Grid, **eig_kwargs) -> float:
    key = (id(g), id(grid))
    hit = _EIG_CACHE.get(key)
    if hit is None or hit[0] is not g or hit[1] is not grid:
        hit = (g, grid, eigen_triple(g, grid, **eig_kwargs).log_lam)
        _EIG_CACHE[key] = hit
    return hit[2]


def entropy_upper_estimate(mu: DiscreteMeasure, dictionary: list[Potential], **eig_kwargs) -> float:
    """min over the dictionary of -<mu, g> + log lambda_g (an upper bound on h^v(mu))."""
    if not dictionary:
        raise ValueError("dictionary must be non-empty")
    return min(-mu.expect(g) + _log_lambda(g, mu.grid, **eig_kwargs) for g in dictionary)


@dataclass
class VariationalRow:
    name: str
    entropy_estimate: float
    integral: float
    deficit: float
    invariance_residual: float


@dataclass
class VariationalReport:
    pressure: float
    rows: list[VariationalRow]
    tol: float

    @property
    def ok(self) -> bool:
        return all(r.deficit >= -self.tol for r in self.rows)

    def row(self, name: str) -> VariationalRow:
        return next(r for r in self.rows if r.name == name)


def variational_check(
    f: Potential,
    candidates: dict[str, DiscreteMeasure],
    grid: Grid,
    dictionary: list[Potential] | None = None,
    deficit_tol: float = 1e-6,
    include_equilibrium: bool = True,
    **eig_kwargs,
) -> VariationalReport:
    """Deficits P(f) - (h_est(mu) + <mu, f>) for candidate invariant measures.

    The entropy dictionary always contains 0 and f itself, which makes every
    deficit nonnegative up to rounding.
    """
    P = pressure(f, grid, **eig_kwargs)
    dic = [Constant(0.0), f] + list(dictionary or [])
    rows = []
    if include_equilibrium:
        eq = equilibrium_state(f, grid, **eig_kwargs)
        rows.append(VariationalRow("equilibrium", eq.entropy, eq.potential_integral,
                                   P - eq.entropy - eq.potential_integral, eq.invariance_residual))
    for name, mu in candidates.items():
        inv, _ = invariance_residual(mu)
        h = entropy_upper_estimate(mu, dic, **eig_kwargs)
        integral = mu.expect(f)
        rows.append(VariationalRow(name, h, integral, P - h - integral, inv))
    return VariationalReport(P, rows, deficit_tol)


def standard_candidates(grid: Grid, seed: int = 0, count: int = 10) -> dict[str, DiscreteMeasure]:
    """Shift-invariant test measures: products, fixed points, periodic orbits, Markov."""
    n = grid.n
    rng = np.random.default_rng(seed)
    out: dict[str, DiscreteMeasure] = {"product": product_measure(grid)}
    for a in range(min(n, 2)):
        out[f"fixed-{a}"] = DiscreteMeasure.dirac(grid, int(np.ravel_multi_index((a,) * grid.depth, grid.shape)))
    if n >= 2:
        orbit = []
        for s in range(2):
            word = tuple((s + k) % 2 for k in range(grid.depth))
            orbit.append(int(np.ravel_multi_index(word, grid.shape)))
        out["period-2"] = DiscreteMeasure(grid, np.asarray(orbit), np.asarray([0.5, 0.5]))
    while len(out) < count:
        k = len(out)
        if k % 2:
            q = rng.dirichlet(np.ones(n))
            out[f"product-{k}"] = product_measure(grid, q)
        else:
            P = rng.dirichlet(np.ones(n), size=n)
            out[f"markov-{k}"] = markov_measure(grid, P)
    return out


def markov_measure(grid: Grid, P: np.ndarray) -> DiscreteMeasure:
    """Stationary Markov measure on words, read in either time direction.

    Uses pi(x_N) P(x_N, x_{N-1}) ... so that it is shift-invariant on the grid.
    """
    vals, vecs = np.linalg.eig(P.T)
    pi = np.real(vecs[:, np.argmin(np.abs(vals - 1))])
    pi = pi / pi.sum()
    w = grid.words
    weight = pi[w[:, -1]].copy()
    for k in range(grid.depth - 1, 0, -1):
        weight *= P[w[:, k], w[:, k - 1]]
    return DiscreteMeasure(grid, np.arange(grid.size), weight)


@dataclass
class ConvexityRow:
    t: float
    log_lambda: float
    chord: float
    slack: float


def pressure_convexity_probe(f: Potential, g: Potential, ts, grid: Grid, slack_tol: float = 1e-9, **eig_kwargs):
    """log lambda_{tf+(1-t)g} <= t log lambda_f + (1-t) log lambda_g at each t."""
    Pf = pressure(f, grid, **eig_kwargs)
    Pg = pressure(g, grid, **eig_kwargs)
    rows = []
    for t in ts:
        if not 0.0 <= t <= 1.0:
            raise ValueError("t must lie in [0, 1]")
        mix = t * f + (1.0 - t) * g
        P = pressure(mix, grid, **eig_kwargs)
        chord = t * Pf + (1.0 - t) * Pg
        rows.append(ConvexityRow(float(t), P, chord, chord - P))
    return rows, all(r.slack >= -slack_tol for r in rows)


@dataclass
class BetaRow:
    beta: float
    log_lambda: float
    mean_f: float
    entropy: float
    marginal: list = field(default_factory=list)


@dataclass
class BetaScan:
    rows: list[BetaRow]
    error: str | None = None

    @property
    def m_estimate(self) -> float | None:
        return self.rows[-1].mean_f if self.rows else None

    def monotone(self, tol: float = 1e-8) -> bool:
        means = [r.mean_f for r in self.rows]
        return all(b >= a - tol for a, b in zip(means, means[1:]))


def beta_scan(f: Potential, betas, grid: Grid, **eig_kwargs) -> BetaScan:
    """Equilibrium data of beta f along ascending betas, warm-started."""
    betas = list(betas)
    if any(b > a for a, b in zip(betas[1:], betas)):
        raise ValueError("betas must be ascending")
    rows: list[BetaRow] = []
    init = None
    for beta in betas:
        bf = float(beta) * f
        try:
            triple = eigen_triple(bf, grid, init=init, **eig_kwargs)
            eq = equilibrium_state(bf, grid, triple)
        except (ConvergenceError, ValueError, OverflowError) as exc:
            return BetaScan(rows, f"beta={beta}: {exc}")
        init = triple.h.values
        mean_f = extended_expectation(eq.fbar, eq.measure, f)
        rows.append(BetaRow(float(beta), triple.log_lam, mean_f, eq.entropy, eq.measure.marginal(1).tolist()))
    return BetaScan(rows)


def first_marginal(mu: DiscreteMeasure) -> np.ndarray:
    return mu.marginal(1)


def closed_form_log_lambda_one_site(table, weights) -> float:
    """log sum_a p(a) e^{c_a}; the pressure of a first-coordinate potential."""
    table = np.asarray(table, dtype=float)
    top = table.max()
    return float(top + math.log(np.asarray(weights) @ np.exp(table - top)))
