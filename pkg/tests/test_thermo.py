import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import LOG3
from ruelle.alphabet import finite_measure
from ruelle.potential import constant, first_coordinate, long_range, two_coordinate
from ruelle.seqspace import Grid
from ruelle.thermo import (
    beta_scan,
    entropy_upper_estimate,
    equilibrium_state,
    invariance_residual,
    markov_measure,
    pressure,
    pressure_convexity_probe,
    standard_candidates,
    variational_check,
)
from ruelle.transfer import DiscreteMeasure, product_measure

stochastic = arrays(np.float64, (3, 3), elements=st.floats(0.05, 1.0)).map(lambda a: a / a.sum(axis=1, keepdims=True))


def kl(p, q):
    return float(np.sum(p * np.log(p / q)))


@given(st.floats(-3.0, 3.0), st.floats(-3.0, 3.0))
def test_one_site_equilibrium_is_tilted_product(c0, c1):
    grid = Grid(finite_measure(size=2), 5)
    eq = equilibrium_state(first_coordinate([c0, c1]), grid)
    q = np.exp([c0, c1]) / np.exp([c0, c1]).sum()
    assert np.allclose(eq.measure.marginal(1), q)
    # entropy relative to the uniform a priori measure
    assert eq.entropy == pytest.approx(-kl(q, np.array([0.5, 0.5])), abs=1e-12)
    assert abs(eq.variational_gap) < 1e-12


def test_first_coordinate_entropy_value(grid6, f_first):
    eq = equilibrium_state(f_first, grid6)
    q = np.array([0.25, 0.75])
    assert eq.entropy == pytest.approx(-kl(q, [0.5, 0.5]))
    assert eq.entropy == pytest.approx(-0.130812, abs=1e-6)


def test_long_range_equilibrium_is_invariant():
    m = finite_measure(size=3)
    eq = equilibrium_state(long_range(1.0, 0.5, "distance", m.alphabet), Grid(m, 6))
    assert eq.invariance_residual < 1e-10
    assert eq.entropy <= 0
    assert abs(eq.variational_gap) < 1e-10


@given(stochastic)
def test_markov_measures_are_shift_invariant(P):
    grid = Grid(finite_measure(size=3), 4)
    mu = markov_measure(grid, P)
    assert mu.total_mass == pytest.approx(1.0)
    assert invariance_residual(mu)[0] < 1e-12


def test_non_invariant_measure_is_detected(grid6):
    mu = DiscreteMeasure.dirac(grid6, grid6.index(grid6.point(1)))  # 0...01 is not a fixed point
    assert invariance_residual(mu)[0] > 0.1


def test_entropy_estimate_monotone_in_dictionary(grid6, f_first, f_two):
    mu = markov_measure(grid6, np.array([[0.2, 0.8], [0.6, 0.4]]))
    one = entropy_upper_estimate(mu, [constant(0.0)])
    two = entropy_upper_estimate(mu, [constant(0.0), f_first])
    three = entropy_upper_estimate(mu, [constant(0.0), f_first, f_two])
    assert one >= two >= three
    assert one == pytest.approx(0.0)


def test_entropy_estimate_attains_equilibrium_value(grid8, f_two):
    eq = equilibrium_state(f_two, grid8)
    est = entropy_upper_estimate(eq.measure, [constant(0.0), f_two])
    assert est == pytest.approx(eq.entropy, abs=1e-8)


def test_variational_report(grid6, f_first):
    report = variational_check(f_first, standard_candidates(grid6), grid6)
    assert report.ok
    assert abs(report.row("equilibrium").deficit) < 1e-12
    assert report.row("fixed-1").deficit == pytest.approx(0.0, abs=1e-12)
    assert report.row("product").deficit == pytest.approx(math.log(2) - 0.5 * LOG3, abs=1e-12)


def test_standard_candidates_are_invariant(grid6):
    cands = standard_candidates(grid6, seed=3, count=10)
    assert len(cands) == 10
    for mu in cands.values():
        assert invariance_residual(mu)[0] < 1e-12


@given(arrays(np.float64, (2, 2), elements=st.floats(-2, 2)), arrays(np.float64, 2, elements=st.floats(-2, 2)),
       st.floats(0.0, 1.0))
def test_pressure_is_convex(A, c, t):
    grid = Grid(finite_measure(size=2), 6)
    rows, ok = pressure_convexity_probe(two_coordinate(A), first_coordinate(c), [t], grid)
    assert ok


def test_pressure_midpoint(grid6, f_first, f_zero):
    rows, _ = pressure_convexity_probe(f_first, f_zero, [0.5], grid6)
    assert rows[0].log_lambda == pytest.approx(math.log((1 + math.sqrt(3)) / 2), abs=1e-12)


def test_pressure_of_constant_shift(grid6, f_two):
    assert pressure(f_two + 1.5, grid6) == pytest.approx(pressure(f_two, grid6) + 1.5)


def test_beta_scan_approaches_maximum(grid6, f_first):
    scan = beta_scan(f_first, [0.0, 1.0, 5.0, 50.0], grid6)
    assert scan.error is None and scan.monotone()
    assert scan.m_estimate == pytest.approx(LOG3, abs=1e-12)
    q = [3.0**b / (1 + 3.0**b) for b in (0.0, 1.0, 5.0)]
    assert np.allclose([r.marginal[1] for r in scan.rows[:3]], q)


def test_beta_scan_rejects_descending(grid6, f_first):
    with pytest.raises(ValueError):
        beta_scan(f_first, [1.0, 0.0], grid6)


def test_product_measure_entropy_estimate_is_zero(grid6, f_first):
    assert entropy_upper_estimate(product_measure(grid6), [constant(0.0), f_first]) == pytest.approx(0.0)
