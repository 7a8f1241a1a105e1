import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ruelle.alphabet import finite_measure
from ruelle.seqspace import (
    GRID_CAP,
    Grid,
    GridFunction,
    TruncatedPoint,
    cylinder_dictionary,
    dbar_from_dX,
    default_depth,
    effective_depth,
    holder_seminorm_estimate,
    metric_dbar,
    metric_dX,
    prepend,
    read_grid_function,
    write_grid_function,
)

ALPHABET = finite_measure(size=3).alphabet
words = st.lists(st.integers(0, 2), min_size=1, max_size=10)


def point(word, anchor=0):
    return TruncatedPoint(tuple(word), anchor, ALPHABET)


def dX_series(x, y, terms=200):
    """Direct partial sum of 2^-n d(x_n, y_n) over the induced sequences."""
    cx, cy = x.coordinates(terms), y.coordinates(terms)
    return sum(0.5 ** (k + 1) * (a != b) for k, (a, b) in enumerate(zip(cx, cy)))


@given(words, words, st.integers(0, 2), st.integers(0, 2))
def test_dX_matches_series(u, v, a, b):
    x, y = point(u, a), point(v, b)
    assert metric_dX(x, y) == pytest.approx(dX_series(x, y), abs=1e-15)


@given(words, words, words)
def test_dX_is_a_metric(u, v, w):
    x, y, z = point(u), point(v), point(w)
    assert metric_dX(x, x) == 0.0
    assert metric_dX(x, y) == metric_dX(y, x)
    assert metric_dX(x, z) <= metric_dX(x, y) + metric_dX(y, z) + 1e-15
    assert 0.0 <= metric_dX(x, y) <= 1.0


def test_dX_of_opposite_constant_sequences_is_one():
    assert metric_dX(point([1, 1, 1], 1), point([0, 0, 0], 0)) == 1.0


def test_dX_first_coordinate_difference():
    assert metric_dX(point([1, 0, 0]), point([0, 0, 0])) == 0.5


@given(words, words, st.floats(0.01, 10.0), st.floats(0.05, 1.0))
def test_dbar_is_capped_and_vanishes_on_diagonal(u, v, C, alpha):
    x, y = point(u), point(v)
    d = metric_dbar(x, y, C, alpha)
    assert 0.0 <= d <= 1.0
    assert metric_dbar(x, x, C, alpha) == 0.0
    assert d == pytest.approx(min(1.0, 4 * C * metric_dX(x, y) ** alpha))


def test_dbar_rejects_bad_constants():
    with pytest.raises(ValueError):
        metric_dbar(point([0]), point([1]), 0.0, 1.0)
    assert dbar_from_dX(np.array([0.0, 1.0]), 1.0, 1.0).tolist() == [0.0, 1.0]


@given(st.integers(0, 2), words)
def test_prepend_index_matches_prepend(a, w):
    grid = Grid(finite_measure(size=3), len(w))
    x = grid.point(grid.index(point(w)))
    assert grid.prepend_index(a, grid.index(x)) == grid.index(prepend(a, x))
    assert prepend(a, x).depth == x.depth


def test_shift_pulls_in_anchor():
    x = point([1, 2], anchor=1)
    assert x.shift().word == (2,)
    assert x.shift().shift().word == (1,)


@pytest.mark.parametrize("n", [2, 3, 5, 21, 32, 64])
def test_default_depth_keeps_extension_within_cap(n):
    N = default_depth(n)
    assert n ** (N + 1) <= GRID_CAP
    assert default_depth(2) == 8


def test_grid_rejects_bad_anchor():
    with pytest.raises(ValueError):
        Grid(finite_measure(size=2), 3, anchor=2)


def test_lift_and_restrict_round_trip(rng):
    grid = Grid(finite_measure(size=2), 4)
    phi = GridFunction(grid, rng.normal(size=grid.size))
    assert np.array_equal(phi.lift().restrict().values, phi.values)
    assert phi.lift()(TruncatedPoint((1, 0, 1, 1, 0))) == phi(TruncatedPoint((1, 0, 1, 1)))


def test_holder_seminorm_is_exact_when_exhaustive():
    grid = Grid(finite_measure(size=2), 3)
    phi = GridFunction(grid, grid.words[:, 0].astype(float))
    # differs only in the first coordinate: 1 / (1/2) = 2
    assert holder_seminorm_estimate(phi, 1.0) == pytest.approx(2.0)
    brute = max(
        abs(phi.flat[i] - phi.flat[j]) / metric_dX(grid.point(i), grid.point(j), grid.alphabet)
        for i in range(grid.size)
        for j in range(grid.size)
        if i != j
    )
    assert holder_seminorm_estimate(phi, 1.0) == pytest.approx(brute)


def test_holder_seminorm_probe_grows_with_budget(rng):
    grid = Grid(finite_measure(size=2), 8)
    phi = GridFunction(grid, rng.normal(size=grid.size))
    small = holder_seminorm_estimate(phi, 0.5, probe_budget=500)
    large = holder_seminorm_estimate(phi, 0.5, probe_budget=5000)
    assert small <= large <= holder_seminorm_estimate(phi, 0.5)


def test_effective_depth():
    grid = Grid(finite_measure(size=2), 5)
    assert effective_depth(GridFunction(grid, grid.words[:, 1].astype(float))) == 2
    assert effective_depth(GridFunction(grid, np.ones(grid.size))) == 0


def test_cylinder_dictionary_is_deterministic():
    grid = Grid(finite_measure(size=2), 4)
    a, b = cylinder_dictionary(grid, 20), cylinder_dictionary(grid, 20)
    assert len(a) == 20
    assert all(np.array_equal(x.values, y.values) for x, y in zip(a, b))
    shallow = cylinder_dictionary(grid, 8, depth=2)
    assert all(effective_depth(g) <= 2 for g in shallow)


def test_grid_function_csv_round_trip(tmp_path, rng):
    m = finite_measure(size=3)
    grid = Grid(m, 3, anchor=1)
    phi = GridFunction(grid, rng.normal(size=grid.size))
    path = tmp_path / "phi.csv"
    write_grid_function(phi, path)
    back = read_grid_function(path, m)
    assert back.grid.depth == 3
    assert np.array_equal(back.values, phi.values)
