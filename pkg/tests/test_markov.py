import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ruelle.alphabet import finite_measure
from ruelle.markov import (
    DegenerateError,
    UnsupportedCaseError,
    build_kernel,
    clt_check,
    clt_variance,
    coboundary,
    geometric_ergodicity_fit,
    operator_contraction_estimate,
    random_measure_pairs,
    simulate_chain,
    simulate_many,
    stationary_marginal_check,
    step_sample,
)
from ruelle.potential import first_coordinate, long_range
from ruelle.seqspace import Grid, GridFunction, TruncatedPoint
from ruelle.transfer import NormalizationError, normalize_potential


@pytest.fixture
def two_kernel(grid6, f_two):
    fbar, _ = normalize_potential(f_two, grid6)
    return build_kernel(fbar, grid6)


@pytest.fixture
def iid_kernel(grid6, f_zero):
    return build_kernel(f_zero, grid6)


def test_unnormalised_potential_is_refused(grid6, f_two):
    with pytest.raises(NormalizationError) as err:
        build_kernel(f_two, grid6)
    assert err.value.residual > 0.1


def test_kernel_columns_are_probabilities(two_kernel):
    assert np.allclose(two_kernel.probs.sum(axis=0), 1.0)
    assert two_kernel.normalization_residual < 1e-12
    assert two_kernel.window_depth == 6


def test_stationary_first_marginal(two_kernel):
    report = stationary_marginal_check(two_kernel)
    assert report.ok
    # oracle: left Perron vector of the symbol chain T[b, a]
    T = two_kernel.probs[:, [0, 2**5]].T
    w, V = np.linalg.eig(T.T)
    pi = np.real(V[:, np.argmax(np.real(w))])
    assert np.allclose(report.pi, pi / pi.sum())


def test_marginal_check_refuses_long_range():
    m = finite_measure(size=2)
    grid = Grid(m, 5)
    fbar, _ = normalize_potential(long_range(1.0, 0.5, "one", m.alphabet), grid)
    with pytest.raises(UnsupportedCaseError):
        stationary_marginal_check(build_kernel(fbar, grid))


@given(st.integers(0, 2**32 - 1))
def test_chain_moves_by_prepending(seed):
    grid = Grid(finite_measure(size=2), 4)
    k = build_kernel(first_coordinate([0.0, 0.0]), grid)
    trace = simulate_chain(k, TruncatedPoint((1, 0, 1, 1)), 30, seed)
    for prev, nxt in zip(trace.states, trace.states[1:]):
        assert nxt.word[1:] == prev.word[:-1]


def test_chain_is_reproducible(two_kernel):
    a = simulate_chain(two_kernel, None, 500, seed=11)
    b = simulate_chain(two_kernel, None, 500, seed=11)
    assert np.array_equal(a.indices, b.indices)
    assert not np.array_equal(a.indices, simulate_chain(two_kernel, None, 500, seed=12).indices)


def test_transition_frequencies_match_kernel(two_kernel):
    trace = simulate_chain(two_kernel, None, 40000, seed=5)
    first = trace.first_coordinates()
    for b in (0, 1):
        after = first[1:][first[:-1] == b]
        p = two_kernel.transition(b * 2**5)[1]
        assert abs(after.mean() - p) < 4 * np.sqrt(p * (1 - p) / len(after))


def test_step_sample_returns_grid_point(two_kernel, rng):
    x = TruncatedPoint((0, 1, 0, 0, 1, 1))
    y = step_sample(two_kernel, x, rng)
    assert y.word[1:] == x.word[:-1]


def test_simulate_many_is_deterministic_and_chunked(two_kernel):
    obs = np.arange(two_kernel.grid.size, dtype=float)
    f1, s1 = simulate_many(two_kernel, 20, 2500, seed=9, observable=obs)
    f2, s2 = simulate_many(two_kernel, 20, 2500, seed=9, observable=obs)
    assert np.array_equal(f1, f2) and np.array_equal(s1, s2)
    assert len(f1) == 2500


def test_stationary_start_stays_stationary(two_kernel):
    finals, _ = simulate_many(two_kernel, 10, 20000, seed=1)
    first = finals // 2**5
    pi = stationary_marginal_check(two_kernel).pi
    assert abs(first.mean() - pi[1]) < 0.015


def test_iid_variance_is_bernoulli(iid_kernel):
    v = clt_variance(iid_kernel, first_coordinate([0.0, 1.0]))
    assert v.s2 == pytest.approx(0.25, abs=1e-12)
    assert all(abs(c) < 1e-12 for c in v.autocov[1:])


def test_two_coordinate_variance_agrees_with_simulation(two_kernel):
    v = clt_variance(two_kernel, first_coordinate([0.0, 1.0]), mc=(2000, 4000, 0))
    assert v.s2_direct == pytest.approx(v.s2_untapered, rel=0.1)


def test_coboundary_has_no_clt(two_kernel, rng):
    # xi = g - g o sigma has depth one more than g, so g must fit inside the window
    short = two_kernel.grid.with_depth(two_kernel.window_depth - 1)
    xi = coboundary(GridFunction(short, rng.normal(size=short.size)))
    v = clt_variance(two_kernel, xi, lag_max=40)
    assert v.s2_untapered < 1e-10
    with pytest.raises(DegenerateError):
        clt_check(two_kernel, xi, 100, 1000, 0, variance=v)


def test_ergodicity_on_two_coordinate_kernel(two_kernel):
    fit = geometric_ergodicity_fit(two_kernel, [0, 63])
    assert fit.nonincreasing and fit.r2 > 0.99
    assert fit.s_hat == pytest.approx(0.420204, abs=0.01)


def test_iid_chain_mixes_in_one_window(iid_kernel):
    fit = geometric_ergodicity_fit(iid_kernel, [0, 5])
    assert fit.degenerate
    assert max(fit.distances[0][6:]) < 1e-12


def test_contraction_estimates(two_kernel, iid_kernel):
    pairs = random_measure_pairs(two_kernel.grid, 10, seed=0)
    for k in (two_kernel, iid_kernel):
        report = operator_contraction_estimate(k, pairs, m=4)
        assert report.contracts and len(report.ratios) == 10
