import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ruelle.paths import (
    PolygonalPath,
    hausdorff_dense,
    hausdorff_distance,
    hausdorff_to_many,
    mc_apply,
    path_potential,
    point_polyline_distance,
    sample_path,
    zero_path_potential,
)
from ruelle.paths import _directed_exact

seeds = st.integers(0, 2**32 - 1)


def random_pair(seed, d=None, L=None):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 4)) if d is None else d
    L = int(rng.integers(2, 6)) if L is None else L
    return sample_path(d, L, rng), sample_path(d, int(rng.integers(2, 6)), rng)


def test_evaluate_hits_vertices_and_midpoints():
    g = PolygonalPath([[0.0, 0.0], [2.0, 0.0], [2.0, 4.0]])
    assert np.allclose(g.evaluate([1, 2, 3]), g.points)
    assert np.allclose(g.evaluate(2.5), [2.0, 2.0])
    with pytest.raises(ValueError):
        g.evaluate(0.5)


def test_hausdorff_known_values():
    seg = PolygonalPath([[-1.0, 0.0], [1.0, 0.0]])
    point = PolygonalPath([[0.0, 1.0], [0.0, 1.0]])
    assert hausdorff_distance(seg, point) == pytest.approx(math.sqrt(2))
    tent = PolygonalPath([[-1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
    assert hausdorff_distance(seg, tent) == pytest.approx(1.0)
    far = PolygonalPath([[0.0, 0.0], [0.0, 0.0]])
    spike = PolygonalPath([[0.0, 0.0], [1.0, 2.0], [0.0, 0.0]])
    assert hausdorff_distance(far, spike) == pytest.approx(math.sqrt(5))


def test_interior_maximum_between_segments():
    seg = PolygonalPath([[0.0, 0.0], [2.0, 2.0]])
    ell = PolygonalPath([[0.0, 0.0], [0.0, 2.0], [2.0, 2.0]])
    # from the segment, the farthest point is (1, 1), where the two legs of ell tie
    assert _directed_exact(seg.points, ell.points) == pytest.approx(1.0)
    # from ell, the corner (0, 2) is sqrt(2) from the diagonal
    assert hausdorff_distance(seg, ell) == pytest.approx(math.sqrt(2))


@given(seeds)
def test_exact_dominates_dense_and_agrees(seed):
    g1, g2 = random_pair(seed)
    exact = hausdorff_distance(g1, g2)
    dense = hausdorff_dense(g1, g2, resolution=500)
    longest = max(g1.segment_lengths.max(), g2.segment_lengths.max())
    assert dense - 1e-12 <= exact <= dense + longest / 500 + 1e-12


@given(seeds)
def test_hausdorff_metric_properties(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 4))
    a, b, c = (sample_path(d, int(rng.integers(2, 5)), rng) for _ in range(3))
    assert hausdorff_distance(a, a) == pytest.approx(0.0, abs=1e-12)
    assert hausdorff_distance(a, b) == pytest.approx(hausdorff_distance(b, a), abs=1e-12)
    assert hausdorff_distance(a, c) <= hausdorff_distance(a, b) + hausdorff_distance(b, c) + 1e-12


@given(seeds)
def test_reversal_does_not_change_image(seed):
    g1, g2 = random_pair(seed)
    rev = PolygonalPath(g1.points[::-1])
    assert hausdorff_distance(rev, g2) == pytest.approx(hausdorff_distance(g1, g2), abs=1e-12)


def test_high_dimension_falls_back_to_dense(rng):
    g1, g2 = sample_path(5, 3, rng), sample_path(5, 3, rng)
    assert hausdorff_distance(g1, g2) == hausdorff_dense(g1, g2)


def test_batch_matches_single(rng):
    g = sample_path(2, 4, rng)
    others = [sample_path(2, 4, rng) for _ in range(6)]
    assert np.allclose(hausdorff_to_many(g, others), [hausdorff_distance(g, h) for h in others])


def test_point_polyline_distance_brute_force(rng):
    Q = rng.normal(size=(4, 2))
    P = rng.normal(size=(5, 2))
    t = np.linspace(0, 1, 20001)[:, None]
    dense = np.concatenate([Q[i] + t * (Q[i + 1] - Q[i]) for i in range(3)])
    brute = np.linalg.norm(P[:, None, :] - dense[None], axis=-1).min(axis=1)
    assert np.allclose(point_polyline_distance(P, Q), brute, atol=1e-6)


@given(seeds, st.floats(0.0, 3.0), st.floats(0.05, 0.9), st.floats(0.1, 1.0))
def test_path_potential_bounds_and_translation(seed, J0, r, alpha):
    rng = np.random.default_rng(seed)
    f = path_potential(J0, r, alpha, K=5)
    seq = [sample_path(2, 3, rng) for _ in range(5)]
    v = f(seq)
    assert f.lower_bound - 1e-12 <= v <= 0.0
    shift = rng.normal(size=2) * 10
    assert f([g.translated(shift) for g in seq]) == pytest.approx(v, abs=1e-12)


def test_identical_paths_give_zero():
    g = PolygonalPath([[0.0, 0.0], [1.0, 1.0]])
    f = path_potential(1.0, 0.5, 1.0, K=6)
    assert f([g] * 6) == 0.0


def test_far_apart_paths_saturate():
    f = path_potential(1.0, 0.5, 1.0)
    near = PolygonalPath([[0.0, 0.0], [1.0, 0.0]])
    seq = [near] + [near.translated([1e6 * (k + 1), 0.0]) for k in range(f.K - 1)]
    # the n = 1 term compares a path with itself, so the sum starts at r^2
    assert f(seq) == pytest.approx(-f.J0 * f.r**2 / (1 - f.r), abs=1e-3)


def test_default_truncation_meets_tail_tolerance():
    f = path_potential(2.0, 0.6, 1.0, tail_tol=1e-8)
    assert f.tail_bound < 1e-8
    assert path_potential(0.0, 0.5, 1.0).K == 1


def test_potential_needs_enough_paths(rng):
    f = path_potential(1.0, 0.5, 1.0, K=4)
    with pytest.raises(ValueError):
        f([sample_path(1, 3, rng)] * 3)


def test_mc_apply_of_zero_potential_is_exact(rng):
    x = [sample_path(2, 3, rng)]
    mean, se = mc_apply(zero_path_potential, lambda seq: 2.0, x, 100, seed=0)
    assert mean == 2.0 and se == 0.0


def test_mc_apply_is_seeded(rng):
    f = path_potential(1.0, 0.3, 1.0, K=3)
    x = [sample_path(2, 3, rng) for _ in range(2)]
    one = lambda seq: 1.0  # noqa: E731
    assert mc_apply(f, one, x, 200, seed=5) == mc_apply(f, one, x, 200, seed=5)
    with pytest.raises(ValueError):
        mc_apply(f, one, x, 50, seed=5)


def test_path_validation():
    with pytest.raises(ValueError):
        PolygonalPath([[0.0, 0.0]])
    with pytest.raises(ValueError):
        PolygonalPath([[0.0, np.nan], [1.0, 1.0]])
