import numpy as np
import pytest
from hypothesis import given, strategies as st

from spheremark._validation import DataError
from spheremark.geom import (
    Cap,
    Ellipsoid,
    FullSphere,
    LatitudeBandExclusion,
    Sphere,
    pairwise_geodesic,
    random_rotation,
)
from spheremark.pattern import (
    MarkedPattern,
    count,
    map_pattern_to_sphere,
    mark_fraction,
    rotate_pattern,
    split_components,
)

from conftest import random_pattern

seeds = st.integers(0, 2**32 - 1)


def test_construction_and_codes(rng):
    p = random_pattern(rng, 3, 4)
    assert len(p) == 7
    assert p.mark_set == ("a", "b")
    np.testing.assert_array_equal(p.codes, [0, 0, 0, 1, 1, 1, 1])
    with pytest.raises(ValueError):
        p.points[0, 0] = 2.0


def test_unknown_mark_lists_available(rng):
    p = random_pattern(rng, 2, 2)
    with pytest.raises(DataError, match=r"available: \['a', 'b'\]"):
        count(p, None, ["c"])
    with pytest.raises(DataError):
        MarkedPattern(p.points, ["a", "b", "c", "a"], mark_set=("a", "b"))


def test_points_outside_window_rejected():
    band = LatitudeBandExclusion(0.3)
    with pytest.raises(DataError, match="outside"):
        MarkedPattern([[1.0, 0.0, 0.0]], ["a"], window=band)


def test_duplicates_rejected_or_jittered():
    pts = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
    with pytest.raises(DataError, match="coincide"):
        MarkedPattern(pts, ["a", "b", "a"])
    p = MarkedPattern(pts, ["a", "b", "a"], jitter_duplicates=True)
    d = pairwise_geodesic(p.points, p.points)
    assert 0 < d[0, 1] < 1e-8
    np.testing.assert_allclose(np.linalg.norm(p.points, axis=1), 1.0, atol=1e-15)


def test_count_examples():
    empty = MarkedPattern(np.zeros((0, 3)), [], mark_set=("a",))
    assert count(empty) == 0
    five = MarkedPattern(np.eye(3).tolist() + [[0, 0, -1], [0, -1, 0]], ["a"] * 5)
    assert count(five, None, ["a"]) == 5
    four = MarkedPattern([[0, 0, 1], [1, 0, 0], [0, 1, 0], [-1, 0, 0]], list("abab"))
    assert count(four, Cap(np.array([1.0, 0, 0]), 0.01)) == 1


@given(seeds)
def test_count_additive(seed):
    rng = np.random.default_rng(seed)
    p = random_pattern(rng, 10, 15)
    north = LatitudeBandExclusion(0.0)
    # caps split by latitude sign plus the (measure zero) equator
    n_all = count(p)
    assert count(p, north) + int(np.sum(p.points[:, 2] == 0)) == n_all
    assert count(p, north, ["a"]) + count(p, north, ["b"]) == count(p, north)


def test_mark_fraction_examples():
    spiral = MarkedPattern(np.eye(3), ["s"] * 3)
    assert mark_fraction(spiral, ["s"]) == 1.0
    marks = ["spiral"] * 6674 + ["elliptical"] * 1231
    rng = np.random.default_rng(0)
    g = rng.standard_normal((7905, 3))
    p = MarkedPattern(g / np.linalg.norm(g, axis=1)[:, None], marks)
    assert mark_fraction(p, ["spiral"]) == 6674 / 7905
    assert mark_fraction(p, ["spiral", "elliptical"]) == 1.0
    with pytest.raises(DataError):
        mark_fraction(MarkedPattern(np.zeros((0, 3)), [], mark_set=("a",)), ["a"])


def test_split_and_merge(rng):
    p = random_pattern(rng, 3, 4)
    comps = split_components(p)
    assert [len(c) for c in comps.values()] == [3, 4]
    merged = MarkedPattern.concatenate(comps.values())
    key = lambda q: sorted(zip(map(tuple, q.points), q.marks))  # noqa: E731
    assert key(merged) == key(p)
    single = random_pattern(rng, 5, 0)
    one = split_components(single)
    np.testing.assert_array_equal(one["a"].points, single.points)


def test_map_pattern_examples(rng):
    s = np.eye(3)
    p = map_pattern_to_sphere(s, ["a", "b", "a"], Sphere())
    np.testing.assert_array_equal(p.points, s)
    E = Ellipsoid(0.8, 0.8, 1.44)
    g = rng.standard_normal((20, 3))
    surf = E.from_sphere(g / np.linalg.norm(g, axis=1)[:, None])
    q = map_pattern_to_sphere(surf, ["a"] * 20, E)
    assert len(q) == 20
    np.testing.assert_allclose(np.linalg.norm(q.points, axis=1), 1.0, atol=1e-15)
    np.testing.assert_array_equal(q.source_points, surf)
    pole = map_pattern_to_sphere([[0, 0, 1.44]], ["a"], E)
    np.testing.assert_allclose(pole.points[0], [0, 0, 1])
    with pytest.raises(DataError, match="point 1"):
        map_pattern_to_sphere([[0, 0, 1.44], [0, 0, 1.0]], ["a", "a"], E)


def test_rotate_examples(rng):
    p = random_pattern(rng, 4, 5)
    np.testing.assert_array_equal(rotate_pattern(p, np.eye(3)).points, p.points)
    O = random_rotation(rng)
    back = rotate_pattern(rotate_pattern(p, O), O.T)
    np.testing.assert_allclose(back.points, p.points, atol=1e-12)
    q = rotate_pattern(p, O)
    np.testing.assert_allclose(pairwise_geodesic(q.points, q.points), pairwise_geodesic(p.points, p.points), atol=1e-10)
    np.testing.assert_array_equal(q.marks, p.marks)


def test_rotate_only_selected_mark(rng):
    p = random_pattern(rng, 4, 5)
    q = rotate_pattern(p, random_rotation(rng), labels=["a"])
    np.testing.assert_array_equal(q.component("b"), p.component("b"))
    assert not np.allclose(q.component("a"), p.component("a"))


def test_rotate_requires_full_sphere(rng):
    p = random_pattern(rng, 4, 5, window=LatitudeBandExclusion(0.2))
    with pytest.raises(ValueError, match="whole sphere"):
        rotate_pattern(p, np.eye(3))
    assert isinstance(random_pattern(rng, 1, 1).window, FullSphere)
