import numpy as np
import pytest
from hypothesis import given, strategies as st
from sklearn.base import clone

from spheremark._validation import DataError
from spheremark.geom import (
    FOUR_PI,
    NORTH_POLE,
    CapComplement,
    Ellipsoid,
    LatitudeBandExclusion,
    Sphere,
    fibonacci_grid,
    random_rotation,
    rotation_to_pole,
    solve_ellipsoid_axis,
)
from spheremark.intensity import (
    AnalyticIntensity,
    ConstantIntensity,
    GridIntensity,
    HomogeneousIntensity,
    KernelIntensity,
    homogeneous_estimate,
    infimum_bound,
    integrate_intensity,
    kernel_estimate,
    mapped_intensity,
    rotate_intensity,
    stoyan_mass,
)
from spheremark.pattern import MarkedPattern, map_pattern_to_sphere
from spheremark.sim import FieldExpression, sample_poisson

from conftest import random_pattern

seeds = st.integers(0, 2**32 - 1)
EXP_X3 = AnalyticIntensity(FieldExpression("exp(log(6) + x3)"), "rho1")


def test_homogeneous_examples(rng):
    p = random_pattern(rng, 100, 3)
    assert homogeneous_estimate(p, "a").rate == 100 / FOUR_PI
    hemi = CapComplement(NORTH_POLE, np.pi / 2)
    q = random_pattern(rng, 50, 1, window=hemi)
    assert homogeneous_estimate(q, "a").rate == pytest.approx(50 / (2 * np.pi), rel=1e-15)
    with pytest.raises(DataError):
        homogeneous_estimate(random_pattern(rng, 0, 3), "a")


def test_homogeneous_unbiased():
    est = []
    for k in range(200):
        p = sample_poisson(Sphere(), {"a": 6.0}, k)
        est.append(homogeneous_estimate(p, "a").rate)
    est = np.array(est)
    se = est.std(ddof=1) / np.sqrt(len(est))
    assert abs(est.mean() - 6.0) < 3 * se


def test_kernel_single_point_mass():
    p = MarkedPattern([[0.0, 0.6, 0.8]], ["a"])
    for h in (0.05, 0.3, 2.0):
        field = kernel_estimate(p, "a", h)
        assert integrate_intensity(field) == pytest.approx(1.0, abs=1e-3)


def test_kernel_flat_limit(rng):
    p = random_pattern(rng, 40, 1)
    field = kernel_estimate(p, "a", 1e3)
    np.testing.assert_allclose(field.values, 40 / FOUR_PI, rtol=0.01)


def test_kernel_tracks_trend():
    model = AnalyticIntensity(lambda x: 500 / (FOUR_PI * np.sinh(1.0)) * np.exp(x[:, 2]), "exp z")
    p = sample_poisson(Sphere(), {"a": model}, 3)
    field = kernel_estimate(p, "a", 0.15)
    r = np.corrcoef(np.log(field.values), field.nodes[:, 2])[0, 1]
    assert r > 0.9


def test_kernel_mass_preserved_in_partial_window(rng):
    band = LatitudeBandExclusion(np.radians(12))
    p = random_pattern(rng, 80, 1, window=band)
    field = kernel_estimate(p, "a", 0.2)
    assert integrate_intensity(field, band) == pytest.approx(80, rel=1e-3)


def test_kernel_rejects_empty(rng):
    with pytest.raises(DataError):
        kernel_estimate(random_pattern(rng, 0, 2), "a")


def test_mapped_intensity_examples():
    c = ConstantIntensity(6.0)
    assert mapped_intensity(c, Sphere()) is c
    E = Ellipsoid(0.8, 0.8, solve_ellipsoid_axis(0.8, 0.8, FOUR_PI))
    assert integrate_intensity(mapped_intensity(c, E)) == pytest.approx(6 * FOUR_PI, rel=0.005)
    # analytic field: integral over the surface by direct quadrature of rho * J
    m = mapped_intensity(EXP_X3, E)
    nodes = fibonacci_grid(50_000)
    direct = FOUR_PI * np.mean(EXP_X3(E.from_sphere(nodes)) * E.jacobian(nodes))
    assert integrate_intensity(m) == pytest.approx(direct, rel=1e-3)


def test_mapped_pattern_keeps_count(rng):
    E = Ellipsoid(0.8, 0.8, 1.44)
    p = sample_poisson(E, {"a": 6.0}, 5)
    q = map_pattern_to_sphere(p.source_points, p.marks, E)
    assert len(q) == len(p)


def test_infimum_examples():
    assert infimum_bound(ConstantIntensity(6.0)) == 6.0
    assert infimum_bound(EXP_X3) == pytest.approx(6 / np.e, rel=0.005)
    assert infimum_bound(EXP_X3) <= 6 / np.e
    ones = GridIntensity(fibonacci_grid(100), np.ones(100))
    assert infimum_bound(ones) == 1.0


def test_infimum_over_window_only():
    band = CapComplement(np.array([0.0, 0.0, -1.0]), np.pi / 2)
    # south hemisphere removed: exp(x3) has its window minimum near the equator
    assert infimum_bound(EXP_X3, band) == pytest.approx(6.0, rel=0.005)


def test_stoyan_examples(rng):
    p = random_pattern(rng, 7, 3)
    assert stoyan_mass(p, ConstantIntensity(2.0), marks=["a"]) == pytest.approx(3.5)
    empty_region = CapComplement(NORTH_POLE, np.pi - 1e-9)
    q = MarkedPattern([[0, 0, 1.0]], ["a"])
    assert stoyan_mass(q, ConstantIntensity(2.0), region=empty_region) == 0.0


def test_stoyan_unbiased():
    vals = []
    for k in range(500):
        p = sample_poisson(Sphere(), {"a": EXP_X3}, 1000 + k)
        vals.append(stoyan_mass(p, EXP_X3))
    vals = np.array(vals)
    se = vals.std(ddof=1) / np.sqrt(len(vals))
    assert abs(vals.mean() - FOUR_PI) < 3 * se


def test_rotate_examples(rng):
    c = ConstantIntensity(3.0)
    assert rotate_intensity(c, random_rotation(rng)) is c
    O = random_rotation(rng)
    x = fibonacci_grid(100)
    back = rotate_intensity(rotate_intensity(EXP_X3, O), O.T)
    np.testing.assert_allclose(back(x), EXP_X3(x), rtol=1e-12)
    # O maps (1,0,0) to the pole, so the rotated field peaks on the equator
    O = rotation_to_pole(np.array([1.0, 0.0, 0.0])).T
    f = rotate_intensity(AnalyticIntensity(lambda p: np.exp(p[:, 2])), O)
    assert f(np.array([[1.0, 0.0, 0.0]]))[0] == pytest.approx(np.e, rel=1e-14)


@given(seeds)
def test_rotated_model_at_rotated_point(seed):
    rng = np.random.default_rng(seed)
    O = random_rotation(rng)
    x = fibonacci_grid(50)
    f = rotate_intensity(EXP_X3, O)
    np.testing.assert_array_equal(f(x @ O), EXP_X3(x @ O @ O.T))
    assert f.infimum() == EXP_X3.infimum()


def test_estimators_fit_predict(rng):
    p = random_pattern(rng, 60, 10)
    est = KernelIntensity(bandwidth=0.3, grid_size=5000)
    assert est.get_params() == {"bandwidth": 0.3, "grid_size": 5000}
    est.fit(p, "a")
    x = fibonacci_grid(10)
    np.testing.assert_array_equal(est.predict(x), est.model_(x))
    default = clone(KernelIntensity()).fit(p, "a")
    assert default.bandwidth_ == pytest.approx(np.sqrt(FOUR_PI / 60))
    h = HomogeneousIntensity().fit(p, "b")
    assert h.rate_ == 10 / FOUR_PI
    np.testing.assert_array_equal(h.predict(x), 10 / FOUR_PI)
