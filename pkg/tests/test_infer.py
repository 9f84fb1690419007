import numpy as np
import pytest
from hypothesis import given, strategies as st
from sklearn.base import clone

from spheremark.geom import FOUR_PI, FullSphere, LatitudeBandExclusion, Sphere, pairwise_geodesic
from spheremark.intensity import AnalyticIntensity, ConstantIntensity, kernel_estimate
from spheremark.infer import (
    IndependenceTest,
    TestConfig,
    envelope_from_replicates,
    envelope_rank,
    envelopes,
    null_sample_poisson,
    null_sample_rotation,
    replicate_seeds,
    run_independence_test,
)
from spheremark.pattern import MarkedPattern
from spheremark.sim import FieldExpression, sample_poisson
from spheremark.summaries import SummaryCurve, khat_inhom, khat_iso

from conftest import random_pattern

seeds = st.integers(0, 2**32 - 1)
R = np.linspace(0, np.pi, 13)
RHO1 = AnalyticIntensity(FieldExpression("exp(log(6) + x3)"), "rho1")
RHO2 = AnalyticIntensity(FieldExpression("exp(log(6) + 2*x1)"), "rho2")


def _curve(vals, r=None, defined=None):
    vals = np.asarray(vals, dtype=float)
    r = np.arange(len(vals), dtype=float) if r is None else r
    defined = np.ones(len(vals), bool) if defined is None else defined
    return SummaryCurve("K", ("a", "b"), r, vals, defined)


def test_envelope_rank_examples():
    assert envelope_rank(199, 0.95) == 5
    assert envelope_rank(39, 0.95) == 1
    assert envelope_rank(99, 0.90) == 5
    with pytest.raises(ValueError, match="at least 39"):
        envelope_rank(38, 0.95)
    with pytest.raises(ValueError):
        envelope_rank(199, 1.0)


def test_envelope_bounds_are_kth_extremes(rng):
    reps = [_curve(rng.permutation(199)[:1] + np.zeros(3)) for _ in range(199)]
    vals = np.array([c.values[0] for c in reps])
    env = envelope_from_replicates(_curve([0.0, 0.0, 0.0]), reps)
    s = np.sort(vals)
    assert env.k == 5
    assert env.lower.values[0] == s[4]
    assert env.upper.values[0] == s[-5]
    assert np.all(env.lower.values <= env.upper.values)


def test_envelope_degenerate_constant_null():
    reps = [_curve([1.0, 2.0, 3.0]) for _ in range(39)]
    env = envelope_from_replicates(_curve([1.0, 2.0, 3.0]), reps)
    np.testing.assert_array_equal(env.lower.values, env.upper.values)
    np.testing.assert_array_equal(env.lower.values, [1.0, 2.0, 3.0])
    assert not env.exceed.any() and env.regions == []
    assert env.inside_fraction == 1.0


def test_envelope_exceedance_regions():
    reps = [_curve(np.zeros(6) + k / 100) for k in range(39)]
    obs = _curve([0.1, 5.0, 5.0, 0.2, -3.0, 0.2])
    env = envelope_from_replicates(obs, reps)
    np.testing.assert_array_equal(env.exceed, [0, 1, 1, 0, -1, 0])
    assert env.regions == [(1.0, 2.0, "above"), (4.0, 4.0, "below")]
    assert env.exceeds("above", 0.5, 2.5)
    assert not env.exceeds("above", 2.0, 4.0)
    assert env.inside_fraction == pytest.approx(0.5)


def test_envelope_undefined_radii():
    defined = np.array([True, False, True])
    reps = [_curve([k, 0.0, k], defined=defined if k % 2 else None) for k in range(39)]
    env = envelope_from_replicates(_curve([1.0, 1.0, 1.0]), reps)
    # half the replicates are undefined at the middle radius; k = 1 still works
    assert env.n_defined.tolist() == [39, 20, 39]
    none = [_curve([k, 0.0], defined=np.array([True, False])) for k in range(39)]
    env = envelope_from_replicates(_curve([1.0, 1.0]), none)
    assert env.lower.defined.tolist() == [True, False]
    assert env.exceed[1] == 0


def test_envelopes_rejects_other_grid():
    with pytest.raises(ValueError, match="radius grid"):
        envelopes(_curve([0.0, 1.0]), lambda g: _curve([0.0, 1.0, 2.0]), nsim=39)


def test_replicate_seeds_stable():
    a = replicate_seeds(7, 3)
    b = replicate_seeds(7, 3)
    assert [s.entropy for s in a] == [s.entropy for s in b]
    assert [np.random.default_rng(s).random() for s in a] == [np.random.default_rng(s).random() for s in b]
    assert len({np.random.default_rng(s).random() for s in a}) == 3


def test_rotation_identity_is_noop(rng):
    p = random_pattern(rng, 10, 12)
    models = {"a": RHO1, "b": RHO2}
    q, m = null_sample_rotation(p, models, "a", "b", rotations=[np.eye(3)])
    np.testing.assert_array_equal(q.points, p.points)
    x = p.component("a")
    np.testing.assert_array_equal(m["a"](x), RHO1(x))
    assert m["b"] is RHO2


@given(seeds)
def test_rotation_preserves_weights(seed):
    rng = np.random.default_rng(seed)
    p = random_pattern(rng, 15, 8)
    models = {"a": RHO1, "b": RHO2}
    q, m = null_sample_rotation(p, models, "a", "b", rng)
    before = np.sort(1.0 / RHO1(p.component("a")))
    after = np.sort(1.0 / m["a"](q.component("a")))
    np.testing.assert_allclose(after, before, rtol=1e-13)
    np.testing.assert_array_equal(q.component("b"), p.component("b"))


@given(seeds, st.sampled_from(["first", "second", "both"]))
def test_rotation_preserves_marginals(seed, which):
    rng = np.random.default_rng(seed)
    p = random_pattern(rng, 9, 7)
    q, _ = null_sample_rotation(p, {"a": RHO1, "b": RHO2}, "a", "b", rng, which)
    for m in ("a", "b"):
        assert len(q.component(m)) == len(p.component(m))
        d0 = np.sort(pairwise_geodesic(p.component(m), p.component(m)), axis=None)
        d1 = np.sort(pairwise_geodesic(q.component(m), q.component(m)), axis=None)
        np.testing.assert_allclose(d1, d0, atol=1e-12)


def test_rotation_k_at_pi_exact(rng):
    p = random_pattern(rng, 40, 30)
    models = {"a": RHO1, "b": RHO2}
    r = np.array([0.5, np.pi])
    obs = khat_inhom(p, "a", "b", r, RHO1, RHO2).values[-1]
    for k in range(50):
        q, m = null_sample_rotation(p, models, "a", "b", k, which="both")
        val = khat_inhom(q, "a", "b", r, m["a"], m["b"]).values[-1]
        assert abs(val - obs) < 1e-10


def test_rotation_rejects_partial_window(rng):
    p = random_pattern(rng, 5, 5, window=LatitudeBandExclusion(0.2))
    with pytest.raises(ValueError, match="whole sphere"):
        null_sample_rotation(p, {"a": RHO1, "b": RHO2}, "a", "b", 0)
    with pytest.raises(ValueError, match="whole sphere"):
        run_independence_test(p, "a", "b", nsim=39)


def test_poisson_null_counts_independent():
    models = {"a": ConstantIntensity(6.0), "b": ConstantIntensity(6.0)}
    samples = (null_sample_poisson(models, FullSphere(), k) for k in range(600))
    c = np.array([[len(q.component(m)) for m in "ab"] for q in samples])
    mu = 6 * FOUR_PI
    for col in c.T:
        se = col.std(ddof=1) / np.sqrt(len(col))
        assert abs(col.mean() - mu) < 3 * se
    assert abs(np.corrcoef(c.T)[0, 1]) < 3 / np.sqrt(len(c))


def test_poisson_null_window_and_determinism():
    band = LatitudeBandExclusion(np.radians(12))
    models = {"a": RHO1, "b": RHO2}
    q = null_sample_poisson(models, band, 5)
    assert np.all(np.abs(q.points[:, 2]) >= np.sin(np.radians(12)))
    q2 = null_sample_poisson(models, band, 5)
    np.testing.assert_array_equal(q.points, q2.points)
    np.testing.assert_array_equal(q.marks, q2.marks)


def test_calibration_small():
    # observed drawn from the null: pointwise rejection near alpha
    models = {"a": ConstantIntensity(2.0), "b": ConstantIntensity(2.0)}
    r = np.array([0.0, 0.8])
    def stat(rng):
        return khat_iso(null_sample_poisson(models, FullSphere(), rng), "a", "b", r)

    rejections = 0
    for k in range(60):
        env = envelopes(stat(np.random.default_rng([99, k])), stat, nsim=39, random_state=k)
        rejections += env.exceed[1] != 0
    assert rejections / 60 < 0.25


def _scenario_pattern(seed):
    return sample_poisson(Sphere(), {"1": RHO1, "2": RHO2}, seed)


def test_run_test_deterministic_and_caveat():
    p = _scenario_pattern(3)
    cfg = TestConfig(intensity="provided", models={"1": RHO1, "2": RHO2}, nsim=39,
                     radii=np.linspace(0, np.pi, 9), grid_points=500)
    a = run_independence_test(p, "1", "2", cfg)
    b = run_independence_test(p, "1", "2", cfg)
    assert set(a.envelopes) == {"P", "J1,2", "J2,1"}
    for name in a.envelopes:
        np.testing.assert_array_equal(a.envelopes[name].lower.values, b.envelopes[name].lower.values)
        np.testing.assert_array_equal(a.envelopes[name].upper.values, b.envelopes[name].upper.values)
        assert a.envelopes[name].k == 1
    assert a.caveat and a.caveat_region == (np.pi - 0.2, np.pi)
    assert "caution" in a.summary()
    # every replicate hits the observed P at r = pi
    env = a.envelopes["P"]
    assert all(abs(c.values[-1] - env.observed.values[-1]) < 1e-10 for c in env.replicates)


def test_run_test_parallel_matches_serial():
    p = _scenario_pattern(4)
    kw = dict(intensity="provided", models={"1": RHO1, "2": RHO2}, nsim=39,
              radii=np.linspace(0, 1.5, 6), statistics=("P",))
    a = run_independence_test(p, "1", "2", TestConfig(**kw))
    b = run_independence_test(p, "1", "2", TestConfig(**kw, n_jobs=2))
    np.testing.assert_array_equal(a.envelopes["P"].lower.values, b.envelopes["P"].lower.values)
    assert not a.caveat


def test_run_test_poisson_null_on_band():
    band = LatitudeBandExclusion(np.radians(12))
    p = sample_poisson(Sphere(), {"1": 3.0, "2": 3.0}, 8, window=band)
    rep = run_independence_test(p, "1", "2", intensity="homogeneous", null="poisson",
                                nsim=39, radii=np.linspace(0, 1.2, 5), grid_points=500)
    assert not rep.caveat
    assert rep.envelopes["P"].method == "poisson"
    rep2 = run_independence_test(p, "1", "2", intensity="homogeneous", null="poisson", reestimate=True,
                                 nsim=39, radii=np.linspace(0, 1.2, 5), statistics=("J",), grid_points=500)
    assert set(rep2.envelopes) == {"J1,2", "J2,1"}


def test_run_test_rejects_bad_options(rng):
    p = random_pattern(rng, 5, 5)
    with pytest.raises(ValueError):
        run_independence_test(p, "a", "b", statistics=("Q",), nsim=39)
    with pytest.raises(ValueError):
        run_independence_test(p, "a", "b", null="bootstrap", nsim=39)
    with pytest.raises(ValueError):
        run_independence_test(p, "a", "c", nsim=39)


def test_interpretation_tags_attraction():
    # both marks clustered around the same centres: strong attraction
    rng = np.random.default_rng(2)
    centres = random_pattern(rng, 8, 0).points
    g = np.repeat(centres, 12, axis=0) + 0.05 * rng.standard_normal((96, 3))
    pts = g / np.linalg.norm(g, axis=1)[:, None]
    p = MarkedPattern(pts, ["a", "b"] * 48)
    rep = run_independence_test(p, "a", "b", intensity="homogeneous", nsim=39,
                                radii=np.linspace(0, 0.6, 7), grid_points=2000)
    assert rep.envelopes["P"].exceeds("above", 0, 0.5)
    assert "attraction" in rep.tags


def test_estimator_wrapper(rng):
    p = _scenario_pattern(5)
    est = IndependenceTest(nsim=39, radii=np.linspace(0, 1.0, 5), statistics=("P",), intensity="homogeneous")
    assert clone(est).get_params()["nsim"] == 39
    est.fit(p, "1", "2")
    assert set(est.envelopes_) == {"P"}
    est.fit(p, "1", "2", models={"1": RHO1, "2": RHO2})
    assert est.report_.config.intensity == "provided"


def test_kernel_pipeline_runs():
    p = _scenario_pattern(6)
    rep = run_independence_test(p, "1", "2", nsim=39, radii=np.linspace(0, 1.0, 5),
                                kernel_grid=3000, grid_points=500)
    assert rep.models["1"].values.shape == (3000,)
    assert isinstance(kernel_estimate(p, "1", grid_size=3000), type(rep.models["1"]))
