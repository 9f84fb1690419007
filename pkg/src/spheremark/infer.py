"""Monte-Carlo tests of independence between two components.

Null replicates come either from random rotations of one or both components
(with their intensity fields rotated along) or from independent Poisson
simulation with the fitted intensities. Pointwise rank envelopes are built
from the replicate curves.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator

from ._validation import check_random_state
from .geom import Sphere, random_rotation
from .intensity import (
    as_intensity,
    homogeneous_estimate,
    kernel_estimate,
    rotate_intensity,
)
from .pattern import rotate_pattern
from .sim import sample_poisson
from .summaries import (
    DEFAULT_F_GRID,
    SummaryCurve,
    _grid_nodes,
    _prep,
    cross_summaries,
    khat_inhom,
    p_transform,
)

__all__ = [
    "EnvelopeResult",
    "TestConfig",
    "TestReport",
    "envelope_rank",
    "replicate_seeds",
    "null_sample_rotation",
    "null_sample_poisson",
    "envelopes",
    "envelope_from_replicates",
    "run_independence_test",
    "IndependenceTest",
]

ROTATE_CHOICES = ("first", "second", "both")
_EXCEED_RTOL = 1e-10


def envelope_rank(nsim, level):
    """Rank ``k = ceil(alpha (nsim + 1) / 2)`` of the pointwise envelope."""
    alpha = 1.0 - level
    if not 0 < alpha < 1:
        raise ValueError("level must lie in (0, 1)")
    min_nsim = math.ceil(round(2.0 / alpha, 9)) - 1
    if nsim < min_nsim:
        raise ValueError(f"nsim={nsim} too small for level {level}; need at least {min_nsim}")
    return max(1, math.ceil(round(alpha * (nsim + 1) / 2.0, 9)))


def replicate_seeds(random_state, nsim):
    """Independent per-replicate seed sequences derived from one base seed."""
    if isinstance(random_state, (int, np.integer)):
        base = int(random_state)
    else:
        base = int(check_random_state(random_state).integers(2**63 - 1))
    return [np.random.SeedSequence([base, k]) for k in range(nsim)]


@dataclass
class EnvelopeResult:
    observed: SummaryCurve
    lower: SummaryCurve
    upper: SummaryCurve
    nsim: int
    level: float
    k: int
    method: str
    n_defined: np.ndarray
    exceed: np.ndarray
    regions: list = field(default_factory=list)
    seed: object = None
    replicates: list = field(default=None, repr=False)

    @property
    def inside_fraction(self):
        """Share of radii (where everything is defined) with no exceedance."""
        ok = self.observed.defined & self.lower.defined
        if not ok.any():
            return float("nan")
        return float(np.mean(self.exceed[ok] == 0))

    def exceeds(self, direction, r_min=None, r_max=None):
        sign = {"above": 1, "below": -1}[direction]
        sel = self.exceed == sign
        if r_min is not None:
            sel &= self.observed.r > r_min
        if r_max is not None:
            sel &= self.observed.r < r_max
        return bool(sel.any())


def _regions(r, exceed):
    out = []
    k = 0
    while k < len(r):
        if exceed[k] == 0:
            k += 1
            continue
        start = k
        while k + 1 < len(r) and exceed[k + 1] == exceed[start]:
            k += 1
        out.append((float(r[start]), float(r[k]), "above" if exceed[start] > 0 else "below"))
        k += 1
    return out


def envelope_from_replicates(observed, replicates, level=0.95, method="", seed=None):
    """Pointwise rank envelopes from already computed replicate curves."""
    nsim = len(replicates)
    k = envelope_rank(nsim, level)
    V = np.array([c.values for c in replicates])
    D = np.array([c.defined for c in replicates])
    n_r = len(observed.r)
    lo = np.full(n_r, np.nan)
    hi = np.full(n_r, np.nan)
    n_def = D.sum(axis=0)
    for col in range(n_r):
        m = n_def[col]
        if m < 2 * k - 1:
            continue
        vals = np.sort(V[D[:, col], col])
        lo[col] = vals[k - 1]
        hi[col] = vals[m - k]
    bdef = np.isfinite(lo)
    exceed = np.zeros(n_r, dtype=int)
    ok = bdef & observed.defined
    obs = observed.values
    # replicates equal to the observation up to rounding are not exceedances
    tol = _EXCEED_RTOL * np.maximum(1.0, np.abs(np.where(ok, obs, 0.0)))
    exceed[ok & (obs > hi + tol)] = 1
    exceed[ok & (obs < lo - tol)] = -1

    def band(vals, name):
        return SummaryCurve(
            observed.statistic, observed.marks, observed.r, vals, bdef,
            variant=observed.variant, window=observed.window, eroded=observed.eroded,
            meta={"bound": name},
        )

    return EnvelopeResult(
        observed=observed,
        lower=band(lo, "lower"),
        upper=band(hi, "upper"),
        nsim=nsim,
        level=level,
        k=k,
        method=method,
        n_defined=n_def,
        exceed=exceed,
        regions=_regions(observed.r, exceed),
        seed=seed,
        replicates=list(replicates),
    )


def envelopes(observed, null_generator, nsim=199, level=0.95, random_state=None, method="custom"):
    """Simulation envelopes for ``observed``.

    ``null_generator(rng)`` must return the same statistic on the same
    radius grid for one null replicate. Replicate ``k`` gets its own stream
    seeded by ``(seed, k)``.
    """
    envelope_rank(nsim, level)
    curves = []
    for ss in replicate_seeds(random_state, nsim):
        c = null_generator(np.random.default_rng(ss))
        if not np.array_equal(c.r, observed.r):
            raise ValueError("null replicate uses a different radius grid")
        curves.append(c)
    return envelope_from_replicates(observed, curves, level, method, seed=random_state)


def null_sample_rotation(pattern, models, i, j, random_state=None, which="first", rotations=None):
    """Randomly rotate component ``i`` (or ``j``, or both) with its intensity.

    The rotated model is ``x -> rho(O^T x)``, so the rotated points carry
    their original intensity values. Returns ``(pattern, models)``.
    """
    if not pattern.window.is_full:
        raise ValueError(
            "the rotation null requires a pattern observed over the whole sphere; "
            "use the Poisson null for partial windows"
        )
    if which not in ROTATE_CHOICES:
        raise ValueError(f"which must be one of {ROTATE_CHOICES}")
    rng = check_random_state(random_state)
    labels = {"first": [i], "second": [j], "both": [i, j]}[which]
    models = dict(models)
    for n, label in enumerate(labels):
        O = rotations[n] if rotations is not None else random_rotation(rng)
        pattern = rotate_pattern(pattern, O, labels=[label])
        models[label] = rotate_intensity(models[label], O.T)
    return pattern, models


def null_sample_poisson(models, window, random_state=None, labels=None):
    """Independent inhomogeneous Poisson components with the given intensities."""
    labels = list(models) if labels is None else list(labels)
    return sample_poisson(Sphere(), {m: models[m] for m in labels}, random_state, window=window)


@dataclass
class TestConfig:
    """Settings for :func:`run_independence_test`.

    intensity : "homogeneous", "kernel" or "provided" (then ``models`` is used)
    null : "rotation" or "poisson"
    rotate : "first", "second" or "both" (rotation null only)
    statistics : any of "P", "J" (J means both J^ij and J^ji)
    """

    intensity: str = "kernel"
    models: dict = None
    bandwidth: float = None
    kernel_grid: int = 20_000
    null: str = "rotation"
    rotate: str = "first"
    nsim: int = 199
    level: float = 0.95
    radii: object = None
    grid_points: int = DEFAULT_F_GRID
    seed: int = 0
    reestimate: bool = False
    caveat_width: float = 0.2
    statistics: tuple = ("P", "J")
    n_jobs: int = 1

    __test__ = False


@dataclass
class TestReport:
    marks: tuple
    config: TestConfig
    models: dict
    envelopes: dict
    tags: list
    caveat: bool
    caveat_region: tuple = None

    __test__ = False

    def summary(self):
        lines = [f"independence test {self.marks[0]} vs {self.marks[1]}"]
        for name, env in self.envelopes.items():
            regs = ", ".join(f"[{a:.3f}, {b:.3f}] {d}" for a, b, d in env.regions) or "none"
            lines.append(
                f"  {name}: inside at {100 * env.inside_fraction:.1f}% of radii; exceedances: {regs}"
            )
        lines.append(f"  interpretation: {', '.join(self.tags) or 'consistent with independence'}")
        if self.caveat:
            a, b = self.caveat_region
            lines.append(
                f"  caveat: under the rotation null every replicate reproduces the observed "
                f"K at r = pi; treat envelopes in ({a:.3f}, {b:.3f}] with caution"
            )
        return "\n".join(lines)


def fit_models(pattern, labels, config):
    out = {}
    for label in labels:
        if config.intensity == "homogeneous":
            out[label] = homogeneous_estimate(pattern, label)
        elif config.intensity == "kernel":
            out[label] = kernel_estimate(pattern, label, config.bandwidth, config.kernel_grid)
        elif config.intensity == "provided":
            if not config.models or label not in config.models:
                raise ValueError(f"no intensity model provided for mark {label!r}")
            out[label] = as_intensity(config.models[label])
        else:
            raise ValueError(f"unknown intensity option {config.intensity!r}")
    return out


def _statistics(pattern, i, j, models, r, nodes, wanted, known_f=None):
    """Requested curves, keyed "P", "Ji,j", "Jj,i", plus the raw F curves."""
    if "J" not in wanted:
        return {"P": p_transform(khat_inhom(pattern, i, j, r, models[i], models[j]))}, {}
    curves = cross_summaries(pattern, i, j, models, r=r, nodes=nodes, known_f=known_f)
    out = {f"J{i},{j}": curves[f"J:{i}:{j}"], f"J{j},{i}": curves[f"J:{j}:{i}"]}
    if "P" in wanted:
        out = {"P": curves["P"], **out}
    return out, {i: curves[f"F:{i}"], j: curves[f"F:{j}"]}


def _interpret(envs, i, j):
    tags = []
    p = envs.get("P")
    js = [envs[k] for k in envs if k.startswith("J")]
    p_up = p is not None and p.exceeds("above")
    p_dn = p is not None and p.exceeds("below")
    j_dn = any(e.exceeds("below") for e in js)
    j_up = any(e.exceeds("above") for e in js)
    if p_up and (j_dn or not js):
        tags.append("attraction")
    if p_dn and (j_up or not js):
        tags.append("repulsion")
    if not tags:
        if p_up or j_dn:
            tags.append("possible attraction")
        if p_dn or j_up:
            tags.append("possible repulsion")
    return tags


def _replicate(ss, pattern, i, j, models, r, nodes, wanted, known_f, config):
    rng = np.random.default_rng(ss)
    if config.null == "rotation":
        sim, sim_models = null_sample_rotation(pattern, models, i, j, rng, config.rotate)
    else:
        sim = null_sample_poisson(models, pattern.window, rng, labels=(i, j))
        sim_models = fit_models(sim, (i, j), config) if config.reestimate else models
    curves, _ = _statistics(sim, i, j, sim_models, r, nodes, wanted, known_f)
    return curves


def run_independence_test(pattern, i, j, config=None, **overrides):
    """Full test pipeline: fit intensities, compute P and J curves, build
    envelopes under the configured null and tag the outcome."""
    config = replace(config or TestConfig(), **overrides)
    pattern._check_labels((i, j))
    wanted = tuple(s[0] for s in config.statistics)
    if not wanted or set(wanted) - {"P", "J"}:
        raise ValueError("statistics must be a non-empty selection of 'P' and 'J'")
    if config.null == "rotation" and not pattern.window.is_full:
        raise ValueError(
            "the rotation null requires a pattern observed over the whole sphere"
        )
    if config.null not in ("rotation", "poisson"):
        raise ValueError(f"unknown null method {config.null!r}")
    r, _, _ = _prep(pattern, config.radii)
    nodes = _grid_nodes(config.grid_points, None)
    models = fit_models(pattern, (i, j), config)
    observed, obs_f = _statistics(pattern, i, j, models, r, nodes, wanted)
    # a component left in place keeps its F curve across replicates
    fixed = {"first": j, "second": i}.get(config.rotate) if config.null == "rotation" else None
    known_f = {fixed: obs_f[fixed]} if fixed in obs_f else None

    seeds = replicate_seeds(config.seed, config.nsim)
    args = (pattern, i, j, models, r, nodes, wanted, known_f, config)
    if config.n_jobs == 1:
        results = [_replicate(ss, *args) for ss in seeds]
    else:
        results = Parallel(n_jobs=config.n_jobs)(delayed(_replicate)(ss, *args) for ss in seeds)
    replicates = {name: [res[name] for res in results] for name in observed}

    method = f"rotation({config.rotate})" if config.null == "rotation" else "poisson"
    envs = {
        name: envelope_from_replicates(observed[name], replicates[name], config.level, method, config.seed)
        for name in observed
    }
    caveat = config.null == "rotation" and bool(np.any(r > np.pi - config.caveat_width))
    return TestReport(
        marks=(i, j),
        config=config,
        models=models,
        envelopes=envs,
        tags=_interpret(envs, i, j),
        caveat=caveat,
        caveat_region=(np.pi - config.caveat_width, np.pi) if caveat else None,
    )


class IndependenceTest(BaseEstimator):
    """Estimator-style wrapper around :func:`run_independence_test`.

    ``fit(pattern, i, j)`` stores the report in ``report_`` and the
    envelopes in ``envelopes_``.
    """

    def __init__(
        self,
        intensity="kernel",
        bandwidth=None,
        null="rotation",
        rotate="first",
        nsim=199,
        level=0.95,
        radii=None,
        grid_points=DEFAULT_F_GRID,
        statistics=("P", "J"),
        random_state=0,
        n_jobs=1,
    ):
        self.intensity = intensity
        self.bandwidth = bandwidth
        self.null = null
        self.rotate = rotate
        self.nsim = nsim
        self.level = level
        self.radii = radii
        self.grid_points = grid_points
        self.statistics = statistics
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, pattern, i, j, models=None):
        cfg = TestConfig(
            intensity="provided" if models is not None else self.intensity,
            models=models,
            bandwidth=self.bandwidth,
            null=self.null,
            rotate=self.rotate,
            nsim=self.nsim,
            level=self.level,
            radii=self.radii,
            grid_points=self.grid_points,
            statistics=tuple(self.statistics),
            seed=self.random_state,
            n_jobs=self.n_jobs,
        )
        self.report_ = run_independence_test(pattern, i, j, cfg)
        self.envelopes_ = self.report_.envelopes
        return self
