"""Simulation of multi-type Poisson processes and bivariate log-Gaussian Cox
processes on the sphere and on mapped surfaces."""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from ._validation import NumericalError, check_positive, check_random_state
from .geom import Ellipsoid, FullSphere, Sphere, fibonacci_grid, solve_ellipsoid_axis, surface_area
from .intensity import AnalyticIntensity, as_intensity
from .pattern import MarkedPattern

__all__ = [
    "FieldExpression",
    "uniform_on_shape",
    "sample_poisson",
    "GRFSpec",
    "LGCPSpec",
    "sample_grf",
    "sample_lgcp",
    "lgcp_intensity_oracle",
    "lgcp_pcf_oracle",
    "SCENARIOS",
    "scenario",
]


class FieldExpression:
    """Scalar field written as a numpy expression in ``x1, x2, x3``.

    ``FieldExpression("log(6) + x1**2")`` evaluates on ``(n, 3)`` arrays.
    Only numpy functions and the three coordinates are in scope.
    """

    _NAMES = {
        name: getattr(np, name)
        for name in ("exp", "log", "sqrt", "sin", "cos", "tan", "arctan2", "abs", "pi", "e")
    }

    def __init__(self, expr):
        self.expr = str(expr)
        self._code = compile(self.expr, "<field>", "eval")

    def __call__(self, points):
        p = np.atleast_2d(np.asarray(points, dtype=float))
        scope = dict(self._NAMES, x1=p[:, 0], x2=p[:, 1], x3=p[:, 2])
        out = eval(self._code, {"__builtins__": {}}, scope)
        return np.broadcast_to(np.asarray(out, dtype=float), (len(p),)).copy()

    def __repr__(self):
        return f"FieldExpression({self.expr!r})"

    def __eq__(self, other):
        return isinstance(other, FieldExpression) and other.expr == self.expr

    def __hash__(self):
        return hash(self.expr)


def uniform_on_shape(shape, n, random_state=None, batch=None):
    """``n`` points uniform w.r.t. surface area on ``shape``.

    Returns ``(surface_points, sphere_points)``. Non-spheres use rejection
    from the uniform sphere law with acceptance ``J(s) / max J``.
    """
    rng = check_random_state(random_state)

    def sphere_draw(m):
        g = rng.standard_normal((m, 3))
        return g / np.linalg.norm(g, axis=1)[:, None]

    if n == 0:
        return np.zeros((0, 3)), np.zeros((0, 3))
    if isinstance(shape, Sphere):
        s = sphere_draw(n)
        return s.copy(), s
    jmax = shape.jacobian_max()
    out = []
    got = 0
    while got < n:
        m = batch or max(64, int(1.5 * (n - got)))
        s = sphere_draw(m)
        jac = shape.jacobian(s)
        if np.any(jac > jmax * (1 + 1e-9)):
            raise NumericalError("surface Jacobian exceeds its rejection bound")
        keep = rng.random(m) < jac / jmax
        out.append(s[keep])
        got += int(keep.sum())
    s = np.concatenate(out)[:n]
    return shape.from_sphere(s), s


def _thin(shape, area, rate_max, evaluate, rng):
    n = rng.poisson(rate_max * area)
    surf, sph = uniform_on_shape(shape, n, rng)
    if n == 0:
        return surf, sph
    vals = evaluate(surf, sph)
    if np.any(vals < 0):
        raise NumericalError("negative intensity encountered while thinning")
    if np.any(vals > rate_max * (1 + 1e-12)):
        raise NumericalError(
            f"intensity {vals.max():.4g} exceeds the dominating rate {rate_max:.4g}"
        )
    keep = rng.random(n) * rate_max < vals
    return surf[keep], sph[keep]


def sample_poisson(shape, models, random_state=None, window=None):
    """Independent inhomogeneous Poisson components on ``shape``, by thinning.

    Parameters
    ----------
    shape : Sphere, Ellipsoid or StarShape
    models : dict
        ``{label: intensity}`` with intensities evaluated at surface
        coordinates (per unit surface area).
    window : optional
        Points whose sphere image falls outside are dropped.

    Returns
    -------
    MarkedPattern
        Locations are sphere images; surface coordinates are kept in
        ``source_points`` when ``shape`` is not the sphere.
    """
    rng = check_random_state(random_state)
    window = FullSphere() if window is None else window
    area = surface_area(shape)
    surf_all, sph_all, marks = [], [], []
    for label, model in models.items():
        model = as_intensity(model)
        rate_max = model.supremum(None if isinstance(shape, Sphere) else shape)
        if not np.isfinite(rate_max) or rate_max <= 0:
            raise ValueError(f"intensity for {label!r} is not bounded and positive")
        surf, sph = _thin(shape, area, rate_max, lambda p, s: model(p), rng)
        surf_all.append(surf)
        sph_all.append(sph)
        marks += [label] * len(sph)
    surf = np.concatenate(surf_all) if surf_all else np.zeros((0, 3))
    sph = np.concatenate(sph_all) if sph_all else np.zeros((0, 3))
    keep = window.contains(sph) if len(sph) else np.zeros(0, bool)
    marks = np.asarray(marks, dtype=object)[keep]
    mapped = not isinstance(shape, Sphere)
    return MarkedPattern(
        sph[keep],
        marks,
        mark_set=tuple(models),
        window=window,
        source_shape=shape if mapped else None,
        source_points=surf[keep] if mapped else None,
    )


def _field(f):
    if callable(f):
        return f
    if isinstance(f, str):
        return FieldExpression(f)
    value = float(f)
    return lambda p: np.full(len(np.atleast_2d(p)), value)


@dataclass(frozen=True)
class GRFSpec:
    """Bivariate Gaussian field with exponential auto/cross covariance.

    ``c_ii(d) = sigma2 exp(-d / gamma2)`` and ``c_12(d) = a12 * c_11(d)``,
    with ``d`` the Euclidean distance in R^3.
    """

    mean1: object
    mean2: object
    sigma2: float = 1.0
    gamma2: float = 0.2
    a12: float = 0.0

    def __post_init__(self):
        if not -1.0 <= self.a12 <= 1.0:
            raise ValueError("cross-correlation a12 must lie in [-1, 1]")
        check_positive(self.sigma2, "sigma2")
        check_positive(self.gamma2, "gamma2")

    def means(self, points):
        return _field(self.mean1)(points), _field(self.mean2)(points)

    def covariance(self, d):
        return self.sigma2 * np.exp(-np.asarray(d) / self.gamma2)


@dataclass(frozen=True)
class LGCPSpec:
    grf: GRFSpec
    shape: object = field(default_factory=Sphere)
    resolution: int = 5000
    labels: tuple = ("1", "2")

    def __post_init__(self):
        if self.resolution < 500:
            raise ValueError("field grid resolution must be at least 500")


def _pairwise_euclid(p):
    return cdist(p, p)


def sample_grf(spec, locations, random_state=None, jitter=1e-8):
    """Joint draw of both field components at ``locations`` (surface points).

    Assembles the full ``2N x 2N`` covariance and factors it by Cholesky
    with ``jitter * sigma2`` added to the diagonal. When ``|a12| = 1`` (a
    singular covariance) or Cholesky fails, an eigen-decomposition is used
    instead, with eigenvalues below 1e-10 clipped to zero.
    """
    rng = check_random_state(random_state)
    p = np.atleast_2d(np.asarray(locations, dtype=float))
    n = len(p)
    base = spec.covariance(_pairwise_euclid(p))
    C = np.block([[base, spec.a12 * base], [spec.a12 * base, base]])
    factor = None
    if abs(spec.a12) < 1.0:
        try:
            factor = scipy.linalg.cholesky(C + jitter * spec.sigma2 * np.eye(2 * n), lower=True)
        except np.linalg.LinAlgError:
            factor = None
    if factor is None:
        vals, vecs = np.linalg.eigh(C)
        if vals.min() < -1e-6 * max(vals.max(), 1.0):
            raise NumericalError("covariance matrix is not positive semi-definite")
        vals = np.where(vals < 1e-10, 0.0, vals)
        factor = vecs * np.sqrt(vals)
    u = factor @ rng.standard_normal(2 * n)
    m1, m2 = spec.means(p)
    return m1 + u[:n], m2 + u[n:]


@lru_cache(maxsize=2)
def _field_factor(shape, resolution, sigma2, gamma2, jitter=1e-8):
    nodes = fibonacci_grid(resolution)
    surf = shape.from_sphere(nodes)
    C = sigma2 * np.exp(-_pairwise_euclid(surf) / gamma2)
    C[np.diag_indices_from(C)] += jitter * sigma2
    L = scipy.linalg.cholesky(C, lower=True, overwrite_a=True, check_finite=False)
    return nodes, surf, L


def sample_lgcp(spec, random_state=None, return_field=False):
    """Bivariate LGCP on ``spec.shape`` via a discretized Gaussian field.

    The field is drawn on a Fibonacci grid (mapped onto the surface) and
    extended by nearest node; each component is then obtained by thinning a
    Poisson process with rate ``1.05 * max(exp(u_k))``.

    The two components share one Cholesky factor of the single-component
    covariance: ``u1 = L z1``, ``u2 = a12 L z1 + sqrt(1 - a12^2) L z2``, which
    has exactly the bivariate covariance of :class:`GRFSpec`.
    """
    rng = check_random_state(random_state)
    grf, shape = spec.grf, spec.shape
    nodes, surf, L = _field_factor(shape, spec.resolution, grf.sigma2, grf.gamma2)
    n = len(nodes)
    z1 = L @ rng.standard_normal(n)
    z2 = L @ rng.standard_normal(n)
    m1, m2 = grf.means(surf)
    u1 = m1 + z1
    u2 = m2 + grf.a12 * z1 + np.sqrt(max(0.0, 1.0 - grf.a12**2)) * z2
    tree = cKDTree(nodes)
    area = surface_area(shape)
    surf_all, sph_all, marks = [], [], []
    for label, u in zip(spec.labels, (u1, u2)):
        z = np.exp(u)
        rate_max = 1.05 * z.max()

        def evaluate(p, s, z=z):
            return z[tree.query(s)[1]]

        sp, ss = _thin(shape, area, rate_max, evaluate, rng)
        surf_all.append(sp)
        sph_all.append(ss)
        marks += [label] * len(ss)
    mapped = not isinstance(shape, Sphere)
    pattern = MarkedPattern(
        np.concatenate(sph_all),
        marks,
        mark_set=spec.labels,
        source_shape=shape if mapped else None,
        source_points=np.concatenate(surf_all) if mapped else None,
    )
    if return_field:
        return pattern, (surf, u1, u2)
    return pattern


def lgcp_intensity_oracle(spec, x):
    """Closed-form component intensities ``exp(mu_i(x) + sigma2 / 2)``."""
    grf = spec.grf if isinstance(spec, LGCPSpec) else spec
    p = np.atleast_2d(np.asarray(x, dtype=float))
    m1, m2 = grf.means(p)
    r1, r2 = np.exp(m1 + grf.sigma2 / 2), np.exp(m2 + grf.sigma2 / 2)
    if np.ndim(x) == 1:
        return float(r1[0]), float(r2[0])
    return r1, r2


def lgcp_pcf_oracle(spec, x, y, i, j):
    """Pair correlation ``exp(c_ij(|x - y|))`` between components ``i`` and ``j`` (1 or 2)."""
    grf = spec.grf if isinstance(spec, LGCPSpec) else spec
    d = np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(y, dtype=float), axis=-1)
    c = grf.covariance(d)
    if int(i) != int(j):
        c = grf.a12 * c
    return np.exp(c)


# --------------------------------------------------------------------------
# preset scenarios on the area-4pi ellipsoid with a = b = 0.8


@lru_cache(maxsize=1)
def _scenario_ellipsoid():
    c = solve_ellipsoid_axis(0.8, 0.8, 4.0 * np.pi)
    return Ellipsoid(0.8, 0.8, c)


SCENARIOS = {
    "poisson-indep": {
        "kind": "poisson",
        "intensity1": "exp(log(6) + x3)",
        "intensity2": "exp(log(6) + 2*x1)",
    },
    "lgcp-indep": {
        "kind": "lgcp", "mean1": "log(6) + x1", "mean2": "log(6) + x1",
        "sigma2": 1.0, "gamma2": 0.2, "a12": 0.0,
    },
    "lgcp-attract": {
        "kind": "lgcp", "mean1": "log(6) + x1**2", "mean2": "log(6) + x1**2",
        "sigma2": 1.0, "gamma2": 0.2, "a12": 1.0,
    },
    "lgcp-repulse": {
        "kind": "lgcp", "mean1": "log(6) + x2**2", "mean2": "log(6) + x1**2",
        "sigma2": 1.0, "gamma2": 0.2, "a12": -1.0,
    },
}


def scenario(name, random_state=None, shape=None, resolution=5000, return_field=False):
    """Simulate one preset scenario; returns ``(pattern, parameters)``.

    ``shape`` defaults to ``Ellipsoid(0.8, 0.8, c)`` with ``c`` giving area
    ``4 pi``. With ``return_field`` LGCP scenarios return
    ``(pattern, parameters, (surface_nodes, u1, u2))`` and Poisson ones a
    ``None`` field.
    """
    if name not in SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}")
    params = dict(SCENARIOS[name])
    shape = _scenario_ellipsoid() if shape is None else shape
    params["shape"] = shape.describe()
    if params["kind"] == "poisson":
        models = {
            "1": AnalyticIntensity(FieldExpression(params["intensity1"]), params["intensity1"]),
            "2": AnalyticIntensity(FieldExpression(params["intensity2"]), params["intensity2"]),
        }
        pattern = sample_poisson(shape, models, random_state)
        return (pattern, params, None) if return_field else (pattern, params)
    grf = GRFSpec(
        params["mean1"], params["mean2"], params["sigma2"], params["gamma2"], params["a12"]
    )
    params["resolution"] = resolution
    spec = LGCPSpec(grf, shape, resolution)
    if return_field:
        pattern, fld = sample_lgcp(spec, random_state, return_field=True)
        return pattern, params, fld
    return sample_lgcp(spec, random_state), params
