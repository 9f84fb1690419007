"""Intensity models on the sphere and their estimators.

A model is a callable mapping an ``(n, 3)`` array of locations to ``(n,)``
positive intensities. Models are per mark; multi-type code passes a dict
``{label: model}``.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator

from ._validation import DataError, check_points, check_positive, check_rotation
from .geom import FOUR_PI, FullSphere, Sphere, fibonacci_grid
from .pattern import count

__all__ = [
    "ConstantIntensity",
    "GridIntensity",
    "AnalyticIntensity",
    "RotatedIntensity",
    "as_intensity",
    "homogeneous_estimate",
    "kernel_estimate",
    "default_bandwidth",
    "mapped_intensity",
    "infimum_bound",
    "stoyan_mass",
    "rotate_intensity",
    "integrate_intensity",
    "HomogeneousIntensity",
    "KernelIntensity",
]

_DEFAULT_GRID = 20_000


def _window_nodes(window, n):
    nodes = fibonacci_grid(n)
    if window is None or window.is_full:
        return nodes
    inside = window.contains(nodes)
    if not inside.any():
        raise DataError("window contains no evaluation nodes")
    return nodes[inside]


@dataclass(frozen=True)
class ConstantIntensity:
    rate: float

    def __post_init__(self):
        check_positive(self.rate, "rate")

    def __call__(self, points):
        return np.full(len(np.atleast_2d(points)), float(self.rate))

    def infimum(self, window=None):
        return float(self.rate)

    def supremum(self, shape=None):
        return float(self.rate)

    def describe(self):
        return f"constant:{self.rate!r}"


@dataclass(frozen=True, eq=False)
class GridIntensity:
    """Values on grid nodes, evaluated by nearest-node lookup."""

    nodes: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if nodes.ndim != 2 or nodes.shape[1] != 3 or values.shape != (len(nodes),):
            raise ValueError("nodes must be (n, 3) and values (n,)")
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            raise ValueError("grid intensity must be strictly positive and finite")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "values", values)

    @cached_property
    def _tree(self):
        return cKDTree(self.nodes)

    def __call__(self, points):
        _, idx = self._tree.query(np.atleast_2d(points))
        return self.values[idx]

    def infimum(self, window=None):
        if window is None or window.is_full:
            return float(self.values.min())
        inside = window.contains(self.nodes)
        if not inside.any():
            raise DataError("window contains no grid nodes")
        # data points near the boundary may snap to a node just outside W,
        # so include the immediate neighbours of interior nodes
        _, nb = self._tree.query(self.nodes[inside], k=min(7, len(self.nodes)))
        return float(self.values[np.unique(nb)].min())

    def supremum(self, shape=None):
        return float(self.values.max())

    def describe(self):
        return f"grid:{len(self.nodes)}"


@dataclass(frozen=True, eq=False)
class AnalyticIntensity:
    """Closed-form intensity ``func(points)``.

    Bounds are taken on a Fibonacci grid; the infimum is shrunk by
    ``safety`` so that it stays below values between grid nodes.
    """

    func: Callable
    name: str = "analytic"
    grid_points: int = _DEFAULT_GRID
    safety: float = 0.999
    sup_safety: float = 1.05

    def __call__(self, points):
        vals = np.asarray(self.func(np.atleast_2d(points)), dtype=float)
        return np.broadcast_to(vals, (len(np.atleast_2d(points)),)).astype(float)

    def infimum(self, window=None):
        vals = self(_window_nodes(window, self.grid_points))
        return float(vals.min() * self.safety)

    def supremum(self, shape=None):
        nodes = fibonacci_grid(self.grid_points)
        if shape is not None:
            nodes = shape.from_sphere(nodes)
        return float(self(nodes).max() * self.sup_safety)

    def describe(self):
        return f"analytic:{self.name}"


@dataclass(frozen=True, eq=False)
class RotatedIntensity:
    """``x -> base(R x)``; bounds carry over from ``base`` on the full sphere."""

    base: object
    rotation: np.ndarray

    def __call__(self, points):
        return self.base(np.atleast_2d(points) @ self.rotation.T)

    def infimum(self, window=None):
        if window is None or window.is_full:
            return self.base.infimum(window)
        nodes = _window_nodes(window, _DEFAULT_GRID)
        return float(self(nodes).min() * 0.999)

    def supremum(self, shape=None):
        return self.base.supremum(None)

    def describe(self):
        return f"rotated({self.base.describe()})"


def as_intensity(model):
    """Coerce a positive number into a :class:`ConstantIntensity`."""
    if isinstance(model, (int, float, np.floating, np.integer)):
        return ConstantIntensity(float(model))
    if not callable(model):
        raise TypeError(f"not an intensity model: {model!r}")
    return model


def homogeneous_estimate(pattern, mark):
    """Constant rate: points of ``mark`` in the window over the window area."""
    n = count(pattern, pattern.window, mark)
    if n == 0:
        raise DataError(f"no points with mark {mark!r}; intensity must be positive")
    return ConstantIntensity(n / pattern.window.area)


def default_bandwidth(n):
    """Mean-spacing rule ``sqrt(4 pi / n)``."""
    return float(np.sqrt(FOUR_PI / max(int(n), 1)))


def _kernel_matrix(nodes, pts, h):
    # exp((cos d - 1) / h): von Mises-Fisher shape, peak value 1
    return np.exp((np.clip(nodes @ pts.T, -1.0, 1.0) - 1.0) / h)


def kernel_estimate(pattern, mark, bandwidth=None, grid_size=_DEFAULT_GRID, chunk=2000):
    """Edge-corrected kernel intensity of one component on a Fibonacci grid.

    Each event contributes a kernel ``exp(cos(d)/h)`` normalized to unit mass
    over the window (by the same grid quadrature used for the field), so the
    estimate integrates to the component size over the window.
    """
    X = pattern.component(mark)
    if len(X) == 0:
        raise DataError(f"no points with mark {mark!r}")
    h = default_bandwidth(len(X)) if bandwidth is None else float(bandwidth)
    if not 0 < h:
        raise ValueError("bandwidth must be positive")
    nodes = fibonacci_grid(grid_size)
    dA = FOUR_PI / grid_size
    inside = pattern.window.contains(nodes)
    mass = np.zeros(len(X))
    for s in range(0, grid_size, chunk):
        sl = slice(s, s + chunk)
        mass += _kernel_matrix(nodes[sl][inside[sl]], X, h).sum(axis=0) * dA
    if np.any(mass <= 0):
        raise DataError("kernel has no mass inside the window for some event")
    field_vals = np.empty(grid_size)
    for s in range(0, grid_size, chunk):
        sl = slice(s, s + chunk)
        field_vals[sl] = _kernel_matrix(nodes[sl], X, h) @ (1.0 / mass)
    # far from every event the field can underflow; keep it strictly positive
    tiny = np.finfo(float).tiny * 1e10
    return GridIntensity(nodes, np.maximum(field_vals, tiny))


def integrate_intensity(model, window=None, n=_DEFAULT_GRID):
    """Quadrature of ``model`` over ``window`` (whole sphere by default)."""
    nodes = fibonacci_grid(n)
    vals = model(nodes)
    if window is not None and not window.is_full:
        vals = vals * window.contains(nodes)
    return float(np.sum(vals) * FOUR_PI / n)


def mapped_intensity(model, shape):
    """Intensity on the sphere of a pattern mapped from ``shape``.

    ``rho*(s) = rho(f^-1(s)) * J(s)`` where ``model`` is evaluated at
    surface coordinates.
    """
    model = as_intensity(model)
    if isinstance(shape, Sphere):
        return model

    def func(s):
        return model(shape.from_sphere(s)) * shape.jacobian(s)

    name = f"{model.describe()}*J[{shape.describe()}]"
    return AnalyticIntensity(func, name=name)


def infimum_bound(model, window=None):
    """Lower bound of ``model`` over the window (grid-based for non-constant models)."""
    val = as_intensity(model).infimum(window)
    if not val > 0:
        raise ValueError(f"intensity infimum must be positive, got {val}")
    return val


def stoyan_mass(pattern, models, region=None, marks=None):
    """Sum of ``1 / rho(x, m)`` over points in ``region`` with mark in ``marks``.

    Unbiased for ``area(region) * nu(marks)`` by the Campbell formula.
    ``models`` is a single model (used for every mark) or a dict by label.
    """
    sel = np.ones(len(pattern), dtype=bool) if marks is None else pattern.mask(marks)
    if region is not None and len(pattern):
        sel &= region.contains(pattern.points)
    total = 0.0
    for k, label in enumerate(pattern.mark_set):
        idx = sel & (pattern.codes == k)
        if not idx.any():
            continue
        model = as_intensity(models[label] if isinstance(models, dict) else models)
        total += float(np.sum(1.0 / model(pattern.points[idx])))
    return total


def rotate_intensity(model, rotation):
    """Rotated field ``x -> model(O x)``."""
    model = as_intensity(model)
    R = check_rotation(rotation)
    if isinstance(model, ConstantIntensity):
        return model
    if isinstance(model, RotatedIntensity):
        return RotatedIntensity(model.base, model.rotation @ R)
    return RotatedIntensity(model, R)


class HomogeneousIntensity(BaseEstimator):
    """Constant-rate intensity with the fit/predict protocol."""

    def fit(self, pattern, mark):
        self.model_ = homogeneous_estimate(pattern, mark)
        self.rate_ = self.model_.rate
        return self

    def predict(self, points):
        return self.model_(check_points(points))


class KernelIntensity(BaseEstimator):
    """Kernel intensity estimate of one mark, evaluated by nearest grid node.

    Parameters
    ----------
    bandwidth : float, optional
        Kernel parameter ``h``; ``sqrt(4 pi / n)`` when None.
    grid_size : int
        Number of Fibonacci nodes carrying the field.
    """

    def __init__(self, bandwidth=None, grid_size=_DEFAULT_GRID):
        self.bandwidth = bandwidth
        self.grid_size = grid_size

    def fit(self, pattern, mark):
        n = count(pattern, None, mark)
        self.bandwidth_ = default_bandwidth(n) if self.bandwidth is None else self.bandwidth
        self.model_ = kernel_estimate(pattern, mark, self.bandwidth_, self.grid_size)
        return self

    def predict(self, points):
        return self.model_(check_points(points))
