"""Cross-type functional summary statistics on the sphere.

All estimators share one array kernel each; the isotropic versions are the
intensity-reweighted ones with constant weights, so a constant intensity
model reproduces the isotropic value exactly.

Conventions: K and F count neighbours with ``d <= r``; D uses ``d < r``.
Undefined values (empty eroded window, or F = 1 for J) are flagged in
``SummaryCurve.defined`` and stored as NaN; code must consult the flag.
"""

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from ._validation import EmptyWindowError, check_radii
from .geom import fibonacci_grid, pairwise_geodesic
from .intensity import ConstantIntensity, as_intensity, homogeneous_estimate, infimum_bound

__all__ = [
    "SummaryCurve",
    "default_radii",
    "k_baseline",
    "khat_iso",
    "dhat_iso",
    "fhat_iso",
    "jhat_iso",
    "khat_inhom",
    "dhat_inhom",
    "fhat_inhom",
    "jhat_inhom",
    "p_transform",
    "cross_summaries",
    "CrossSummary",
]

DEFAULT_F_GRID = 10_000
_FACTOR_TOL = 1e-9


@dataclass
class SummaryCurve:
    """One estimated summary function on a radius grid."""

    statistic: str
    marks: tuple
    r: np.ndarray
    values: np.ndarray
    defined: np.ndarray
    variant: str = "isotropic"
    window: str = "full"
    eroded: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=float)
        self.defined = np.asarray(self.defined, dtype=bool)
        vals = np.asarray(self.values, dtype=float).copy()
        vals[~self.defined] = np.nan
        self.values = vals

    def __len__(self):
        return len(self.r)

    def masked(self):
        return np.ma.masked_array(self.values, mask=~self.defined)


def default_radii(window, n=200):
    """``n`` equally spaced radii from 0.

    The grid ends at pi on the whole sphere. For partial windows it ends at
    pi/2 or, when the window erodes to nothing sooner, just short of that
    radius so every grid point has a nonempty eroded window.
    """
    if window.is_full:
        return np.linspace(0.0, np.pi, n)
    limit = window.max_erosion
    if limit > np.pi / 2:
        return np.linspace(0.0, np.pi / 2, n)
    return np.linspace(0.0, limit, n + 1)[:-1]


def k_baseline(r):
    """Theoretical K under independence, ``2 pi (1 - cos r)``."""
    r = check_radii(r)
    vals = 2.0 * np.pi * (1.0 - np.cos(r))
    return SummaryCurve("K", (), r, vals, np.ones(len(r), bool), variant="theory")


# --------------------------------------------------------------------------
# array kernels


def _erosion_table(window, r):
    """Eroded windows and their areas; None where erosion empties the window."""
    if window.is_full:
        return [window] * len(r), np.full(len(r), window.area)
    wins, areas = [], np.full(len(r), np.nan)
    for k, rk in enumerate(r):
        try:
            w = window.erode(float(rk))
        except EmptyWindowError:
            w = None
        wins.append(w)
        if w is not None:
            areas[k] = w.area
    return wins, areas


def _membership(wins, pts):
    """Boolean (n_points, n_r) table of membership in each eroded window."""
    out = np.zeros((len(pts), len(wins)), dtype=bool)
    if len(pts) == 0:
        return out
    cache = {}
    for k, w in enumerate(wins):
        if w is None:
            continue
        key = id(w)
        if key not in cache:
            cache[key] = w.contains(pts)
        out[:, k] = cache[key]
    return out


def _bins(dist, r, strict):
    """Index of the first radius that counts each distance.

    ``d`` counts at ``r[k]`` iff ``k >= bin`` (``d <= r[k]``, or ``d < r[k]``
    when ``strict``). Uniform grids use arithmetic plus an exact boundary
    correction; otherwise binary search.
    """
    n_r = len(r)
    step = (r[-1] - r[0]) / (n_r - 1) if n_r > 1 else 0.0
    uniform = n_r > 2 and step > 0 and np.allclose(np.diff(r), step, rtol=1e-9, atol=0)
    if not uniform:
        return np.searchsorted(r, dist, side="right" if strict else "left")
    b = np.clip(np.ceil((dist - r[0]) / step), 0, n_r).astype(np.intp)
    ext = np.concatenate([[-np.inf], r, [np.inf]])
    # counted at r[b] and not at r[b-1]; shift where rounding misplaced it
    while True:
        lo = (ext[b] > dist) if strict else (ext[b] >= dist)
        hi = (ext[b + 1] <= dist) if strict else (ext[b + 1] < dist)
        if not (lo.any() or hi.any()):
            return b
        b = b - lo + hi


def _accumulate(bins, n_r, weights):
    """``out[p, k] = sum_q weights[q] * 1{bins[p, q] <= k}``."""
    n_rows, n_cols = bins.shape
    if n_cols == 0 or n_rows == 0:
        return np.zeros((n_rows, n_r))
    flat = (np.arange(n_rows)[:, None] * (n_r + 1) + bins).ravel()
    w = np.broadcast_to(weights, bins.shape).ravel()
    hist = np.bincount(flat, weights=w, minlength=n_rows * (n_r + 1))
    return np.cumsum(hist.reshape(n_rows, n_r + 1), axis=1)[:, :n_r]


def _cumulative(dist, r, weights, strict):
    """``out[p, k] = sum_q weights[q] * 1{dist[p, q] (<|<=) r[k]}``."""
    return _accumulate(_bins(dist, r, strict), len(r), weights)


def _cumulative_product(dist, r, factors, strict):
    """``out[p, k] = prod_q factors[q] ** 1{dist[p, q] (<|<=) r[k]}``; factors in [0, 1]."""
    n_rows, n_cols = dist.shape
    if n_cols == 0 or n_rows == 0:
        return np.ones((n_rows, len(r)))
    factors = np.broadcast_to(np.asarray(factors, dtype=float), (n_cols,))
    zero = factors <= 0.0
    bins = _bins(dist, r, strict)
    if zero.all():
        # isotropic case: product is 1 until the first neighbour, then 0
        first = bins.min(axis=1)
        return (np.arange(len(r))[None, :] < first[:, None]).astype(float)
    logs = np.where(zero, 0.0, np.log(np.where(zero, 1.0, factors)))
    log_sum = _accumulate(bins, len(r), logs[None, :])
    if zero.any():
        n_zero = _accumulate(bins, len(r), zero[None, :].astype(float))
        return np.where(n_zero > 0.5, 0.0, np.exp(log_sum))
    return np.exp(log_sum)


def _k_sum(dist, wi, wj, member, r, method="fast"):
    """``sum_x w_x 1{x in W-r} sum_y w_y 1{d <= r}`` per radius."""
    if method == "fast":
        S = _cumulative(dist, r, wj[None, :], strict=False)
        return np.sum(wi[:, None] * member * S, axis=0)
    if method == "direct":
        out = np.empty(len(r))
        for k, rk in enumerate(r):
            inner = (dist <= rk) @ wj
            out[k] = np.sum(wi * member[:, k] * inner)
        return out
    raise ValueError(f"unknown method {method!r}")


def _one_minus_d_sum(dist, wi, aj, member, r):
    """``sum_x w_x 1{x in W-r} prod_y (1 - a_y 1{d < r})`` per radius."""
    factors = 1.0 - aj
    if np.any(factors < -_FACTOR_TOL):
        raise ValueError(
            "intensity infimum exceeds the intensity at a data point "
            f"(factor {factors.min():.3g}); the lower bound is invalid"
        )
    P = _cumulative_product(dist, r, np.clip(factors, 0.0, 1.0), strict=True)
    return np.sum(wi[:, None] * member * P, axis=0)


def _one_minus_f(nodes, node_member, Xj, aj, r, chunk_elems=2_000_000):
    """Mean over in-window grid nodes of ``prod_x (1 - a_x 1{d <= r})``."""
    factors = 1.0 - aj
    if np.any(factors < -_FACTOR_TOL):
        raise ValueError(
            "intensity infimum exceeds the intensity at a data point "
            f"(factor {factors.min():.3g}); the lower bound is invalid"
        )
    factors = np.clip(factors, 0.0, 1.0)
    total = np.zeros(len(r))
    step = max(1, chunk_elems // max(len(Xj), 1))
    for s in range(0, len(nodes), step):
        sl = slice(s, s + step)
        dist = pairwise_geodesic(nodes[sl], Xj)
        P = _cumulative_product(dist, r, factors, strict=False)
        total += np.sum(P * node_member[sl], axis=0)
    n_nodes = node_member.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(n_nodes > 0, total / np.maximum(n_nodes, 1), np.nan), n_nodes > 0


def _grid_nodes(grid_points, nodes):
    if nodes is not None:
        return np.atleast_2d(np.asarray(nodes, dtype=float))
    if grid_points < 100:
        raise ValueError("grid_points must be at least 100")
    return fibonacci_grid(grid_points)


def _rates(pattern, labels, models):
    """Per-label models, defaulting to the plug-in homogeneous estimate."""
    out = []
    for label, m in zip(labels, models):
        out.append(homogeneous_estimate(pattern, label) if m is None else as_intensity(m))
    return out


def _variant(models):
    return "isotropic" if all(isinstance(m, ConstantIntensity) for m in models) else "inhomogeneous"


def _prep(pattern, r):
    r = default_radii(pattern.window) if r is None else check_radii(r)
    wins, areas = _erosion_table(pattern.window, r)
    return r, wins, areas


def _curve(stat, marks, r, vals, defined, pattern, variant, **meta):
    return SummaryCurve(
        stat,
        tuple(marks),
        r,
        vals,
        defined,
        variant=variant,
        window=pattern.window.describe(),
        eroded=not pattern.window.is_full,
        meta=meta,
    )


def _check_pair(pattern, i, j):
    pattern._check_labels((i, j))
    if i == j:
        raise ValueError("cross statistics need two different marks")


# --------------------------------------------------------------------------
# K


def _khat(pattern, i, j, r, model_i, model_j, method, variant=None):
    _check_pair(pattern, i, j)
    r, wins, areas = _prep(pattern, r)
    Xi, Xj = pattern.component(i), pattern.component(j)
    wi, wj = 1.0 / model_i(Xi), 1.0 / model_j(Xj)
    dist = pairwise_geodesic(Xi, Xj)
    member = _membership(wins, Xi)
    defined = np.isfinite(areas)
    sums = _k_sum(dist, wi, wj, member, r, method)
    vals = np.where(defined, sums / np.where(defined, areas, 1.0), np.nan)
    return _curve("K", (i, j), r, vals, defined, pattern, variant or _variant([model_i, model_j]))


def khat_iso(pattern, i, j, r=None, rho_i=None, rho_j=None, method="fast"):
    """Cross K function with constant intensities.

    ``K(r) = [rho_i rho_j area(W-r)]^-1 sum_{x in X_i, x in W-r} sum_{y in X_j} 1{d(x,y) <= r}``.
    ``rho_i``/``rho_j`` default to the plug-in estimates count / area.
    ``method`` selects the sorted-bin fast path or the direct double sum.
    """
    mi, mj = _rates(pattern, (i, j), (rho_i, rho_j))
    for m in (mi, mj):
        if not isinstance(m, ConstantIntensity):
            raise TypeError("khat_iso takes constant rates; use khat_inhom")
    return _khat(pattern, i, j, r, mi, mj, method, "isotropic")


def khat_inhom(pattern, i, j, r=None, model_i=None, model_j=None, method="fast"):
    """Intensity-reweighted cross K: pairs weighted by ``1 / (rho_i(x) rho_j(y))``."""
    mi, mj = _rates(pattern, (i, j), (model_i, model_j))
    return _khat(pattern, i, j, r, mi, mj, method, "inhomogeneous")


# --------------------------------------------------------------------------
# D, F, J


def _dhat(pattern, i, j, r, model_i, model_j, variant):
    _check_pair(pattern, i, j)
    r, wins, areas = _prep(pattern, r)
    Xi, Xj = pattern.component(i), pattern.component(j)
    wi = 1.0 / model_i(Xi)
    aj = infimum_bound(model_j, pattern.window) / model_j(Xj)
    dist = pairwise_geodesic(Xi, Xj)
    member = _membership(wins, Xi)
    defined = np.isfinite(areas)
    one_minus = _one_minus_d_sum(dist, wi, aj, member, r)
    vals = np.where(defined, 1.0 - one_minus / np.where(defined, areas, 1.0), np.nan)
    return _curve("D", (i, j), r, vals, defined, pattern, variant)


def dhat_iso(pattern, i, j, r=None, rho_i=None):
    """Cross nearest-neighbour distribution D of type-j around type-i events.

    ``1 - D(r) = [rho_i area(W-r)]^-1 sum_{x in X_i, x in W-r} prod_{y in X_j} (1 - 1{d(x,y) < r})``.
    """
    mi, = _rates(pattern, (i,), (rho_i,))
    if not isinstance(mi, ConstantIntensity):
        raise TypeError("dhat_iso takes a constant rate; use dhat_inhom")
    # the j-factors are all zero; any constant model_j gives a = 1
    return _dhat(pattern, i, j, r, mi, ConstantIntensity(1.0), "isotropic")


def dhat_inhom(pattern, i, j, r=None, model_i=None, model_j=None):
    """Inhomogeneous D with factors ``1 - rho_bar_j 1{d < r} / rho_j(y)``."""
    mi, mj = _rates(pattern, (i, j), (model_i, model_j))
    return _dhat(pattern, i, j, r, mi, mj, "inhomogeneous")


def _fhat(pattern, j, r, model_j, grid_points, nodes, variant):
    pattern._check_labels(j)
    r, wins, _ = _prep(pattern, r)
    nodes = _grid_nodes(grid_points, nodes)
    Xj = pattern.component(j)
    if len(Xj) == 0:
        aj = np.zeros(0)
    else:
        aj = infimum_bound(model_j, pattern.window) / model_j(Xj)
    node_member = _membership(wins, nodes)
    one_minus, defined = _one_minus_f(nodes, node_member, Xj, aj, r)
    vals = np.where(defined, 1.0 - one_minus, np.nan)
    return _curve("F", (j,), r, vals, defined, pattern, variant, grid_points=len(nodes))


def fhat_iso(pattern, j, r=None, grid_points=DEFAULT_F_GRID, nodes=None):
    """Empty-space function of type j: fraction of grid nodes in W-r with a
    type-j event within distance r."""
    return _fhat(pattern, j, r, ConstantIntensity(1.0), grid_points, nodes, "isotropic")


def fhat_inhom(pattern, j, r=None, model_j=None, grid_points=DEFAULT_F_GRID, nodes=None):
    mj, = _rates(pattern, (j,), (model_j,))
    return _fhat(pattern, j, r, mj, grid_points, nodes, "inhomogeneous")


def _jhat(dcurve, fcurve, variant):
    if not np.array_equal(dcurve.r, fcurve.r):
        raise ValueError("D and F curves must share the radius grid")
    if dcurve.statistic != "D" or fcurve.statistic != "F":
        raise ValueError("jhat needs a D curve and an F curve")
    one_minus_f = 1.0 - fcurve.values
    defined = dcurve.defined & fcurve.defined
    defined[defined] = one_minus_f[defined] > 0.0
    vals = np.full(len(dcurve.r), np.nan)
    vals[defined] = (1.0 - dcurve.values[defined]) / one_minus_f[defined]
    return SummaryCurve(
        "J",
        dcurve.marks,
        dcurve.r,
        vals,
        defined,
        variant=variant,
        window=dcurve.window,
        eroded=dcurve.eroded,
        meta=dict(fcurve.meta),
    )


def jhat_iso(dcurve, fcurve):
    """``J = (1 - D) / (1 - F)``, undefined wherever ``F = 1``."""
    return _jhat(dcurve, fcurve, "isotropic")


def jhat_inhom(dcurve, fcurve):
    return _jhat(dcurve, fcurve, "inhomogeneous")


def p_transform(kcurve):
    """``P(r) = sqrt(K(r)) - sqrt(2 pi (1 - cos r))``: zero under independence."""
    if kcurve.statistic != "K":
        raise ValueError("p_transform needs a K curve")
    k = kcurve.values[kcurve.defined]
    if np.any(k < 0):
        raise ValueError("K must be non-negative for the P transform")
    vals = np.full(len(kcurve.r), np.nan)
    base = 2.0 * np.pi * (1.0 - np.cos(kcurve.r))
    vals[kcurve.defined] = np.sqrt(k) - np.sqrt(base[kcurve.defined])
    return SummaryCurve(
        "P",
        kcurve.marks,
        kcurve.r,
        vals,
        kcurve.defined,
        variant=kcurve.variant,
        window=kcurve.window,
        eroded=kcurve.eroded,
        meta=dict(kcurve.meta),
    )


def cross_summaries(pattern, i, j, models, r=None, grid_points=DEFAULT_F_GRID, nodes=None, known_f=None):
    """P (from K), J^ij and J^ji for one pattern, sharing the distance matrix.

    ``models`` maps each label to an intensity model; with constant models
    the isotropic estimators are reproduced exactly. ``known_f`` may map a
    label to an F curve already computed for the same component, model,
    radii and nodes (simulation nulls that leave one component in place).
    """
    known_f = known_f or {}
    _check_pair(pattern, i, j)
    mi, mj = as_intensity(models[i]), as_intensity(models[j])
    variant = _variant([mi, mj])
    r, wins, areas = _prep(pattern, r)
    nodes = _grid_nodes(grid_points, nodes)
    Xi, Xj = pattern.component(i), pattern.component(j)
    rho_i, rho_j = mi(Xi), mj(Xj)
    ai = infimum_bound(mi, pattern.window) / rho_i
    aj = infimum_bound(mj, pattern.window) / rho_j
    dist = pairwise_geodesic(Xi, Xj)
    mem_i, mem_j = _membership(wins, Xi), _membership(wins, Xj)
    node_member = _membership(wins, nodes)
    defined = np.isfinite(areas)
    safe_area = np.where(defined, areas, 1.0)

    k_vals = np.where(defined, _k_sum(dist, 1.0 / rho_i, 1.0 / rho_j, mem_i, r) / safe_area, np.nan)
    kcurve = _curve("K", (i, j), r, k_vals, defined, pattern, variant)
    out = {"K": kcurve, "P": p_transform(kcurve)}
    for (a, b, Xa, Xb, wa, ab, mem_a, d) in (
        (i, j, Xi, Xj, 1.0 / rho_i, aj, mem_i, dist),
        (j, i, Xj, Xi, 1.0 / rho_j, ai, mem_j, dist.T),
    ):
        one_d = _one_minus_d_sum(d, wa, ab, mem_a, r)
        dcurve = _curve("D", (a, b), r, np.where(defined, 1.0 - one_d / safe_area, np.nan), defined, pattern, variant)
        if b in known_f:
            fcurve = known_f[b]
        else:
            one_f, f_def = _one_minus_f(nodes, node_member, Xb, ab, r)
            fcurve = _curve("F", (b,), r, np.where(f_def, 1.0 - one_f, np.nan), f_def, pattern, variant, grid_points=len(nodes))
        out[f"D:{a}:{b}"] = dcurve
        out[f"F:{b}"] = fcurve
        out[f"J:{a}:{b}"] = _jhat(dcurve, fcurve, variant)
    return out


class CrossSummary(BaseEstimator, TransformerMixin):
    """Estimator wrapper computing P, J^ij and J^ji for a fixed mark pair.

    ``fit(pattern)`` estimates the two intensities (unless ``models`` is
    given); ``transform(pattern)`` returns the dict of curves from
    :func:`cross_summaries` using the fitted models.

    Parameters
    ----------
    i, j : str
        Mark labels.
    intensity : {"kernel", "homogeneous"}
    bandwidth : float, optional
    radii : array-like, optional
    grid_points : int
        Fibonacci nodes for F.
    models : dict, optional
        Known intensities by label; skips estimation.
    """

    def __init__(self, i="1", j="2", intensity="kernel", bandwidth=None, radii=None,
                 grid_points=DEFAULT_F_GRID, models=None):
        self.i = i
        self.j = j
        self.intensity = intensity
        self.bandwidth = bandwidth
        self.radii = radii
        self.grid_points = grid_points
        self.models = models

    def fit(self, pattern, y=None):
        from .intensity import kernel_estimate

        _check_pair(pattern, self.i, self.j)
        if self.models is not None:
            self.models_ = {m: as_intensity(self.models[m]) for m in (self.i, self.j)}
        elif self.intensity == "homogeneous":
            self.models_ = {m: homogeneous_estimate(pattern, m) for m in (self.i, self.j)}
        elif self.intensity == "kernel":
            self.models_ = {m: kernel_estimate(pattern, m, self.bandwidth) for m in (self.i, self.j)}
        else:
            raise ValueError(f"unknown intensity option {self.intensity!r}")
        return self

    def transform(self, pattern):
        if not hasattr(self, "models_"):
            raise NotFittedError("CrossSummary is not fitted yet; call fit first")
        return cross_summaries(pattern, self.i, self.j, self.models_, r=self.radii, grid_points=self.grid_points)
