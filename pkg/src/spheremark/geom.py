"""Spherical geometry: distances, rotations, grids, windows and surface maps.

Points on the unit sphere are stored as ``(n, 3)`` float arrays. Surfaces
other than the sphere are handled by mapping them onto the sphere with a
bijection and tracking the ratio of area elements (the surface Jacobian).
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

from ._validation import (
    DataError,
    EmptyWindowError,
    check_points,
    check_positive,
    check_random_state,
)

__all__ = [
    "NORTH_POLE",
    "FOUR_PI",
    "unit_vectors",
    "lonlat_to_xyz",
    "xyz_to_lonlat",
    "geodesic_distance",
    "pairwise_geodesic",
    "cap_area",
    "rotation_to_pole",
    "random_rotation",
    "quaternion_to_rotation",
    "fibonacci_grid",
    "Sphere",
    "Ellipsoid",
    "StarShape",
    "map_to_sphere",
    "inverse_map",
    "surface_jacobian",
    "surface_area",
    "solve_ellipsoid_axis",
    "FullSphere",
    "Cap",
    "CapComplement",
    "LatitudeBandExclusion",
    "GridMask",
    "erode_window",
    "default_mask_resolution",
]

NORTH_POLE = np.array([0.0, 0.0, 1.0])
FOUR_PI = 4.0 * np.pi
_GOLDEN = (1.0 + 5.0**0.5) / 2.0


def unit_vectors(points):
    """Normalize arbitrary non-zero 3-vectors onto the unit sphere."""
    arr = np.asarray(points, dtype=float)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    norms = np.linalg.norm(arr, axis=1)
    if np.any(norms == 0):
        raise DataError("cannot normalize the zero vector")
    out = arr / norms[:, None]
    return out[0] if single else out


def lonlat_to_xyz(lon_deg, lat_deg):
    lon = np.radians(np.asarray(lon_deg, dtype=float))
    lat = np.radians(np.asarray(lat_deg, dtype=float))
    return np.stack(
        [np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)], axis=-1
    )


def xyz_to_lonlat(points):
    p = np.atleast_2d(np.asarray(points, dtype=float))
    lon = np.degrees(np.arctan2(p[:, 1], p[:, 0]))
    lat = np.degrees(np.arctan2(p[:, 2], np.hypot(p[:, 0], p[:, 1])))
    return lon, lat


def geodesic_distance(u, v):
    """Great-circle distance between unit vectors (broadcasts over rows).

    Uses ``atan2(|u x v|, u . v)``, which stays accurate near 0 and pi.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    cross = np.linalg.norm(np.cross(u, v), axis=-1)
    dot = np.sum(u * v, axis=-1)
    return np.arctan2(cross, dot)


def pairwise_geodesic(A, B):
    """Matrix of geodesic distances, shape ``(len(A), len(B))``."""
    A = np.asarray(A, dtype=float).reshape(-1, 3)
    B = np.asarray(B, dtype=float).reshape(-1, 3)
    ax, ay, az = (A[:, k, None] for k in range(3))
    bx, by, bz = (B[None, :, k] for k in range(3))
    cx = ay * bz - az * by
    cy = az * bx - ax * bz
    cz = ax * by - ay * bx
    cross = np.sqrt(cx * cx + cy * cy + cz * cz)
    return np.arctan2(cross, A @ B.T)


def cap_area(r):
    """Area of a spherical cap of geodesic radius ``r`` on the unit sphere."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0) or np.any(r_arr > np.pi):
        raise ValueError("cap radius must lie in [0, pi]")
    out = 2.0 * np.pi * (1.0 - np.cos(r_arr))
    return float(out) if out.ndim == 0 else out


def _axis_angle(axis, angle):
    k = np.asarray(axis, dtype=float)
    k = k / np.linalg.norm(k)
    K = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def rotation_to_pole(x):
    """Rotation ``O_x`` carrying the north pole to ``x`` along their geodesic.

    The rotation axis is ``o x x``, orthogonal to the plane containing the
    geodesic. At the south pole the axis is undefined; there we return the
    half-turn about the x-axis.
    """
    x = check_points(x, tol=1e-6)[0]
    axis = np.cross(NORTH_POLE, x)
    s = np.linalg.norm(axis)
    c = float(x @ NORTH_POLE)
    if s < 1e-15:
        if c > 0:
            return np.eye(3)
        return np.diag([1.0, -1.0, -1.0])
    return _axis_angle(axis, np.arctan2(s, c))


def quaternion_to_rotation(q):
    """Rotation matrix of a (not necessarily normalized) quaternion ``(w, x, y, z)``."""
    w, x, y, z = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def random_rotation(random_state=None):
    """Haar-uniform rotation from a uniformly distributed unit quaternion."""
    rng = check_random_state(random_state)
    q = rng.standard_normal(4)
    while np.linalg.norm(q) < 1e-12:
        q = rng.standard_normal(4)
    return quaternion_to_rotation(q)


def fibonacci_grid(n):
    """``n`` quasi-uniform points on the unit sphere (golden-spiral lattice).

    Each point carries the same quadrature weight ``4*pi/n``.
    """
    n = int(n)
    if n < 1:
        raise ValueError("fibonacci_grid needs n >= 1")
    i = np.arange(n, dtype=float)
    z = 1.0 - (2.0 * i + 1.0) / n
    rho = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    phi = 2.0 * np.pi * i / _GOLDEN
    return np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])


# --------------------------------------------------------------------------
# Surfaces

_SURFACE_TOL = 1e-8


def _tangent_basis(s):
    helper = np.where(np.abs(s[:, 2:3]) < 0.9, [[0.0, 0.0, 1.0]], [[1.0, 0.0, 0.0]])
    e1 = np.cross(helper, s)
    e1 /= np.linalg.norm(e1, axis=1)[:, None]
    e2 = np.cross(s, e1)
    return e1, e2


@dataclass(frozen=True)
class Sphere:
    """The unit sphere itself; every map is the identity."""

    def residual(self, p):
        return np.linalg.norm(p, axis=1) - 1.0

    def to_sphere(self, p):
        return p.copy()

    def from_sphere(self, s):
        return s.copy()

    def jacobian(self, s):
        return np.ones(len(s))

    def jacobian_max(self):
        return 1.0

    def describe(self):
        return "sphere"


@dataclass(frozen=True)
class Ellipsoid:
    """Axis-aligned ellipsoid ``(x/a)^2 + (y/b)^2 + (z/c)^2 = 1``.

    Mapped to the sphere componentwise, ``(x/a, y/b, z/c)``.
    """

    a: float
    b: float
    c: float

    def __post_init__(self):
        for name in ("a", "b", "c"):
            check_positive(getattr(self, name), f"semi-axis {name}")

    @property
    def axes(self):
        return np.array([self.a, self.b, self.c], dtype=float)

    def residual(self, p):
        return np.sum((p / self.axes) ** 2, axis=1) - 1.0

    def to_sphere(self, p):
        return p / self.axes

    def from_sphere(self, s):
        return s * self.axes

    def jacobian(self, s):
        # |p_theta x p_phi| / sin(theta) for p = (a s1, b s2, c s3)
        a, b, c = self.axes
        return np.sqrt(
            (b * c * s[:, 0]) ** 2 + (a * c * s[:, 1]) ** 2 + (a * b * s[:, 2]) ** 2
        )

    def jacobian_max(self):
        a, b, c = self.axes
        return max(b * c, a * c, a * b)

    def describe(self):
        return f"ellipsoid:{self.a!r},{self.b!r},{self.c!r}"


@dataclass(frozen=True, eq=False)
class StarShape:
    """Closed surface ``{R(u) u : u on the sphere}`` star-shaped about the origin.

    Parameters
    ----------
    radial : callable
        Maps an ``(n, 3)`` array of unit vectors to ``(n,)`` positive radii.
    name : str
        Label used in metadata.
    fd_step : float
        Central-difference step for the area element.
    """

    radial: Callable
    name: str = "star"
    fd_step: float = 1e-5
    validation_points: int = 2000

    def __post_init__(self):
        grid = fibonacci_grid(self.validation_points)
        vals = np.asarray(self.radial(grid), dtype=float)
        if vals.shape != (len(grid),) or not np.all(np.isfinite(vals)):
            raise ValueError("radial function must return one finite value per direction")
        if np.any(vals <= 0):
            raise ValueError("radial function must be strictly positive (star-shaped at 0)")

    def _radius(self, u):
        return np.asarray(self.radial(u), dtype=float)

    def residual(self, p):
        norm = np.linalg.norm(p, axis=1)
        return norm - self._radius(p / norm[:, None])

    def to_sphere(self, p):
        return p / np.linalg.norm(p, axis=1)[:, None]

    def from_sphere(self, s):
        return s * self._radius(s)[:, None]

    def jacobian(self, s):
        h = self.fd_step
        e1, e2 = _tangent_basis(s)

        def surf(u):
            u = u / np.linalg.norm(u, axis=1)[:, None]
            return self.from_sphere(u)

        d1 = (surf(s + h * e1) - surf(s - h * e1)) / (2 * h)
        d2 = (surf(s + h * e2) - surf(s - h * e2)) / (2 * h)
        return np.linalg.norm(np.cross(d1, d2), axis=1)

    @cached_property
    def _jac_max(self):
        # grid maximum plus a margin, since the peak may fall between nodes
        return 1.02 * float(self.jacobian(fibonacci_grid(20_000)).max())

    def jacobian_max(self):
        return self._jac_max

    def describe(self):
        return f"star:{self.name}"

    @classmethod
    def from_table(cls, directions, radii, bandwidth=None, name="table"):
        """Smooth radial function through tabulated ``(direction, radius)`` pairs.

        Radii are blended with weights ``exp((u . u_k - 1) / h)``; ``h``
        defaults to ``4 pi / n``, about the squared node spacing.
        """
        dirs = check_points(directions, tol=1e-6)
        vals = np.asarray(radii, dtype=float)
        if vals.shape != (len(dirs),) or len(dirs) < 4:
            raise DataError("star-shape table needs at least 4 rows of direction and radius")
        if np.any(vals <= 0) or not np.all(np.isfinite(vals)):
            raise DataError("star-shape radii must be positive and finite")
        h = FOUR_PI / len(dirs) if bandwidth is None else float(bandwidth)

        def radial(u):
            # shift by the max exponent per row so far-away rows cannot underflow to 0/0
            e = (np.atleast_2d(u) @ dirs.T - 1.0) / h
            w = np.exp(e - e.max(axis=1, keepdims=True))
            return (w @ vals) / w.sum(axis=1)

        return cls(radial, name=name)


def _as_surface_points(p):
    arr = np.asarray(p, dtype=float)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[1] != 3:
        raise DataError(f"surface points must have shape (n, 3), got {arr.shape}")
    return arr, single


def map_to_sphere(shape, p, tol=_SURFACE_TOL):
    """Map points lying on ``shape`` to the unit sphere.

    Raises
    ------
    DataError
        If a point is off the surface by more than ``tol``; the message
        carries the offending index and residual.
    """
    arr, single = _as_surface_points(p)
    res = shape.residual(arr)
    bad = np.flatnonzero(np.abs(res) > tol)
    if bad.size:
        raise DataError(
            f"point {bad[0]} is not on the surface {shape.describe()} "
            f"(residual {res[bad[0]]:.3e})"
        )
    out = shape.to_sphere(arr)
    out = out / np.linalg.norm(out, axis=1)[:, None]
    return out[0] if single else out


def inverse_map(shape, s):
    single = np.ndim(s) == 1
    out = shape.from_sphere(check_points(s, tol=1e-6))
    return out[0] if single else out


def surface_jacobian(shape, s):
    """Ratio of the surface area element to the sphere's at ``f^-1(s)``."""
    arr = np.asarray(s, dtype=float)
    single = arr.ndim == 1
    out = shape.jacobian(check_points(arr, tol=1e-6))
    return float(out[0]) if single else out


def surface_area(shape, n=20_000):
    """Total area of ``shape`` by equal-weight Fibonacci quadrature of the Jacobian."""
    if isinstance(shape, Sphere):
        return FOUR_PI
    grid = fibonacci_grid(n)
    return float(FOUR_PI * np.mean(shape.jacobian(grid)))


def solve_ellipsoid_axis(a, b, target_area, bracket=(1e-3, 1e3), n=20_000):
    """Third semi-axis ``c`` giving ``Ellipsoid(a, b, c)`` the requested area.

    Plain bisection on ``c``; stops once the area residual is below
    ``1e-6 * target_area``.
    """
    check_positive(target_area, "target_area")
    lo, hi = bracket

    def resid(c):
        return surface_area(Ellipsoid(a, b, c), n) - target_area

    f_lo, f_hi = resid(lo), resid(hi)
    if f_lo > 0 or f_hi < 0:
        raise ValueError(
            f"no root for target area {target_area} with c in [{lo}, {hi}] "
            f"(areas {f_lo + target_area:.6g} .. {f_hi + target_area:.6g})"
        )
    tol = 1e-6 * target_area
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = resid(mid)
        if abs(f_mid) < tol:
            return mid
        if f_mid < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# --------------------------------------------------------------------------
# Windows


@dataclass(frozen=True)
class FullSphere:
    is_full = True

    @property
    def area(self):
        return FOUR_PI

    def contains(self, points):
        return np.ones(len(np.atleast_2d(points)), dtype=bool)

    max_erosion = np.pi

    def erode(self, r):
        return self

    def describe(self):
        return "full"


@dataclass(frozen=True)
class Cap:
    """Closed cap ``{x : d(x, center) <= radius}``; a counting region, not a window."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", check_points(self.center)[0])

    @property
    def area(self):
        return cap_area(self.radius)

    def contains(self, points):
        pts = np.atleast_2d(points)
        return geodesic_distance(pts, self.center) <= self.radius


@dataclass(frozen=True)
class CapComplement:
    """Sphere minus the open cap of ``radius`` around ``center``."""

    center: np.ndarray
    radius: float
    is_full = False

    def __post_init__(self):
        object.__setattr__(self, "center", check_points(self.center)[0])
        if not 0 <= self.radius < np.pi:
            raise EmptyWindowError(f"cap radius {self.radius} leaves an empty window")

    @property
    def area(self):
        return FOUR_PI - cap_area(self.radius)

    def contains(self, points):
        pts = np.atleast_2d(points)
        return geodesic_distance(pts, self.center) > self.radius

    @property
    def max_erosion(self):
        """Supremum of the radii with a nonempty eroded window."""
        return np.pi - self.radius

    def erode(self, r):
        return CapComplement(self.center, self.radius + r)

    def describe(self):
        lon, lat = xyz_to_lonlat(self.center)
        return f"capcomp:{lon[0]!r},{lat[0]!r},{np.degrees(self.radius)!r}"

    def __eq__(self, other):
        return (
            isinstance(other, CapComplement)
            and np.array_equal(self.center, other.center)
            and self.radius == other.radius
        )

    __hash__ = None


@dataclass(frozen=True)
class LatitudeBandExclusion:
    """Sphere with the equatorial band ``|latitude| <= half_width`` removed."""

    half_width: float
    is_full = False

    def __post_init__(self):
        if not 0 <= self.half_width < np.pi / 2:
            raise EmptyWindowError(
                f"band half-width {self.half_width} leaves an empty window"
            )

    @property
    def area(self):
        return FOUR_PI * (1.0 - np.sin(self.half_width))

    def contains(self, points):
        pts = np.atleast_2d(points)
        lat = np.arctan2(pts[:, 2], np.hypot(pts[:, 0], pts[:, 1]))
        return np.abs(lat) > self.half_width

    @property
    def max_erosion(self):
        return np.pi / 2 - self.half_width

    def erode(self, r):
        return LatitudeBandExclusion(self.half_width + r)

    def describe(self):
        return f"band:{np.degrees(self.half_width)!r}"


def default_mask_resolution(n_pattern=0):
    return 4 * max(20_000, 50 * int(n_pattern))


@dataclass(frozen=True, eq=False)
class GridMask:
    """Window given by membership flags on a grid of nodes (nearest-node lookup).

    Each node stands for an equal share of the sphere, so Fibonacci nodes are
    the intended input.
    """

    nodes: np.ndarray
    inside: np.ndarray
    is_full = False

    def __post_init__(self):
        nodes = check_points(self.nodes)
        inside = np.asarray(self.inside, dtype=bool)
        if inside.shape != (len(nodes),):
            raise ValueError("inside flags must match the number of nodes")
        if not inside.any():
            raise EmptyWindowError("grid mask has no interior nodes")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "inside", inside)

    @classmethod
    def from_predicate(cls, predicate, n_nodes=None):
        """Rasterize any ``contains``-style predicate onto a Fibonacci grid."""
        nodes = fibonacci_grid(n_nodes or default_mask_resolution())
        return cls(nodes, np.asarray(predicate(nodes), dtype=bool))

    @cached_property
    def _tree(self):
        return cKDTree(self.nodes)

    @cached_property
    def _complement_distance(self):
        # geodesic distance from each node to the nearest outside node
        out = self.nodes[~self.inside]
        if len(out) == 0:
            return np.full(len(self.nodes), np.inf)
        chord, _ = cKDTree(out).query(self.nodes)
        return 2.0 * np.arcsin(np.clip(chord / 2.0, 0.0, 1.0))

    @property
    def area(self):
        return FOUR_PI * float(np.mean(self.inside))

    def contains(self, points):
        pts = np.atleast_2d(points)
        _, idx = self._tree.query(pts)
        return self.inside[idx]

    @property
    def max_erosion(self):
        return float(self._complement_distance[self.inside].max())

    def erode(self, r):
        keep = self.inside & (self._complement_distance > r)
        if not keep.any():
            raise EmptyWindowError(f"erosion by r={r} empties the grid mask")
        return GridMask(self.nodes, keep)

    def describe(self):
        return f"gridmask:{len(self.nodes)}:{int(self.inside.sum())}"


def erode_window(window, r):
    """Erosion ``W (-) r``: points whose r-ball lies inside ``window``.

    Raises
    ------
    EmptyWindowError
        If nothing is left after erosion.
    """
    if not 0 <= r <= np.pi:
        raise ValueError("erosion radius must lie in [0, pi]")
    return window.erode(float(r))
