"""Multi-type point patterns on the unit sphere."""

import numpy as np
from scipy.spatial import cKDTree

from ._validation import DataError, check_points, check_rotation
from .geom import FullSphere, map_to_sphere

__all__ = [
    "MarkedPattern",
    "count",
    "mark_fraction",
    "split_components",
    "map_pattern_to_sphere",
    "rotate_pattern",
]

_DUP_TOL = 1e-12
_JITTER = 1e-9


def _frozen(a):
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


def _jitter_duplicates(points, seed=0):
    """Nudge coincident points apart by ~1e-9 radians in a tangent direction."""
    pts = points.copy()
    rng = np.random.default_rng(seed)
    for _ in range(10):
        pairs = cKDTree(pts).query_pairs(_DUP_TOL, output_type="ndarray")
        if len(pairs) == 0:
            return pts
        idx = np.unique(pairs[:, 1])
        step = rng.standard_normal((len(idx), 3))
        step -= np.sum(step * pts[idx], axis=1)[:, None] * pts[idx]
        step /= np.linalg.norm(step, axis=1)[:, None]
        moved = pts[idx] + _JITTER * step
        pts[idx] = moved / np.linalg.norm(moved, axis=1)[:, None]
    raise DataError("could not separate duplicate locations")


class MarkedPattern:
    """Finite set of marked locations observed in a spherical window.

    Parameters
    ----------
    points : array-like, shape (n, 3)
        Unit vectors.
    marks : sequence of str, length n
    mark_set : sequence of str, optional
        Ordered label set; defaults to the labels in order of appearance.
    window : window object, optional
        Observation window; :class:`~spheremark.geom.FullSphere` by default.
    source_shape, source_points : optional
        Surface and original surface coordinates when the pattern was mapped
        from a non-spherical shape.
    jitter_duplicates : bool
        Coincident locations are an error unless this is set, in which case
        they are separated by a 1e-9 radian jitter.

    Instances are immutable; every transform returns a new pattern.
    """

    def __init__(
        self,
        points,
        marks,
        mark_set=None,
        window=None,
        source_shape=None,
        source_points=None,
        *,
        jitter_duplicates=False,
        check_window=True,
        normalize=True,
    ):
        pts = check_points(points, tol=1e-6, normalize=normalize)
        marks = np.asarray([str(m) for m in marks], dtype=object)
        if len(marks) != len(pts):
            raise DataError(f"{len(pts)} points but {len(marks)} marks")
        if mark_set is None:
            mark_set = tuple(dict.fromkeys(marks.tolist()))
        else:
            mark_set = tuple(str(m) for m in mark_set)
            if len(set(mark_set)) != len(mark_set):
                raise DataError("mark_set contains repeated labels")
            unknown = set(marks.tolist()) - set(mark_set)
            if unknown:
                raise DataError(f"marks {sorted(unknown)} not in mark_set {list(mark_set)}")
        window = FullSphere() if window is None else window
        if check_window and len(pts):
            outside = np.flatnonzero(~window.contains(pts))
            if outside.size:
                raise DataError(f"point {outside[0]} lies outside the window")
        if len(pts) > 1:
            pairs = cKDTree(pts).query_pairs(_DUP_TOL, output_type="ndarray")
            if len(pairs):
                if not jitter_duplicates:
                    i, j = pairs[0]
                    raise DataError(f"points {i} and {j} coincide (pattern must be simple)")
                pts = _jitter_duplicates(pts)
        if source_points is not None:
            source_points = np.asarray(source_points, dtype=float)
            if source_points.shape != pts.shape:
                raise DataError("source_points must match points in shape")
            source_points = _frozen(source_points)
        self._points = _frozen(pts)
        self._marks = _frozen(marks)
        self.mark_set = mark_set
        self._index = {m: k for k, m in enumerate(mark_set)}
        self._codes = _frozen(np.array([self._index[m] for m in marks], dtype=int))
        self.window = window
        self.source_shape = source_shape
        self.source_points = source_points

    @property
    def points(self):
        return self._points

    @property
    def marks(self):
        return self._marks

    @property
    def codes(self):
        """Dense integer index of each mark within ``mark_set``."""
        return self._codes

    def __len__(self):
        return len(self._points)

    def __repr__(self):
        sizes = ", ".join(f"{m}={int(np.sum(self._codes == k))}" for k, m in enumerate(self.mark_set))
        return f"MarkedPattern(n={len(self)}, {sizes}, window={self.window.describe()})"

    def _check_labels(self, labels):
        if isinstance(labels, str):
            labels = (labels,)
        labels = tuple(str(m) for m in labels)
        unknown = [m for m in labels if m not in self._index]
        if unknown:
            raise DataError(
                f"unknown mark label(s) {unknown}; available: {list(self.mark_set)}"
            )
        return labels

    def mask(self, labels):
        labels = self._check_labels(labels)
        return np.isin(self._codes, [self._index[m] for m in labels])

    def component(self, label):
        """Locations of the points carrying ``label``."""
        return self._points[self.mask(label)]

    def _replace(self, **kw):
        args = dict(
            points=self._points,
            marks=self._marks,
            mark_set=self.mark_set,
            window=self.window,
            source_shape=self.source_shape,
            source_points=self.source_points,
        )
        args.update(kw)
        # rows already validated keep their exact bits
        return MarkedPattern(**args, check_window=False, normalize=False)

    def subset(self, keep):
        keep = np.asarray(keep)
        sp = None if self.source_points is None else self.source_points[keep]
        return self._replace(points=self._points[keep], marks=self._marks[keep], source_points=sp)

    @classmethod
    def concatenate(cls, patterns, mark_set=None):
        """Union of patterns sharing a window; marks are kept as given."""
        patterns = list(patterns)
        if not patterns:
            raise ValueError("nothing to concatenate")
        first = patterns[0]
        if mark_set is None:
            mark_set = tuple(dict.fromkeys(m for p in patterns for m in p.mark_set))
        pts = np.concatenate([p.points for p in patterns]) if patterns else np.zeros((0, 3))
        marks = np.concatenate([p.marks for p in patterns])
        if all(p.source_points is not None for p in patterns):
            sp = np.concatenate([p.source_points for p in patterns])
        else:
            sp = None
        return cls(
            pts,
            marks,
            mark_set=mark_set,
            window=first.window,
            source_shape=first.source_shape,
            source_points=sp,
            check_window=False,
        )


def count(pattern, region=None, marks=None):
    """Number of points with location in ``region`` and mark in ``marks``.

    ``region=None`` means the pattern's window; ``marks=None`` means all labels.
    """
    sel = np.ones(len(pattern), dtype=bool) if marks is None else pattern.mask(marks)
    if region is not None and len(pattern):
        sel &= region.contains(pattern.points)
    return int(np.sum(sel))


def mark_fraction(pattern, marks):
    """Plug-in estimate of the mark distribution, N(W x marks) / N(W x all)."""
    total = count(pattern, pattern.window)
    if total == 0:
        raise DataError("mark_fraction of an empty pattern is undefined")
    return count(pattern, pattern.window, marks) / total


def split_components(pattern):
    """One sub-pattern per mark label (order, window and shape preserved)."""
    return {m: pattern.subset(pattern.codes == k) for k, m in enumerate(pattern.mark_set)}


def map_pattern_to_sphere(surface_points, marks, shape, *, mark_set=None, window=None):
    """Push a pattern observed on ``shape`` onto the unit sphere.

    The original surface coordinates are retained on the result as
    ``source_points``. Only full-surface observation is supported, which maps
    to :class:`~spheremark.geom.FullSphere`.
    """
    if window is not None and not window.is_full:
        raise ValueError("only fully observed surfaces can be mapped")
    surf = np.asarray(surface_points, dtype=float).reshape(-1, 3)
    pts = map_to_sphere(shape, surf) if len(surf) else np.zeros((0, 3))
    return MarkedPattern(
        pts, marks, mark_set=mark_set, window=FullSphere(), source_shape=shape, source_points=surf
    )


def rotate_pattern(pattern, rotation, labels=None):
    """Apply ``rotation`` to every location (or only those with mark in ``labels``).

    Requires a fully observed sphere: rotating a partial window would move
    points outside it.
    """
    if not pattern.window.is_full:
        raise ValueError(
            "random rotation requires a pattern observed over the whole sphere"
        )
    R = check_rotation(rotation)
    pts = np.array(pattern.points)
    sel = slice(None) if labels is None else pattern.mask(labels)
    moved = pts[sel] @ R.T
    pts[sel] = moved / np.linalg.norm(moved, axis=1)[:, None]
    return pattern._replace(points=pts)
