"""Input validation helpers shared across the package."""

import numbers

import numpy as np
from sklearn.utils import check_random_state as _sk_check_random_state


class DataError(ValueError):
    """Raised when input data (points, marks, files) is malformed."""


class EmptyWindowError(ValueError):
    """Raised when an eroded window has no area left."""


class NumericalError(ArithmeticError):
    """Raised when a numeric routine cannot produce a valid result."""


def check_points(points, *, tol=1e-6, normalize=True, name="points"):
    """Validate an array of unit vectors and return it as an (n, 3) float array.

    Parameters
    ----------
    points : array-like, shape (n, 3) or (3,)
    tol : float
        Maximum allowed deviation of the norm from one.
    normalize : bool
        If True, rescale rows to exactly unit length after the check.
    """
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.size == 0:
        return np.zeros((0, 3))
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise DataError(f"{name} must have shape (n, 3), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite values")
    norms = np.linalg.norm(arr, axis=1)
    if tol is not None:
        bad = np.flatnonzero(np.abs(norms - 1.0) > tol)
        if bad.size:
            raise DataError(
                f"{name}[{bad[0]}] has norm {norms[bad[0]]!r}, "
                f"not within {tol} of 1"
            )
    if normalize:
        arr = arr / norms[:, None]
    return arr


def check_radii(r, *, upper=np.pi):
    """Validate a radius grid: 1-d, strictly increasing, inside [0, upper]."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if r.ndim != 1 or r.size == 0:
        raise ValueError("radius grid must be a non-empty 1-d sequence")
    if r[0] < 0 or r[-1] > upper + 1e-12:
        raise ValueError(f"radii must lie in [0, {upper}]")
    if np.any(np.diff(r) <= 0):
        raise ValueError("radius grid must be strictly increasing")
    return np.minimum(r, upper)


def check_rotation(R, tol=1e-10):
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got {R.shape}")
    if not np.allclose(R.T @ R, np.eye(3), atol=tol, rtol=0):
        raise ValueError("matrix is not orthogonal")
    if abs(np.linalg.det(R) - 1.0) > tol:
        raise ValueError("matrix has determinant != +1")
    return R


def check_positive(value, name):
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return float(value)


def check_random_state(seed):
    """Turn ``seed`` into a :class:`numpy.random.Generator`.

    Accepts None, an int, a sequence of ints, a SeedSequence, a Generator,
    or a legacy RandomState (the latter is converted through sklearn's
    helper and reseeded deterministically).
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, (numbers.Integral, np.integer)):
        return np.random.default_rng(seed)
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    if isinstance(seed, (list, tuple)) and all(isinstance(s, (numbers.Integral, np.integer)) for s in seed):
        return np.random.default_rng(seed)
    rs = _sk_check_random_state(seed)
    return np.random.default_rng(rs.randint(0, 2**31 - 1))
