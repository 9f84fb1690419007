"""Slow, loop-based reference implementations used as test oracles.

Written against the estimator formulas directly with scalar math, sharing
no code with the vectorized package kernels.
"""

import math

from spheremark.geom import EmptyWindowError


def dist(u, v):
    cx = u[1] * v[2] - u[2] * v[1]
    cy = u[2] * v[0] - u[0] * v[2]
    cz = u[0] * v[1] - u[1] * v[0]
    return math.atan2(math.sqrt(cx * cx + cy * cy + cz * cz), u[0] * v[0] + u[1] * v[1] + u[2] * v[2])


def _eroded(window, r):
    try:
        w = window.erode(r)
    except EmptyWindowError:
        return None
    return w


def k_sum(Xi, Xj, rho_i, rho_j, window, r):
    """Returns K(r) or None where the eroded window is empty."""
    w = _eroded(window, r)
    if w is None:
        return None
    total = 0.0
    for x, px in zip(Xi, rho_i):
        if not w.contains(x)[0]:
            continue
        for y, py in zip(Xj, rho_j):
            if dist(x, y) <= r:
                total += 1.0 / (px * py)
    return total / w.area


def one_minus_d(Xi, Xj, rho_i, rho_j, rho_bar_j, window, r):
    w = _eroded(window, r)
    if w is None:
        return None
    total = 0.0
    for x, px in zip(Xi, rho_i):
        if not w.contains(x)[0]:
            continue
        prod = 1.0
        for y, py in zip(Xj, rho_j):
            if dist(x, y) < r:
                prod *= 1.0 - rho_bar_j / py
        total += prod / px
    return total / w.area


def one_minus_f(nodes, Xj, rho_j, rho_bar_j, window, r):
    w = _eroded(window, r)
    if w is None:
        return None
    inside = [p for p in nodes if w.contains(p)[0]]
    if not inside:
        return None
    total = 0.0
    for p in inside:
        prod = 1.0
        for y, py in zip(Xj, rho_j):
            if dist(p, y) <= r:
                prod *= 1.0 - rho_bar_j / py
        total += prod
    return total / len(inside)
