import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from spheremark.pattern import MarkedPattern

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def random_sphere(rng, n):
    g = rng.standard_normal((n, 3))
    return g / np.linalg.norm(g, axis=1)[:, None]


def random_pattern(rng, n1, n2, window=None, labels=("a", "b")):
    """Two-mark pattern with uniform locations (restricted to ``window``)."""
    pts = []
    while len(pts) < n1 + n2:
        p = random_sphere(rng, 4 * (n1 + n2) + 4)
        if window is not None:
            p = p[window.contains(p)]
        pts.extend(p)
    pts = np.array(pts[: n1 + n2]).reshape(-1, 3)
    marks = [labels[0]] * n1 + [labels[1]] * n2
    return MarkedPattern(pts, marks, mark_set=labels, window=window)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
