"""Functional summary statistics and independence tests for multi-type
point patterns on the sphere and on surfaces mapped to it."""

__version__ = "0.1.0"

from ._validation import DataError, EmptyWindowError, NumericalError
from .geom import (
    CapComplement,
    Ellipsoid,
    FullSphere,
    GridMask,
    LatitudeBandExclusion,
    Sphere,
    StarShape,
)
from .intensity import (
    AnalyticIntensity,
    ConstantIntensity,
    GridIntensity,
    HomogeneousIntensity,
    KernelIntensity,
)
from .pattern import MarkedPattern
from .summaries import CrossSummary, SummaryCurve, cross_summaries
from .infer import IndependenceTest, TestConfig, run_independence_test

__all__ = [
    "__version__",
    "DataError",
    "EmptyWindowError",
    "NumericalError",
    "FullSphere",
    "CapComplement",
    "LatitudeBandExclusion",
    "GridMask",
    "Sphere",
    "Ellipsoid",
    "StarShape",
    "ConstantIntensity",
    "GridIntensity",
    "AnalyticIntensity",
    "HomogeneousIntensity",
    "KernelIntensity",
    "MarkedPattern",
    "SummaryCurve",
    "CrossSummary",
    "cross_summaries",
    "IndependenceTest",
    "TestConfig",
    "run_independence_test",
]
