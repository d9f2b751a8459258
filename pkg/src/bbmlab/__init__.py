"""Numerical laboratory for nonlocal BBM-type functionals on finite metric measure spaces."""

from bbmlab.mm_space import (
    Interval,
    MetricError,
    MetricMeasureSpace,
    SpaceGenerator,
    SubsetRef,
    build_space,
    space_from_json,
)

__all__ = [
    "Interval",
    "MetricError",
    "MetricMeasureSpace",
    "SpaceGenerator",
    "SubsetRef",
    "build_space",
    "space_from_json",
]

__version__ = "0.1.0"
