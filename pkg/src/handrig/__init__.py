"""Multi-view hand keypoint annotation, triangulation and evaluation toolkit."""

from . import (
    dataset_io,
    geometry,
    heatmap,
    objectives,
    pose,
    synthrig,
    triangulation,
)

__version__ = "0.1.0"

__all__ = [
    "dataset_io",
    "geometry",
    "heatmap",
    "objectives",
    "pose",
    "synthrig",
    "triangulation",
]
