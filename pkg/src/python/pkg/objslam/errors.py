"""Error types raised across the package.

Input problems derive from ValueError, solver failures from RuntimeError, so callers
can catch either family without importing this module.
"""

__all__ = [
    "ObjSlamError",
    "AngleAtPi",
    "BehindCamera",
    "ConfigError",
    "DimensionMismatch",
    "DisconnectedGraph",
    "Diverged",
    "DuplicateId",
    "EmptyIndex",
    "FileFormatError",
    "GaugeUnfixed",
    "GroundPlaneDegenerate",
    "InconsistentK",
    "InsufficientInstances",
    "MissingCorrespondence",
    "NotApplicable",
    "Underconstrained",
    "UnknownVariable",
]


class ObjSlamError(Exception):
    """Base class for every error raised by objslam."""


# Input errors -----------------------------------------------------------------


class AngleAtPi(ObjSlamError, ValueError):
    """Rotation angle too close to pi for a unique logarithm."""


class BehindCamera(ObjSlamError, ValueError):
    """Point depth is below the projection epsilon."""


class ConfigError(ObjSlamError, ValueError):
    """Invalid or unknown configuration value."""


class DimensionMismatch(ObjSlamError, ValueError):
    """Array shapes disagree with the category model."""


class DuplicateId(ObjSlamError, ValueError):
    """Variable id already present in the graph."""


class EmptyIndex(ObjSlamError, ValueError):
    """Retrieval against an index with no entries."""


class FileFormatError(ObjSlamError, ValueError):
    """A model, scenario, graph or index file could not be parsed."""


class GroundPlaneDegenerate(ObjSlamError, ValueError):
    """Ray parallel to the ground plane, or camera height not positive."""


class InconsistentK(ObjSlamError, ValueError):
    """Keypoint sets with differing keypoint counts."""


class InsufficientInstances(ObjSlamError, ValueError):
    """Fewer training instances than PCA needs."""


class MissingCorrespondence(ObjSlamError, ValueError):
    """Estimated object without a ground-truth correspondence."""


class Underconstrained(ObjSlamError, ValueError):
    """Too few visible keypoints to fit a pose."""


class UnknownVariable(ObjSlamError, ValueError):
    """Factor references a variable that is not in the graph."""


# Solver errors ----------------------------------------------------------------


class Diverged(ObjSlamError, RuntimeError):
    """Optimizer produced a non-finite cost or state."""


class GaugeUnfixed(ObjSlamError, RuntimeError):
    """Some optimized variable is not tied to a prior."""


class DisconnectedGraph(ObjSlamError, RuntimeError):
    """Chordal initialization found variables unreachable from every prior."""


# Metric availability ----------------------------------------------------------


class NotApplicable(ObjSlamError):
    """Metric undefined for this run (e.g. drift on an open trajectory)."""
