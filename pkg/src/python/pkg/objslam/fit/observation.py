"""Observation, configuration and estimate types for object fitting."""

from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np

from objslam.errors import ConfigError, DimensionMismatch
from objslam.geometry.lie import Pose3
from objslam.models.category import ShapeParams

__all__ = ["FitConfig", "KeypointObservation", "ObjectEstimate"]


@dataclass(frozen=True, eq=False)
class KeypointObservation:
    """2D keypoints of one detected object in one frame.

    Invisible keypoints carry no information; their pixel values are never read and
    may be NaN.
    """

    frame: int
    keypoints: np.ndarray
    visibility: np.ndarray
    confidence: Optional[np.ndarray] = None
    track_id: Optional[int] = None

    def __post_init__(self) -> None:
        kps = np.array(self.keypoints, dtype=float)
        vis = np.array(self.visibility, dtype=bool).reshape(-1)
        if kps.ndim != 2 or kps.shape[1] != 2 or kps.shape[0] != vis.size:
            raise DimensionMismatch(
                f"keypoints {kps.shape} and visibility {vis.shape} must be (K, 2) and (K,)"
            )
        if self.confidence is None:
            conf = np.ones(vis.size)
        else:
            conf = np.array(self.confidence, dtype=float).reshape(-1)
        if conf.shape != vis.shape:
            raise DimensionMismatch(f"confidence {conf.shape} does not match {vis.size} keypoints")
        if np.any(conf[vis] < 0.0) or np.any(conf[vis] > 1.0):
            raise ValueError("keypoint confidences must lie in [0, 1]")
        if not np.all(np.isfinite(kps[vis])):
            raise ValueError("visible keypoints must be finite")
        for arr in (kps, vis, conf):
            arr.setflags(write=False)
        object.__setattr__(self, "keypoints", kps)
        object.__setattr__(self, "visibility", vis)
        object.__setattr__(self, "confidence", conf)

    @property
    def num_keypoints(self) -> int:
        return self.visibility.size

    @property
    def num_visible(self) -> int:
        return int(self.visibility.sum())

    def with_track(self, track_id: int) -> "KeypointObservation":
        return replace(self, track_id=track_id)


@dataclass(frozen=True)
class FitConfig:
    """Settings for the pose/shape reprojection fit.

    Args:
        regularizer_weight (float): w in w * |coeffs|^2; None means 1 / mean(eigenvalues)
        max_alternations (int): pose/shape alternation cap
        max_iterations (int): damped Gauss-Newton iterations per stage
        tolerance (float): stop when the relative cost decrease drops below this
        kernel (str): "huber" or "quadratic"
        huber_width (float): Huber threshold on the pixel residual norm
        azimuth_seeds (int): evenly spaced yaw hypotheses tried at initialization
        refine_seeds (int): best hypotheses that are fully refined
        min_visible (int): keypoints needed before a pose is attempted
        joint_refine (bool): polish pose and shape together after alternating
        initial_damping (float): starting Marquardt damping factor
    """

    regularizer_weight: Optional[float] = None
    max_alternations: int = 10
    max_iterations: int = 50
    tolerance: float = 1e-6
    kernel: str = "huber"
    huber_width: float = 5.0
    azimuth_seeds: int = 8
    refine_seeds: int = 1
    min_visible: int = 4
    joint_refine: bool = True
    initial_damping: float = 1e-3

    def __post_init__(self) -> None:
        if self.regularizer_weight is not None and self.regularizer_weight < 0:
            raise ConfigError(f"regularizer_weight must be >= 0, got {self.regularizer_weight}")
        for name in ("max_alternations", "max_iterations", "azimuth_seeds", "refine_seeds"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.min_visible < 4:
            raise ConfigError(f"min_visible must be at least 4, got {self.min_visible}")
        if not (self.tolerance > 0 and self.huber_width > 0 and self.initial_damping > 0):
            raise ConfigError("tolerance, huber_width and initial_damping must be positive")
        if self.kernel not in ("huber", "quadratic"):
            raise ConfigError(f"unknown robust kernel {self.kernel!r}")


@dataclass(frozen=True, eq=False)
class ObjectEstimate:
    """Object-in-camera pose and shape with the cost that produced them."""

    pose: Pose3
    shape: ShapeParams
    cost: float = 0.0
    converged: bool = False
    alternations: int = 0
    history: Tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if not self.cost >= 0.0:
            raise ValueError(f"cost must be non-negative, got {self.cost}")
