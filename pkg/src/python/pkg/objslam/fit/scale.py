"""Absolute scale from ground-contact keypoints and the known camera height."""

import logging
from typing import Optional

import numpy as np

from objslam.errors import GroundPlaneDegenerate
from objslam.geometry.camera import CameraIntrinsics, backproject_to_ground

__all__ = ["ground_depths", "recover_scale"]

logger = logging.getLogger(__name__)


def ground_depths(
    pixels: np.ndarray, k: CameraIntrinsics, height: float, pitch: float
) -> np.ndarray:
    """Distance along each pixel ray to the ground plane; NaN where the ray misses it."""
    points, valid = backproject_to_ground(pixels, k, height, pitch)
    depths = np.full(len(points), np.nan)
    depths[valid] = np.linalg.norm(points[valid], axis=1)
    return depths


def recover_scale(
    pixels: np.ndarray,
    k: CameraIntrinsics,
    height: float,
    pitch: float,
    unscaled_depths: Optional[np.ndarray] = None,
) -> float:
    """Metric-to-unscaled depth ratio over ground-contact keypoints.

    Args:
        pixels (ndarray): (N, 2) ground-contact keypoints
        k (CameraIntrinsics): intrinsics
        height (float): camera height above the ground (m)
        pitch (float): downward tilt of the optical axis (rad)
        unscaled_depths (ndarray): the same points' depths in the up-to-scale
            reconstruction; ones by default, which returns the mean metric depth

    Returns:
        float

    Raises:
        GroundPlaneDegenerate: height <= 0 or no ray meets the ground plane
    """
    pixels = np.atleast_2d(np.asarray(pixels, dtype=float))
    if unscaled_depths is None:
        unscaled = np.ones(len(pixels))
    else:
        unscaled = np.asarray(unscaled_depths, dtype=float).reshape(-1)
    if unscaled.shape != (len(pixels),):
        raise ValueError(f"{unscaled.shape} unscaled depths for {len(pixels)} pixels")

    depths = ground_depths(pixels, k, height, pitch)
    valid = np.isfinite(depths) & (unscaled > 0.0)
    if not valid.any():
        raise GroundPlaneDegenerate("no keypoint ray intersects the ground plane")
    if not valid.all():
        logger.warning(f"Ignoring {int((~valid).sum())} keypoints whose rays miss the ground")
    return float(np.mean(depths[valid] / unscaled[valid]))
