"""Pinhole camera model and ground-plane backprojection.

Camera frame: x right, y down, z forward. The ground plane sits `height` metres
below the optical centre; `pitch` tilts the optical axis down towards it.
"""

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from objslam.errors import BehindCamera, GroundPlaneDegenerate

__all__ = [
    "DEPTH_EPSILON",
    "RAY_EPSILON",
    "CameraIntrinsics",
    "backproject_to_ground",
    "down_vector",
    "project",
    "project_points",
    "projection_jacobian",
]

# Points closer than this (m) to the image plane are not projected
DEPTH_EPSILON: float = 1e-6

# Rays whose downward component is below this are treated as parallel to the ground
RAY_EPSILON: float = 1e-6


@dataclass(frozen=True)
class CameraIntrinsics:
    """Focal lengths and principal point, all in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self) -> None:
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def rays(self, pixels: np.ndarray) -> np.ndarray:
        """Unnormalised viewing rays (x, y, 1) for an (N, 2) pixel array."""
        pixels = np.atleast_2d(np.asarray(pixels, dtype=float))
        return np.column_stack(
            [
                (pixels[:, 0] - self.cx) / self.fx,
                (pixels[:, 1] - self.cy) / self.fy,
                np.ones(len(pixels)),
            ]
        )


def project(p_cam: np.ndarray, k: CameraIntrinsics) -> np.ndarray:
    """Project a camera-frame point: (fx X/Z + cx, fy Y/Z + cy).

    Raises:
        BehindCamera: Z <= DEPTH_EPSILON
    """
    x, y, z = np.asarray(p_cam, dtype=float).reshape(3)
    if not z > DEPTH_EPSILON:
        raise BehindCamera(f"point depth {z} is not in front of the camera")
    return np.array([k.fx * x / z + k.cx, k.fy * y / z + k.cy])


def project_points(points: np.ndarray, k: CameraIntrinsics) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorised projection of an (N, 3) array.

    Returns:
        (uv, valid) where uv is (N, 2) and valid marks points in front of the
        camera; invalid rows of uv are NaN.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    z = points[:, 2]
    valid = z > DEPTH_EPSILON
    uv = np.full((len(points), 2), np.nan)
    zv = z[valid]
    uv[valid, 0] = k.fx * points[valid, 0] / zv + k.cx
    uv[valid, 1] = k.fy * points[valid, 1] / zv + k.cy
    return uv, valid


def projection_jacobian(points: np.ndarray, k: CameraIntrinsics) -> np.ndarray:
    """d(uv)/d(p_cam) for each point, shape (N, 2, 3) (or (2, 3) for one point)."""
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    inv_z = 1.0 / z
    jac = np.zeros((len(pts), 2, 3))
    jac[:, 0, 0] = k.fx * inv_z
    jac[:, 0, 2] = -k.fx * x * inv_z * inv_z
    jac[:, 1, 1] = k.fy * inv_z
    jac[:, 1, 2] = -k.fy * y * inv_z * inv_z
    return jac[0] if single else jac


def down_vector(pitch: float) -> np.ndarray:
    """World 'down' expressed in a camera pitched down by `pitch` radians."""
    return np.array([0.0, math.cos(pitch), math.sin(pitch)])


def backproject_to_ground(
    pixels: np.ndarray, k: CameraIntrinsics, height: float, pitch: float = 0.0
) -> Tuple[np.ndarray, np.ndarray]:
    """Intersect pixel rays with the ground plane.

    Args:
        pixels (ndarray): (N, 2) image points
        k (CameraIntrinsics): intrinsics
        height (float): camera height above the ground (m)
        pitch (float): downward tilt of the optical axis (rad)

    Returns:
        (points, valid): (N, 3) camera-frame intersections and a mask of rays that
        actually hit the ground in front of the camera; invalid rows are NaN.

    Raises:
        GroundPlaneDegenerate: height <= 0
    """
    if not height > 0:
        raise GroundPlaneDegenerate(f"camera height must be positive, got {height}")
    rays = k.rays(pixels)
    down = rays @ down_vector(pitch)
    valid = down > RAY_EPSILON
    points = np.full(rays.shape, np.nan)
    points[valid] = rays[valid] * (height / down[valid])[:, None]
    return points, valid
