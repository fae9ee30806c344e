"""Lie-group transforms and the camera model."""

from objslam.geometry.camera import (  # noqa: F401
    CameraIntrinsics,
    backproject_to_ground,
    project,
    project_points,
    projection_jacobian,
)
from objslam.geometry.lie import (  # noqa: F401
    Pose3,
    Twist6,
    compose,
    inverse,
    relative_pose,
    se3_exp,
    se3_log,
)
