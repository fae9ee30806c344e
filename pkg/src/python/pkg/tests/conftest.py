"""Shared fixtures: the synthetic chair collection, its model and a camera."""

from typing import Dict, Tuple

import numpy as np
import pytest

from objslam.data.chairs import CHAIR_KEYPOINTS, generate_chairs
from objslam.fit.observation import KeypointObservation
from objslam.geometry.camera import CameraIntrinsics, project_points
from objslam.geometry.lie import Pose3, relative_pose, rot_y, so3_exp, twist_exp
from objslam.graph.factors import FactorGraph, VariableId, object_var, robot_var
from objslam.models.category import (
    CategoryModel,
    ShapeParams,
    build_category_model,
    shape_points,
)
from objslam.sim.trajectory import camera_pose


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long Monte-Carlo acceptance runs")


# ── Helpers ──────────────────────────────────────────────────────────────


def random_pose(rng: np.random.Generator, scale: float = 1.0) -> Pose3:
    """Uniform random axis, angle below pi, Gaussian translation."""
    axis = rng.standard_normal(3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0.0, np.pi - 1e-3)
    return Pose3(so3_exp(angle * axis), scale * rng.standard_normal(3))


def object_in_camera(
    yaw: float, x: float, depth: float, height: float = 1.0, pitch: float = 0.0
) -> Pose3:
    """Upright object on the ground at (x, depth), camera at the origin facing +z."""
    camera = camera_pose(0.0, 0.0, 0.0, height, pitch)
    return camera.compose(Pose3(rot_y(yaw), np.array([x, 0.0, depth])))


def render(
    m: CategoryModel,
    shape: ShapeParams,
    pose: Pose3,
    k: CameraIntrinsics,
    frame: int = 0,
) -> KeypointObservation:
    """Noiseless observation with every keypoint visible."""
    uv, valid = project_points(pose.transform(shape_points(m, shape.coeffs)), k)
    assert valid.all()
    return KeypointObservation(frame=frame, keypoints=uv, visibility=np.ones(len(uv), bool))


def pose_graph(
    rng: np.random.Generator,
    frames: int = 6,
    objects: int = 3,
    noise: float = 0.0,
    loop: bool = False,
) -> Tuple[FactorGraph, Dict[VariableId, Pose3]]:
    """Random robot and object poses, a prior on the first frame, every object seen
    from every frame. `noise` perturbs each measurement by a right-multiplied twist."""

    def measured(pose: Pose3) -> Pose3:
        if noise == 0.0:
            return pose
        return pose.compose(twist_exp(noise * rng.standard_normal(6)))

    robots = [random_pose(rng, 2.0) for _ in range(frames)]
    landmarks = [random_pose(rng, 3.0) for _ in range(objects)]
    graph = FactorGraph()
    truth: Dict[VariableId, Pose3] = {}
    for i, t in enumerate(robots):
        truth[graph.add_variable(robot_var(i))] = t
    for j, t in enumerate(landmarks):
        truth[graph.add_variable(object_var(j))] = t

    graph.add_prior(robot_var(0), robots[0])
    for i in range(1, frames):
        graph.add_rel_pose_factor(
            robot_var(i - 1), robot_var(i), measured(relative_pose(robots[i - 1], robots[i]))
        )
    if loop:
        graph.add_rel_pose_factor(
            robot_var(frames - 1), robot_var(0), measured(relative_pose(robots[-1], robots[0]))
        )
    for i, t in enumerate(robots):
        for j, o in enumerate(landmarks):
            graph.add_object_factor(robot_var(i), object_var(j), measured(t.compose(o)))
    return graph, truth


# ── Fixtures ─────────────────────────────────────────────────────────────


@pytest.fixture(scope="session")
def chairs():
    return generate_chairs(250, seed=0)


@pytest.fixture(scope="session")
def model(chairs):
    return build_category_model(chairs, keypoint_names=CHAIR_KEYPOINTS)


@pytest.fixture(scope="session")
def intrinsics():
    return CameraIntrinsics(fx=500.0, fy=500.0, cx=320.0, cy=240.0)
