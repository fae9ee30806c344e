"""Deterministic synthetic scenes: trajectory, chairs, odometry and keypoint detections.

Every random draw comes from `numpy.random.default_rng` (PCG64) seeded with
`[seed, stream]` or `[seed, stream, frame]`, one stream per concern, so changing
e.g. the keypoint noise never moves the objects.

Usage:

    cfg = scenario_presets()["seq1"]
    scenario = generate(cfg, model)
    measurements = scenario.measurements()
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from objslam.errors import ConfigError
from objslam.fit.observation import KeypointObservation
from objslam.geometry.camera import CameraIntrinsics, project_points
from objslam.geometry.lie import Pose3, relative_pose, rot_y, twist_exp
from objslam.models.category import CategoryModel, KeypointSet3D, ShapeParams, instantiate_shape
from objslam.sim.trajectory import (
    Path,
    l_turn_path,
    loop_path,
    path_clearance,
    rotate_in_place_path,
    sample_poses,
    straight_and_back_path,
)

__all__ = [
    "TRAJECTORIES",
    "MeasurementSet",
    "Scenario",
    "ScenarioConfig",
    "SimObject",
    "build_path",
    "generate",
    "perturb_odometry",
    "render_observations",
    "sample_odometry_noise",
    "scenario_presets",
]

# ------- Constants ------- #
TRAJECTORIES = ("loop", "straight-and-back", "rotate-in-place", "l-turn")

# RNG streams
SHAPE_STREAM = 0
PLACEMENT_STREAM = 1
ODOMETRY_STREAM = 2
KEYPOINT_STREAM = 3

# Fewer visible keypoints than this and a detection is not reported
MIN_EMITTED_KEYPOINTS = 4

# Object placement relative to the path
PLACEMENT_AHEAD = (2.5, 2.0, 3.0, 1.5, 3.5)
PLACEMENT_LATERAL = (0.6, 1.0, 1.4)
MIN_OBJECT_SPACING = 1.2
MIN_PATH_CLEARANCE = 0.5
RING_RADII = (2.2, 2.8)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything that determines a synthetic scenario.

    Angles are radians, lengths metres, image quantities pixels. For the loop
    `path_length` is the long side, for straight-and-back the out leg and for the
    L-turn the first leg; `second_length` and `turn_degrees` (left) only apply to the
    L-turn, `turn_radius` only to the loop.
    """

    seed: int = 0
    trajectory: str = "loop"
    num_poses: int = 60
    num_objects: int = 7
    height: float = 1.0
    pitch: float = 0.3
    fx: float = 500.0
    fy: float = 500.0
    cx: float = 320.0
    cy: float = 240.0
    image_width: int = 640
    image_height: int = 480
    keypoint_sigma: float = 0.0
    dropout: float = 0.0
    odometry_sigma_rot: float = 0.0
    odometry_sigma_trans: float = 0.0
    outlier_probability: float = 0.0
    outlier_magnitude: float = 20.0
    shape_scale: float = 1.0
    max_range: float = 6.0
    path_length: float = 4.0
    turn_radius: float = 1.0
    second_length: float = 4.2
    turn_degrees: float = 90.0

    def __post_init__(self) -> None:
        if self.trajectory not in TRAJECTORIES:
            raise ConfigError(f"unknown trajectory {self.trajectory!r}; use one of {TRAJECTORIES}")
        if self.num_poses < 2:
            raise ConfigError(f"num_poses must be at least 2, got {self.num_poses}")
        if self.num_objects < 0:
            raise ConfigError(f"num_objects must be >= 0, got {self.num_objects}")
        sigmas = (
            "keypoint_sigma",
            "odometry_sigma_rot",
            "odometry_sigma_trans",
            "outlier_magnitude",
            "shape_scale",
        )
        for name in sigmas:
            if not getattr(self, name) >= 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        for name in ("dropout", "outlier_probability"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {getattr(self, name)}")
        for name in ("height", "max_range", "path_length", "turn_radius", "second_length"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.image_width < 1 or self.image_height < 1:
            raise ConfigError("image size must be positive")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")
        try:
            self.intrinsics
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(self.fx, self.fy, self.cx, self.cy)

    @property
    def zero_parallax(self) -> bool:
        return self.trajectory == "rotate-in-place"

    def noiseless(self) -> "ScenarioConfig":
        """The same scene with every measurement noise source switched off."""
        return replace(
            self,
            keypoint_sigma=0.0,
            dropout=0.0,
            odometry_sigma_rot=0.0,
            odometry_sigma_trans=0.0,
            outlier_probability=0.0,
        )


@dataclass(frozen=True, eq=False)
class SimObject:
    """A ground-truth chair: object->world pose, shape and its keypoints."""

    label: int
    pose: Pose3
    shape: ShapeParams
    keypoints: KeypointSet3D

    @property
    def position(self) -> np.ndarray:
        return self.pose.translation


@dataclass(frozen=True, eq=False)
class MeasurementSet:
    """What a SLAM front-end would see: no ground truth beyond the first pose."""

    origin: Pose3
    odometry: Tuple[Pose3, ...]
    observations: Tuple[Tuple[KeypointObservation, ...], ...]
    intrinsics: CameraIntrinsics
    height: float
    pitch: float
    image_size: Tuple[int, int]
    zero_parallax: bool = False

    @property
    def num_frames(self) -> int:
        return len(self.odometry) + 1


@dataclass(frozen=True, eq=False)
class Scenario:
    config: ScenarioConfig
    robot_poses: Tuple[Pose3, ...]
    objects: Tuple[SimObject, ...]
    odometry: Tuple[Pose3, ...]
    observations: Tuple[Tuple[KeypointObservation, ...], ...]
    labels: Tuple[Tuple[int, ...], ...]

    @property
    def intrinsics(self) -> CameraIntrinsics:
        return self.config.intrinsics

    @property
    def height(self) -> float:
        return self.config.height

    @property
    def pitch(self) -> float:
        return self.config.pitch

    @property
    def image_size(self) -> Tuple[int, int]:
        return self.config.image_width, self.config.image_height

    @property
    def zero_parallax(self) -> bool:
        return self.config.zero_parallax

    @property
    def num_frames(self) -> int:
        return len(self.robot_poses)

    def measurements(self) -> MeasurementSet:
        """Measurement-only view; the first robot pose fixes the gauge."""
        return MeasurementSet(
            origin=self.robot_poses[0],
            odometry=self.odometry,
            observations=self.observations,
            intrinsics=self.intrinsics,
            height=self.height,
            pitch=self.pitch,
            image_size=self.image_size,
            zero_parallax=self.zero_parallax,
        )


# Private functions ------------------------------------------------------------


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, *stream])


def _place_along_path(path: Path, count: int) -> List[np.ndarray]:
    """Deterministic (x, z) object positions beside the path, kept apart from each other."""
    placed: List[np.ndarray] = []
    for o in range(count):
        x, z, psi = path.state((o + 0.5) / count * path.length)
        forward = np.array([math.sin(psi), math.cos(psi)])
        right = np.array([math.cos(psi), -math.sin(psi)])
        side = 1.0 if o % 2 == 0 else -1.0

        candidates = [
            np.array([x, z]) + ahead * forward + side * sign * lateral * right
            for ahead in PLACEMENT_AHEAD
            for lateral in PLACEMENT_LATERAL
            for sign in (1.0, -1.0)
        ]
        best, best_margin = candidates[0], -math.inf
        for c in candidates:
            spacing = min((float(np.linalg.norm(c - p)) for p in placed), default=math.inf)
            clearance = float(path_clearance(path, c)[0])
            margin = min(spacing - MIN_OBJECT_SPACING, clearance - MIN_PATH_CLEARANCE)
            if margin >= 0.0:
                best = c
                break
            if margin > best_margin:
                best, best_margin = c, margin
        placed.append(best)
    return placed


def _place_on_ring(count: int) -> List[np.ndarray]:
    spots = []
    for o in range(count):
        angle = 2.0 * math.pi * (o + 0.5) / count
        spots.append(RING_RADII[o % 2] * np.array([math.sin(angle), math.cos(angle)]))
    return spots


def _objects(cfg: ScenarioConfig, path: Path, m: CategoryModel) -> List[SimObject]:
    shapes = _rng(cfg.seed, SHAPE_STREAM).standard_normal((cfg.num_objects, m.basis_size))
    shapes *= cfg.shape_scale * np.sqrt(m.eigenvalues)
    yaws = _rng(cfg.seed, PLACEMENT_STREAM).uniform(0.0, 2.0 * math.pi, cfg.num_objects)

    if cfg.zero_parallax:
        spots = _place_on_ring(cfg.num_objects)
    else:
        spots = _place_along_path(path, cfg.num_objects)

    objects = []
    for o, ((x, z), coeffs, yaw) in enumerate(zip(spots, shapes, yaws)):
        shape = ShapeParams(coeffs)
        objects.append(
            SimObject(
                label=o,
                pose=Pose3(rot_y(float(yaw)), np.array([x, 0.0, z])),
                shape=shape,
                keypoints=instantiate_shape(m, shape),
            )
        )
    return objects


# Public API ------------------------------------------------------------------


def build_path(cfg: ScenarioConfig) -> Path:
    if cfg.trajectory == "loop":
        return loop_path(cfg.path_length, cfg.turn_radius)
    if cfg.trajectory == "straight-and-back":
        return straight_and_back_path(cfg.path_length)
    if cfg.trajectory == "rotate-in-place":
        return rotate_in_place_path()
    return l_turn_path(cfg.path_length, cfg.turn_degrees, cfg.second_length)


def sample_odometry_noise(n: int, sigma_rot: float, sigma_trans: float, seed: int) -> np.ndarray:
    """(n, 6) rotation-first twist noise with per-axis standard deviations."""
    scale = np.array([sigma_rot] * 3 + [sigma_trans] * 3)
    return _rng(seed, ODOMETRY_STREAM).standard_normal((n, 6)) * scale


def perturb_odometry(
    poses: Sequence[Pose3], sigma_rot: float, sigma_trans: float, seed: int
) -> List[Pose3]:
    """Noisy relative poses exp(eps) * T_{i+1} T_i^-1 between consecutive poses.

    Raises:
        ValueError: fewer than two poses
    """
    if len(poses) < 2:
        raise ValueError(f"odometry needs at least two poses, got {len(poses)}")
    noise = sample_odometry_noise(len(poses) - 1, sigma_rot, sigma_trans, seed)
    odometry = []
    for (a, b), eps in zip(zip(poses[:-1], poses[1:]), noise):
        rel = relative_pose(a, b)
        odometry.append(rel if not eps.any() else twist_exp(eps).compose(rel))
    return odometry


def render_observations(
    camera: Pose3,
    objects: Sequence[SimObject],
    m: CategoryModel,
    cfg: ScenarioConfig,
    frame: int,
) -> Tuple[List[KeypointObservation], List[int]]:
    """Keypoint detections of every object the camera sees in one frame.

    A keypoint is visible when it lies in front of the camera within max_range, both
    its exact and its noisy projection fall inside the image, and it was not dropped.
    Objects with fewer than 4 visible keypoints are not reported.

    Returns:
        (observations, labels) with the ground-truth object label of each observation
    """
    k = cfg.intrinsics
    rng = _rng(cfg.seed, KEYPOINT_STREAM, frame)
    width, height = cfg.image_width, cfg.image_height

    def inside(uv: np.ndarray) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return (uv[:, 0] >= 0) & (uv[:, 0] < width) & (uv[:, 1] >= 0) & (uv[:, 1] < height)

    observations, labels = [], []
    for obj in objects:
        n = m.num_keypoints
        noise = rng.standard_normal((n, 2)) * cfg.keypoint_sigma
        is_outlier = rng.random(n) < cfg.outlier_probability
        radius = cfg.outlier_magnitude * np.sqrt(rng.random(n))
        angle = 2.0 * math.pi * rng.random(n)
        dropped = rng.random(n) < cfg.dropout

        cam = camera.compose(obj.pose).transform(obj.keypoints.points)
        uv, front = project_points(cam, k)
        visible = front & (cam[:, 2] <= cfg.max_range) & inside(uv) & ~dropped

        observed = uv + noise if cfg.keypoint_sigma > 0 else uv.copy()
        disc = np.column_stack([radius * np.cos(angle), radius * np.sin(angle)])
        observed[is_outlier] = uv[is_outlier] + disc[is_outlier]
        visible &= inside(observed)

        if visible.sum() < MIN_EMITTED_KEYPOINTS:
            continue
        observed[~visible] = np.nan
        observations.append(
            KeypointObservation(frame=frame, keypoints=observed, visibility=visible)
        )
        labels.append(obj.label)
    return observations, labels


def generate(cfg: ScenarioConfig, m: CategoryModel) -> Scenario:
    """A full scenario; a pure function of (cfg, m)."""
    path = build_path(cfg)
    poses = sample_poses(path, cfg.num_poses, cfg.height, cfg.pitch)
    objects = _objects(cfg, path, m)
    odometry = perturb_odometry(poses, cfg.odometry_sigma_rot, cfg.odometry_sigma_trans, cfg.seed)

    observations, labels = [], []
    for frame, camera in enumerate(poses):
        obs, lab = render_observations(camera, objects, m, cfg, frame)
        observations.append(tuple(obs))
        labels.append(tuple(lab))

    detections = sum(len(obs) for obs in observations)
    logger.info(
        f"Generated {cfg.trajectory} scenario (seed {cfg.seed}): {len(poses)} poses, "
        f"{len(objects)} objects, {detections} detections"
    )
    return Scenario(
        config=cfg,
        robot_poses=tuple(poses),
        objects=tuple(objects),
        odometry=tuple(odometry),
        observations=tuple(observations),
        labels=tuple(labels),
    )


def scenario_presets(
    seed: int = 0, noise: Optional[Dict[str, float]] = None
) -> Dict[str, ScenarioConfig]:
    """Four named scenes mirroring a long loop, a small loop, a spin and an L-turn.

    `noise` overrides the shared measurement noise levels.
    """
    levels = dict(
        keypoint_sigma=1.0,
        dropout=0.05,
        odometry_sigma_rot=0.004,
        odometry_sigma_trans=0.01,
    )
    levels.update(noise or {})
    return {
        "seq1": ScenarioConfig(
            seed=seed,
            trajectory="loop",
            num_poses=120,
            num_objects=11,
            path_length=7.6,
            turn_radius=1.25,
            **levels,
        ),
        "seq2": ScenarioConfig(
            seed=seed,
            trajectory="loop",
            num_poses=60,
            num_objects=7,
            path_length=1.5,
            turn_radius=1.0,
            **levels,
        ),
        "seq3": ScenarioConfig(
            seed=seed,
            trajectory="rotate-in-place",
            num_poses=72,
            num_objects=9,
            **{**levels, "odometry_sigma_trans": 0.0},
        ),
        "seq4": ScenarioConfig(
            seed=seed,
            trajectory="l-turn",
            num_poses=64,
            num_objects=7,
            path_length=2.0,
            turn_degrees=90.0,
            second_length=4.2,
            **levels,
        ),
    }
