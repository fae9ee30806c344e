"""Pose/shape alternation, multi-frame fitting and ground-plane initialization.

Usage:

    est = fit_observation(obs, model, k, cfg, height=1.0, pitch=0.25)
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from objslam.errors import Diverged, GroundPlaneDegenerate, Underconstrained
from objslam.fit.observation import FitConfig, KeypointObservation, ObjectEstimate
from objslam.fit.solver import COST_FLOOR, ReprojectionProblem, solve_stage
from objslam.geometry.camera import CameraIntrinsics, backproject_to_ground
from objslam.geometry.lie import Pose3, rot_x, rot_y
from objslam.models.category import CategoryModel, ShapeParams, ground_contact_indices

__all__ = [
    "MultiFrameEstimate",
    "fit_alternating",
    "fit_multiframe",
    "fit_observation",
    "initial_hypotheses",
    "initialize_estimate",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class MultiFrameEstimate:
    """One shared shape with the object pose in every frame (anchor first)."""

    poses: Tuple[Pose3, ...]
    shape: ShapeParams
    cost: float
    converged: bool
    alternations: int = 0
    history: Tuple[float, ...] = field(default_factory=tuple)


# Private functions ------------------------------------------------------------


def _alternate(
    problem: ReprojectionProblem, anchor: Pose3, coeffs: np.ndarray
) -> Tuple[Pose3, np.ndarray, bool, int, List[float]]:
    cfg = problem.cfg
    cost = problem.cost(anchor, coeffs)
    if not math.isfinite(cost):
        raise Diverged(f"initial estimate has non-finite cost ({cost})")

    history = [cost]
    converged = cost <= COST_FLOOR
    alternations = 0
    while not converged and alternations < cfg.max_alternations:
        alternations += 1
        posed = solve_stage(problem, anchor, coeffs, pose=True, shape=False)
        shaped = solve_stage(problem, posed.anchor, posed.coeffs, pose=False, shape=True)
        anchor, coeffs = shaped.anchor, shaped.coeffs

        previous = history[-1]
        if shaped.cost > previous:
            raise Diverged(f"alternation raised the cost from {previous} to {shaped.cost}")
        history.append(shaped.cost)
        if (previous - shaped.cost) / previous < cfg.tolerance or shaped.cost <= COST_FLOOR:
            converged = True

    if cfg.joint_refine and history[-1] > COST_FLOOR:
        joint = solve_stage(problem, anchor, coeffs, pose=True, shape=True)
        if joint.cost < history[-1]:
            anchor, coeffs = joint.anchor, joint.coeffs
            history.append(joint.cost)
        converged = converged or joint.converged

    return anchor, coeffs, converged, alternations, history


# Public API ------------------------------------------------------------------


def fit_multiframe(
    observations: Sequence[KeypointObservation],
    relative_poses: Sequence[Pose3],
    m: CategoryModel,
    k: CameraIntrinsics,
    cfg: FitConfig,
    init: ObjectEstimate,
) -> MultiFrameEstimate:
    """Fit one shape and one anchor-frame pose to a track's observations.

    Args:
        observations (list): the track's observations; the first is the anchor frame
        relative_poses (list): camera motion C_f from the anchor camera to frame f
            (identity first), e.g. relative_pose(T_anchor, T_f) for world->camera poses
        m (CategoryModel): category model
        k (CameraIntrinsics): intrinsics
        cfg (FitConfig): solver settings
        init (ObjectEstimate): starting estimate in the anchor frame

    Returns:
        MultiFrameEstimate with pose C_f * T_anchor for every frame

    Raises:
        Underconstrained: too few visible keypoints across all frames
        Diverged: non-finite cost
    """
    problem = ReprojectionProblem(observations, relative_poses, m, k, cfg)
    anchor, coeffs, converged, alternations, history = _alternate(
        problem, init.pose, np.array(init.shape.coeffs, dtype=float)
    )
    return MultiFrameEstimate(
        poses=tuple(problem.frame_poses(anchor)),
        shape=ShapeParams(coeffs),
        cost=history[-1],
        converged=converged,
        alternations=alternations,
        history=tuple(history),
    )


def fit_alternating(
    obs: KeypointObservation,
    m: CategoryModel,
    k: CameraIntrinsics,
    cfg: FitConfig,
    init: ObjectEstimate,
) -> ObjectEstimate:
    """Alternate pose and shape updates until the cost stalls, then polish jointly."""
    multi = fit_multiframe([obs], [Pose3.identity()], m, k, cfg, init)
    return ObjectEstimate(
        pose=multi.poses[0],
        shape=multi.shape,
        cost=multi.cost,
        converged=multi.converged,
        alternations=multi.alternations,
        history=multi.history,
    )


def initial_hypotheses(
    obs: KeypointObservation,
    m: CategoryModel,
    k: CameraIntrinsics,
    height: float,
    pitch: float = 0.0,
    cfg: Optional[FitConfig] = None,
) -> List[ObjectEstimate]:
    """Upright mean-shape poses for every azimuth seed, lowest cost first.

    The ground-contact keypoints are backprojected onto the ground plane to fix the
    translation; the yaw seeds are evenly spaced over the full circle.

    Raises:
        Underconstrained: fewer than cfg.min_visible visible keypoints
        GroundPlaneDegenerate: height <= 0, or no contact ray meets the ground
    """
    cfg = cfg or FitConfig()
    if obs.num_visible < cfg.min_visible:
        raise Underconstrained(f"{obs.num_visible} visible keypoints, need {cfg.min_visible}")
    if not height > 0:
        raise GroundPlaneDegenerate(f"camera height must be positive, got {height}")

    contact = [i for i in ground_contact_indices(m) if obs.visibility[i]]
    if not contact:
        # fall back to the lowest visible keypoint in the image
        visible = np.flatnonzero(obs.visibility)
        contact = [int(visible[np.argmax(obs.keypoints[visible, 1])])]
    contact = np.array(contact)

    ground, valid = backproject_to_ground(obs.keypoints[contact], k, height, pitch)
    if not valid.any():
        raise GroundPlaneDegenerate("no ground-contact keypoint ray meets the ground plane")
    centre = ground[valid].mean(axis=0)
    footprint = m.mean_points()[contact[valid]].mean(axis=0)

    problem = ReprojectionProblem([obs], [Pose3.identity()], m, k, cfg)
    coeffs = np.zeros(m.basis_size)
    tilt = rot_x(pitch)
    scored = []
    for j in range(cfg.azimuth_seeds):
        rotation = tilt @ rot_y(2.0 * math.pi * j / cfg.azimuth_seeds)
        pose = Pose3(rotation, centre - rotation @ footprint)
        scored.append((problem.cost(pose, coeffs), j, pose))
    scored.sort(key=lambda item: (item[0], item[1]))

    return [ObjectEstimate(pose, ShapeParams(coeffs), cost=cost) for cost, _, pose in scored]


def initialize_estimate(
    obs: KeypointObservation,
    m: CategoryModel,
    k: CameraIntrinsics,
    height: float,
    pitch: float = 0.0,
    cfg: Optional[FitConfig] = None,
) -> ObjectEstimate:
    """Best azimuth hypothesis: mean shape, upright, translation from the ground plane."""
    return initial_hypotheses(obs, m, k, height, pitch, cfg)[0]


def fit_observation(
    obs: KeypointObservation,
    m: CategoryModel,
    k: CameraIntrinsics,
    cfg: FitConfig,
    height: float,
    pitch: float = 0.0,
) -> ObjectEstimate:
    """Initialize and refine the cfg.refine_seeds best hypotheses; keep the lowest cost."""
    best: Optional[ObjectEstimate] = None
    failures = 0
    for init in initial_hypotheses(obs, m, k, height, pitch, cfg)[: cfg.refine_seeds]:
        if not math.isfinite(init.cost):
            continue
        try:
            est = fit_alternating(obs, m, k, cfg, init)
        except Diverged as exc:
            failures += 1
            logger.warning(f"Frame {obs.frame}: hypothesis refinement diverged: {exc}")
            continue
        if best is None or est.cost < best.cost:
            best = est
    if best is None:
        raise Diverged(f"frame {obs.frame}: no hypothesis could be refined ({failures} diverged)")
    return best
