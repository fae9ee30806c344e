"""Robust keypoint reprojection cost and its damped Gauss-Newton minimizer.

For one object seen in frames f = 0..F-1 the cost is

    sum_f sum_k c_k * rho(|pi(T_f * S_k(coeffs)) - s_fk|^2) + w * |coeffs|^2

where T_f = C_f * T_a is the object pose in frame f, derived from the pose T_a in the
anchor frame and the known camera motion C_f (identity for the anchor itself), and
rho is either the identity or a Huber kernel on the squared pixel error.

Pose increments are right-multiplicative (T_a <- T_a exp(delta)); the Huber kernel is
handled by iteratively reweighted least squares, so each accepted step strictly lowers
the true robust cost.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from objslam.errors import Diverged, DimensionMismatch, Underconstrained
from objslam.fit.observation import FitConfig, KeypointObservation, ObjectEstimate
from objslam.geometry.camera import (
    DEPTH_EPSILON,
    CameraIntrinsics,
    project_points,
    projection_jacobian,
)
from objslam.geometry.lie import Pose3, se3_exp
from objslam.models.category import CategoryModel, ShapeParams, shape_points

__all__ = [
    "ReprojectionProblem",
    "StageResult",
    "fit_pose",
    "fit_shape",
    "keypoint_residuals",
    "marginal_pose_information",
    "regularizer_weight",
    "reprojection_cost",
    "robust_cost",
    "solve_stage",
]

# ------- Constants ------- #
# A cost at or below this is an exact fit
COST_FLOOR: float = 1e-24

# Increments below this norm end a stage
STEP_TOL: float = 1e-12

MAX_DAMPING: float = 1e10
MIN_DAMPING: float = 1e-12

logger = logging.getLogger(__name__)


# Private functions ------------------------------------------------------------


def _kernel_terms(sq: np.ndarray, cfg: FitConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Robust cost and IRLS weight for each squared residual norm."""
    if cfg.kernel == "quadratic":
        return sq, np.ones_like(sq)
    delta = cfg.huber_width
    inlier = sq <= delta * delta
    root = np.sqrt(np.where(inlier, 1.0, sq))
    cost = np.where(inlier, sq, 2.0 * delta * root - delta * delta)
    weight = np.where(inlier, 1.0, delta / root)
    return cost, weight


def _check_model(obs: KeypointObservation, m: CategoryModel) -> None:
    if obs.num_keypoints != m.num_keypoints:
        raise DimensionMismatch(
            f"observation has {obs.num_keypoints} keypoints, model {m.num_keypoints}"
        )


def _frame_terms(
    pose: Pose3,
    coeffs: np.ndarray,
    obs: KeypointObservation,
    m: CategoryModel,
    k: CameraIntrinsics,
    want_jacobians: bool = True,
) -> Tuple[np.ndarray, Optional[np.ndarray], Optional[np.ndarray], bool]:
    """Residuals (n, 2) over visible keypoints plus pose (n, 2, 6) and shape (n, 2, B) Jacobians.

    The last entry is False when a visible keypoint falls behind the camera.
    """
    pts = shape_points(m, coeffs)
    cam = pose.transform(pts)
    uv, _ = project_points(cam, k)

    vis = obs.visibility
    cam_v = cam[vis]
    if np.any(cam_v[:, 2] <= DEPTH_EPSILON):
        return np.zeros((0, 2)), None, None, False

    res = uv[vis] - obs.keypoints[vis]
    if not want_jacobians:
        return res, None, None, True

    # d(uv)/d(p_obj) = J_pi R
    a = projection_jacobian(cam_v, k) @ pose.rotation
    obj_v = pts[vis]
    j_pose = np.empty((len(res), 2, 6))
    j_pose[:, :, :3] = np.cross(obj_v[:, None, :], a)
    j_pose[:, :, 3:] = a
    j_shape = np.einsum("nrc,ncb->nrb", a, m.basis_rows()[vis])
    return res, j_pose, j_shape, True


# Public API ------------------------------------------------------------------


def regularizer_weight(cfg: FitConfig, m: CategoryModel) -> float:
    """w of the L2 shape regularizer; 1 / mean(eigenvalues) unless configured."""
    if cfg.regularizer_weight is not None:
        return float(cfg.regularizer_weight)
    mean_eig = float(np.mean(m.eigenvalues)) if m.basis_size else 0.0
    return 1.0 / mean_eig if mean_eig > 0.0 else 0.0


def robust_cost(residuals: np.ndarray, cfg: FitConfig) -> np.ndarray:
    """Per-keypoint kernel value for an (n, 2) residual array."""
    residuals = np.atleast_2d(residuals)
    return _kernel_terms(np.einsum("ij,ij->i", residuals, residuals), cfg)[0]


def keypoint_residuals(
    obs: KeypointObservation,
    pose: Pose3,
    shape: ShapeParams,
    m: CategoryModel,
    k: CameraIntrinsics,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stacked visible-keypoint residuals with analytic Jacobians.

    Returns:
        (r, J_pose, J_shape) of shapes (2n,), (2n, 6), (2n, B); the pose Jacobian is
        taken w.r.t. a right-multiplied twist [omega; v].
    """
    _check_model(obs, m)
    res, jp, js, ok = _frame_terms(pose, shape.coeffs, obs, m, k)
    if not ok:
        raise Underconstrained("a visible keypoint lies behind the camera")
    n = len(res)
    return res.reshape(2 * n), jp.reshape(2 * n, 6), js.reshape(2 * n, m.basis_size)


class ReprojectionProblem:
    """Robust reprojection cost of one object over one or more frames."""

    def __init__(
        self,
        observations: Sequence[KeypointObservation],
        relative_poses: Sequence[Pose3],
        model: CategoryModel,
        k: CameraIntrinsics,
        cfg: FitConfig,
        min_visible: Optional[int] = None,
    ):
        if len(observations) != len(relative_poses):
            raise DimensionMismatch(
                f"{len(observations)} observations but {len(relative_poses)} relative poses"
            )
        if not observations:
            raise Underconstrained("no observations to fit")
        for obs in observations:
            _check_model(obs, model)

        need = cfg.min_visible if min_visible is None else min_visible
        visible = sum(obs.num_visible for obs in observations)
        if visible < need:
            raise Underconstrained(f"{visible} visible keypoints, need at least {need}")

        self.observations = list(observations)
        self.relative_poses = list(relative_poses)
        self.model = model
        self.k = k
        self.cfg = cfg
        self.weight = regularizer_weight(cfg, model)

    @property
    def basis_size(self) -> int:
        return self.model.basis_size

    def frame_poses(self, anchor: Pose3) -> List[Pose3]:
        return [c.compose(anchor) for c in self.relative_poses]

    def cost(self, anchor: Pose3, coeffs: np.ndarray) -> float:
        total = 0.0
        for pose, obs in zip(self.frame_poses(anchor), self.observations):
            res, _, _, ok = _frame_terms(
                pose, coeffs, obs, self.model, self.k, want_jacobians=False
            )
            if not ok:
                return math.inf
            rho, _ = _kernel_terms(np.einsum("ij,ij->i", res, res), self.cfg)
            total += float(obs.confidence[obs.visibility] @ rho)
        return total + self.weight * float(coeffs @ coeffs)

    def normal_equations(
        self, anchor: Pose3, coeffs: np.ndarray, pose: bool = True, shape: bool = True
    ) -> Tuple[np.ndarray, np.ndarray]:
        """IRLS-weighted J^T W J and J^T W r over the selected parameter blocks."""
        b = self.basis_size
        dim = 6 + b
        h = np.zeros((dim, dim))
        g = np.zeros(dim)
        for frame_pose, obs in zip(self.frame_poses(anchor), self.observations):
            res, jp, js, ok = _frame_terms(frame_pose, coeffs, obs, self.model, self.k)
            if not ok:
                raise Diverged("linearization point has keypoints behind the camera")
            _, weight = _kernel_terms(np.einsum("ij,ij->i", res, res), self.cfg)
            w = weight * obs.confidence[obs.visibility]
            jac = np.concatenate([jp, js], axis=2).reshape(-1, dim)
            wr = np.repeat(w, 2)
            h += jac.T @ (jac * wr[:, None])
            g += jac.T @ (wr * res.reshape(-1))

        h[6:, 6:] += self.weight * np.eye(b)
        g[6:] += self.weight * coeffs

        sel = ([*range(6)] if pose else []) + ([*range(6, dim)] if shape else [])
        return h[np.ix_(sel, sel)], g[sel]


@dataclass(frozen=True, eq=False)
class StageResult:
    anchor: Pose3
    coeffs: np.ndarray
    cost: float
    iterations: int
    converged: bool


def solve_stage(
    problem: ReprojectionProblem,
    anchor: Pose3,
    coeffs: np.ndarray,
    pose: bool = True,
    shape: bool = True,
) -> StageResult:
    """Levenberg-Marquardt over the selected blocks; only cost-lowering steps are taken.

    Raises:
        Diverged: non-finite starting cost or linearization
    """
    cfg = problem.cfg
    coeffs = np.array(coeffs, dtype=float)
    cost = problem.cost(anchor, coeffs)
    if not math.isfinite(cost):
        raise Diverged(f"starting cost is not finite ({cost})")
    if cost <= COST_FLOOR:
        return StageResult(anchor, coeffs, cost, 0, True)

    mu = cfg.initial_damping
    converged = False
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        h, g = problem.normal_equations(anchor, coeffs, pose=pose, shape=shape)
        if not (np.all(np.isfinite(h)) and np.all(np.isfinite(g))):
            raise Diverged("non-finite normal equations")

        diag = np.maximum(np.diag(h), 1e-9)
        accepted = False
        while mu <= MAX_DAMPING:
            try:
                step = -cho_solve(cho_factor(h + mu * np.diag(diag)), g)
            except LinAlgError:
                mu *= 10.0
                continue
            if pose:
                new_anchor, shape_step = anchor.compose(se3_exp(step[:6])), step[6:]
            else:
                new_anchor, shape_step = anchor, step
            new_coeffs = coeffs + shape_step if shape else coeffs
            new_cost = problem.cost(new_anchor, new_coeffs)
            if new_cost < cost:
                accepted = True
                break
            mu *= 10.0

        if not accepted:
            converged = True
            break

        decrease = (cost - new_cost) / cost
        anchor, coeffs, cost = new_anchor, new_coeffs, new_cost
        mu = max(mu * 0.1, MIN_DAMPING)
        if decrease < cfg.tolerance or cost <= COST_FLOOR or np.linalg.norm(step) < STEP_TOL:
            converged = True
            break

    return StageResult(anchor, coeffs, cost, it, converged)


def reprojection_cost(
    obs: KeypointObservation,
    est: ObjectEstimate,
    m: CategoryModel,
    k: CameraIntrinsics,
    cfg: Optional[FitConfig] = None,
) -> float:
    """Robust reprojection error of `est` against `obs`, plus the shape regularizer.

    Returns +inf when a visible keypoint lies behind the camera.
    """
    cfg = cfg or FitConfig()
    problem = ReprojectionProblem([obs], [Pose3.identity()], m, k, cfg, min_visible=0)
    return problem.cost(est.pose, np.asarray(est.shape.coeffs, dtype=float))


def fit_pose(
    obs: KeypointObservation,
    shape: ShapeParams,
    m: CategoryModel,
    k: CameraIntrinsics,
    init: Pose3,
    cfg: Optional[FitConfig] = None,
) -> Pose3:
    """Minimize the reprojection cost over the object pose with the shape held fixed.

    Raises:
        Underconstrained: fewer than cfg.min_visible visible keypoints
        Diverged: non-finite cost
    """
    problem = ReprojectionProblem([obs], [Pose3.identity()], m, k, cfg or FitConfig())
    return solve_stage(problem, init, shape.coeffs, pose=True, shape=False).anchor


def fit_shape(
    obs: KeypointObservation,
    pose: Pose3,
    m: CategoryModel,
    k: CameraIntrinsics,
    init: ShapeParams,
    cfg: Optional[FitConfig] = None,
) -> ShapeParams:
    """Minimize the reprojection cost over the shape coefficients with the pose held fixed."""
    problem = ReprojectionProblem([obs], [Pose3.identity()], m, k, cfg or FitConfig())
    return ShapeParams(solve_stage(problem, pose, init.coeffs, pose=False, shape=True).coeffs)


def marginal_pose_information(
    problem: ReprojectionProblem, anchor: Pose3, coeffs: np.ndarray
) -> np.ndarray:
    """Gauss-Newton information of the anchor pose with the shape coefficients
    marginalized out (a Schur complement of the normal equations).

    The result is per unit pixel variance: divide by sigma^2 for keypoints with
    standard deviation sigma.

    Raises:
        Underconstrained: the shape block is singular
        Diverged: the linearization point has keypoints behind the camera
    """
    h, _ = problem.normal_equations(anchor, np.asarray(coeffs, dtype=float))
    if problem.basis_size == 0:
        return h
    h_pp, h_ps, h_ss = h[:6, :6], h[:6, 6:], h[6:, 6:]
    try:
        reduced = h_pp - h_ps @ cho_solve(cho_factor(h_ss), h_ps.T)
    except LinAlgError as exc:
        raise Underconstrained("shape block of the fit is singular") from exc
    return 0.5 * (reduced + reduced.T)
