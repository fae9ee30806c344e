"""End-to-end object SLAM over a measurement set.

Per frame: fit every keypoint detection, move it into the world with the
dead-reckoned camera pose, associate it to a global object id. The resulting
object factors, each weighted by its fit's pose information, plus the odometry
then go to the graph optimizer (batch or incremental); odometry-only mode skips
the graph and averages each track's dead-reckoned positions.
"""

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from objslam.assoc.tracker import AssocConfig, AssocRecord, TrackStore, associate_frame
from objslam.errors import ConfigError, Diverged, GroundPlaneDegenerate, Underconstrained
from objslam.fit.alternating import fit_multiframe, fit_observation
from objslam.fit.observation import FitConfig, KeypointObservation, ObjectEstimate
from objslam.fit.solver import ReprojectionProblem, marginal_pose_information
from objslam.geometry.camera import CameraIntrinsics
from objslam.geometry.lie import Pose3, relative_pose
from objslam.graph.chordal import chordal_init
from objslam.graph.factors import (
    Factor,
    FactorGraph,
    ObjectFactor,
    PriorFactor,
    RelPoseFactor,
    object_var,
    robot_var,
)
from objslam.graph.optimize import (
    FrameUpdate,
    GraphSettings,
    GraphSolution,
    IncrementalSmoother,
    optimize_batch,
)
from objslam.models.category import CategoryModel, ShapeParams
from objslam.sim.scenario import MeasurementSet

__all__ = [
    "MODES",
    "PipelineConfig",
    "PipelineResult",
    "dead_reckon",
    "object_information",
    "run_pipeline",
]

MODES = ("odo", "batch", "inc")

# Eigenvalue bounds of a per-detection object information matrix
MIN_OBJECT_INFORMATION: float = 1.0
MAX_OBJECT_INFORMATION: float = 1e5

logger = logging.getLogger(__name__)


def _pipeline_fit() -> FitConfig:
    return FitConfig(refine_seeds=2, min_visible=7)


@dataclass(frozen=True)
class PipelineConfig:
    """How a run turns measurements into a map.

    Args:
        mode (str): "odo" (dead reckoning only), "batch" or "inc"
        olc (bool): allow object loop closures during association
        fit (FitConfig): per-detection pose/shape fit
        assoc (AssocConfig): association gates and weights
        graph (GraphSettings): optimizer settings and factor weights
        temporal_shape (bool): refit each track's shape over all its frames, then re-solve
        incremental_every (int): frames between incremental solves
        fit_information (bool): weight each object factor by its fit's pose information
            (shape marginalized out); otherwise every object factor uses
            graph.object_information
        keypoint_sigma (float): assumed keypoint noise (px) that scales the fit information
    """

    mode: str = "batch"
    olc: bool = True
    fit: FitConfig = field(default_factory=_pipeline_fit)
    assoc: AssocConfig = field(default_factory=AssocConfig)
    graph: GraphSettings = field(default_factory=GraphSettings)
    temporal_shape: bool = False
    incremental_every: int = 1
    fit_information: bool = True
    keypoint_sigma: float = 1.0

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; use one of {MODES}")
        if self.incremental_every < 1:
            raise ConfigError(f"incremental_every must be positive, got {self.incremental_every}")
        if not self.keypoint_sigma > 0:
            raise ConfigError(f"keypoint_sigma must be positive, got {self.keypoint_sigma}")


@dataclass(frozen=True, eq=False)
class _Sighting:
    frame: int
    global_id: int
    observation: KeypointObservation
    estimate: ObjectEstimate
    information: Optional[np.ndarray] = None


@dataclass(frozen=True, eq=False)
class PipelineResult:
    config: PipelineConfig
    trajectory: Tuple[Pose3, ...]
    dead_reckoning: Tuple[Pose3, ...]
    objects: Dict[int, Pose3]
    shapes: Dict[int, ShapeParams]
    ids: Tuple[Tuple[int, ...], ...]
    records: Tuple[AssocRecord, ...]
    solution: Optional[GraphSolution] = None
    timing: Dict[str, float] = field(default_factory=dict)

    def object_positions(self) -> Dict[int, np.ndarray]:
        return {gid: pose.translation for gid, pose in self.objects.items()}


def dead_reckon(origin: Pose3, odometry: Tuple[Pose3, ...]) -> List[Pose3]:
    """Chain T_{i+1} = odometry_i * T_i from the origin."""
    poses = [origin]
    for step in odometry:
        poses.append(step.compose(poses[-1]))
    return poses


def object_information(
    obs: KeypointObservation,
    est: ObjectEstimate,
    m: CategoryModel,
    k: CameraIntrinsics,
    cfg: PipelineConfig,
) -> Optional[np.ndarray]:
    """Information of one fitted object-in-camera pose, or None when it is unavailable.

    The fit's marginal pose information is scaled by 1 / keypoint_sigma^2 and its
    eigenvalues are clipped to [MIN_OBJECT_INFORMATION, MAX_OBJECT_INFORMATION].
    """
    try:
        problem = ReprojectionProblem([obs], [Pose3.identity()], m, k, cfg.fit, min_visible=0)
        info = marginal_pose_information(problem, est.pose, est.shape.coeffs)
    except (Underconstrained, Diverged) as exc:
        logger.debug(f"Frame {obs.frame}: no fit information ({exc})")
        return None
    values, vectors = np.linalg.eigh(info / cfg.keypoint_sigma ** 2)
    values = np.clip(values, MIN_OBJECT_INFORMATION, MAX_OBJECT_INFORMATION)
    clipped = (vectors * values) @ vectors.T
    return 0.5 * (clipped + clipped.T)


# Private functions ------------------------------------------------------------


def _detect(
    ms: MeasurementSet, m: CategoryModel, cfg: PipelineConfig, poses: List[Pose3]
) -> Tuple[List[_Sighting], Tuple[Tuple[int, ...], ...], Tuple[AssocRecord, ...], TrackStore]:
    store = TrackStore()
    assoc = replace(cfg.assoc, olc=cfg.olc)
    sightings: List[_Sighting] = []
    ids: List[Tuple[int, ...]] = []
    records: List[AssocRecord] = []

    for frame, observations in enumerate(ms.observations):
        kept: List[Tuple[int, KeypointObservation, ObjectEstimate]] = []
        for n, obs in enumerate(observations):
            if obs.num_visible < cfg.fit.min_visible:
                continue
            try:
                est = fit_observation(obs, m, ms.intrinsics, cfg.fit, ms.height, ms.pitch)
            except (Underconstrained, GroundPlaneDegenerate, Diverged) as exc:
                logger.warning(f"Frame {frame}: skipping detection {n}: {exc}")
                continue
            kept.append((n, obs, est))

        world = [
            replace(est, pose=poses[frame].inverse().compose(est.pose)) for _, _, est in kept
        ]
        result = associate_frame(store, world, assoc, frame)

        frame_ids = [-1] * len(observations)
        for (n, obs, est), gid in zip(kept, result.ids):
            frame_ids[n] = gid
            info = None
            if cfg.fit_information:
                info = object_information(obs, est, m, ms.intrinsics, cfg)
            sightings.append(_Sighting(frame, gid, obs.with_track(gid), est, info))
        ids.append(tuple(frame_ids))
        records.extend(
            replace(rec, detection=kept[rec.detection][0]) for rec in result.records
        )
    return sightings, tuple(ids), tuple(records), store


def _frame_updates(
    ms: MeasurementSet, sightings: List[_Sighting], settings: GraphSettings
) -> List[FrameUpdate]:
    """The graph as per-frame updates: prior, odometry, then object sightings."""
    by_frame: Dict[int, List[_Sighting]] = {}
    for s in sightings:
        by_frame.setdefault(s.frame, []).append(s)

    updates = []
    seen_objects = set()
    for frame in range(ms.num_frames):
        variables = [robot_var(frame)]
        if frame == 0:
            factors: List[Factor] = [PriorFactor(robot_var(0), ms.origin, settings.prior_matrix)]
        else:
            factors = [
                RelPoseFactor(
                    robot_var(frame - 1),
                    robot_var(frame),
                    ms.odometry[frame - 1],
                    settings.odometry_matrix,
                )
            ]
        for s in by_frame.get(frame, []):
            obj = object_var(s.global_id)
            if obj not in seen_objects:
                seen_objects.add(obj)
                variables.append(obj)
            info = settings.object_matrix if s.information is None else s.information
            factors.append(ObjectFactor(robot_var(frame), obj, s.estimate.pose, info))
        updates.append(FrameUpdate(frame, tuple(variables), tuple(factors)))
    return updates


def _graph_of(updates: List[FrameUpdate]) -> FactorGraph:
    graph = FactorGraph()
    for u in updates:
        for vid in u.variables:
            graph.add_variable(vid)
        for f in u.factors:
            graph.add_factor(f)
    return graph


def _refit_shapes(
    ms: MeasurementSet,
    m: CategoryModel,
    cfg: PipelineConfig,
    sightings: List[_Sighting],
    solution: GraphSolution,
    shapes: Dict[int, ShapeParams],
) -> Tuple[Dict[Tuple[int, int], Pose3], Dict[int, ShapeParams]]:
    """Shared-shape multi-frame fit per track; returns refitted object-in-camera poses."""
    tracks: Dict[int, List[_Sighting]] = {}
    for s in sightings:
        tracks.setdefault(s.global_id, []).append(s)

    refitted: Dict[Tuple[int, int], Pose3] = {}
    updated = dict(shapes)
    for gid, group in sorted(tracks.items()):
        if len(group) < 2:
            continue
        cams = [solution[robot_var(s.frame)] for s in group]
        anchor = cams[0].compose(solution[object_var(gid)])
        init = ObjectEstimate(anchor, shapes[gid])
        try:
            multi = fit_multiframe(
                [s.observation for s in group],
                [relative_pose(cams[0], c) for c in cams],
                m,
                ms.intrinsics,
                cfg.fit,
                init,
            )
        except (Underconstrained, Diverged) as exc:
            logger.warning(f"Track {gid}: keeping per-frame fits, multi-frame fit failed: {exc}")
            continue
        updated[gid] = multi.shape
        for s, pose in zip(group, multi.poses):
            refitted[(s.frame, gid)] = pose
    return refitted, updated


def _solve(cfg: PipelineConfig, updates: List[FrameUpdate]) -> GraphSolution:
    if cfg.mode == "inc":
        smoother = IncrementalSmoother(cfg.graph, every=cfg.incremental_every)
        for u in updates:
            smoother.update(u)
        return smoother.finalize()
    graph = _graph_of(updates)
    return optimize_batch(graph, chordal_init(graph), cfg.graph)


# Public API ------------------------------------------------------------------


def run_pipeline(ms: MeasurementSet, m: CategoryModel, cfg: PipelineConfig) -> PipelineResult:
    """Fit, associate and optimize one measurement set.

    Raises:
        Diverged, GaugeUnfixed, DisconnectedGraph: the graph could not be solved
    """
    timing: Dict[str, float] = {}
    tic = time.perf_counter()
    odo = dead_reckon(ms.origin, ms.odometry)
    sightings, ids, records, store = _detect(ms, m, cfg, odo)
    timing["front_end"] = time.perf_counter() - tic
    logger.info(
        f"Front end: {len(sightings)} object sightings, {len(store.tracks)} objects "
        f"in {timing['front_end']:.2f} s"
    )

    shapes = {gid: track.shape for gid, track in store.tracks.items()}
    if cfg.mode == "odo":
        positions: Dict[int, List[np.ndarray]] = {}
        first: Dict[int, Pose3] = {}
        for s in sightings:
            world = odo[s.frame].inverse().compose(s.estimate.pose)
            positions.setdefault(s.global_id, []).append(world.translation)
            first.setdefault(s.global_id, world)
        objects = {
            gid: Pose3(first[gid].rotation, np.mean(positions[gid], axis=0)) for gid in first
        }
        return PipelineResult(
            config=cfg,
            trajectory=tuple(odo),
            dead_reckoning=tuple(odo),
            objects=objects,
            shapes=shapes,
            ids=ids,
            records=records,
            timing=timing,
        )

    tic = time.perf_counter()
    updates = _frame_updates(ms, sightings, cfg.graph)
    solution = _solve(cfg, updates)

    if cfg.temporal_shape:
        refitted, shapes = _refit_shapes(ms, m, cfg, sightings, solution, shapes)
        if refitted:
            sightings = [
                replace(s, estimate=replace(s.estimate, pose=refitted[(s.frame, s.global_id)]))
                if (s.frame, s.global_id) in refitted
                else s
                for s in sightings
            ]
            graph = _graph_of(_frame_updates(ms, sightings, cfg.graph))
            solution = optimize_batch(graph, solution.values, cfg.graph)
    timing["back_end"] = time.perf_counter() - tic
    logger.info(f"Back end ({cfg.mode}): error {solution.error:.6g} in {timing['back_end']:.2f} s")

    trajectory = tuple(solution[robot_var(i)] for i in range(ms.num_frames))
    objects = {gid: solution[object_var(gid)] for gid in sorted(store.tracks)}
    return PipelineResult(
        config=cfg,
        trajectory=trajectory,
        dead_reckoning=tuple(odo),
        objects=objects,
        shapes=shapes,
        ids=ids,
        records=records,
        solution=solution,
        timing=timing,
    )
