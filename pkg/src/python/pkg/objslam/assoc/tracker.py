"""Object tracks, frame-to-frame association and object loop closure.

Each frame's detections (object estimates already moved into the world frame) are
matched to live tracks with a gated Hungarian assignment. Detections left over are
first offered to dormant tracks (object loop closure) and otherwise start a new
track with a fresh global id. A closure must be near, similar in shape and heading,
and clearly cheaper than the runner-up dormant track; anything doubtful becomes a
new track. Tracks unseen for more than `miss_tolerance` frames
turn dormant but are never deleted.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from objslam.assoc.hungarian import GATE_SENTINEL, hungarian_assign
from objslam.errors import ConfigError
from objslam.fit.observation import ObjectEstimate
from objslam.geometry.lie import Pose3, so3_log
from objslam.models.category import ShapeParams

__all__ = [
    "AssocConfig",
    "AssocRecord",
    "Decision",
    "FrameAssociation",
    "Track",
    "TrackStore",
    "associate_frame",
    "association_cost",
    "detect_object_loop_closure",
    "write_association_log",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AssocConfig:
    """Association gates and cost weights.

    Args:
        position_gate (float): max track-detection distance for a frame match (m)
        shape_weight (float): weight on |coeffs_track - coeffs_det|
        pose_weight (float): weight on the position distance
        orientation_weight (float): weight on the relative rotation angle (rad)
        loop_gate (float): max distance for an object loop closure (m); kept below
            the spacing between distinct objects
        loop_shape_gate (float): max |coeffs_track - coeffs_det| for a loop closure
        loop_orientation_gate (float): max relative rotation angle for a loop closure (rad)
        loop_ratio (float): the best closure cost must not exceed this fraction of the
            runner-up dormant track's cost; 1 turns the ambiguity check off
        miss_tolerance (int): unseen frames before a track turns dormant
        olc (bool): attempt object loop closures at all
    """

    position_gate: float = 1.0
    shape_weight: float = 1.0
    pose_weight: float = 1.0
    orientation_weight: float = 0.0
    loop_gate: float = 0.8
    loop_shape_gate: float = 0.25
    loop_orientation_gate: float = 0.5
    loop_ratio: float = 0.75
    miss_tolerance: int = 3
    olc: bool = True

    def __post_init__(self) -> None:
        if not (self.position_gate > 0 and self.loop_gate > 0):
            raise ConfigError("association gates must be positive")
        if not (self.loop_shape_gate > 0 and self.loop_orientation_gate > 0):
            raise ConfigError("loop closure gates must be positive")
        if not 0 < self.loop_ratio <= 1:
            raise ConfigError(f"loop_ratio must be in (0, 1], got {self.loop_ratio}")
        if min(self.shape_weight, self.pose_weight, self.orientation_weight) < 0:
            raise ConfigError("association weights must be non-negative")
        if self.miss_tolerance < 0:
            raise ConfigError(f"miss_tolerance must be >= 0, got {self.miss_tolerance}")


@dataclass
class Track:
    global_id: int
    last_frame: int
    pose: Pose3
    shape: ShapeParams
    hits: int = 1
    dormant: bool = False

    @property
    def position(self) -> np.ndarray:
        return self.pose.translation

    def absorb(self, detection: ObjectEstimate, frame: int) -> None:
        """Take the detection's pose and fold its shape into the running mean."""
        mean = (self.shape.coeffs * self.hits + detection.shape.coeffs) / (self.hits + 1)
        self.shape = ShapeParams(mean)
        self.pose = detection.pose
        self.hits += 1
        self.last_frame = frame
        self.dormant = False


@dataclass
class TrackStore:
    tracks: Dict[int, Track] = field(default_factory=dict)
    next_id: int = 0

    def live(self) -> List[Track]:
        return [t for _, t in sorted(self.tracks.items()) if not t.dormant]

    def dormant(self) -> List[Track]:
        return [t for _, t in sorted(self.tracks.items()) if t.dormant]

    def mint(self, detection: ObjectEstimate, frame: int) -> Track:
        track = Track(self.next_id, frame, detection.pose, detection.shape)
        self.tracks[track.global_id] = track
        self.next_id += 1
        return track


class Decision(str, Enum):
    MATCH = "MATCH"
    NEW = "NEW"
    OLC = "OLC"


@dataclass(frozen=True)
class AssocRecord:
    frame: int
    detection: int
    global_id: int
    cost: float
    decision: Decision


@dataclass(frozen=True)
class FrameAssociation:
    store: TrackStore
    ids: Tuple[int, ...]
    records: Tuple[AssocRecord, ...]


def _distance(track: Track, detection: ObjectEstimate) -> float:
    return float(np.linalg.norm(track.position - detection.pose.translation))


def _turn(track: Track, detection: ObjectEstimate) -> float:
    relative = track.pose.rotation.T @ detection.pose.rotation
    return float(np.linalg.norm(so3_log(relative, strict=False)))


def _shape_gap(track: Track, detection: ObjectEstimate) -> float:
    return float(np.linalg.norm(track.shape.coeffs - detection.shape.coeffs))


def association_cost(track: Track, detection: ObjectEstimate, cfg: AssocConfig) -> float:
    """Weighted position, shape and (optionally) orientation distance."""
    cost = cfg.pose_weight * _distance(track, detection)
    cost += cfg.shape_weight * _shape_gap(track, detection)
    if cfg.orientation_weight:
        cost += cfg.orientation_weight * _turn(track, detection)
    return cost


def _canonical_order(detections: Sequence[ObjectEstimate]) -> List[int]:
    """Detection indices sorted by position, then shape, so input order never matters."""
    if not detections:
        return []
    keys = np.array(
        [np.concatenate([d.pose.translation, d.shape.coeffs]) for d in detections]
    )
    return [int(i) for i in np.lexsort(keys.T[::-1])]


def detect_object_loop_closure(
    tracks: Iterable[Track],
    detection: ObjectEstimate,
    cfg: AssocConfig,
    exclude: Iterable[int] = (),
) -> Optional[Tuple[int, float]]:
    """Cheapest dormant track that passes every loop gate, as (global id, cost), else None.

    A candidate must lie within `loop_gate`, differ in shape by at most
    `loop_shape_gate` and in orientation by at most `loop_orientation_gate`. Any other
    dormant track within twice the loop gate is a rival; the closure is refused unless
    its cost is at most `loop_ratio` times the cheapest rival's. Ties go to the lowest
    global id.
    """
    excluded = set(exclude)
    nearby: List[Tuple[float, int, bool]] = []
    for track in tracks:
        if not track.dormant or track.global_id in excluded:
            continue
        distance = _distance(track, detection)
        if distance > 2.0 * cfg.loop_gate:
            continue
        eligible = (
            distance <= cfg.loop_gate
            and _shape_gap(track, detection) <= cfg.loop_shape_gate
            and _turn(track, detection) <= cfg.loop_orientation_gate
        )
        nearby.append((association_cost(track, detection, cfg), track.global_id, eligible))

    nearby.sort()
    best = next((c for c in nearby if c[2]), None)
    if best is None:
        return None
    rivals = [c[0] for c in nearby if c[1] != best[1]]
    if rivals and best[0] > cfg.loop_ratio * rivals[0]:
        logger.debug(
            f"Refusing ambiguous loop closure with track {best[1]}: cost {best[0]:.3g} "
            f"against {rivals[0]:.3g}"
        )
        return None
    return best[1], best[0]


def associate_frame(
    store: TrackStore,
    detections: Sequence[ObjectEstimate],
    cfg: AssocConfig,
    frame: int,
) -> FrameAssociation:
    """Assign a global object id to every detection of one frame.

    Args:
        store (TrackStore): tracks so far; updated in place
        detections (list): object estimates with world-frame poses
        cfg (AssocConfig): gates and weights
        frame (int): current frame index

    Returns:
        FrameAssociation with one id per detection, in input order
    """
    for track in store.tracks.values():
        if not track.dormant and frame - track.last_frame > cfg.miss_tolerance:
            track.dormant = True
            logger.debug(f"Track {track.global_id} dormant since frame {track.last_frame}")

    order = _canonical_order(detections)
    live = store.live()
    cost = np.full((len(live), len(order)), GATE_SENTINEL)
    for r, track in enumerate(live):
        for c, d in enumerate(order):
            if _distance(track, detections[d]) <= cfg.position_gate:
                cost[r, c] = association_cost(track, detections[d], cfg)
    result = hungarian_assign(cost)

    ids: Dict[int, int] = {}
    records: List[AssocRecord] = []
    for r, c in result.matches:
        d = order[c]
        live[r].absorb(detections[d], frame)
        ids[d] = live[r].global_id
        records.append(AssocRecord(frame, d, live[r].global_id, float(cost[r, c]), Decision.MATCH))

    revived: List[int] = []
    for c in result.unmatched_cols:
        d = order[c]
        closure = None
        if cfg.olc:
            closure = detect_object_loop_closure(store.dormant(), detections[d], cfg, revived)
        if closure is not None:
            gid, closure_cost = closure
            store.tracks[gid].absorb(detections[d], frame)
            revived.append(gid)
            ids[d] = gid
            records.append(AssocRecord(frame, d, gid, closure_cost, Decision.OLC))
            logger.info(f"Frame {frame}: object loop closure with track {gid}")
        else:
            track = store.mint(detections[d], frame)
            ids[d] = track.global_id
            records.append(AssocRecord(frame, d, track.global_id, float("nan"), Decision.NEW))

    records.sort(key=lambda rec: rec.detection)
    return FrameAssociation(
        store=store, ids=tuple(ids[d] for d in range(len(detections))), records=tuple(records)
    )


def write_association_log(records: Iterable[AssocRecord], path: Union[str, Path]) -> None:
    """CSV with columns frame, detection, global_id, cost, decision; NEW rows have no cost."""
    df = pd.DataFrame(
        [(r.frame, r.detection, r.global_id, r.cost, r.decision.value) for r in records],
        columns=["frame", "detection", "global_id", "cost", "decision"],
    )
    df.to_csv(path, index=False, float_format="%.17g", na_rep="")
