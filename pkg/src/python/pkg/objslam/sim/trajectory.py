"""Ground-truth camera paths at constant height.

A path is a chain of segments in the ground plane (x, z). Heading psi is the yaw of
the forward axis about world y; forward is (sin psi, 0, cos psi), so increasing psi
turns right. Poses are sampled uniformly in path progress; in-place turns advance
progress by TURN_PROGRESS per radian so they still receive samples.
"""

import math
from dataclasses import dataclass
from typing import List, NamedTuple, Sequence, Tuple, Union

import numpy as np

from objslam.geometry.lie import Pose3, rot_x, rot_y

__all__ = [
    "TURN_PROGRESS",
    "Arc",
    "Path",
    "Straight",
    "Turn",
    "camera_pose",
    "l_turn_path",
    "loop_path",
    "path_clearance",
    "rotate_in_place_path",
    "sample_poses",
    "straight_and_back_path",
]

# Path progress (m) credited per radian of in-place rotation
TURN_PROGRESS: float = 0.5


class Straight(NamedTuple):
    length: float

    @property
    def progress(self) -> float:
        return self.length


class Arc(NamedTuple):
    """Constant-radius turn; a positive angle turns right."""

    radius: float
    angle: float

    @property
    def progress(self) -> float:
        return self.radius * abs(self.angle)


class Turn(NamedTuple):
    """Rotation in place; a positive angle turns right."""

    angle: float

    @property
    def progress(self) -> float:
        return TURN_PROGRESS * abs(self.angle)


Segment = Union[Straight, Arc, Turn]


State = Tuple[float, float, float]


def _advance(state: State, seg: Segment, s: float) -> State:
    """State after travelling `s` of the segment's progress."""
    x, z, psi = state
    if isinstance(seg, Straight):
        return x + s * math.sin(psi), z + s * math.cos(psi), psi
    if isinstance(seg, Turn):
        return x, z, psi + math.copysign(s / TURN_PROGRESS, seg.angle)
    kappa = math.copysign(1.0 / seg.radius, seg.angle)
    end = psi + kappa * s
    return (
        x + (math.cos(psi) - math.cos(end)) / kappa,
        z + (math.sin(end) - math.sin(psi)) / kappa,
        end,
    )


@dataclass(frozen=True)
class Path:
    segments: Tuple[Segment, ...]
    closed: bool = False

    @property
    def length(self) -> float:
        return float(sum(seg.progress for seg in self.segments))

    def state(self, s: float) -> Tuple[float, float, float]:
        """(x, z, heading) after progress s; closed paths wrap around."""
        if self.closed:
            s = s % self.length
        state = (0.0, 0.0, 0.0)
        for seg in self.segments:
            if s <= seg.progress:
                return _advance(state, seg, s)
            state = _advance(state, seg, seg.progress)
            s -= seg.progress
        return state

    def positions(self, count: int = 400) -> np.ndarray:
        """(count, 2) densely sampled (x, z) points along the path."""
        return np.array([self.state(s)[:2] for s in np.linspace(0.0, self.length, count)])


def loop_path(long_side: float, radius: float) -> Path:
    """Two parallel straights joined by half circles, driven clockwise seen from above."""
    return Path(
        (Straight(long_side), Arc(radius, math.pi), Straight(long_side), Arc(radius, math.pi)),
        closed=True,
    )


def straight_and_back_path(length: float) -> Path:
    return Path((Straight(length), Turn(math.pi), Straight(length)))


def rotate_in_place_path() -> Path:
    return Path((Turn(2.0 * math.pi),), closed=True)


def l_turn_path(first: float, left_degrees: float, second: float) -> Path:
    return Path((Straight(first), Turn(-math.radians(left_degrees)), Straight(second)))


def camera_pose(x: float, z: float, heading: float, height: float, pitch: float) -> Pose3:
    """World->camera transform of a camera `height` above the ground at (x, z)."""
    r_cw = rot_y(heading) @ rot_x(-pitch)
    centre = np.array([x, -height, z])
    return Pose3(r_cw.T, -r_cw.T @ centre)


def sample_poses(path: Path, count: int, height: float, pitch: float) -> List[Pose3]:
    """`count` poses evenly spaced in progress; a closed path ends where it started."""
    total = path.length
    poses = []
    for k in range(count):
        x, z, psi = path.state(k / (count - 1) * total)
        poses.append(camera_pose(x, z, psi, height, pitch))
    return poses


def path_clearance(path: Path, points: Sequence[Sequence[float]], count: int = 400) -> np.ndarray:
    """Distance in the ground plane from each (x, z) point to the nearest path sample."""
    samples = path.positions(count)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return np.min(np.linalg.norm(pts[:, None, :] - samples[None, :, :], axis=2), axis=1)
