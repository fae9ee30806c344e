"""Localization and drift metrics against simulator ground truth.

All positions are world-frame; robot poses are world->camera transforms, so
trajectories are compared through their camera centres.
"""

import logging
from collections import Counter
from typing import Dict, Iterable, Mapping, NamedTuple, Sequence, Tuple

import numpy as np

from objslam.errors import MissingCorrespondence, NotApplicable
from objslam.geometry.lie import Pose3

__all__ = [
    "LOOP_CLOSURE_TOL",
    "LocalizationError",
    "correspondence_by_vote",
    "endpoint_drift",
    "loop_closes",
    "object_localization_error",
    "trajectory_rmse",
]

# Ground-truth start and end centres closer than this (m) make a closed loop
LOOP_CLOSURE_TOL: float = 1e-6

logger = logging.getLogger(__name__)


class LocalizationError(NamedTuple):
    best: float
    worst: float
    avg: float


def object_localization_error(
    estimated: Mapping[int, np.ndarray],
    ground_truth: Mapping[int, np.ndarray],
    correspondence: Mapping[int, int],
) -> LocalizationError:
    """Best, worst and mean distance between estimated objects and their true matches.

    Args:
        estimated (dict): global object id -> estimated world position
        ground_truth (dict): ground-truth label -> true world position
        correspondence (dict): global object id -> ground-truth label

    Raises:
        MissingCorrespondence: an estimated object has no (known) ground-truth match
        NotApplicable: no objects were estimated
    """
    if not estimated:
        raise NotApplicable("no objects were estimated")
    errors = []
    for gid, position in sorted(estimated.items()):
        label = correspondence.get(gid)
        if label is None or label not in ground_truth:
            raise MissingCorrespondence(f"estimated object {gid} has no ground-truth match")
        diff = np.asarray(position, dtype=float) - np.asarray(ground_truth[label], dtype=float)
        errors.append(float(np.linalg.norm(diff)))
    best, worst = min(errors), max(errors)
    # the mean of equal values can round past them
    avg = min(max(float(np.mean(errors)), best), worst)
    return LocalizationError(best=best, worst=worst, avg=avg)


def correspondence_by_vote(
    ids: Iterable[Sequence[int]], labels: Iterable[Sequence[int]]
) -> Dict[int, int]:
    """Ground-truth label seen most often for each global id; ties go to the lowest label."""
    votes: Dict[int, Counter] = {}
    for frame_ids, frame_labels in zip(ids, labels):
        for gid, label in zip(frame_ids, frame_labels):
            votes.setdefault(int(gid), Counter())[int(label)] += 1
    return {
        gid: min(counter.items(), key=lambda item: (-item[1], item[0]))[0]
        for gid, counter in votes.items()
    }


def loop_closes(ground_truth: Sequence[Pose3], tol: float = LOOP_CLOSURE_TOL) -> bool:
    return bool(np.linalg.norm(ground_truth[-1].center() - ground_truth[0].center()) <= tol)


def _check_trajectories(estimated: Sequence[Pose3], ground_truth: Sequence[Pose3]) -> None:
    if not estimated or not ground_truth:
        raise ValueError("trajectories must be non-empty")
    if len(estimated) != len(ground_truth):
        raise ValueError(f"{len(estimated)} estimated poses for {len(ground_truth)} true poses")


def endpoint_drift(
    estimated: Sequence[Pose3], ground_truth: Sequence[Pose3]
) -> Tuple[float, float]:
    """|dx| and |dz| between the estimated and true final camera centres.

    Raises:
        NotApplicable: the true trajectory does not return to its start
    """
    _check_trajectories(estimated, ground_truth)
    if not loop_closes(ground_truth):
        raise NotApplicable("drift is only defined for trajectories that return to the start")
    diff = estimated[-1].center() - ground_truth[-1].center()
    return float(abs(diff[0])), float(abs(diff[2]))


def trajectory_rmse(estimated: Sequence[Pose3], ground_truth: Sequence[Pose3]) -> float:
    """Root mean square camera-centre error over all poses."""
    _check_trajectories(estimated, ground_truth)
    est = np.array([p.center() for p in estimated])
    gt = np.array([p.center() for p in ground_truth])
    return float(np.sqrt(np.mean(np.sum((est - gt) ** 2, axis=1))))
