"""Run reports and estimate files.

A report is one text file: a human-readable metric table, a marker line, then a
TOML section carrying the same numbers plus the effective configuration. Wall-clock
timings are kept on the RunReport object for logging only, so identical runs write
identical files.

The estimate file is a CSV with one row per robot pose and per object:

    kind,id,r00,...,r22,tx,ty,tz,lambda_0,...,lambda_{B-1}

Robot rows leave the lambda columns empty.
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import toml

from objslam.errors import FileFormatError, NotApplicable
from objslam.evaluation.metrics import (
    LocalizationError,
    correspondence_by_vote,
    endpoint_drift,
    object_localization_error,
    trajectory_rmse,
)
from objslam.evaluation.pipeline import PipelineResult
from objslam.geometry.lie import Pose3
from objslam.models.category import ShapeParams
from objslam.sim.scenario import Scenario

__all__ = [
    "MACHINE_MARKER",
    "NOT_APPLICABLE",
    "Estimate",
    "RunReport",
    "build_report",
    "evaluate_estimate",
    "ids_from_association_log",
    "read_estimate",
    "read_report",
    "write_estimate",
    "write_report",
]

MACHINE_MARKER = "# --- machine-readable ---"
NOT_APPLICABLE = "N/A"

_ROTATION_COLUMNS = [f"r{i}{j}" for i in range(3) for j in range(3)]
_POSE_COLUMNS = _ROTATION_COLUMNS + ["tx", "ty", "tz"]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunReport:
    """Metrics of one run against ground truth.

    None marks a metric that does not exist for the run (drift on an open path,
    odometry-only localization without parallax).
    """

    scenario: str
    mode: str
    olc: bool
    num_objects: int
    num_true_objects: int
    localization: Optional[LocalizationError] = None
    drift: Optional[Tuple[float, float]] = None
    trajectory_rmse: Optional[float] = None
    notes: Tuple[str, ...] = ()
    timing: Dict[str, float] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        loc = self.localization
        if loc is not None:
            if not 0.0 <= loc.best <= loc.avg <= loc.worst:
                raise ValueError(f"localization error out of order: {loc}")
        if self.drift is not None and min(self.drift) < 0.0:
            raise ValueError(f"drift must be non-negative, got {self.drift}")

    def rows(self) -> List[Tuple[str, Any]]:
        """(metric, value) pairs in table order; None for N/A."""
        loc = self.localization
        drift = self.drift
        return [
            ("object error best (m)", loc.best if loc else None),
            ("object error worst (m)", loc.worst if loc else None),
            ("object error avg (m)", loc.avg if loc else None),
            ("drift x (m)", drift[0] if drift else None),
            ("drift z (m)", drift[1] if drift else None),
            ("trajectory rmse (m)", self.trajectory_rmse),
            ("objects estimated", self.num_objects),
            ("objects in ground truth", self.num_true_objects),
        ]


@dataclass(frozen=True, eq=False)
class Estimate:
    trajectory: Tuple[Pose3, ...]
    objects: Dict[int, Pose3]
    shapes: Dict[int, ShapeParams]

    def object_positions(self) -> Dict[int, np.ndarray]:
        return {gid: pose.translation for gid, pose in self.objects.items()}


# Private functions ------------------------------------------------------------


def _format_value(value: Any) -> str:
    if value is None:
        return NOT_APPLICABLE
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def _machine_value(value: Any) -> Any:
    return NOT_APPLICABLE if value is None else value


def _pose_row(kind: str, ident: int, pose: Pose3) -> Dict[str, Any]:
    row: Dict[str, Any] = {"kind": kind, "id": ident}
    row.update(zip(_ROTATION_COLUMNS, (float(v) for v in pose.rotation.reshape(-1))))
    row.update(zip(["tx", "ty", "tz"], (float(v) for v in pose.translation)))
    return row


def _labelled_pairs(
    ids: Sequence[Sequence[int]], labels: Sequence[Sequence[int]]
) -> Dict[int, int]:
    """Vote over detections that were associated; skipped ones carry id -1."""
    pairs = [
        (gid, label)
        for frame_ids, frame_labels in zip(ids, labels)
        for gid, label in zip(frame_ids, frame_labels)
        if gid >= 0
    ]
    return correspondence_by_vote([[gid for gid, _ in pairs]], [[label for _, label in pairs]])


# Public API ------------------------------------------------------------------


def evaluate_estimate(
    scenario: Scenario,
    trajectory: Sequence[Pose3],
    positions: Mapping[int, np.ndarray],
    ids: Sequence[Sequence[int]],
    mode: str,
    olc: bool,
    name: str = "",
) -> RunReport:
    """Score an estimated trajectory and object map against the scenario's ground truth."""
    truth = {obj.label: obj.pose.translation for obj in scenario.objects}
    notes: List[str] = []
    common = dict(
        scenario=name,
        mode=mode,
        olc=olc,
        num_objects=len(positions),
        num_true_objects=len(truth),
    )

    if mode == "odo" and scenario.zero_parallax:
        notes.append("odometry-only mapping is not applicable without translational parallax")
        return RunReport(**common, notes=tuple(notes))

    localization: Optional[LocalizationError] = None
    try:
        correspondence = _labelled_pairs(ids, scenario.labels)
        localization = object_localization_error(positions, truth, correspondence)
    except NotApplicable as exc:
        notes.append(f"object error: {exc}")

    drift: Optional[Tuple[float, float]] = None
    try:
        drift = endpoint_drift(trajectory, scenario.robot_poses)
    except NotApplicable as exc:
        notes.append(f"drift: {exc}")

    return RunReport(
        **common,
        localization=localization,
        drift=drift,
        trajectory_rmse=trajectory_rmse(trajectory, scenario.robot_poses),
        notes=tuple(notes),
    )


def build_report(scenario: Scenario, result: PipelineResult, name: str = "") -> RunReport:
    report = evaluate_estimate(
        scenario,
        result.trajectory,
        result.object_positions(),
        result.ids,
        result.config.mode,
        result.config.olc,
        name,
    )
    return replace(report, timing=dict(result.timing))


def write_report(
    report: RunReport, path: Union[str, Path], config: Optional[Mapping[str, Any]] = None
) -> None:
    """Human table, marker line, then TOML with the numbers and the effective config."""
    table = pd.DataFrame(
        [(metric, _format_value(value)) for metric, value in report.rows()],
        columns=["metric", "value"],
    )
    olc = "on" if report.olc else "off"
    lines = [
        f"objslam run report: {report.scenario or '-'} (mode {report.mode}, olc {olc})",
        "",
        table.to_string(index=False),
        "",
    ]
    lines.extend(f"note: {note}" for note in report.notes)
    lines.append(MACHINE_MARKER)

    loc = report.localization
    drift = report.drift
    machine: Dict[str, Any] = {
        "report": {
            "scenario": report.scenario,
            "mode": report.mode,
            "olc": report.olc,
            "num_objects": report.num_objects,
            "num_true_objects": report.num_true_objects,
            "localization_best": _machine_value(loc.best if loc else None),
            "localization_worst": _machine_value(loc.worst if loc else None),
            "localization_avg": _machine_value(loc.avg if loc else None),
            "drift_x": _machine_value(drift[0] if drift else None),
            "drift_z": _machine_value(drift[1] if drift else None),
            "trajectory_rmse": _machine_value(report.trajectory_rmse),
            "notes": list(report.notes),
        }
    }
    if config is not None:
        machine["config"] = dict(config)
    Path(path).write_text("\n".join(lines) + "\n" + toml.dumps(machine))
    logger.info(f"Wrote report to {path}")


def read_report(path: Union[str, Path]) -> Dict[str, Any]:
    """The machine-readable section of a report file."""
    text = Path(path).read_text()
    _, marker, machine = text.partition(MACHINE_MARKER + "\n")
    if not marker:
        raise FileFormatError(f"{path}: no machine-readable section")
    try:
        return toml.loads(machine)
    except toml.TomlDecodeError as exc:
        raise FileFormatError(f"{path}: {exc}") from exc


def write_estimate(
    trajectory: Sequence[Pose3],
    objects: Mapping[int, Pose3],
    shapes: Mapping[int, ShapeParams],
    path: Union[str, Path],
) -> None:
    rows = [_pose_row("robot", i, pose) for i, pose in enumerate(trajectory)]
    size = max((len(s) for s in shapes.values()), default=0)
    lam = [f"lambda_{b}" for b in range(size)]
    for gid in sorted(objects):
        row = _pose_row("object", gid, objects[gid])
        if gid in shapes:
            row.update(zip(lam, (float(v) for v in shapes[gid].coeffs)))
        rows.append(row)
    df = pd.DataFrame(rows, columns=["kind", "id"] + _POSE_COLUMNS + lam)
    df.to_csv(path, index=False, float_format="%.17g", na_rep="")
    logger.info(f"Wrote {len(trajectory)} poses and {len(objects)} objects to {path}")


def read_estimate(path: Union[str, Path]) -> Estimate:
    try:
        df = pd.read_csv(path)
        missing = {"kind", "id", *_POSE_COLUMNS} - set(df.columns)
        if missing:
            raise ValueError(f"missing columns {sorted(missing)}")
        lam = [c for c in df.columns if c.startswith("lambda_")]

        def pose(row: pd.Series) -> Pose3:
            return Pose3(
                row[_ROTATION_COLUMNS].to_numpy(dtype=float).reshape(3, 3),
                row[["tx", "ty", "tz"]].to_numpy(dtype=float),
            )

        robots = df[df["kind"] == "robot"].sort_values("id")
        if not np.array_equal(robots["id"].to_numpy(), np.arange(len(robots))):
            raise ValueError("robot ids must be 0..N-1")
        objects: Dict[int, Pose3] = {}
        shapes: Dict[int, ShapeParams] = {}
        for _, row in df[df["kind"] == "object"].iterrows():
            gid = int(row["id"])
            objects[gid] = pose(row)
            if lam and not row[lam].isna().any():
                shapes[gid] = ShapeParams(row[lam].to_numpy(dtype=float))
        return Estimate(tuple(pose(r) for _, r in robots.iterrows()), objects, shapes)
    except (KeyError, TypeError, ValueError, pd.errors.ParserError) as exc:
        raise FileFormatError(f"{path}: malformed estimate file ({exc})") from exc


def ids_from_association_log(path: Union[str, Path], scenario: Scenario) -> List[List[int]]:
    """Per-frame global ids (-1 for detections that were never associated)."""
    ids = [[-1] * len(frame) for frame in scenario.observations]
    try:
        df = pd.read_csv(path)
        for frame, detection, gid in df[["frame", "detection", "global_id"]].itertuples(
            index=False
        ):
            ids[int(frame)][int(detection)] = int(gid)
    except (KeyError, IndexError, ValueError, pd.errors.ParserError) as exc:
        raise FileFormatError(f"{path}: malformed association log ({exc})") from exc
    return ids
