"""Scenario files (TOML).

A full scenario file carries the generating config, the ground truth and the
measurements; the measurement-only export drops every ground-truth table except
the first robot pose, which fixes the gauge. Poses are stored as a row-major
rotation (9 floats) and a translation (3 floats), so they read back exactly.
Keypoints are flattened (u0, v0, u1, v1, ...); invisible keypoints are written as
0.0 and read back as NaN.
"""

import logging
from dataclasses import asdict, fields
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

import numpy as np
import toml

from objslam.errors import FileFormatError
from objslam.fit.observation import KeypointObservation
from objslam.geometry.camera import CameraIntrinsics
from objslam.geometry.lie import Pose3
from objslam.models.category import KeypointSet3D, ShapeParams
from objslam.sim.scenario import MeasurementSet, Scenario, ScenarioConfig, SimObject

__all__ = [
    "SCENARIO_FORMAT",
    "read_measurements",
    "read_scenario",
    "write_measurements",
    "write_scenario",
]

SCENARIO_FORMAT = "objslam-scenario"
SCENARIO_VERSION = 1

logger = logging.getLogger(__name__)


# Private functions ------------------------------------------------------------


def _pose_doc(pose: Pose3) -> Dict[str, List[float]]:
    return {
        "rotation": [float(v) for v in pose.rotation.reshape(-1)],
        "translation": [float(v) for v in pose.translation],
    }


def _pose(doc: Dict[str, Any]) -> Pose3:
    return Pose3(
        np.asarray(doc["rotation"], dtype=float).reshape(3, 3),
        np.asarray(doc["translation"], dtype=float),
    )


def _observation_doc(obs: KeypointObservation, label: Union[int, None]) -> Dict[str, Any]:
    keypoints = np.where(obs.visibility[:, None], obs.keypoints, 0.0)
    doc: Dict[str, Any] = {
        "keypoints": [float(v) for v in keypoints.reshape(-1)],
        "visibility": [bool(v) for v in obs.visibility],
    }
    if label is not None:
        doc["label"] = int(label)
    return doc


def _observation(doc: Dict[str, Any], frame: int) -> KeypointObservation:
    visibility = np.asarray(doc["visibility"], dtype=bool)
    keypoints = np.asarray(doc["keypoints"], dtype=float).reshape(-1, 2)
    keypoints[~visibility] = np.nan
    return KeypointObservation(frame=frame, keypoints=keypoints, visibility=visibility)


def _measurement_doc(scenario: Scenario, with_labels: bool) -> Dict[str, Any]:
    detections = []
    for frame, (observations, labels) in enumerate(zip(scenario.observations, scenario.labels)):
        for obs, label in zip(observations, labels):
            detections.append(
                {"frame": frame, **_observation_doc(obs, label if with_labels else None)}
            )
    return {
        "num_frames": scenario.num_frames,
        "camera": {
            "fx": scenario.intrinsics.fx,
            "fy": scenario.intrinsics.fy,
            "cx": scenario.intrinsics.cx,
            "cy": scenario.intrinsics.cy,
            "image_width": scenario.image_size[0],
            "image_height": scenario.image_size[1],
            "height": scenario.height,
            "pitch": scenario.pitch,
            "zero_parallax": scenario.zero_parallax,
        },
        "origin": _pose_doc(scenario.robot_poses[0]),
        "odometry": [_pose_doc(p) for p in scenario.odometry],
        "detections": detections,
    }


def _load(path: Union[str, Path], kind: str) -> Dict[str, Any]:
    try:
        doc = toml.loads(Path(path).read_text())
    except toml.TomlDecodeError as exc:
        raise FileFormatError(f"{path}: {exc}") from exc
    if doc.get("format") != SCENARIO_FORMAT or doc.get("version") != SCENARIO_VERSION:
        raise FileFormatError(f"{path}: not an {SCENARIO_FORMAT} v{SCENARIO_VERSION} document")
    if kind == "full" and doc.get("kind") != "full":
        raise FileFormatError(f"{path}: measurement-only file has no ground truth")
    return doc


def _frames(doc: Dict[str, Any]) -> Tuple[tuple, tuple]:
    """Per-frame observations and labels (-1 where the file has none)."""
    observations: List[List[KeypointObservation]] = [[] for _ in range(int(doc["num_frames"]))]
    labels: List[List[int]] = [[] for _ in observations]
    for det in doc.get("detections", []):
        frame = int(det["frame"])
        observations[frame].append(_observation(det, frame))
        labels[frame].append(int(det.get("label", -1)))
    return tuple(map(tuple, observations)), tuple(map(tuple, labels))


# Public API ------------------------------------------------------------------


def write_scenario(scenario: Scenario, path: Union[str, Path]) -> None:
    """Full scenario: config, ground truth and labelled measurements."""
    doc: Dict[str, Any] = {"format": SCENARIO_FORMAT, "version": SCENARIO_VERSION, "kind": "full"}
    doc["config"] = asdict(scenario.config)
    doc["robot_poses"] = [_pose_doc(p) for p in scenario.robot_poses]
    doc["objects"] = [
        {
            "label": obj.label,
            **_pose_doc(obj.pose),
            "shape": [float(v) for v in obj.shape.coeffs],
            "keypoints": [float(v) for v in obj.keypoints.points.reshape(-1)],
            "category": obj.keypoints.category,
        }
        for obj in scenario.objects
    ]
    doc.update(_measurement_doc(scenario, with_labels=True))
    Path(path).write_text(toml.dumps(doc))
    logger.info(f"Wrote scenario with {scenario.num_frames} frames to {path}")


def write_measurements(scenario: Scenario, path: Union[str, Path]) -> None:
    """Measurement-only export: no config, no ground truth beyond the origin, no labels."""
    doc: Dict[str, Any] = {
        "format": SCENARIO_FORMAT,
        "version": SCENARIO_VERSION,
        "kind": "measurements",
    }
    doc.update(_measurement_doc(scenario, with_labels=False))
    Path(path).write_text(toml.dumps(doc))
    logger.info(f"Wrote measurements of {scenario.num_frames} frames to {path}")


def read_scenario(path: Union[str, Path]) -> Scenario:
    """Raises FileFormatError for malformed or measurement-only files."""
    doc = _load(path, "full")
    try:
        known = {f.name for f in fields(ScenarioConfig)}
        config = ScenarioConfig(**{k: v for k, v in doc["config"].items() if k in known})
        objects = tuple(
            SimObject(
                label=int(o["label"]),
                pose=_pose(o),
                shape=ShapeParams(o["shape"]),
                keypoints=KeypointSet3D(
                    np.asarray(o["keypoints"], dtype=float).reshape(-1, 3),
                    category=o.get("category", "chair"),
                ),
            )
            for o in doc["objects"]
        )
        observations, labels = _frames(doc)
        return Scenario(
            config=config,
            robot_poses=tuple(_pose(p) for p in doc["robot_poses"]),
            objects=objects,
            odometry=tuple(_pose(p) for p in doc["odometry"]),
            observations=observations,
            labels=labels,
        )
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise FileFormatError(f"{path}: malformed scenario ({exc})") from exc


def read_measurements(path: Union[str, Path]) -> MeasurementSet:
    """Measurements from either a full or a measurement-only file."""
    doc = _load(path, "measurements")
    try:
        cam = doc["camera"]
        observations, _ = _frames(doc)
        return MeasurementSet(
            origin=_pose(doc["origin"]),
            odometry=tuple(_pose(p) for p in doc["odometry"]),
            observations=observations,
            intrinsics=CameraIntrinsics(cam["fx"], cam["fy"], cam["cx"], cam["cy"]),
            height=float(cam["height"]),
            pitch=float(cam["pitch"]),
            image_size=(int(cam["image_width"]), int(cam["image_height"])),
            zero_parallax=bool(cam.get("zero_parallax", False)),
        )
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise FileFormatError(f"{path}: malformed measurements ({exc})") from exc
