"""Line-oriented text serialization of factor graphs.

One record per line, fields separated by single spaces:

    VAR <robot|object> <index>
    PRIOR <robot|object> <index> <pose> <information>
    REL <source robot index> <target robot index> <pose> <information>
    OBJ <robot index> <object index> <pose> <information>

<pose> is `tx ty tz qw qx qy qz` and <information> the 21 upper-triangle entries of
the 6x6 matrix in row-major order. Blank lines and lines starting with `#` are
ignored. Floats are written with `repr`, so a written graph reads back exactly up to
the quaternion conversion.
"""

import logging
from pathlib import Path
from typing import List, Union

import numpy as np
from scipy.spatial.transform import Rotation

from objslam.errors import FileFormatError
from objslam.geometry.lie import Pose3
from objslam.graph.factors import FactorGraph, VariableId, VariableKind, object_var, robot_var

__all__ = ["pose_fields", "read_graph", "write_graph"]

logger = logging.getLogger(__name__)

_UPPER = np.triu_indices(6)

_POSE_FIELDS = 7
_INFO_FIELDS = 21


def _number(x: float) -> str:
    return repr(float(x))


def pose_fields(pose: Pose3) -> List[str]:
    """`tx ty tz qw qx qy qz` as strings."""
    x, y, z, w = Rotation.from_matrix(pose.rotation).as_quat()
    return [_number(v) for v in (*pose.translation, w, x, y, z)]


def _info_fields(info: np.ndarray) -> List[str]:
    return [_number(v) for v in info[_UPPER]]


def _parse_pose(fields: List[str]) -> Pose3:
    tx, ty, tz, qw, qx, qy, qz = map(float, fields)
    rotation = Rotation.from_quat([qx, qy, qz, qw]).as_matrix()
    return Pose3(rotation, np.array([tx, ty, tz]))


def _parse_info(fields: List[str]) -> np.ndarray:
    info = np.zeros((6, 6))
    info[_UPPER] = [float(v) for v in fields]
    return info + np.triu(info, 1).T


def _variable(kind: str, index: str) -> VariableId:
    return VariableId(VariableKind(kind), int(index))


def write_graph(graph: FactorGraph, path: Union[str, Path]) -> None:
    lines = [f"VAR {vid.kind.value} {vid.index}" for vid in graph.variables]
    for f in graph.priors:
        fields = ["PRIOR", f.variable.kind.value, str(f.variable.index)]
        lines.append(" ".join(fields + pose_fields(f.measurement) + _info_fields(f.information)))
    for f in graph.rel_factors:
        fields = ["REL", str(f.source.index), str(f.target.index)]
        lines.append(" ".join(fields + pose_fields(f.measurement) + _info_fields(f.information)))
    for f in graph.object_factors:
        fields = ["OBJ", str(f.robot.index), str(f.obj.index)]
        lines.append(" ".join(fields + pose_fields(f.measurement) + _info_fields(f.information)))

    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    logger.info(f"Wrote {len(graph)} variables and {len(graph.factors)} factors to {path}")


def read_graph(path: Union[str, Path]) -> FactorGraph:
    """Parse a graph file.

    Raises:
        FileFormatError: unknown record, wrong field count or unparsable number
        UnknownVariable: a factor references an undeclared variable
    """
    graph = FactorGraph()
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            tag, *fields = line.split()
            try:
                if tag == "VAR" and len(fields) == 2:
                    graph.add_variable(_variable(*fields))
                    continue
                tail = _POSE_FIELDS + _INFO_FIELDS
                if tag == "PRIOR" and len(fields) == 2 + tail:
                    vid = _variable(fields[0], fields[1])
                elif tag in ("REL", "OBJ") and len(fields) == 2 + tail:
                    a, b = int(fields[0]), int(fields[1])
                else:
                    raise FileFormatError(f"unrecognized record {tag!r} with {len(fields)} fields")
                pose = _parse_pose(fields[2 : 2 + _POSE_FIELDS])
                info = _parse_info(fields[2 + _POSE_FIELDS :])
            except ValueError as exc:
                raise FileFormatError(f"{path}:{lineno}: {exc}") from exc

            if tag == "PRIOR":
                graph.add_prior(vid, pose, info)
            elif tag == "REL":
                graph.add_rel_pose_factor(robot_var(a), robot_var(b), pose, info)
            else:
                graph.add_object_factor(robot_var(a), object_var(b), pose, info)

    logger.info(f"Read {len(graph)} variables and {len(graph.factors)} factors from {path}")
    return graph
