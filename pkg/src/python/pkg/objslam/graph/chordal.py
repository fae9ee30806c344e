"""Chordal initialization of every pose in a factor graph.

All variables are handled as world->frame transforms X_v (robot poses directly,
objects through their inverse), so each relative or object factor reads

    X_target = M X_source

Rotations come from the linear least-squares problem R_t - M_R R_s = 0 with the
orthogonality constraint dropped, each 3x3 block then projected onto SO(3). With the
rotations fixed, translations follow from t_t - R_t R_s^T t_s = M_t.
"""

import logging
from typing import Dict, List, NamedTuple

import numpy as np

from objslam.errors import DisconnectedGraph
from objslam.geometry.lie import Pose3
from objslam.graph.factors import Assignment, FactorGraph, VariableId, VariableKind

__all__ = ["chordal_init", "project_to_so3"]

logger = logging.getLogger(__name__)


class _Edge(NamedTuple):
    source: int
    target: int
    measurement: Pose3
    w_rot: float
    w_trans: float


class _Anchor(NamedTuple):
    variable: int
    value: Pose3
    w_rot: float
    w_trans: float


def _block_weights(info: np.ndarray) -> tuple:
    return (
        float(np.sqrt(np.trace(info[:3, :3]) / 3.0)),
        float(np.sqrt(np.trace(info[3:, 3:]) / 3.0)),
    )


def project_to_so3(m: np.ndarray) -> np.ndarray:
    """Closest rotation in the Frobenius norm (orthogonal Procrustes)."""
    u, _, vt = np.linalg.svd(m)
    d = np.ones(3)
    d[2] = np.sign(np.linalg.det(u @ vt)) or 1.0
    return (u * d) @ vt


def _collect(graph: FactorGraph, index: Dict[VariableId, int]):
    edges: List[_Edge] = []
    for f in graph.rel_factors:
        edges.append(
            _Edge(index[f.source], index[f.target], f.measurement, *_block_weights(f.information))
        )
    for f in graph.object_factors:
        # T_robot = Z * T_object^-1
        edges.append(
            _Edge(index[f.obj], index[f.robot], f.measurement, *_block_weights(f.information))
        )

    anchors: List[_Anchor] = []
    for p in graph.priors:
        value = p.measurement if p.variable.kind == VariableKind.ROBOT else p.measurement.inverse()
        anchors.append(_Anchor(index[p.variable], value, *_block_weights(p.information)))
    return edges, anchors


def chordal_init(graph: FactorGraph) -> Assignment:
    """Initial values for every constrained variable.

    Raises:
        DisconnectedGraph: a variable has no path to any prior
    """
    variables = graph.constrained_variables()
    reachable = graph.reachable_from_priors()
    orphans = [vid for vid in variables if vid not in reachable]
    if not graph.priors or orphans:
        raise DisconnectedGraph(
            f"{len(orphans) or len(variables)} variables are not connected to a prior"
        )

    index = {vid: i for i, vid in enumerate(variables)}
    n = len(variables)
    edges, anchors = _collect(graph, index)
    rows = 3 * (len(edges) + len(anchors))

    # Rotations, all three columns solved at once
    a = np.zeros((rows, 3 * n))
    b = np.zeros((rows, 3))
    r = 0
    for e in edges:
        a[r : r + 3, 3 * e.target : 3 * e.target + 3] = e.w_rot * np.eye(3)
        a[r : r + 3, 3 * e.source : 3 * e.source + 3] = -e.w_rot * e.measurement.rotation
        r += 3
    for p in anchors:
        a[r : r + 3, 3 * p.variable : 3 * p.variable + 3] = p.w_rot * np.eye(3)
        b[r : r + 3] = p.w_rot * p.value.rotation
        r += 3
    relaxed = np.linalg.lstsq(a, b, rcond=None)[0]
    rotations = [project_to_so3(relaxed[3 * i : 3 * i + 3]) for i in range(n)]

    # Translations with rotations fixed
    a = np.zeros((rows, 3 * n))
    b = np.zeros(rows)
    r = 0
    for e in edges:
        a[r : r + 3, 3 * e.target : 3 * e.target + 3] = e.w_trans * np.eye(3)
        a[r : r + 3, 3 * e.source : 3 * e.source + 3] = (
            -e.w_trans * rotations[e.target] @ rotations[e.source].T
        )
        b[r : r + 3] = e.w_trans * e.measurement.translation
        r += 3
    for p in anchors:
        a[r : r + 3, 3 * p.variable : 3 * p.variable + 3] = p.w_trans * np.eye(3)
        b[r : r + 3] = p.w_trans * p.value.translation
        r += 3
    translations = np.linalg.lstsq(a, b, rcond=None)[0].reshape(n, 3)

    values: Assignment = {}
    for vid, i in index.items():
        x = Pose3(rotations[i], translations[i])
        values[vid] = x if vid.kind == VariableKind.ROBOT else x.inverse()
    logger.info(f"Chordal initialization of {n} variables from {len(edges)} relative constraints")
    return values
