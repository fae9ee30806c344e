"""Variables, factors and the factor-graph container.

Robot variables T_i are world->camera transforms; object variables T_O are
object->world. Residuals, all information-weighted as r^T Omega r:

| factor | residual                   | measurement              |
| ---    | ---                        | ---                      |
| prior  | Log(Z^-1 X)                | X itself                 |
| rel    | Log(Z_ij^-1 T_j T_i^-1)    | camera i in camera j     |
| object | Log(Z^-1 T_i T_O)          | object in camera i       |

Jacobians are w.r.t. right-multiplicative twists X <- X exp(delta).
"""

import logging
from collections import OrderedDict
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, List, NamedTuple, Optional, Tuple, Union

import numpy as np

from objslam.errors import DuplicateId, UnknownVariable
from objslam.geometry.lie import Pose3, adjoint, se3_right_jacobian_inv, twist_log

__all__ = [
    "DEFAULT_OBJECT_INFORMATION",
    "DEFAULT_ODOMETRY_INFORMATION",
    "DEFAULT_PRIOR_INFORMATION",
    "ErrorBreakdown",
    "Factor",
    "FactorGraph",
    "ObjectFactor",
    "PriorFactor",
    "RelPoseFactor",
    "VariableId",
    "VariableKind",
    "error_breakdown",
    "object_var",
    "robot_var",
    "total_error",
]


# ------- Constants ------- #
# 0.004 rad and 0.01 m of per-step odometry noise
DEFAULT_ODOMETRY_INFORMATION = np.diag([62500.0, 62500.0, 62500.0, 1e4, 1e4, 1e4])

# Fallback for object factors that carry no fit information
DEFAULT_OBJECT_INFORMATION = np.diag([10.0, 10.0, 10.0, 4.0, 4.0, 4.0])

DEFAULT_PRIOR_INFORMATION = 1e6 * np.eye(6)

logger = logging.getLogger(__name__)


class VariableKind(str, Enum):
    ROBOT = "robot"
    OBJECT = "object"


class VariableId(NamedTuple):
    kind: VariableKind
    index: int

    def __str__(self) -> str:
        return f"{self.kind.value}:{self.index}"


def robot_var(index: int) -> VariableId:
    return VariableId(VariableKind.ROBOT, int(index))


def object_var(index: int) -> VariableId:
    return VariableId(VariableKind.OBJECT, int(index))


Assignment = Dict[VariableId, Pose3]


def _information(info: Optional[np.ndarray], default: np.ndarray) -> np.ndarray:
    omega = np.array(default if info is None else info, dtype=float)
    if omega.shape != (6, 6):
        raise ValueError(f"information must be 6x6, got {omega.shape}")
    if not np.allclose(omega, omega.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(omega).max())):
        raise ValueError("information matrix is not symmetric")
    try:
        np.linalg.cholesky(omega)
    except np.linalg.LinAlgError:
        raise ValueError("information matrix is not positive definite")
    omega.setflags(write=False)
    return omega


@dataclass(frozen=True, eq=False)
class PriorFactor:
    variable: VariableId
    measurement: Pose3
    information: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "information", _information(self.information, DEFAULT_PRIOR_INFORMATION)
        )

    @property
    def variables(self) -> Tuple[VariableId, ...]:
        return (self.variable,)

    def residual(self, values: Assignment) -> np.ndarray:
        return twist_log(self.measurement.inverse().compose(values[self.variable]))

    def linearize(self, values: Assignment) -> Tuple[np.ndarray, List[np.ndarray]]:
        r = self.residual(values)
        return r, [se3_right_jacobian_inv(r)]


@dataclass(frozen=True, eq=False)
class RelPoseFactor:
    """Odometry between robot poses: measurement ~ T_target * T_source^-1."""

    source: VariableId
    target: VariableId
    measurement: Pose3
    information: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "information", _information(self.information, DEFAULT_ODOMETRY_INFORMATION)
        )

    @property
    def variables(self) -> Tuple[VariableId, ...]:
        return (self.source, self.target)

    def residual(self, values: Assignment) -> np.ndarray:
        ti, tj = values[self.source], values[self.target]
        return twist_log(self.measurement.inverse().compose(tj).compose(ti.inverse()))

    def linearize(self, values: Assignment) -> Tuple[np.ndarray, List[np.ndarray]]:
        r = self.residual(values)
        j = se3_right_jacobian_inv(r) @ adjoint(values[self.source])
        return r, [-j, j]


@dataclass(frozen=True, eq=False)
class ObjectFactor:
    """Object seen from a robot pose: measurement ~ T_robot * T_object."""

    robot: VariableId
    obj: VariableId
    measurement: Pose3
    information: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "information", _information(self.information, DEFAULT_OBJECT_INFORMATION)
        )

    @property
    def variables(self) -> Tuple[VariableId, ...]:
        return (self.robot, self.obj)

    def residual(self, values: Assignment) -> np.ndarray:
        ti, to = values[self.robot], values[self.obj]
        return twist_log(self.measurement.inverse().compose(ti).compose(to))

    def linearize(self, values: Assignment) -> Tuple[np.ndarray, List[np.ndarray]]:
        r = self.residual(values)
        jr = se3_right_jacobian_inv(r)
        return r, [jr @ adjoint(values[self.obj].inverse()), jr]


Factor = Union[PriorFactor, RelPoseFactor, ObjectFactor]


class FactorGraph:
    """Variables plus prior, odometry and object factors. Single writer, no numerics."""

    def __init__(self):
        self._variables: "OrderedDict[VariableId, None]" = OrderedDict()
        self.priors: List[PriorFactor] = []
        self.rel_factors: List[RelPoseFactor] = []
        self.object_factors: List[ObjectFactor] = []

    def __contains__(self, vid: VariableId) -> bool:
        return vid in self._variables

    def __len__(self) -> int:
        return len(self._variables)

    @property
    def variables(self) -> Tuple[VariableId, ...]:
        return tuple(self._variables)

    @property
    def factors(self) -> List[Factor]:
        return [*self.priors, *self.rel_factors, *self.object_factors]

    def _require(self, *vids: VariableId) -> None:
        for vid in vids:
            if vid not in self._variables:
                raise UnknownVariable(f"variable {vid} is not in the graph")

    def add_variable(self, vid: VariableId) -> VariableId:
        if vid in self._variables:
            raise DuplicateId(f"variable {vid} already exists")
        self._variables[vid] = None
        return vid

    def add_prior(
        self, vid: VariableId, pose: Pose3, information: Optional[np.ndarray] = None
    ) -> PriorFactor:
        self._require(vid)
        factor = PriorFactor(vid, pose, information)
        self.priors.append(factor)
        return factor

    def add_rel_pose_factor(
        self,
        source: VariableId,
        target: VariableId,
        measurement: Pose3,
        information: Optional[np.ndarray] = None,
    ) -> RelPoseFactor:
        self._require(source, target)
        factor = RelPoseFactor(source, target, measurement, information)
        self.rel_factors.append(factor)
        return factor

    def add_object_factor(
        self,
        robot: VariableId,
        obj: VariableId,
        measurement: Pose3,
        information: Optional[np.ndarray] = None,
    ) -> ObjectFactor:
        self._require(robot, obj)
        factor = ObjectFactor(robot, obj, measurement, information)
        self.object_factors.append(factor)
        return factor

    def add_factor(self, factor: Factor) -> Factor:
        """Insert an already-built factor of any kind."""
        self._require(*factor.variables)
        if isinstance(factor, PriorFactor):
            self.priors.append(factor)
        elif isinstance(factor, RelPoseFactor):
            self.rel_factors.append(factor)
        elif isinstance(factor, ObjectFactor):
            self.object_factors.append(factor)
        else:
            raise TypeError(f"unsupported factor type {type(factor).__name__}")
        return factor

    def constrained_variables(self) -> List[VariableId]:
        """Variables touched by at least one factor, in insertion order."""
        used = {vid for f in self.factors for vid in f.variables}
        return [vid for vid in self._variables if vid in used]

    def reachable_from_priors(self) -> set:
        """Variables connected to some prior through the factors."""
        adjacency: Dict[VariableId, List[VariableId]] = {vid: [] for vid in self._variables}
        for f in (*self.rel_factors, *self.object_factors):
            a, b = f.variables
            adjacency[a].append(b)
            adjacency[b].append(a)
        seen = {p.variable for p in self.priors}
        stack = list(seen)
        while stack:
            for nxt in adjacency[stack.pop()]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return seen

    def copy(self) -> "FactorGraph":
        other = FactorGraph()
        other._variables = OrderedDict(self._variables)
        other.priors = list(self.priors)
        other.rel_factors = list(self.rel_factors)
        other.object_factors = list(self.object_factors)
        return other


class ErrorBreakdown(NamedTuple):
    pose: float
    obj: float
    prior: float

    @property
    def total(self) -> float:
        return self.pose + self.obj + self.prior


def _weighted(factors: Iterable[Factor], values: Assignment) -> float:
    total = 0.0
    for f in factors:
        r = f.residual(values)
        total += float(r @ f.information @ r)
    return total


def error_breakdown(graph: FactorGraph, values: Assignment) -> ErrorBreakdown:
    """Odometry, object and prior contributions to the joint error.

    Raises:
        UnknownVariable: a constrained variable is missing from `values`
    """
    missing = [vid for vid in graph.constrained_variables() if vid not in values]
    if missing:
        raise UnknownVariable(f"assignment lacks {', '.join(map(str, missing[:5]))}")
    return ErrorBreakdown(
        pose=_weighted(graph.rel_factors, values),
        obj=_weighted(graph.object_factors, values),
        prior=_weighted(graph.priors, values),
    )


def total_error(graph: FactorGraph, values: Assignment) -> float:
    """Sum of r^T Omega r over every factor, priors included."""
    return error_breakdown(graph, values).total

