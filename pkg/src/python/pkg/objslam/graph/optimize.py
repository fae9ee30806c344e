"""Levenberg-Marquardt over robot and object poses, batch and incremental.

Usage:

    settings = GraphSettings()
    solution = optimize_batch(graph, chordal_init(graph), settings)

    for solution in optimize_incremental(split_by_frame(graph), settings):
        ...
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from objslam.errors import ConfigError, Diverged, GaugeUnfixed, UnknownVariable
from objslam.geometry.lie import Pose3, twist_exp
from objslam.graph.factors import (
    DEFAULT_OBJECT_INFORMATION,
    DEFAULT_ODOMETRY_INFORMATION,
    DEFAULT_PRIOR_INFORMATION,
    Assignment,
    ErrorBreakdown,
    Factor,
    FactorGraph,
    ObjectFactor,
    PriorFactor,
    RelPoseFactor,
    VariableId,
    VariableKind,
    error_breakdown,
)

__all__ = [
    "FrameUpdate",
    "GraphSettings",
    "GraphSolution",
    "IncrementalSmoother",
    "optimize_batch",
    "optimize_incremental",
    "split_by_frame",
]

logger = logging.getLogger(__name__)

# Errors at or below this are treated as an exact fit
ERROR_FLOOR = 1e-30


def _diagonal(values: Sequence[float], name: str) -> Tuple[float, ...]:
    values = tuple(float(v) for v in values)
    if len(values) != 6 or not all(v > 0 and math.isfinite(v) for v in values):
        raise ConfigError(f"{name} must be six positive numbers, got {values}")
    return values


@dataclass(frozen=True)
class GraphSettings:
    """Optimizer settings and default factor weights.

    Information diagonals are rotation first, matching the twist ordering.
    """

    max_iterations: int = 100
    relative_tolerance: float = 1e-12
    initial_damping: float = 1e-4
    max_damping: float = 1e10
    step_tolerance: float = 1e-12
    odometry_information: Tuple[float, ...] = tuple(np.diag(DEFAULT_ODOMETRY_INFORMATION))
    object_information: Tuple[float, ...] = tuple(np.diag(DEFAULT_OBJECT_INFORMATION))
    prior_information: Tuple[float, ...] = tuple(np.diag(DEFAULT_PRIOR_INFORMATION))

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ConfigError(f"max_iterations must be positive, got {self.max_iterations}")
        for name in ("relative_tolerance", "initial_damping", "max_damping", "step_tolerance"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("odometry_information", "object_information", "prior_information"):
            object.__setattr__(self, name, _diagonal(getattr(self, name), name))

    @property
    def odometry_matrix(self) -> np.ndarray:
        return np.diag(self.odometry_information)

    @property
    def object_matrix(self) -> np.ndarray:
        return np.diag(self.object_information)

    @property
    def prior_matrix(self) -> np.ndarray:
        return np.diag(self.prior_information)


@dataclass(frozen=True, eq=False)
class GraphSolution:
    values: Assignment
    error: float
    iterations: int
    converged: bool
    breakdown: ErrorBreakdown
    initial_error: float = float("nan")

    def __getitem__(self, vid: VariableId) -> Pose3:
        return self.values[vid]


# Private functions ------------------------------------------------------------


def _check_gauge(graph: FactorGraph, variables: List[VariableId]) -> None:
    if not graph.priors:
        raise GaugeUnfixed("graph has no prior; the solution is only defined up to a rigid motion")
    reachable = graph.reachable_from_priors()
    floating = [vid for vid in variables if vid not in reachable]
    if floating:
        raise GaugeUnfixed(
            f"{len(floating)} variables have no path to a prior, e.g. {floating[0]}"
        )


def _normal_equations(
    factors: Sequence[Factor], values: Assignment, index: Dict[VariableId, int]
) -> Tuple[np.ndarray, np.ndarray, float]:
    n = 6 * len(index)
    h = np.zeros((n, n))
    g = np.zeros(n)
    error = 0.0
    for f in factors:
        r, jacobians = f.linearize(values)
        w = f.information
        wr = w @ r
        error += float(r @ wr)
        slots = [6 * index[vid] for vid in f.variables]
        for a, ja in zip(slots, jacobians):
            g[a : a + 6] += ja.T @ wr
            jtw = ja.T @ w
            for b, jb in zip(slots, jacobians):
                h[a : a + 6, b : b + 6] += jtw @ jb
    return h, g, error


def _retract(values: Assignment, index: Dict[VariableId, int], delta: np.ndarray) -> Assignment:
    updated = dict(values)
    for vid, i in index.items():
        updated[vid] = values[vid].compose(twist_exp(delta[6 * i : 6 * i + 6]))
    return updated


def _error(factors: Sequence[Factor], values: Assignment) -> float:
    total = 0.0
    for f in factors:
        r = f.residual(values)
        total += float(r @ f.information @ r)
    return total


# Public API ------------------------------------------------------------------


def optimize_batch(
    graph: FactorGraph, init: Assignment, settings: Optional[GraphSettings] = None
) -> GraphSolution:
    """Minimize the information-weighted error of every factor.

    Marquardt damping scales the diagonal of the normal equations, so multiplying
    every information matrix by one constant leaves each step unchanged. Only
    variables touched by a factor are optimized and returned.

    Args:
        graph (FactorGraph): factors and variables
        init (dict): starting pose for every constrained variable
        settings (GraphSettings): iteration limits and tolerances

    Returns:
        GraphSolution

    Raises:
        GaugeUnfixed: no prior, or a variable without a path to one
        UnknownVariable: `init` misses a constrained variable
        Diverged: the error or a pose became non-finite
    """
    settings = settings or GraphSettings()
    variables = graph.constrained_variables()
    _check_gauge(graph, variables)
    missing = [vid for vid in variables if vid not in init]
    if missing:
        raise UnknownVariable(f"no initial value for {', '.join(map(str, missing[:5]))}")

    index = {vid: i for i, vid in enumerate(variables)}
    factors = graph.factors
    values: Assignment = {vid: init[vid] for vid in variables}

    h, g, error = _normal_equations(factors, values, index)
    if not math.isfinite(error):
        raise Diverged(f"initial error is not finite ({error})")
    initial_error = error

    damping = settings.initial_damping
    converged = error <= ERROR_FLOOR
    iterations = 0
    while not converged and iterations < settings.max_iterations:
        iterations += 1
        diag = np.diag(h).copy()
        diag = np.maximum(diag, 1e-12 * max(diag.max(), ERROR_FLOOR))
        try:
            factor = cho_factor(h + damping * np.diag(diag))
        except LinAlgError:
            damping *= 10.0
            if damping > settings.max_damping:
                break
            continue
        delta = -cho_solve(factor, g)
        if not np.all(np.isfinite(delta)):
            raise Diverged(f"non-finite step at iteration {iterations}")

        trial = _retract(values, index, delta)
        trial_error = _error(factors, trial)
        if not math.isfinite(trial_error):
            raise Diverged(f"error became non-finite at iteration {iterations}")

        if trial_error < error:
            decrease = (error - trial_error) / error
            values, error = trial, trial_error
            damping = max(damping / 10.0, 1e-15)
            if (
                decrease < settings.relative_tolerance
                or error <= ERROR_FLOOR
                or np.linalg.norm(delta) < settings.step_tolerance
            ):
                converged = True
                break
            h, g, _ = _normal_equations(factors, values, index)
        else:
            damping *= 10.0
            if np.linalg.norm(delta) < settings.step_tolerance or damping > settings.max_damping:
                # no descent left at the current linearization
                converged = True
                break

    if not converged:
        logger.warning(f"Graph optimizer stopped after {iterations} iterations without converging")
    breakdown = error_breakdown(graph, values)
    logger.info(
        f"Optimized {len(variables)} variables over {len(factors)} factors: "
        f"error {initial_error:.6g} -> {breakdown.total:.6g} in {iterations} iterations"
    )
    return GraphSolution(
        values=values,
        error=breakdown.total,
        iterations=iterations,
        converged=converged,
        breakdown=breakdown,
        initial_error=initial_error,
    )


@dataclass(frozen=True, eq=False)
class FrameUpdate:
    """Variables and factors that arrive with one frame."""

    frame: int
    variables: Tuple[VariableId, ...] = field(default_factory=tuple)
    factors: Tuple[Factor, ...] = field(default_factory=tuple)


def _initial_value(factor: Factor, values: Assignment) -> Optional[Tuple[VariableId, Pose3]]:
    """A pose for one uninitialized variable implied by `factor` and known values."""
    if isinstance(factor, PriorFactor):
        if factor.variable not in values:
            return factor.variable, factor.measurement
    elif isinstance(factor, RelPoseFactor):
        src, dst = factor.source, factor.target
        if dst not in values and src in values:
            return dst, factor.measurement.compose(values[src])
        if src not in values and dst in values:
            return src, factor.measurement.inverse().compose(values[dst])
    elif isinstance(factor, ObjectFactor):
        robot, obj = factor.robot, factor.obj
        if obj not in values and robot in values:
            return obj, values[robot].inverse().compose(factor.measurement)
        if robot not in values and obj in values:
            return robot, factor.measurement.compose(values[obj].inverse())
    return None


class IncrementalSmoother:
    """Grows a graph frame by frame and re-solves it warm-started.

    New poses are initialized from the factors that introduce them (odometry
    chaining for robot poses, the first sighting for objects); every `every`
    frames all variables are re-linearized and optimized together.
    """

    def __init__(self, settings: Optional[GraphSettings] = None, every: int = 1):
        if every < 1:
            raise ConfigError(f"incremental solve interval must be positive, got {every}")
        self.settings = settings or GraphSettings()
        self.every = every
        self.graph = FactorGraph()
        self.values: Assignment = {}
        self.solution: Optional[GraphSolution] = None
        self._unsolved = 0

    def _initialize(self, factors: Iterable[Factor]) -> None:
        pending = list(factors)
        while pending:
            remaining = []
            for f in pending:
                found = _initial_value(f, self.values)
                if found is not None:
                    self.values[found[0]] = found[1]
                if any(vid not in self.values for vid in f.variables):
                    remaining.append(f)
            if len(remaining) == len(pending):
                break
            pending = remaining

    def update(self, frame: FrameUpdate, solve: Optional[bool] = None) -> GraphSolution:
        """Add one frame; solve when the interval is reached or `solve` is True."""
        for vid in frame.variables:
            self.graph.add_variable(vid)
        for f in frame.factors:
            self.graph.add_factor(f)
        self._initialize(frame.factors)
        self._unsolved += 1

        if solve is None:
            solve = self._unsolved >= self.every
        if solve:
            return self._solve()

        try:
            breakdown = error_breakdown(self.graph, self.values)
        except UnknownVariable:
            # nothing anchors the new poses yet
            breakdown = ErrorBreakdown(math.nan, math.nan, math.nan)
        return GraphSolution(
            values=dict(self.values),
            error=breakdown.total,
            iterations=0,
            converged=False,
            breakdown=breakdown,
        )

    def _solve(self) -> GraphSolution:
        variables = self.graph.constrained_variables()
        uninitialized = [vid for vid in variables if vid not in self.values]
        if uninitialized:
            self._initialize(self.graph.factors)
        self.solution = optimize_batch(self.graph, self.values, self.settings)
        self.values.update(self.solution.values)
        self._unsolved = 0
        return self.solution

    def finalize(self) -> GraphSolution:
        """Solve any frames added since the last optimization."""
        if self._unsolved or self.solution is None:
            return self._solve()
        return self.solution


def optimize_incremental(
    frames: Iterable[FrameUpdate], settings: Optional[GraphSettings] = None, every: int = 1
) -> Iterator[GraphSolution]:
    """One solution per frame; the last frame is always fully optimized."""
    smoother = IncrementalSmoother(settings, every)
    iterator = iter(frames)
    current = next(iterator, None)
    while current is not None:
        upcoming = next(iterator, None)
        yield smoother.update(current, solve=True if upcoming is None else None)
        current = upcoming


def split_by_frame(graph: FactorGraph) -> List[FrameUpdate]:
    """Replay a finished graph as frame-ordered updates.

    A factor belongs to the frame of its highest robot index; a variable arrives with
    its first factor. Within a frame priors come first, then odometry, then objects.
    """

    def frame_of(f: Factor) -> int:
        robots = [vid.index for vid in f.variables if vid.kind == VariableKind.ROBOT]
        return max(robots) if robots else -1

    first_seen: Dict[VariableId, int] = {}
    for f in (*graph.rel_factors, *graph.object_factors):
        k = frame_of(f)
        for vid in f.variables:
            first_seen[vid] = min(first_seen.get(vid, k), k)

    buckets: Dict[int, List[Factor]] = {}
    for f in graph.priors:
        # object priors arrive with the object
        k = frame_of(f) if f.variable.kind == VariableKind.ROBOT else first_seen.get(f.variable, 0)
        buckets.setdefault(max(k, 0), []).append(f)
    for f in (*graph.rel_factors, *graph.object_factors):
        buckets.setdefault(frame_of(f), []).append(f)

    seen = set()
    updates = []
    for k in sorted(buckets):
        fresh = []
        for f in buckets[k]:
            for vid in f.variables:
                if vid not in seen:
                    seen.add(vid)
                    fresh.append(vid)
        updates.append(FrameUpdate(frame=k, variables=tuple(fresh), factors=tuple(buckets[k])))
    return updates
