"""Pose graph over robot and object poses."""

from objslam.graph.chordal import chordal_init  # noqa: F401
from objslam.graph.factors import (  # noqa: F401
    ErrorBreakdown,
    FactorGraph,
    ObjectFactor,
    PriorFactor,
    RelPoseFactor,
    VariableId,
    VariableKind,
    error_breakdown,
    object_var,
    robot_var,
    total_error,
)
from objslam.graph.io import read_graph, write_graph  # noqa: F401
from objslam.graph.optimize import (  # noqa: F401
    FrameUpdate,
    GraphSettings,
    GraphSolution,
    IncrementalSmoother,
    optimize_batch,
    optimize_incremental,
    split_by_frame,
)
