"""Minimum-cost one-to-one assignment over a possibly rectangular cost matrix."""

from typing import NamedTuple, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

__all__ = ["GATE_SENTINEL", "Assignment", "hungarian_assign"]

# Cost of a forbidden pairing; any entry at or above it is never reported as a match
GATE_SENTINEL: float = 1e9


class Assignment(NamedTuple):
    matches: Tuple[Tuple[int, int], ...]
    unmatched_rows: Tuple[int, ...]
    unmatched_cols: Tuple[int, ...]
    total_cost: float


def hungarian_assign(cost: np.ndarray) -> Assignment:
    """Optimal row-to-column assignment.

    The matrix is padded to square with GATE_SENTINEL, so rows or columns without an
    admissible partner end up unmatched rather than forced onto a gated pair.

    Args:
        cost (ndarray): R x C finite costs; gated pairs hold GATE_SENTINEL

    Returns:
        Assignment with matches sorted by row and the total cost of the matches
    """
    cost = np.asarray(cost, dtype=float)
    if cost.size == 0:
        rows, cols = cost.shape if cost.ndim == 2 else (0, 0)
        return Assignment((), tuple(range(rows)), tuple(range(cols)), 0.0)
    cost = np.atleast_2d(cost)
    if not np.all(np.isfinite(cost)):
        raise ValueError("costs must be finite; encode forbidden pairs with GATE_SENTINEL")

    r, c = cost.shape
    n = max(r, c)
    padded = np.full((n, n), GATE_SENTINEL)
    padded[:r, :c] = np.minimum(cost, GATE_SENTINEL)
    row_ind, col_ind = linear_sum_assignment(padded)

    matches = tuple(
        (int(i), int(j))
        for i, j in zip(row_ind, col_ind)
        if i < r and j < c and cost[i, j] < GATE_SENTINEL
    )
    matched_rows = {i for i, _ in matches}
    matched_cols = {j for _, j in matches}
    total = float(sum(cost[i, j] for i, j in matches))
    return Assignment(
        matches=matches,
        unmatched_rows=tuple(i for i in range(r) if i not in matched_rows),
        unmatched_cols=tuple(j for j in range(c) if j not in matched_cols),
        total_cost=total,
    )
