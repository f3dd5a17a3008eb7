"""Exact linear assignment by shortest augmenting paths.

Every rank and signed-rank computation in the package reduces to a square
assignment problem ``min_sigma sum_i C[i, sigma(i)]``.  The solver below is the
dual-based shortest augmenting path method (Jonker-Volgenant family, in the
formulation popularised by Crouse): one Dijkstra-like search per row, cubic
worst case, exact on the supplied doubles.  Ties between optimal permutations
are resolved by the deterministic search order; for continuous data they occur
with probability zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .errors import InvalidInputError


@dataclass(frozen=True)
class Assignment:
    """Solution of a square assignment problem.

    ``permutation[i]`` is the column matched to row ``i``.
    """

    permutation: np.ndarray
    total_cost: float

    @property
    def inverse(self) -> np.ndarray:
        inv = np.empty_like(self.permutation)
        inv[self.permutation] = np.arange(self.permutation.size)
        return inv


@numba.njit(cache=True, nogil=True)
def _shortest_augmenting_path(cost):
    n = cost.shape[0]
    u = np.zeros(n)
    v = np.zeros(n)
    shortest = np.empty(n)
    path = np.empty(n, dtype=np.int64)
    col4row = np.full(n, -1, dtype=np.int64)
    row4col = np.full(n, -1, dtype=np.int64)
    remaining = np.empty(n, dtype=np.int64)
    in_rows = np.zeros(n, dtype=np.bool_)
    in_cols = np.zeros(n, dtype=np.bool_)

    for cur_row in range(n):
        shortest[:] = np.inf
        path[:] = -1
        in_rows[:] = False
        in_cols[:] = False
        # reversed order so that, on ties, lower column indices win
        for it in range(n):
            remaining[it] = n - 1 - it
        num_remaining = n
        min_val = 0.0
        i = cur_row
        sink = -1
        while sink == -1:
            in_rows[i] = True
            index = -1
            lowest = np.inf
            for it in range(num_remaining):
                j = remaining[it]
                r = min_val + cost[i, j] - u[i] - v[j]
                if r < shortest[j]:
                    path[j] = i
                    shortest[j] = r
                if shortest[j] < lowest or (shortest[j] == lowest and row4col[j] == -1):
                    lowest = shortest[j]
                    index = it
            min_val = lowest
            if index == -1:
                return col4row, False
            j = remaining[index]
            if row4col[j] == -1:
                sink = j
            else:
                i = row4col[j]
            in_cols[j] = True
            num_remaining -= 1
            remaining[index] = remaining[num_remaining]

        u[cur_row] += min_val
        for r in range(n):
            if in_rows[r] and r != cur_row:
                u[r] += min_val - shortest[col4row[r]]
        for c in range(n):
            if in_cols[c]:
                v[c] -= min_val - shortest[c]

        j = sink
        while True:
            i = path[j]
            row4col[j] = i
            nxt = col4row[i]
            col4row[i] = j
            j = nxt
            if i == cur_row:
                break
    return col4row, True


def solve_assignment(costs) -> Assignment:
    """Solve ``min_sigma sum_i costs[i, sigma(i)]`` exactly.

    Raises InvalidInputError for non-square, empty or non-finite matrices.
    """
    c = np.asarray(costs, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise InvalidInputError(f"cost matrix must be square, got shape {c.shape}")
    if c.shape[0] == 0:
        raise InvalidInputError("cost matrix is empty")
    if not np.all(np.isfinite(c)):
        raise InvalidInputError("cost matrix has non-finite entries")
    perm, ok = _shortest_augmenting_path(np.ascontiguousarray(c))
    if not ok:  # pragma: no cover - finite square matrices are always feasible
        raise InvalidInputError("assignment problem is infeasible")
    total = float(c[np.arange(c.shape[0]), perm].sum())
    return Assignment(permutation=perm, total_cost=total)
