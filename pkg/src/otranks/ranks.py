"""Empirical OT ranks, signs and signed-ranks.

``rank_map`` matches observations to grid points under squared Euclidean
cost.  ``signed_rank_map`` does the same under the quotient cost of a symmetry
group, which yields absolute ranks; each observation's signed-rank is then the
point of its absolute rank's orbit nearest to it, and its sign the group
element realising that point.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import groups
from .assignment import solve_assignment
from .errors import InvalidInputError
from .groups import GroupElement, SymmetryGroup
from .reference import ReferenceGrid, check_fundamental_domain


@dataclass(frozen=True, eq=False)
class RankAssignment:
    """Solved transport between a sample and a grid.

    ``permutation[i]`` is the grid index matched to observation ``i``;
    ``absolute_ranks[i] = grid[permutation[i]]`` and ``signed_ranks[i]`` is the
    orbit point of that rank closest to observation ``i``.
    """

    permutation: np.ndarray
    absolute_ranks: np.ndarray
    signed_ranks: np.ndarray
    total_cost: float
    group: SymmetryGroup
    signs: tuple[GroupElement, ...] | None = None

    @property
    def n(self) -> int:
        return self.permutation.size


def _as_sample(sample, name="sample") -> np.ndarray:
    x = np.asarray(sample, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] == 0:
        raise InvalidInputError(f"{name} must be a nonempty n x p matrix")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return x


def _check_distinct(x: np.ndarray, name="sample"):
    if x.shape[0] > 1 and np.unique(x, axis=0).shape[0] != x.shape[0]:
        raise InvalidInputError(
            f"{name} has duplicate rows; ties have probability zero for continuous data "
            "(use jitter to break them)")


def _grid_points(grid) -> np.ndarray:
    return grid.points if isinstance(grid, ReferenceGrid) else _as_sample(grid, "grid")


def signed_rank_map(sample, grid, g: SymmetryGroup, rng: np.random.Generator | None = None,
                    *, compute_signs: bool = True, validate: bool = True) -> RankAssignment:
    """Joint minimiser over permutations and group elements of ``sum |Q_i^T X_sigma(i) - h_i|^2``.

    The grid must meet the fundamental-domain condition for ``g`` (checked
    unless ``validate`` is False, e.g. when a fixed grid is reused across
    Monte Carlo replicates).  Signs use ``rng`` to pick uniformly among
    minimisers when the group element is not unique.
    """
    x = _as_sample(sample)
    H = _grid_points(grid)
    if x.shape != H.shape:
        raise InvalidInputError(f"sample shape {x.shape} does not match grid shape {H.shape}")
    if x.shape[1] != g.dim:
        raise InvalidInputError(f"sample dimension {x.shape[1]} does not match group dimension {g.dim}")
    if validate:
        _check_distinct(x)
        check_fundamental_domain(grid if isinstance(grid, ReferenceGrid)
                                 else ReferenceGrid(H, "custom"), g)
    sol = solve_assignment(groups.cost_matrix(g, x, H))
    absolute = H[sol.permutation]
    signed = groups.closest_orbit_points(g, x, absolute)
    signs = None
    if compute_signs:
        if rng is None:
            rng = np.random.default_rng()
        signs = tuple(groups.argmin_sign(g, xi, hi, rng) for xi, hi in zip(x, absolute))
    return RankAssignment(sol.permutation, absolute, signed, sol.total_cost, g, signs)


def rank_map(sample, grid, *, validate: bool = True) -> RankAssignment:
    """Multivariate ranks: the cost-minimising bijection from the sample onto the grid."""
    x = _as_sample(sample)
    g = SymmetryGroup("trivial", x.shape[1])
    return signed_rank_map(x, grid, g, compute_signs=True, validate=validate)


def pooled_rank_map(x, y, grid, *, validate: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Ranks of the pooled sample, split back into the X block and the Y block."""
    x = _as_sample(x, "x")
    y = _as_sample(y, "y")
    if x.shape[1] != y.shape[1]:
        raise InvalidInputError("x and y have different dimensions")
    res = rank_map(np.vstack([x, y]), grid, validate=validate)
    m = x.shape[0]
    return res.absolute_ranks[:m], res.absolute_ranks[m:]
