"""Optimal-transport multivariate ranks, signed-ranks and distribution-free tests."""

__version__ = "0.1.0"

from .assignment import Assignment, solve_assignment
from .calibration import NullCache, NullModel, TestReport, p_value, simulate_null
from .errors import DegenerateInputError, InvalidInputError, NumericalError
from .groups import GroupElement, SymmetryGroup
from .procedures import (hotelling_test, rank_mmd_test, ranksum_test, signed_rank_test,
                         symmetry_mmd_test)
from .ranks import RankAssignment, pooled_rank_map, rank_map, signed_rank_map
from .reference import ReferenceGrid, center_outward_grid, default_symmetry_grid, make_grid
from .statistics import Kernel, ScoreFunction

__all__ = [
    "Assignment", "DegenerateInputError", "GroupElement", "InvalidInputError", "Kernel",
    "NullCache", "NullModel", "NumericalError", "RankAssignment", "ReferenceGrid",
    "ScoreFunction", "SymmetryGroup", "TestReport", "center_outward_grid",
    "default_symmetry_grid", "hotelling_test", "make_grid", "p_value", "pooled_rank_map",
    "rank_map", "rank_mmd_test", "ranksum_test", "signed_rank_map", "signed_rank_test",
    "simulate_null", "solve_assignment", "symmetry_mmd_test",
]
