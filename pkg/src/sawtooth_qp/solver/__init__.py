"""LP and MIP solving: dual simplex kernel, branch-and-bound and run metrics."""

from .simplex import (
    INFEASIBLE,
    ITERATION_LIMIT,
    NUMERICAL,
    OPTIMAL,
    UNBOUNDED,
    Basis,
    LinearProgram,
    LpSolution,
    model_to_lp,
    solve_lp,
)
from .bnb import (
    BRANCHING_RULES,
    STATUS_INFEASIBLE,
    STATUS_NODE_LIMIT,
    STATUS_OPTIMAL,
    STATUS_TIME_LIMIT,
    BranchAndBound,
    MipOptions,
    SolveResult,
    SolverFailure,
    gap,
    shifted_geomean,
    solve_mip,
)

__all__ = [
    "INFEASIBLE", "ITERATION_LIMIT", "NUMERICAL", "OPTIMAL", "UNBOUNDED", "Basis", "LinearProgram", "LpSolution",
    "model_to_lp", "solve_lp", "BRANCHING_RULES", "STATUS_INFEASIBLE", "STATUS_NODE_LIMIT", "STATUS_OPTIMAL",
    "STATUS_TIME_LIMIT", "BranchAndBound", "MipOptions", "SolveResult", "SolverFailure", "gap", "shifted_geomean",
    "solve_mip",
]
