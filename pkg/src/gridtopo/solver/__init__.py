"""Solver back-ends and the branch-and-bound driver."""
from .bnb import BranchAndBound, solve, solve_continuous
from .oracle import admissible, enumerate_oracle
from .options import STATUSES, SolveResult, SolverOptions

__all__ = ["solve", "solve_continuous", "enumerate_oracle", "admissible", "BranchAndBound",
           "SolverOptions", "SolveResult", "STATUSES"]
