"""Topology optimization (transmission switching and busbar splitting) for
hybrid AC/DC grids."""

from .augment import SplitPlan, parse_split, split_busbars
from .case_io import bundled_case, read_case, write_json_case
from .feasibility import FeasibilityReport, fix_and_check, newton_acdc_power_flow, residual_audit
from .formulation import ProblemSpec, build_model
from .network import Network, validate
from .solver import SolverOptions, SolveResult, enumerate_oracle, solve, solve_continuous

__version__ = "0.1.0"

__all__ = [
    "SplitPlan", "parse_split", "split_busbars", "bundled_case", "read_case", "write_json_case",
    "FeasibilityReport", "fix_and_check", "newton_acdc_power_flow", "residual_audit",
    "ProblemSpec", "build_model", "Network", "validate", "SolverOptions", "SolveResult",
    "enumerate_oracle", "solve", "solve_continuous",
]
