from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

STATUSES = ("optimal", "feasible-gap", "infeasible", "unbounded", "limit")


@dataclass(frozen=True)
class SolverOptions:
    gap_abs: float = 1e-6
    gap_rel: float = 1e-4
    feas_tol: float = 1e-6
    int_tol: float = 1e-6
    time_limit: float = 3600.0
    node_limit: int | None = None
    cone_tol: float = 1e-7             # cut violation threshold of the "oa" back-end
    cone_max_rounds: int = 500
    cone_backend: str = "clarabel"     # "clarabel" (interior point) or "oa" (LP + cuts)
    nlp_max_iter: int = 3000
    nlp_tol: float = 1e-9
    # bound used at exact-formulation nodes: "soc" (valid) or "nlp" (heuristic)
    exact_node_bound: str = "soc"
    seed: int | None = None

    def __post_init__(self):
        for name in ("gap_abs", "feas_tol", "int_tol", "cone_tol", "nlp_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.gap_rel < 0:
            raise ValueError("gap_rel must be non-negative")
        if self.time_limit is not None and not self.time_limit > 0:
            raise ValueError("time_limit must be positive")
        if self.node_limit is not None and self.node_limit <= 0:
            raise ValueError("node_limit must be positive")
        if self.cone_backend not in ("clarabel", "oa"):
            raise ValueError("cone_backend must be 'clarabel' or 'oa'")
        if self.cone_max_rounds <= 0:
            raise ValueError("cone_max_rounds must be positive")
        if self.exact_node_bound not in ("soc", "nlp"):
            raise ValueError("exact_node_bound must be 'soc' or 'nlp'")


@dataclass
class SolveResult:
    status: str
    objective: float = math.nan
    bound: float = -math.inf
    x: np.ndarray | None = None
    assignment: dict = field(default_factory=dict)
    topology: dict = field(default_factory=dict)
    nodes: int = 0
    iterations: int = 0
    time: float = 0.0
    message: str = ""
    residuals: dict = field(default_factory=dict)

    @property
    def solved(self) -> bool:
        return self.status in ("optimal", "feasible-gap") or (
            self.status == "limit" and self.x is not None)

    @property
    def gap(self) -> float:
        if not (math.isfinite(self.objective) and math.isfinite(self.bound)):
            return math.inf
        return self.objective - self.bound

    def to_dict(self) -> dict:
        def num(v):
            return v if math.isfinite(v) else None

        return {
            "status": self.status,
            "objective": num(self.objective),
            "bound": num(self.bound),
            "gap": num(self.gap),
            "nodes": self.nodes,
            "iterations": self.iterations,
            "message": self.message,
            "topology": dict(sorted(self.topology.items())),
            "assignment": dict(sorted(self.assignment.items())),
            "residuals": dict(sorted(self.residuals.items())),
        }


def fill_result(model, res: SolveResult) -> SolveResult:
    """Populate assignment/topology from ``res.x`` (binaries rounded)."""
    if res.x is None:
        return res
    x = np.array(res.x, dtype=float)
    for k in model.binaries:
        x[k] = float(round(x[k]))
    res.x = x
    res.assignment = {v.name: float(x[i]) for i, v in enumerate(model.variables)}
    res.topology = {key: int(x[i]) for i, key in model.element_of.items()}
    return res
