"""Solver-agnostic optimization model.

A :class:`MathModel` holds typed variables, linear rows ``lo <= a.x <= hi``,
second-order cones ``||A x + b|| <= c.x + d`` and nonlinear records whose
residuals are evaluated by :mod:`gridtopo.formulation.evaluators`.  The
objective is linear.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

CONTINUOUS = "C"
BINARY = "B"

FAMILIES = (
    "ac-balance", "dc-balance", "ac-flow", "dc-flow", "converter-loss",
    "converter-coupling", "switch-voltage", "switch-flow-bound", "exclusivity",
    "thermal", "angle-diff", "reference", "bounds", "shunt",
)
LINEAR, CONE, NONLINEAR = "linear", "second-order cone", "nonlinear-smooth"


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str
    lb: float
    ub: float
    tag: str = ""


@dataclass(frozen=True)
class LinearRow:
    family: str
    coef: dict
    lo: float
    hi: float
    name: str = ""


@dataclass(frozen=True)
class Cone:
    """``sqrt(sum_k (a_k.x + b_k)^2) <= c.x + d``; terms are ``(dict, const)``."""

    family: str
    terms: tuple
    rhs: tuple
    name: str = ""


@dataclass(frozen=True)
class NonlinearRecord:
    """Equality (or ``<= 0``) constraint evaluated by a named kernel.

    ``gate`` is the index of a binary variable that scales the record; when
    that binary is fixed at 0 the record is dropped and linear rows force
    the outputs to zero.
    """

    family: str
    kind: str
    out: tuple
    inputs: tuple
    params: dict
    gate: int | None = None
    name: str = ""
    sense: str = "eq"


def _lin(coef: dict, x) -> float:
    return sum(c * x[i] for i, c in coef.items())


@dataclass
class MathModel:
    formulation: str = ""
    variables: list[Variable] = field(default_factory=list)
    rows: list[LinearRow] = field(default_factory=list)
    cones: list[Cone] = field(default_factory=list)
    nonlinear: list[NonlinearRecord] = field(default_factory=list)
    objective: dict = field(default_factory=dict)
    obj_const: float = 0.0
    # binary index -> element key, e.g. "l3" or "s12"
    element_of: dict = field(default_factory=dict)
    # (index_a, index_b, "eq"|"leq") for each exclusivity pair
    pairs: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    _index: dict = field(default_factory=dict, repr=False)

    # construction -----------------------------------------------------
    def add_var(self, name: str, lb: float = -math.inf, ub: float = math.inf,
                kind: str = CONTINUOUS, tag: str = "") -> int:
        if name in self._index:
            raise KeyError(f"duplicate variable {name}")
        self._index[name] = len(self.variables)
        self.variables.append(Variable(name, kind, float(lb), float(ub), tag))
        return self._index[name]

    def add_row(self, family: str, coef: dict, lo: float = -math.inf, hi: float = math.inf,
                name: str = "") -> None:
        merged: dict[int, float] = {}
        for i, c in coef.items():
            merged[i] = merged.get(i, 0.0) + c
        merged = {i: c for i, c in merged.items() if c != 0.0}
        self.rows.append(LinearRow(family, merged, float(lo), float(hi), name))

    def add_cone(self, family: str, terms, rhs, name: str = "") -> None:
        self.cones.append(Cone(family, tuple((dict(a), float(b)) for a, b in terms),
                               (dict(rhs[0]), float(rhs[1])), name))

    def add_rotated(self, family: str, x: list, u: tuple, v: tuple, name: str = "") -> None:
        """``sum x_k^2 <= u*v`` with ``u, v >= 0``; each argument is (dict, const)."""
        terms = [({i: 2 * c for i, c in a.items()}, 2 * b) for a, b in x]
        diff = dict(u[0])
        for i, c in v[0].items():
            diff[i] = diff.get(i, 0.0) - c
        terms.append((diff, u[1] - v[1]))
        tot = dict(u[0])
        for i, c in v[0].items():
            tot[i] = tot.get(i, 0.0) + c
        self.add_cone(family, terms, (tot, u[1] + v[1]), name)

    def add_nl(self, rec: NonlinearRecord) -> None:
        self.nonlinear.append(rec)

    # queries ----------------------------------------------------------
    def index(self, name: str) -> int:
        return self._index[name]

    def has(self, name: str) -> bool:
        return name in self._index

    @property
    def n(self) -> int:
        return len(self.variables)

    @property
    def binaries(self) -> list[int]:
        return [k for k, v in enumerate(self.variables) if v.kind == BINARY]

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lb = np.array([v.lb for v in self.variables])
        ub = np.array([v.ub for v in self.variables])
        return lb, ub

    def families(self) -> dict[str, set]:
        out: dict[str, set] = {}
        for r in self.rows:
            out.setdefault(r.family, set()).add(LINEAR)
        for c in self.cones:
            out.setdefault(c.family, set()).add(CONE)
        for r in self.nonlinear:
            out.setdefault(r.family, set()).add(NONLINEAR)
        return out

    def objective_value(self, x) -> float:
        return _lin(self.objective, x) + self.obj_const

    def max_violation(self, x, lb=None, ub=None, evaluate: Callable | None = None) -> dict:
        """Largest violation per constraint family at ``x``.

        Bounds default to the variable table; ``evaluate`` computes the
        residual vector of a nonlinear record (defaults to the formulation
        kernels).
        """
        if evaluate is None:
            from .formulation.evaluators import record_residual as evaluate
        x = np.asarray(x, dtype=float)
        if lb is None:
            lb, ub = self.bounds()
        out: dict[str, float] = {}

        def put(fam, v):
            out[fam] = max(out.get(fam, 0.0), float(v))

        put("bounds", max(0.0, float(np.max(lb - x, initial=0.0)), float(np.max(x - ub, initial=0.0))))
        for r in self.rows:
            v = _lin(r.coef, x)
            put(r.family, max(r.lo - v, v - r.hi, 0.0))
        for c in self.cones:
            lhs = math.sqrt(sum((_lin(a, x) + b) ** 2 for a, b in c.terms))
            put(c.family, max(lhs - (_lin(c.rhs[0], x) + c.rhs[1]), 0.0))
        for rec in self.nonlinear:
            if rec.gate is not None and x[rec.gate] < 0.5 and ub[rec.gate] < 0.5:
                continue
            res = np.atleast_1d(evaluate(rec, x, np))
            v = np.max(np.abs(res)) if rec.sense == "eq" else max(0.0, float(np.max(res)))
            put(rec.family, v)
        return out

    # serialization ----------------------------------------------------
    def to_json(self) -> str:
        def names(d):
            return {self.variables[i].name: c for i, c in sorted(d.items())}

        def num(v):
            return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")

        doc = {
            "formulation": self.formulation,
            "variables": [{"name": v.name, "kind": v.kind, "lb": num(v.lb), "ub": num(v.ub),
                           "tag": v.tag} for v in self.variables],
            "rows": [{"family": r.family, "name": r.name, "coef": names(r.coef),
                      "lo": num(r.lo), "hi": num(r.hi)} for r in self.rows],
            "cones": [{"family": c.family, "name": c.name,
                       "terms": [[names(a), b] for a, b in c.terms],
                       "rhs": [names(c.rhs[0]), c.rhs[1]]} for c in self.cones],
            "nonlinear": [{"family": r.family, "kind": r.kind, "name": r.name,
                           "out": [self.variables[i].name for i in r.out],
                           "inputs": [self.variables[i].name for i in r.inputs],
                           "gate": None if r.gate is None else self.variables[r.gate].name,
                           "params": r.params, "sense": r.sense} for r in self.nonlinear],
            "objective": names(self.objective),
            "objective_constant": self.obj_const,
        }
        return json.dumps(doc, indent=1, sort_keys=False)
