"""Brute-force reference: enumerate every admissible binary assignment."""
from __future__ import annotations

import itertools
import math
import time

import numpy as np

from ..model import MathModel
from .bnb import solve_continuous
from .options import SolverOptions, SolveResult

MAX_FREE = 20


def admissible(model: MathModel, lb, ub):
    """Yield full binary assignments (dict index -> 0/1) that respect the
    bounds and every exclusivity pair."""
    bins = model.binaries
    free = [i for i in bins if lb[i] < ub[i]]
    if len(free) > MAX_FREE:
        raise ValueError(f"{len(free)} free binaries exceed the enumeration limit of {MAX_FREE}")
    base = {i: float(lb[i]) for i in bins if lb[i] == ub[i]}
    for combo in itertools.product((0.0, 1.0), repeat=len(free)):
        vals = dict(base)
        vals.update(zip(free, combo))
        ok = True
        for a, b, mode in model.pairs:
            s = vals[a] + vals[b]
            if s > 1 or (mode == "eq" and s < 1):
                ok = False
                break
        if ok:
            yield vals


def enumerate_oracle(model: MathModel, opts: SolverOptions | None = None, lb=None, ub=None,
                     keep_all: bool = False):
    """Solve the fixed-topology problem for every admissible assignment.

    Returns the best :class:`SolveResult`; with ``keep_all`` also the list
    of ``(assignment, objective)`` pairs in enumeration order.
    """
    opts = opts or SolverOptions()
    t0 = time.perf_counter()
    if lb is None:
        lb, ub = model.bounds()
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    best = SolveResult("infeasible", math.inf, math.inf)
    seen = []
    count = 0
    for vals in admissible(model, lb, ub):
        flb, fub = lb.copy(), ub.copy()
        for i, v in vals.items():
            flb[i] = fub[i] = v
        res = solve_continuous(model, flb, fub, opts)
        count += 1
        if keep_all:
            seen.append((vals, res.objective))
        if res.x is not None and res.status in ("optimal", "feasible-gap") and res.objective < best.objective:
            best = res
    best.nodes = count
    if best.status == "feasible-gap":
        best.status = "optimal"
    if math.isfinite(best.objective):
        best.bound = best.objective
    best.time = time.perf_counter() - t0
    return (best, seen) if keep_all else best
