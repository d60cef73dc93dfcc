"""Continuous solves and a best-bound branch-and-bound over the binaries.

Nodes are explored by smallest bound (first-in first-out on ties) and
branched on the most fractional binary (lowest index on ties).  Fixing one
switch of an exclusivity pair propagates to its partner.

For LP and SOC models every integral point is re-evaluated with a fixed
topology solve, so reported objectives are exactly the values an
enumeration would produce.  Exact models are bounded by their SOC
relaxation and take incumbents from local NLP solves at integral points.
"""
from __future__ import annotations

import heapq
import itertools
import logging
import math
import time
import numpy as np

from ..model import MathModel
from .cone import solve_cone
from .lp import linear_data, solve_lp
from .nlp import solve_nlp
from .options import SolverOptions, SolveResult, fill_result

log = logging.getLogger(__name__)


def _finish(model, res: SolveResult, lb, ub) -> SolveResult:
    fill_result(model, res)
    if res.x is not None:
        res.residuals = model.max_violation(res.x, lb, ub)
    return res


def solve_continuous(model: MathModel, lb=None, ub=None, opts: SolverOptions | None = None,
                     x0=None, deadline=None) -> SolveResult:
    """Solve with every binary treated as continuous within its bounds.

    With all binaries fixed this is the fixed-topology problem.  The
    back-end follows the model: NLP when it has nonlinear records, LP with
    cone cuts when it has cones, LP otherwise.
    """
    opts = opts or SolverOptions()
    t0 = time.perf_counter()
    if lb is None:
        lb, ub = model.bounds()
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    left = None if deadline is None else deadline - t0
    if model.nonlinear:
        status, x, obj, it, msg = solve_nlp(model, lb, ub, opts, x0=x0, deadline=deadline)
        res = SolveResult(status, obj, -math.inf, x, iterations=it, message=msg)
    elif model.cones:
        status, x, obj, it = solve_cone(model, lb, ub, opts, deadline)
        if status == "limit" and x is not None:
            status = "feasible-gap"
        res = SolveResult(status, obj if x is not None else math.nan, obj, x, iterations=it)
    else:
        status, x, obj = solve_lp(linear_data(model), lb, ub, time_limit=left)
        res = SolveResult(status, obj, obj if status == "optimal" else -math.inf, x, iterations=1)
    if res.status == "infeasible":
        res.objective, res.bound = math.inf, math.inf
    res.time = time.perf_counter() - t0
    return _finish(model, res, lb, ub)


class BranchAndBound:
    def __init__(self, model: MathModel, opts: SolverOptions, deadline: float):
        self.model = model
        self.opts = opts
        self.deadline = deadline
        self.bins = model.binaries
        self.exact = bool(model.nonlinear)
        self.relax_model = model
        self.map = {i: i for i in self.bins}
        if self.exact and opts.exact_node_bound == "soc":
            from ..formulation import soc_lift

            self.relax_model = soc_lift(model)
            self.map = {i: self.relax_model.index(model.variables[i].name) for i in self.bins}
        self.partners: dict[int, list] = {i: [] for i in self.bins}
        for a, b, mode in model.pairs:
            self.partners[a].append((b, mode))
            self.partners[b].append((a, mode))
        self.best = math.inf
        self.best_x = None
        self.leaves: dict = {}
        self.iterations = 0

    # pieces -------------------------------------------------------------
    def tol(self):
        if not math.isfinite(self.best):
            return self.opts.gap_abs
        return max(self.opts.gap_abs, self.opts.gap_rel * abs(self.best))

    def relax(self, lb, ub):
        """Node relaxation: ``(status, binary values, bound)``."""
        self.iterations += 1
        if self.exact and self.relax_model is self.model:
            status, x, obj, _, _ = solve_nlp(self.model, lb, ub, self.opts, deadline=self.deadline)
            vals = None if x is None else {i: x[i] for i in self.bins}
            return status, vals, obj
        rlb, rub = self.relax_model.bounds()
        for i, j in self.map.items():
            rlb[j], rub[j] = lb[i], ub[i]
        if self.relax_model.cones:
            status, x, obj, _ = solve_cone(self.relax_model, rlb, rub, self.opts, self.deadline)
        else:
            left = self.deadline - time.perf_counter()
            status, x, obj = solve_lp(linear_data(self.relax_model), rlb, rub, time_limit=left)
        vals = None if x is None else {i: x[j] for i, j in self.map.items()}
        return status, vals, obj

    def fix(self, lb, ub, i, v) -> bool:
        """Fix binary ``i`` to ``v`` and propagate exclusivity; False on conflict."""
        todo = [(i, v)]
        while todo:
            k, val = todo.pop()
            if lb[k] > val or ub[k] < val:
                return False
            if lb[k] == ub[k]:
                continue
            lb[k] = ub[k] = val
            for j, mode in self.partners[k]:
                if mode == "eq":
                    todo.append((j, 1.0 - val))
                elif val == 1.0:
                    todo.append((j, 0.0))
        return True

    def leaf(self, lb, ub, vals):
        """Evaluate the fixed topology given by rounded ``vals``."""
        flb, fub = lb.copy(), ub.copy()
        for i in self.bins:
            v = float(round(vals[i]))
            if not self.fix(flb, fub, i, v):
                return
        key = tuple(flb[i] for i in self.bins)
        if key in self.leaves:
            return
        res = solve_continuous(self.model, flb, fub, self.opts, deadline=self.deadline)
        self.iterations += res.iterations
        self.leaves[key] = res.objective
        if res.x is not None and res.status in ("optimal", "feasible-gap") and res.objective < self.best:
            self.best, self.best_x = res.objective, res.x
            log.info("incumbent %.6f", self.best)

    def branch_var(self, lb, ub, vals):
        free = [i for i in self.bins if lb[i] < ub[i]]
        if not free:
            return None, True
        frac = [(abs(vals[i] - round(vals[i])), -i) for i in free]
        dist, neg = max(frac)
        if dist > self.opts.int_tol:
            return -neg, False
        return free[0], True

    # main loop ------------------------------------------------------------
    def run(self, lb, ub) -> SolveResult:
        t0 = time.perf_counter()
        seq = itertools.count()
        heap = [(-math.inf, next(seq), lb.copy(), ub.copy())]
        nodes = 0
        status = "optimal"
        while heap:
            if time.perf_counter() >= self.deadline or (
                    self.opts.node_limit is not None and nodes >= self.opts.node_limit):
                status = "limit"
                break
            parent, _, nlb, nub = heapq.heappop(heap)
            if parent >= self.best - self.tol():
                continue
            nodes += 1
            st, vals, bound = self.relax(nlb, nub)
            if st == "infeasible" or vals is None:
                if st not in ("infeasible", "unbounded") and vals is None:
                    status = "limit"
                continue
            bound = max(bound, parent) if math.isfinite(bound) else parent
            if bound >= self.best - self.tol():
                continue
            k, integral = self.branch_var(nlb, nub, vals)
            if integral:
                self.leaf(nlb, nub, vals)
                if k is None or not self.exact:
                    continue
            for v in (0.0, 1.0):
                clb, cub = nlb.copy(), nub.copy()
                if self.fix(clb, cub, k, v):
                    heapq.heappush(heap, (bound, next(seq), clb, cub))
        open_bound = min((h[0] for h in heap if h[0] < self.best), default=self.best)
        bound = min(open_bound, self.best)
        if status == "limit" and math.isfinite(self.best):
            status = "optimal" if self.best - bound <= self.tol() else "feasible-gap"
        elif status == "optimal" and not math.isfinite(self.best):
            status = "infeasible"
        res = SolveResult(status, self.best, bound if status != "infeasible" else math.inf,
                          self.best_x, nodes=nodes, iterations=self.iterations,
                          time=time.perf_counter() - t0)
        if status == "limit":
            res.message = "limit reached without an incumbent"
        return _finish(self.model, res, *self.model.bounds())


def solve(model: MathModel, opts: SolverOptions | None = None, lb=None, ub=None) -> SolveResult:
    """Optimize ``model`` including its binaries."""
    opts = opts or SolverOptions()
    t0 = time.perf_counter()
    deadline = t0 + opts.time_limit
    if lb is None:
        lb, ub = model.bounds()
    lb = np.asarray(lb, dtype=float).copy()
    ub = np.asarray(ub, dtype=float).copy()
    if all(lb[i] == ub[i] for i in model.binaries):
        return solve_continuous(model, lb, ub, opts, deadline=deadline)
    res = BranchAndBound(model, opts, deadline).run(lb, ub)
    res.time = time.perf_counter() - t0
    return res
