"""Nonlinear back-end: Ipopt through casadi.

Binaries fixed by their bounds enter as parameters; nonlinear records gated
by a binary fixed at 0 are dropped (linear rows then force their outputs to
zero), and rows left with only fixed binaries are checked before the call.
Binaries left free are treated as continuous in [0, 1].  Built problems are
cached per (fixed set, dropped records).
"""
from __future__ import annotations

import logging
import math
import time

import casadi as ca
import numpy as np

from ..formulation.evaluators import record_residual
from ..model import MathModel
from .lp import linear_data

log = logging.getLogger(__name__)

_CONST_TOL = 1e-7
_OK = ("Solve_Succeeded", "Solved_To_Acceptable_Level")
_INFEASIBLE = ("Infeasible_Problem_Detected", "Restoration_Failed", "Not_Enough_Degrees_Of_Freedom")


class NlpProblem:
    """A model with a given set of fixed binaries, ready for Ipopt.

    Fixed binaries enter as casadi parameters, so one built problem serves
    every assignment of them that switches off the same nonlinear records.
    """

    def __init__(self, model: MathModel, fixed: tuple, dropped: frozenset, opts):
        n = model.n
        self.model = model
        self.fixed = np.array(fixed, dtype=int)
        fixed_set = set(fixed)
        self.free = np.array([i for i in range(n) if i not in fixed_set], dtype=int)
        pos = {int(i): k for k, i in enumerate(self.free)}
        ppos = {int(i): k for k, i in enumerate(self.fixed)}
        X = ca.SX.sym("x", len(self.free))
        Pz = ca.SX.sym("z", len(self.fixed))
        xs = [X[pos[i]] if i in pos else Pz[ppos[i]] for i in range(n)]
        g, glo, ghi = [], [], []

        # linear rows: free part plus a parametric part
        lin = linear_data(model)
        A = lin.A.tocsc()
        Af = A[:, self.free].tocsr()
        Ap = A[:, self.fixed].tocsr()
        keep = np.diff(Af.indptr) > 0
        self.const_rows = np.flatnonzero(~keep)
        self.const_A = Ap[self.const_rows]
        self.const_lo, self.const_hi = lin.lo[self.const_rows], lin.hi[self.const_rows]
        rows = np.flatnonzero(keep)
        if rows.size:
            g.append(ca.mtimes(_dm(Af[rows]), X) + ca.mtimes(_dm(Ap[rows]), Pz))
            glo.append(lin.lo[rows])
            ghi.append(lin.hi[rows])

        def lin_expr(coef, c0):
            e = c0
            for i, c in coef.items():
                e = e + c * xs[i]
            return e

        def put(e, lo, hi):
            g.append(e)
            glo.append(np.array([lo]))
            ghi.append(np.array([hi]))

        for c in model.cones:
            t = lin_expr(*c.rhs)
            sq = sum(lin_expr(a, b) ** 2 for a, b in c.terms)
            put(sq - t * t, -math.inf, 0.0)
            put(t, 0.0, math.inf)
        for k, rec in enumerate(model.nonlinear):
            if k in dropped:
                continue
            for e in record_residual(rec, xs, ca):
                put(e, 0.0 if rec.sense == "eq" else -math.inf, 0.0)

        G = ca.vertcat(*g) if g else ca.SX(0, 1)
        self.glo = np.concatenate(glo) if glo else np.zeros(0)
        self.ghi = np.concatenate(ghi) if ghi else np.zeros(0)
        f = lin_expr(model.objective, model.obj_const)
        ipopt = {
            "print_level": 0, "sb": "yes", "tol": opts.nlp_tol,
            "constr_viol_tol": min(1e-8, opts.feas_tol), "max_iter": opts.nlp_max_iter,
            "mu_strategy": "adaptive",
        }
        self.solver = ca.nlpsol("nlp", "ipopt", {"x": X, "p": Pz, "f": f, "g": G},
                                {"print_time": False, "ipopt": ipopt, "error_on_fail": False,
                                 "show_eval_warnings": False})

    def conflict(self, zval) -> str:
        """Name of a row that only involves fixed binaries and is violated."""
        if not self.const_rows.size:
            return ""
        v = self.const_A @ zval
        bad = np.flatnonzero((v < self.const_lo - _CONST_TOL) | (v > self.const_hi + _CONST_TOL))
        if bad.size:
            r = self.const_rows[bad[0]]
            return f"row {self.model.rows[r].name or r} violated by fixed binaries"
        return ""

    def solve(self, lb, ub, x0):
        lbx, ubx = lb[self.free], ub[self.free]
        zval = lb[self.fixed]
        x_start = np.clip(x0[self.free], lbx, ubx)
        r = self.solver(x0=x_start, p=zval, lbx=lbx, ubx=ubx, lbg=self.glo, ubg=self.ghi)
        stat = self.solver.stats()
        ret = stat.get("return_status", "")
        x = np.empty(self.model.n)
        x[self.free] = np.array(r["x"]).ravel()
        x[self.fixed] = zval
        return ret, x, float(r["f"]), int(stat.get("iter_count", 0))


def _dm(mat):
    sub = mat.tocsc()
    sp = ca.Sparsity(sub.shape[0], sub.shape[1], sub.indptr.tolist(), sub.indices.tolist())
    return ca.DM(sp, sub.data.tolist())


def flat_start(model: MathModel, lb, ub) -> np.ndarray:
    """Voltages at 1 p.u., everything else at the point of its box closest to 0."""
    x = np.clip(np.zeros(model.n), lb, ub)
    for i, v in enumerate(model.variables):
        if v.name.startswith(("vm[", "u[", "w[", "wdc[")):
            x[i] = min(max(1.0, lb[i]), ub[i])
    return x


def box_start(model: MathModel, lb, ub) -> np.ndarray:
    """Flat voltages, zero angles, every other bounded variable at its box midpoint."""
    x = flat_start(model, lb, ub)
    mid = np.isfinite(lb) & np.isfinite(ub)
    for i, v in enumerate(model.variables):
        if mid[i] and not v.name.startswith(("vm[", "va[", "u[", "w[", "wdc[")):
            x[i] = 0.5 * (lb[i] + ub[i])
    return x


def solve_nlp(model: MathModel, lb, ub, opts, x0=None, deadline=None):
    """Local NLP solve.  Returns ``(status, x, objective, iterations, message)``.

    Status is ``optimal`` (locally), ``infeasible`` or ``limit``.  Starts
    are tried in order until one succeeds: ``x0`` when given, the flat
    start, then the box-midpoint start.
    """
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    fixed = tuple(i for i in model.binaries if lb[i] == ub[i])
    dropped = frozenset(k for k, rec in enumerate(model.nonlinear)
                        if rec.gate is not None and ub[rec.gate] < 0.5)
    cache = model.meta.setdefault("_nlp", {})
    key = (fixed, dropped)
    prob = cache.get(key)
    if prob is None:
        prob = cache[key] = NlpProblem(model, fixed, dropped, opts)
    conflict = prob.conflict(lb[prob.fixed])
    if conflict:
        return "infeasible", None, math.inf, 0, conflict
    starts = [] if x0 is None else [np.asarray(x0, dtype=float)]
    starts += [flat_start(model, lb, ub), box_start(model, lb, ub)]
    iters = 0
    last = ("limit", None, math.nan, "no start tried")
    for xs in starts:
        if deadline is not None and time.perf_counter() >= deadline:
            break
        ret, x, obj, it = prob.solve(lb, ub, xs)
        iters += it
        log.debug("ipopt %s obj=%.6f iters=%d", ret, obj, it)
        if ret in _OK:
            viol = model.max_violation(x, lb, ub)
            worst = max(viol.values(), default=0.0)
            if worst <= max(1e3 * opts.feas_tol, 1e-5):
                return "optimal", x, model.objective_value(x), iters, ret
            last = ("limit", None, math.nan, f"{ret} but residual {worst:.2e}")
            continue
        status = "infeasible" if ret in _INFEASIBLE else "limit"
        last = (status, None, math.inf if status == "infeasible" else math.nan, ret)
    return last[0], last[1], last[2], iters, last[3]
