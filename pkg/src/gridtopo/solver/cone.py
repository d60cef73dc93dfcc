"""Second-order cone back-ends.

``clarabel`` (default) maps rows, bounds and cones onto Clarabel's
``A x + s = b`` form with zero, nonnegative and second-order cones.  The
row/cone part is assembled once per model; the bound block is rebuilt per
call because branch-and-bound changes it.

``oa`` solves LPs and adds gradient cuts ``(y*/||y*||) . y <= t`` for each
violated cone ``||y|| <= t`` until the largest violation drops below
``cone_tol``.  Cuts live in a pool shared by every solve of the same model;
the pool starts with axis-direction cuts so the first LP is bounded.
"""
from __future__ import annotations

import math
import time

import clarabel
import numpy as np
from scipy.sparse import csc_matrix, csr_matrix, identity, vstack

from ..model import MathModel
from .lp import linear_data, solve_lp


class ConeData:
    def __init__(self, model: MathModel):
        lin = linear_data(model)
        n = model.n
        self.n = n
        self.c = lin.c
        self.const = lin.const
        A, lo, hi = lin.A, lin.lo, lin.hi
        eq = np.flatnonzero(lo == hi)
        up = np.flatnonzero((lo != hi) & np.isfinite(hi))
        dn = np.flatnonzero((lo != hi) & np.isfinite(lo))
        self.A_eq, self.b_eq = A[eq], lo[eq]
        self.A_in = vstack([A[up], -A[dn]], format="csr")
        self.b_in = np.concatenate([hi[up], -lo[dn]])
        blocks, rhs, self.soc_dims = [], [], []
        for c in model.cones:
            k = len(c.terms)
            M = np.zeros((k + 1, n))
            b = np.zeros(k + 1)
            for i, v in c.rhs[0].items():
                M[0, i] = -v
            b[0] = c.rhs[1]
            for r, (coef, const) in enumerate(c.terms):
                for i, v in coef.items():
                    M[r + 1, i] = -v
                b[r + 1] = const
            blocks.append(M)
            rhs.append(b)
            self.soc_dims.append(k + 1)
        self.A_soc = csc_matrix(np.vstack(blocks)) if blocks else csc_matrix((0, n))
        self.b_soc = np.concatenate(rhs) if rhs else np.zeros(0)

    def problem(self, lb, ub):
        fixed = np.flatnonzero(lb == ub)
        upper = np.flatnonzero((lb != ub) & np.isfinite(ub))
        lower = np.flatnonzero((lb != ub) & np.isfinite(lb))
        eye = identity(self.n, format="csr")
        A = vstack([self.A_eq, eye[fixed], self.A_in, eye[upper], -eye[lower], self.A_soc], format="csc")
        b = np.concatenate([self.b_eq, lb[fixed], self.b_in, ub[upper], -lb[lower], self.b_soc])
        cones = [clarabel.ZeroConeT(self.A_eq.shape[0] + fixed.size),
                 clarabel.NonnegativeConeT(self.A_in.shape[0] + upper.size + lower.size)]
        cones += [clarabel.SecondOrderConeT(d) for d in self.soc_dims]
        return A, b, cones


def cone_data(model: MathModel) -> ConeData:
    data = model.meta.get("_cone")
    if data is None:
        data = model.meta["_cone"] = ConeData(model)
    return data


_OK = ("Solved", "AlmostSolved")
_INFEASIBLE = ("PrimalInfeasible", "AlmostPrimalInfeasible")
_UNBOUNDED = ("DualInfeasible", "AlmostDualInfeasible")


_CLARABEL_TOL = 1e-8


def solve_cone(model: MathModel, lb, ub, opts, deadline=None):
    """Solve the conic relaxation (binaries continuous).  Returns
    ``(status, x, objective, iterations)``."""
    if opts.cone_backend == "oa":
        return solve_cone_oa(model, lb, ub, opts, deadline)
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    if np.any(lb > ub + 1e-12):
        return "infeasible", None, math.inf, 0
    data = cone_data(model)
    A, b, cones = data.problem(lb, ub)
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_gap_abs = settings.tol_gap_rel = settings.tol_feas = _CLARABEL_TOL
    if deadline is not None:
        settings.time_limit = max(deadline - time.perf_counter(), 1e-3)
    P = csc_matrix((data.n, data.n))
    sol = clarabel.DefaultSolver(P, data.c, A, b, cones, settings).solve()
    status = str(sol.status)
    if status in _OK:
        x = np.clip(np.array(sol.x), lb, ub)
        return "optimal", x, float(data.c @ x) + data.const, sol.iterations
    if status in _INFEASIBLE:
        return "infeasible", None, math.inf, sol.iterations
    if status in _UNBOUNDED:
        return "unbounded", None, -math.inf, sol.iterations
    return "limit", None, -math.inf, sol.iterations


class CutPool:
    """Outer-approximation cuts of a model's cones."""

    def __init__(self, model: MathModel):
        self.n = model.n
        self.cones = []
        for c in model.cones:
            k = len(c.terms)
            A = np.zeros((k, self.n))
            b = np.zeros(k)
            for r, (coef, const) in enumerate(c.terms):
                for i, v in coef.items():
                    A[r, i] = v
                b[r] = const
            cv = np.zeros(self.n)
            for i, v in c.rhs[0].items():
                cv[i] = v
            cols = np.flatnonzero(np.any(A != 0, axis=0) | (cv != 0))
            self.cones.append((A[:, cols], b, cv[cols], c.rhs[1], cols))
        self.rows_i: list[int] = []
        self.rows_j: list[int] = []
        self.rows_v: list[float] = []
        self.rhs: list[float] = []
        self.owner: list[int] = []   # cone index of each cut row
        self._keys: set = set()
        for idx, (A, *_rest) in enumerate(self.cones):
            k = A.shape[0]
            for r in range(k):
                for s in (1.0, -1.0):
                    u = np.zeros(k)
                    u[r] = s
                    self.add_cut(idx, u)

    def violation(self, x) -> np.ndarray:
        out = np.empty(len(self.cones))
        for idx, (A, b, cv, d, cols) in enumerate(self.cones):
            xs = x[cols]
            out[idx] = np.linalg.norm(A @ xs + b) - (cv @ xs + d)
        return out

    def add_cut(self, idx: int, u: np.ndarray) -> bool:
        """Add ``u.(A x + b) <= c.x + d`` for unit ``u``; False if a duplicate."""
        A, b, cv, d, cols = self.cones[idx]
        key = (idx, tuple(np.round(u, 12)))
        if key in self._keys:
            return False
        self._keys.add(key)
        coef = u @ A - cv
        r = len(self.rhs)
        for j, v in zip(cols, coef):
            if v != 0.0:
                self.rows_i.append(r)
                self.rows_j.append(int(j))
                self.rows_v.append(float(v))
        self.rhs.append(float(d - u @ b))
        self.owner.append(idx)
        return True

    def cut_at(self, idx: int, x) -> bool:
        A, b, cv, d, cols = self.cones[idx]
        y = A @ x[cols] + b
        nrm = np.linalg.norm(y)
        if nrm < 1e-12:
            return False
        return self.add_cut(idx, y / nrm)

    def matrix(self):
        m = len(self.rhs)
        A = csr_matrix((self.rows_v, (self.rows_i, self.rows_j)), shape=(m, self.n))
        return A, np.full(m, -np.inf), np.array(self.rhs)


def cut_pool(model: MathModel) -> CutPool:
    pool = model.meta.get("_cuts")
    if pool is None:
        pool = model.meta["_cuts"] = CutPool(model)
    return pool


def solve_cone_oa(model: MathModel, lb, ub, opts, deadline=None):
    """Outer-approximation loop.  The objective is a valid lower bound
    whatever the status."""
    lin = linear_data(model)
    pool = cut_pool(model)
    rounds = 0
    obj = -math.inf
    while True:
        rounds += 1
        left = None if deadline is None else deadline - time.perf_counter()
        if left is not None and left <= 0:
            return "limit", None, obj, rounds
        status, x, obj = solve_lp(lin, lb, ub, pool.matrix(), time_limit=left)
        if status != "optimal" or not pool.cones:
            return status, x, obj, rounds
        bad = np.flatnonzero(pool.violation(x) > opts.cone_tol)
        if bad.size == 0:
            return "optimal", x, obj, rounds
        added = sum(pool.cut_at(int(i), x) for i in bad)
        if not added or rounds >= opts.cone_max_rounds:
            return "limit", x, obj, rounds
