"""Linear back-end: HiGHS through scipy."""
from __future__ import annotations

import math

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp
from scipy.sparse import csr_matrix, vstack

from ..model import MathModel


class LinearData:
    """Sparse matrix form of a model's linear rows (built once per model)."""

    def __init__(self, model: MathModel):
        n = model.n
        ri, ci, vals = [], [], []
        lo, hi = [], []
        for r, row in enumerate(model.rows):
            for i, c in row.coef.items():
                ri.append(r)
                ci.append(i)
                vals.append(c)
            lo.append(row.lo)
            hi.append(row.hi)
        self.A = csr_matrix((vals, (ri, ci)), shape=(len(model.rows), n))
        self.lo = np.array(lo, dtype=float)
        self.hi = np.array(hi, dtype=float)
        self.c = np.zeros(n)
        for i, v in model.objective.items():
            self.c[i] = v
        self.const = model.obj_const


def linear_data(model: MathModel) -> LinearData:
    data = model.meta.get("_lin")
    if data is None:
        data = model.meta["_lin"] = LinearData(model)
    return data


def solve_lp(data: LinearData, lb, ub, extra=None, time_limit=None):
    """Minimize ``c.x`` over rows, optional extra rows ``(A, lo, hi)`` and
    the box.  Returns ``(status, x, objective)`` with status in
    ``optimal | infeasible | unbounded | limit``."""
    A, lo, hi = data.A, data.lo, data.hi
    if extra is not None and extra[0].shape[0]:
        A = vstack([A, extra[0]], format="csr")
        lo = np.concatenate([lo, extra[1]])
        hi = np.concatenate([hi, extra[2]])
    if np.any(lb > ub + 1e-12):
        return "infeasible", None, math.inf
    cons = [LinearConstraint(A, lo, hi)] if A.shape[0] else []
    opts = {"presolve": True}
    if time_limit is not None:
        opts["time_limit"] = max(float(time_limit), 1e-3)
    res = milp(data.c, constraints=cons, bounds=Bounds(lb, np.maximum(lb, ub)),
               integrality=np.zeros(len(data.c)), options=opts)
    if res.status == 0:
        return "optimal", res.x, float(res.fun) + data.const
    if res.status == 2:
        return "infeasible", None, math.inf
    if res.status == 3:
        return "unbounded", None, -math.inf
    # HiGHS may report "unbounded or infeasible" through the generic code
    if res.status == 4 and "nfeasible" in (res.message or ""):
        return "infeasible", None, math.inf
    return "limit", res.x, math.nan
