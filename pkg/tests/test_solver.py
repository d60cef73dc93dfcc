import math
import random
import time

import numpy as np
import pytest

from gridtopo.augment import SplitPlan
from gridtopo.formulation import ProblemSpec, build_model
from gridtopo.model import MathModel
from gridtopo.network import AcBranch, AcBus, Generator, Load, RawCase, validate
from gridtopo.solver import (BranchAndBound, SolverOptions, enumerate_oracle, solve, solve_continuous)
from gridtopo.solver.cone import cut_pool, solve_cone
from gridtopo.solver.lp import linear_data, solve_lp

from conftest import TIGHT, bs_spec


def overloaded():
    buses = [AcBus(1, 0.9, 1.1, ref=True), AcBus(2, 0.9, 1.1)]
    raw = RawCase(100.0, "overloaded", buses, [], [AcBranch(1, 1, 2, 2.0, -10.0, rate=50.0)], [], [],
                  [Generator(1, 1, 10.0, 0.0, 0.0, 1.0, -5.0, 5.0)], [Load(1, 2, "ac", 3.0)], [])
    return validate(raw)


def test_options_defaults_and_validation():
    o = SolverOptions()
    assert (o.gap_abs, o.gap_rel, o.feas_tol, o.int_tol, o.cone_tol, o.time_limit) == (
        1e-6, 1e-4, 1e-6, 1e-6, 1e-7, 3600)
    with pytest.raises(ValueError):
        SolverOptions(cone_backend="simplex")
    with pytest.raises(ValueError):
        SolverOptions(time_limit=0)


@pytest.mark.parametrize("form", ["exact", "soc", "lpac"])
def test_load_beyond_generation_is_infeasible(form):
    m = build_model(overloaded(), ProblemSpec(kind="ots", formulation=form))
    lb, ub = m.bounds()
    for i in m.binaries:
        lb[i] = ub[i] = 1.0
    assert solve_continuous(m, lb, ub).status == "infeasible"
    assert solve(m).status == "infeasible"


def test_cone_backend_without_cones_matches_lp():
    m = MathModel()
    x = m.add_var("x", 0, 10)
    y = m.add_var("y", 0, 10)
    m.add_row("r", {x: 1, y: 1}, lo=1)
    m.add_row("r", {x: 1, y: -1}, hi=0.5)
    m.objective = {x: 2.0, y: 1.0}
    lb, ub = m.bounds()
    st, xs, obj, _ = solve_cone(m, lb, ub, SolverOptions())
    st2, xl, obj2 = solve_lp(linear_data(m), lb, ub)
    assert st == st2 == "optimal"
    assert obj == pytest.approx(obj2, abs=1e-7)
    assert obj2 == pytest.approx(1.0)


def test_oracle_with_no_binaries(case5):
    m = build_model(case5, ProblemSpec(formulation="soc"))
    assert enumerate_oracle(m).objective == pytest.approx(solve_continuous(m).objective, abs=1e-9)


def test_micro_ots_two_binaries_is_best_of_four(case3):
    spec = ProblemSpec(kind="ots", formulation="lpac", plan=SplitPlan(switch_ac=(1, 2)))
    m = build_model(case3, spec)
    assert len(m.binaries) == 2
    values = []
    for a in (0.0, 1.0):
        for b in (0.0, 1.0):
            lb, ub = m.bounds()
            lb[m.binaries[0]] = ub[m.binaries[0]] = a
            lb[m.binaries[1]] = ub[m.binaries[1]] = b
            values.append(solve_continuous(m, lb, ub).objective)
    best = min(values)
    assert solve(m, TIGHT).objective == pytest.approx(best, abs=1e-6)
    assert enumerate_oracle(m, TIGHT).objective == pytest.approx(best, abs=1e-9)


def test_lpac_bs_matches_oracle(case5, solved):
    model, res = solved.get("lpac-bs2-tight", case5, bs_spec("lpac"), TIGHT)
    assert res.status == "optimal"
    assert enumerate_oracle(model, TIGHT).objective == pytest.approx(res.objective, abs=1e-6)


def test_determinism(case5):
    runs = [solve(build_model(case5, bs_spec("soc")), TIGHT) for _ in range(2)]
    a, b = runs
    assert (a.objective, a.bound, a.nodes, a.topology) == (b.objective, b.bound, b.nodes, b.topology)
    assert np.array_equal(a.x, b.x)


# interior-point optima carry a relative error of about 1e-8
def slack(v):
    return 1e-6 + 1e-7 * abs(v)


def test_relaxation_bounds_grow_with_fixings(case5):
    m = build_model(case5, bs_spec("soc"))
    rng = random.Random(3)
    for _ in range(4):
        lb, ub = m.bounds()
        prev = solve_continuous(m, lb, ub).objective
        order = list(m.binaries)
        rng.shuffle(order)
        for i in order[:8]:
            if lb[i] == ub[i]:
                continue
            lb[i] = ub[i] = float(rng.random() < 0.5)
            cur = solve_continuous(m, lb, ub).objective
            assert cur >= prev - slack(prev)
            prev = cur
            if math.isinf(cur):
                break


def test_branch_and_bound_children_never_beat_parents(case5):
    m = build_model(case5, bs_spec("soc"))
    seen = []

    class Watch(BranchAndBound):
        def relax(self, lb, ub):
            out = super().relax(lb, ub)
            seen.append((lb.copy(), ub.copy(), out[2]))
            return out

    Watch(m, TIGHT, time.perf_counter() + 600).run(*m.bounds())
    bins = m.binaries
    for lb, ub, bound in seen:
        for lb2, ub2, bound2 in seen:
            tighter = all(lb2[i] >= lb[i] and ub2[i] <= ub[i] for i in bins)
            if tighter and math.isfinite(bound) and math.isfinite(bound2):
                assert bound2 >= bound - slack(bound)


def test_outer_approximation_cuts_are_valid(case5):
    m = build_model(case5, bs_spec("soc"))
    opts = SolverOptions(cone_backend="oa", cone_tol=1e-5)
    lb, ub = m.bounds()
    solve_cone(m, lb, ub, opts)
    pool = cut_pool(m)
    A, _, rhs = pool.matrix()
    assert A.shape[0] > 0
    # feasible cone points: interior-point optima over several fixings and objectives
    rng = np.random.default_rng(0)
    points = []
    for _ in range(6):
        flb, fub = lb.copy(), ub.copy()
        for i in m.binaries:
            if rng.random() < 0.4:
                flb[i] = fub[i] = float(rng.random() < 0.5)
        st, x, _, _ = solve_cone(m, flb, fub, SolverOptions())
        if x is not None:
            points.append(x)
    assert points
    owner = np.array(pool.owner)
    for x in points:
        inside = pool.violation(x) <= 1e-9
        lhs = A @ x - rhs
        assert np.all(lhs[inside[owner]] <= 1e-7)


def test_incumbents_pass_the_model_audit(case5, solved):
    for key, spec in (("lpac-bs2-tight", bs_spec("lpac")), ("soc-bs2-tight", bs_spec("soc"))):
        model, res = solved.get(key, case5, spec, TIGHT)
        assert max(res.residuals.values()) <= 1e-6
        assert all(v in (0.0, 1.0) for v in res.x[model.binaries])
    model, res = solved.get("exact-ots", case5, ProblemSpec(kind="ots"))
    assert max(res.residuals.values()) <= 1e-6


def test_optimal_status_respects_gap(case5, solved):
    _, res = solved.get("exact-ots", case5, ProblemSpec(kind="ots"))
    assert res.status == "optimal"
    assert res.objective - res.bound <= max(1e-6, 1e-4 * abs(res.objective)) + 1e-9
