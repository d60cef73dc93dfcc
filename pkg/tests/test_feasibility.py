import json
import math

import numpy as np
import pytest

from gridtopo.augment import SplitPlan, split_busbars
from gridtopo.feasibility import (AuditError, Dispatch, FeasibilityReport, STATUS_FEASIBLE, STATUS_TOPOLOGY,
                                  _newton, apply_topology, fix_and_check, newton_acdc_power_flow,
                                  normalize_topology, residual_audit)
from gridtopo.formulation import ProblemSpec
from gridtopo.network import AcBranch, AcBus, Generator, Load, RawCase, validate

from conftest import TIGHT, bs_spec


def two_bus(load=0.0, g=2.0, b=-10.0):
    buses = [AcBus(1, 0.9, 1.1, ref=True), AcBus(2, 0.5, 1.5)]
    loads = [Load(1, 2, "ac", load, 0.0)] if load else []
    raw = RawCase(100.0, "two-bus", buses, [], [AcBranch(1, 1, 2, g, b, rate=math.inf)], [], [],
                  [Generator(1, 1, 10.0, 0.0, 0.0, 100.0, -100.0, 100.0)], loads, [])
    return validate(raw)


@pytest.fixture(scope="module")
def opf(case5, solved):
    return solved.get("exact-opf", case5, ProblemSpec())[1]


def all_on_half_i(aug, zil_closed=True):
    topo = {f"s{s.id}": 0 for s in aug.network.switches}
    for _k, (_aux, (a, _b)) in aug.detached.items():
        topo[f"s{a}"] = 1
    for z in aug.zil.values():
        topo[f"s{z}"] = int(zil_closed)
    return topo


# ---- power flow -----------------------------------------------------------

def test_no_flow_case_converges_flat_in_one_iteration():
    pf = newton_acdc_power_flow(two_bus(), Dispatch(pg={1: 0.0}, vset={"1": 1.0}))
    assert pf.converged and pf.iterations == 1
    assert pf.vm == {"1": 1.0, "2": 1.0}
    assert pf.va == {"1": 0.0, "2": 0.0}


def test_power_flow_reproduces_the_opf_state(case5, opf):
    a = opf.assignment
    gens_at = {str(g.bus) for g in case5.generators}
    disp = Dispatch(
        pg={g.id: a[f"pg[{g.id}]"] for g in case5.generators},
        vset={k: a[f"vm[{k}]"] for k in gens_at},
        conv={c.id: (a[f"pac[c{c.id}]"], a[f"qac[c{c.id}]"]) for c in case5.converters},
        udc={c.dc_bus: a[f"u[{c.dc_bus}]"] for c in case5.converters if c.dc_slack},
    )
    pf = newton_acdc_power_flow(case5, disp)
    assert pf.converged
    for k, v in pf.vm.items():
        assert v == pytest.approx(a[f"vm[{k}]"], abs=1e-6)
        assert pf.va[k] == pytest.approx(a[f"va[{k}]"], abs=1e-6)
    for k, v in pf.u.items():
        assert v == pytest.approx(a[f"u[{k}]"], abs=1e-6)
    for g in case5.generators:
        assert pf.pg[g.id] == pytest.approx(a[f"pg[{g.id}]"], abs=1e-6)
    for c in case5.converters:
        assert pf.pdc[c.id] == pytest.approx(a[f"pdc[c{c.id}]"], abs=1e-6)


def test_power_flow_without_solution_reports_nonconvergence():
    pf = newton_acdc_power_flow(two_bus(load=40.0, g=0.5, b=-2.0), Dispatch(pg={1: 0.0}, vset={"1": 1.0}))
    assert not pf.converged
    assert pf.message


def test_singular_jacobian_is_reported():
    hist = []
    x, ok, _it, msg = _newton(lambda x: np.array([1.0, 1.0]), lambda x: np.zeros((2, 2)),
                              np.zeros(2), 1e-9, 10, hist)
    assert not ok and msg == "singular Jacobian"


def test_divergence_after_growing_mismatch():
    # |F| grows along every damped Newton step: F(x) = exp(x) with a Jacobian of the wrong sign
    hist = []
    _x, ok, _it, msg = _newton(lambda x: np.exp(x), lambda x: -np.diag(np.exp(x)),
                               np.zeros(1), 1e-9, 50, hist)
    assert not ok and msg.startswith("diverged")


# ---- audit ------------------------------------------------------------------

def test_audit_of_exact_opf_optimum(case5, opf):
    res = residual_audit(case5, opf.assignment)
    assert max(res.values()) <= 1e-6


def test_audit_detects_voltage_perturbation(case5, opf):
    a = dict(opf.assignment)
    a["vm[3]"] += 0.1
    assert residual_audit(case5, a)["balance"] > 1e-6


def test_audit_needs_every_variable(case5, opf):
    a = dict(opf.assignment)
    del a["qg[2]"]
    with pytest.raises(AuditError):
        residual_audit(case5, a)


def test_closed_zil_angle_gap_is_reported(case5, opf):
    aug = split_busbars(case5, SplitPlan(busbars=(("ac", 2),)))
    topo = all_on_half_i(aug)
    rep = fix_and_check(aug, topo, opf.objective)
    state = dict(rep.state)
    i, i2 = aug.halves[("ac", 2)]
    state[f"va[{i2}]"] = state[f"va[{i}]"] + 0.0123
    res = residual_audit(aug.network, state, topology=topo)
    assert res["switch-equality"] == pytest.approx(0.0123, abs=1e-12)


# ---- the check ---------------------------------------------------------------

def test_identity_topology_has_zero_benefit(case5, opf):
    rep = fix_and_check(case5, {}, opf.objective)
    assert rep.status == STATUS_FEASIBLE and rep.ac_feasible
    assert rep.benefit_pct == pytest.approx(0.0, abs=1e-4)
    assert rep.objective == pytest.approx(opf.objective, abs=1e-6)


def test_merged_halves_carry_equal_voltages(case5, opf):
    aug = split_busbars(case5, SplitPlan(busbars=(("ac", 2),)))
    topo = all_on_half_i(aug)
    rep = fix_and_check(aug, topo, opf.objective)
    assert rep.ac_feasible
    i, i2 = aug.halves[("ac", 2)]
    assert rep.state[f"vm[{i}]"] == pytest.approx(rep.state[f"vm[{i2}]"], abs=1e-6)
    for _k, (aux, _sw) in aug.detached.items():
        assert rep.state[f"vm[{aux}]"] == pytest.approx(rep.state[f"vm[{i}]"], abs=1e-6)
    assert rep.objective == pytest.approx(opf.objective, abs=1e-6)


def test_islanded_load_is_an_infeasible_topology(case3):
    rep = fix_and_check(case3, {"l1": 0, "l2": 0}, 100.0)
    assert rep.status == STATUS_TOPOLOGY
    assert not rep.ac_feasible and rep.benefit_pct is None
    assert "bus 2" in rep.message


def test_deenergized_converter_has_zero_injections(case5, opf):
    rep = fix_and_check(case5, {"c2": 0}, opf.objective)
    assert rep.ac_feasible
    for v in ("pac", "qac", "pdc", "i"):
        assert rep.state[f"{v}[c2]"] == 0.0


def test_open_switch_without_split_partner_is_rejected(case5):
    aug = split_busbars(case5, SplitPlan(busbars=(("ac", 2),)))
    with pytest.raises(ValueError, match="does not cover"):
        normalize_topology(aug.network, {"s1": 1})
    with pytest.raises(ValueError, match="unknown"):
        normalize_topology(case5, {"l99": 0})


def test_apply_topology_drops_dead_islands(case3):
    red = apply_topology(case3, {"c1": 0, "c2": 0, "d1": 0})
    assert red.network is not None
    assert red.network.dc_buses == ()
    assert red.dead_dc == {1, 2}


def test_soc_selection_recomputes_above_its_relaxation(case5, solved, opf):
    model, res = solved.get("soc-bs2-tight", case5, bs_spec("soc"), TIGHT)
    rep = fix_and_check(model.meta["net"], res.topology, opf.objective)
    assert rep.ac_feasible
    assert rep.objective >= res.objective - 1e-6


def test_report_serialization(case5, opf):
    rep = fix_and_check(case5, {}, opf.objective)
    doc = json.loads(rep.to_json())
    assert doc["ac_feasible"] is True
    assert set(doc["residuals"]) == {"balance", "flow", "converter", "bounds", "switch-equality"}
    assert "time_s" not in doc and "time_s" in rep.to_dict(timing=True)
    table = rep.to_table("EXACT-OPF").splitlines()
    assert len(table) == 2 and "Benefit [%]" in table[0] and "EXACT-OPF" in table[1]
    assert isinstance(rep, FeasibilityReport)
