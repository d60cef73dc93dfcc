import random

import pytest

from gridtopo.augment import (SplitPlan, attached_elements, count_switches, parse_split, split_busbars,
                              switchable_sets, tag_switchable)
from gridtopo.feasibility import apply_topology
from gridtopo.formulation import ProblemSpec, build_model
from gridtopo.network import AcBranch, AcBus, Generator, Load, RawCase, ValidationError, expand, validate
from gridtopo.solver import solve


def star(n_leaves):
    """Hub bus 1 with one branch to each leaf bus; generator on the hub."""
    buses = [AcBus(1, 0.9, 1.1, ref=True)] + [AcBus(i + 2, 0.9, 1.1) for i in range(n_leaves)]
    branches = [AcBranch(i + 1, 1, i + 2, 1.0, -10.0) for i in range(n_leaves)]
    gens = [Generator(1, 1, 1.0, 0.0, 0.0, 5.0, -5.0, 5.0)]
    return validate(RawCase(100.0, "star", buses, [], branches, [], [], gens, [Load(1, 2, "ac", 0.1)], []))


def test_parse_split():
    assert parse_split("ac:2,4") == (("ac", 2), ("ac", 4))
    assert parse_split("ac:2; dc:1") == (("ac", 2), ("dc", 1))
    with pytest.raises(ValueError):
        parse_split("xx:2")


def test_bus2_gives_15_switches(case5):
    aug = split_busbars(case5, SplitPlan(busbars=(("ac", 2),)))
    assert aug.added_switches == 15
    assert len(aug.network.switches) == 15
    assert count_switches(aug.plan, case5) == 15


def test_bus2_and_4_give_24_switches(case5):
    aug = split_busbars(case5, SplitPlan(busbars=parse_split("ac:2,4")))
    assert aug.added_switches == 24


def test_formula_single_busbar_with_four_elements():
    net = star(4)  # hub: 4 branches + 1 generator = 5 elements
    hub = len(attached_elements(net, "ac", 1))
    assert count_switches(SplitPlan(busbars=(("ac", 1),)), net) == 2 * hub + 1
    leafnet = star(3)
    # bus 2: one branch, one load; bus 3: one branch -> 2*2+1 + 2*1+1
    assert count_switches(SplitPlan(busbars=(("ac", 2), ("ac", 3))), leafnet) == 8


def test_formula_two_busbars_3_and_5():
    # bus 1 carries two branches and the generator, bus 4 four branches and a load
    buses = [AcBus(1, 0.9, 1.1, ref=True)] + [AcBus(i, 0.9, 1.1) for i in range(2, 9)]
    ends = [(1, 2), (1, 3), (4, 3), (4, 5), (4, 6), (4, 7), (8, 2)]
    branches = [AcBranch(k + 1, f, t, 1.0, -10.0) for k, (f, t) in enumerate(ends)]
    gens = [Generator(1, 1, 1.0, 0.0, 0.0, 5.0, -5.0, 5.0)]
    net = validate(RawCase(100.0, "two-hubs", buses, [], branches, [], [], gens, [Load(1, 4, "ac", 0.1)], []))
    assert len(attached_elements(net, "ac", 1)) == 3
    assert len(attached_elements(net, "ac", 4)) == 5
    plan = SplitPlan(busbars=(("ac", 1), ("ac", 4)))
    assert count_switches(plan, net) == 18
    assert split_busbars(net, plan).added_switches == 18


def test_formula_on_random_plans(case5):
    rng = random.Random(7)
    buses = [("ac", b.id) for b in case5.ac_buses] + [("dc", b.id) for b in case5.dc_buses]
    for _ in range(25):
        plan = SplitPlan(busbars=tuple(rng.sample(buses, rng.randint(1, len(buses)))))
        expected = sum(2 * len(attached_elements(case5, s, b)) + 1 for s, b in plan.busbars)
        aug = split_busbars(case5, plan)
        assert aug.added_switches == expected == count_switches(plan, case5)
        assert len(aug.network.switches) == expected


def test_split_is_deterministic(case5):
    plan = SplitPlan(busbars=parse_split("ac:2,4;dc:1"))
    assert split_busbars(case5, plan) == split_busbars(case5, plan)


def test_reference_stays_on_first_half(case5):
    aug = split_busbars(case5, SplitPlan(busbars=(("ac", 1),)))
    i, i2 = aug.halves[("ac", 1)]
    assert aug.network.ac_bus[i].ref and not aug.network.ac_bus[i2].ref


def test_switch_ratings(case5):
    aug = split_busbars(case5, SplitPlan(busbars=(("ac", 2),)))
    sw = aug.network.switches
    zil = aug.network.switch[aug.zil[("ac", 2)]]
    assert zil.is_zil
    elem = [s for s in sw if not s.is_zil]
    assert zil.rating == pytest.approx(sum(s.rating for s in elem) / 2)
    line = next(s for s in elem if s.element == "ac_branch:1")
    assert line.rating == pytest.approx(case5.ac_branch[1].rate)


def test_split_errors(case5):
    with pytest.raises(ValidationError):
        split_busbars(case5, SplitPlan(busbars=(("ac", 99),)))
    with pytest.raises(ValueError):
        SplitPlan(busbars=(("ac", 2), ("ac", 2)))


def test_tagging_counts(case5):
    ac = tag_switchable(case5, SplitPlan(**switchable_sets(case5, "ac")))
    assert len(expand(ac).binaries) == 7
    both = tag_switchable(case5, SplitPlan(**switchable_sets(case5, "all")))
    assert len(expand(both).binaries) == 13
    none = tag_switchable(case5, SplitPlan())
    assert expand(none, switches=False).binaries == []


def test_merging_the_split_restores_the_opf(case5):
    aug = split_busbars(case5, SplitPlan(busbars=(("ac", 2),)))
    topo = {f"s{s.id}": 0 for s in aug.network.switches}
    for _key, (_aux, (a, _b)) in aug.detached.items():
        topo[f"s{a}"] = 1
    topo[f"s{aug.zil[('ac', 2)]}"] = 1
    merged = apply_topology(aug.network, topo).network
    assert len(merged.ac_buses) == 5
    base = solve(build_model(case5, ProblemSpec())).objective
    again = solve(build_model(merged, ProblemSpec())).objective
    assert again == pytest.approx(base, abs=1e-6)
