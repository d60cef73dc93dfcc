"""Busbar-splitting augmentation and OTS tagging.

Splitting busbar ``i`` adds a second half ``i'`` and, for every element
attached to ``i``, an auxiliary bus holding that element plus one switch to
each half.  A zero-impedance line (ZIL) couples ``i`` and ``i'``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .network import (
    AC,
    DC,
    AcBus,
    DcBus,
    Network,
    Switch,
    ValidationError,
    validate,
    with_flags,
)

EXCLUSIVITY_MODES = ("eq", "leq")
# fallback rating for elements without a finite one (p.u.)
DEFAULT_RATING = 10.0


@dataclass(frozen=True)
class SplitPlan:
    busbars: tuple[tuple[str, int], ...] = ()
    exclusivity: str = "eq"
    switch_ac: tuple[int, ...] = ()
    switch_dc: tuple[int, ...] = ()
    switch_conv: tuple[int, ...] = ()

    def __post_init__(self):
        if self.exclusivity not in EXCLUSIVITY_MODES:
            raise ValueError(f"exclusivity must be one of {EXCLUSIVITY_MODES}")
        seen = set()
        for side, bus in self.busbars:
            if side not in (AC, DC):
                raise ValueError(f"busbar side must be 'ac' or 'dc', got {side!r}")
            if (side, bus) in seen:
                raise ValueError(f"busbar {side}:{bus} selected twice")
            seen.add((side, bus))

    @classmethod
    def from_dict(cls, d: dict) -> "SplitPlan":
        sw = d.get("switchable", {})
        return cls(
            busbars=tuple((b["side"], int(b["bus"])) for b in d.get("busbars", [])),
            exclusivity=d.get("exclusivity", "eq"),
            switch_ac=tuple(sw.get("ac", ())),
            switch_dc=tuple(sw.get("dc", ())),
            switch_conv=tuple(sw.get("conv", ())),
        )

    def to_dict(self) -> dict:
        return {
            "busbars": [{"side": s, "bus": b} for s, b in self.busbars],
            "exclusivity": self.exclusivity,
            "switchable": {"ac": list(self.switch_ac), "dc": list(self.switch_dc),
                           "conv": list(self.switch_conv)},
        }


def parse_split(text: str) -> tuple[tuple[str, int], ...]:
    """``"ac:2,4"`` -> ``(("ac", 2), ("ac", 4))``; several groups may be
    joined with ``;``."""
    out = []
    for group in text.split(";"):
        group = group.strip()
        if not group:
            continue
        side, _, ids = group.partition(":")
        side = side.strip().lower()
        if side not in (AC, DC) or not ids:
            raise ValueError(f"bad split selector {group!r}; expected ac:<bus>[,...] or dc:<bus>[,...]")
        out.extend((side, int(b)) for b in ids.split(","))
    return tuple(out)


@dataclass(frozen=True)
class AugmentedNetwork:
    network: Network
    original: Network
    plan: SplitPlan
    halves: dict = field(default_factory=dict)      # (side, bus) -> (bus, bus')
    detached: dict = field(default_factory=dict)    # (side, bus, element) -> (aux, (sw_i, sw_i'))
    zil: dict = field(default_factory=dict)         # (side, bus) -> switch id
    added_switches: int = 0


def attached_elements(net: Network, side: str, bus: int) -> list[str]:
    """Element keys attached to a busbar, in a fixed type-then-id order."""
    if side == AC:
        out = [f"ac_branch:{b.id}" for b in net.ac_branches if bus in (b.f_bus, b.t_bus)]
        out += [f"conv:{c.id}" for c in net.converters if c.ac_bus == bus]
        out += [f"gen:{g.id}" for g in net.generators if g.bus == bus]
        out += [f"load:{ld.id}" for ld in net.loads if ld.side == AC and ld.bus == bus]
        out += [f"switch:{s.id}" for s in net.switches if s.side == AC and bus in (s.f_bus, s.t_bus)]
    else:
        out = [f"dc_branch:{b.id}" for b in net.dc_branches if bus in (b.f_bus, b.t_bus)]
        out += [f"conv:{c.id}" for c in net.converters if c.dc_bus == bus]
        out += [f"load:{ld.id}" for ld in net.loads if ld.side == DC and ld.bus == bus]
        out += [f"switch:{s.id}" for s in net.switches if s.side == DC and bus in (s.f_bus, s.t_bus)]
    return out


def _check_plan(net: Network, plan: SplitPlan) -> dict:
    counts = {}
    for side, bus in plan.busbars:
        ids = net.ac_bus if side == AC else net.dc_bus
        if bus not in ids:
            raise ValidationError(f"split selector {side}:{bus} targets a nonexistent bus")
        n = len(attached_elements(net, side, bus))
        if n == 0:
            raise ValidationError(f"split selector {side}:{bus} targets a bus with no connected elements")
        counts[(side, bus)] = n
    return counts


def count_switches(plan: SplitPlan, net: Network) -> int:
    counts = _check_plan(net, plan)
    return sum(2 * n for n in counts.values()) + len(counts)


def _rating(net: Network, side: str, key: str) -> float:
    kind, _, sid = key.partition(":")
    i = int(sid)
    if kind == "ac_branch":
        r = net.ac_branch[i].rate
    elif kind == "dc_branch":
        br = net.dc_branch[i]
        r = max(abs(br.pmin), abs(br.pmax))
    elif kind == "conv":
        cv = net.converter[i]
        if side == AC:
            r = cv.imax * cv.vmax + abs(cv.filter_b or 0.0) * cv.vmax ** 2
        else:
            r = max(abs(cv.pdc_min), abs(cv.pdc_max))
    elif kind == "gen":
        g = net.generator[i]
        r = math.hypot(max(abs(g.pmin), abs(g.pmax)), max(abs(g.qmin), abs(g.qmax)))
    elif kind == "load":
        ld = next(x for x in net.loads if x.id == i)
        r = math.hypot(ld.p, ld.q)
    else:
        r = net.switch[i].rating
    return r if math.isfinite(r) else DEFAULT_RATING


def _move(raw_parts: dict, side: str, key: str, old: int, new: int) -> None:
    kind, _, sid = key.partition(":")
    i = int(sid)

    def upd(coll, pred, fn):
        raw_parts[coll] = [fn(x) if pred(x) else x for x in raw_parts[coll]]

    if kind == "ac_branch":
        upd("ac_branches", lambda b: b.id == i, lambda b: replace(
            b, f_bus=new if b.f_bus == old else b.f_bus, t_bus=new if b.t_bus == old else b.t_bus))
    elif kind == "dc_branch":
        upd("dc_branches", lambda b: b.id == i, lambda b: replace(
            b, f_bus=new if b.f_bus == old else b.f_bus, t_bus=new if b.t_bus == old else b.t_bus))
    elif kind == "conv":
        if side == AC:
            upd("converters", lambda c: c.id == i, lambda c: replace(c, ac_bus=new))
        else:
            upd("converters", lambda c: c.id == i, lambda c: replace(c, dc_bus=new))
    elif kind == "gen":
        upd("generators", lambda g: g.id == i, lambda g: replace(g, bus=new))
    elif kind == "load":
        upd("loads", lambda ld: ld.id == i, lambda ld: replace(ld, bus=new))
    else:
        upd("switches", lambda s: s.id == i, lambda s: replace(
            s, f_bus=new if s.f_bus == old else s.f_bus, t_bus=new if s.t_bus == old else s.t_bus))


def split_busbars(net: Network, plan: SplitPlan) -> AugmentedNetwork:
    """Apply the busbar-splitting transformation described by ``plan``.

    New bus ids continue after the largest id on each side: first the second
    halves in selector order, then one auxiliary bus per detached element.
    Switch ids continue after the largest existing switch id.
    """
    counts = _check_plan(net, plan)
    parts = {k: list(getattr(net, k)) for k in (
        "ac_buses", "dc_buses", "ac_branches", "dc_branches", "converters",
        "generators", "loads", "switches")}
    next_bus = {AC: max((b.id for b in net.ac_buses), default=0) + 1,
                DC: max((b.id for b in net.dc_buses), default=0) + 1}
    next_sw = max((s.id for s in net.switches), default=0) + 1

    def new_bus(side, like):
        bid = next_bus[side]
        next_bus[side] += 1
        if side == AC:
            parts["ac_buses"].append(AcBus(bid, like.vmin, like.vmax, like.vamin, like.vamax))
        else:
            parts["dc_buses"].append(DcBus(bid, like.vmin, like.vmax))
        return bid

    halves, detached, zils = {}, {}, {}
    for side, bus in plan.busbars:
        orig = (net.ac_bus if side == AC else net.dc_bus)[bus]
        halves[(side, bus)] = (bus, new_bus(side, orig))
    added = 0
    for side, bus in plan.busbars:
        orig = (net.ac_bus if side == AC else net.dc_bus)[bus]
        i, i2 = halves[(side, bus)]
        kind = "ac_switch" if side == AC else "dc_switch"
        total = 0.0
        for key in attached_elements(net, side, bus):
            aux = new_bus(side, orig)
            _move(parts, side, key, bus, aux)
            r = _rating(net, side, key)
            total += r
            q = r if side == AC else 0.0
            a, b = next_sw, next_sw + 1
            next_sw += 2
            parts["switches"].append(Switch(a, kind, aux, i, r, -r, r, -q, q, b, bus, key))
            parts["switches"].append(Switch(b, kind, aux, i2, r, -r, r, -q, q, a, bus, key))
            detached[(side, bus, key)] = (aux, (a, b))
            added += 2
        q = total if side == AC else 0.0
        zils[(side, bus)] = next_sw
        parts["switches"].append(Switch(next_sw, kind.replace("switch", "zil"), i, i2, total,
                                        -total, total, -q, q, None, bus, None))
        next_sw += 1
        added += 1
    assert added == sum(2 * n for n in counts.values()) + len(counts)
    aug = validate(Network(base_mva=net.base_mva, name=net.name, **parts))
    return AugmentedNetwork(aug, net, plan, halves, detached, zils, added)


def tag_switchable(net: Network, plan: SplitPlan) -> Network:
    """Flag the plan's OTS subsets as switchable (and nothing else)."""
    for ids, table, what in ((plan.switch_ac, net.ac_branch, "AC branch"),
                             (plan.switch_dc, net.dc_branch, "DC branch"),
                             (plan.switch_conv, net.converter, "converter")):
        for i in ids:
            if i not in table:
                raise ValidationError(f"unknown {what} id {i} in switchable set")
    return with_flags(net, plan.switch_ac, plan.switch_dc, plan.switch_conv)


def switchable_sets(net: Network, scope: str) -> dict:
    """Switchable subsets for a side scope: ``ac``, ``dc``, ``all`` or ``none``.

    ``dc`` covers DC branches and converters.
    """
    if scope not in ("ac", "dc", "all", "none"):
        raise ValueError(f"unknown switchable scope {scope!r}")
    ac = tuple(b.id for b in net.ac_branches) if scope in ("ac", "all") else ()
    dc = tuple(b.id for b in net.dc_branches) if scope in ("dc", "all") else ()
    cv = tuple(c.id for c in net.converters) if scope in ("dc", "all") else ()
    return {"switch_ac": ac, "switch_dc": dc, "switch_conv": cv}
