"""Problem specification and the formulation-independent part of the builder."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from ..augment import AugmentedNetwork, SplitPlan, split_busbars, switchable_sets, tag_switchable
from ..model import BINARY, MathModel
from ..network import INTERNAL_FLOW_BOUND, ElectricalView, Network, expand, with_flags

KINDS = ("opf", "ots", "bs", "ots+bs")
SCOPES = ("ac", "dc", "all")
FORMULATIONS = ("exact", "soc", "lpac")


@dataclass(frozen=True)
class ProblemSpec:
    kind: str = "opf"
    scope: str = "ac"
    formulation: str = "exact"
    plan: SplitPlan = field(default_factory=SplitPlan)
    exclusivity: str | None = None     # None: "eq" for bs, "leq" for ots+bs
    m_theta: float = 2 * math.pi
    m_m: float = 1.0
    m_dc: float = 1.0
    lpac_segments: int = 10
    lpac_window: tuple | None = None   # None: (-pi/6, pi/6)
    thermal_facets: int = 16
    switch_model: str = "bigm"         # "bilinear" keeps the product form (exact only)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"problem kind must be one of {KINDS}")
        if self.scope not in SCOPES:
            raise ValueError(f"side scope must be one of {SCOPES}")
        if self.formulation not in FORMULATIONS:
            raise ValueError(f"formulation must be one of {FORMULATIONS}")
        if min(self.m_theta, self.m_m, self.m_dc) <= 0:
            raise ValueError("big-M values must be positive")
        if self.lpac_segments < 2:
            raise ValueError("LPAC segment count must be at least 2")
        if self.thermal_facets < 4:
            raise ValueError("thermal polygon needs at least 4 facets")
        if self.switch_model not in ("bigm", "bilinear"):
            raise ValueError("switch_model must be 'bigm' or 'bilinear'")
        if self.switch_model == "bilinear" and self.formulation != "exact":
            raise ValueError("the bilinear switch model exists only in the exact formulation")

    @property
    def splits(self) -> bool:
        return self.kind in ("bs", "ots+bs")

    @property
    def switches_lines(self) -> bool:
        return self.kind in ("ots", "ots+bs")

    @property
    def exclusivity_mode(self) -> str:
        if self.exclusivity is not None:
            return self.exclusivity
        return "leq" if self.kind == "ots+bs" else "eq"


def prepare_network(net, spec: ProblemSpec) -> tuple[Network, AugmentedNetwork | None]:
    """Apply busbar splitting and OTS tagging as the problem specification requires."""
    aug = None
    if isinstance(net, AugmentedNetwork):
        aug, net = net, net.network
    elif spec.splits:
        if not spec.plan.busbars:
            raise ValueError("busbar splitting requires a nonempty split plan")
        aug = split_busbars(net, spec.plan)
        net = aug.network
    if spec.switches_lines:
        p = spec.plan
        if p.switch_ac or p.switch_dc or p.switch_conv:
            net = tag_switchable(net, p)
        else:
            net = tag_switchable(net, replace(p, **switchable_sets(net, spec.scope)))
    else:
        net = with_flags(net)
    return net, aug


class Builder:
    """Shared scaffolding: binaries, generators, balances, objective and
    exclusivity.  Subclasses add voltages, flows, converters and switches."""

    name = ""

    def __init__(self, net: Network, spec: ProblemSpec):
        self.net = net
        self.spec = spec
        self.view: ElectricalView = expand(net)
        self.m = MathModel(formulation=self.name)
        self.bal_p: dict[str, dict] = {n.key: {} for n in self.view.nodes}
        self.bal_q: dict[str, dict] = {n.key: {} for n in self.view.nodes}
        self.bal_dc: dict[str, dict] = {d.key if hasattr(d, "key") else str(d.id): {}
                                        for d in self.view.dc_nodes}
        self.load_p = {k: 0.0 for k in self.bal_p}
        self.load_q = {k: 0.0 for k in self.bal_q}
        self.load_dc = {k: 0.0 for k in self.bal_dc}
        self.z: dict[str, int] = {}

    # helpers ----------------------------------------------------------
    def var(self, name, lb=-math.inf, ub=math.inf, tag=""):
        return self.m.add_var(name, lb, ub, tag=tag)

    def add(self, bal, node, idx, coef):
        d = bal[node]
        d[idx] = d.get(idx, 0.0) + coef

    def rng(self, coef: dict, const: float = 0.0) -> tuple[float, float]:
        """Interval of ``coef.x + const`` over the variable box."""
        lo = hi = const
        for i, c in coef.items():
            v = self.m.variables[i]
            lo += c * (v.lb if c > 0 else v.ub)
            hi += c * (v.ub if c > 0 else v.lb)
        return lo, hi

    def gated_bounds(self, idx, lo, hi, gate, family):
        """``z*lo <= x <= z*hi`` (plain bounds when ungated)."""
        if gate is None:
            return
        z = self.z[gate]
        self.m.add_row(family, {idx: 1.0, z: -hi}, hi=0.0)
        self.m.add_row(family, {idx: 1.0, z: -lo}, lo=0.0)

    def flow_bound(self, lo, hi, gate):
        """Variable box that contains 0 when the element can be switched off."""
        if gate is None:
            return lo, hi
        return min(lo, 0.0), max(hi, 0.0)

    def bigm_link(self, coef: dict, const: float, gate, family):
        """``coef.x + const == 0`` when the gate is 1; relaxed over its
        interval when the gate is 0."""
        if gate is None:
            self.m.add_row(family, coef, -const, -const)
            return
        lo, hi = self.rng(coef, const)
        z = self.z[gate]
        # coef.x + const <= hi*(1-z)  and  >= lo*(1-z)
        c = dict(coef)
        c[z] = c.get(z, 0.0) + hi
        self.m.add_row(family, c, hi=hi - const)
        c = dict(coef)
        c[z] = c.get(z, 0.0) + lo
        self.m.add_row(family, c, lo=lo - const)

    def polygon(self, p, q, rhs: dict, rhs_const: float, family, facets=None):
        """``cos(a_k) p + sin(a_k) q <= rhs`` for a circumscribed polygon."""
        k = facets or self.spec.thermal_facets
        for j in range(k):
            a = 2 * math.pi * j / k
            coef = {p: math.cos(a), q: math.sin(a)}
            for i, c in rhs.items():
                coef[i] = coef.get(i, 0.0) - c
            self.m.add_row(family, coef, hi=rhs_const)

    # build ------------------------------------------------------------
    def build(self) -> MathModel:
        m = self.m
        fixed_closed = self.spec.kind in ("opf", "ots")
        for key in self.view.binaries:
            lb = 1.0 if key.startswith("s") and fixed_closed else 0.0
            idx = m.add_var(f"z[{key}]", lb, 1.0, kind=BINARY, tag=key)
            self.z[key] = idx
            m.element_of[idx] = key
        for g in self.view.gens:
            self.generator(g)
        for ld in self.view.loads:
            if ld.side == "ac":
                self.load_p[str(ld.bus)] += ld.p
                self.load_q[str(ld.bus)] += ld.q
            else:
                self.load_dc[str(ld.bus)] += ld.p
        self.voltages()
        for ln in self.view.lines:
            self.line(ln)
        for dl in self.view.dc_lines:
            self.dc_line(dl)
        for cv in self.view.convs:
            self.converter(cv)
        for sw in self.view.switches:
            self.switch(sw)
        self.shunts()
        self.balances()
        if not fixed_closed:
            self.exclusivity()
        m.meta.update(net=self.net, spec=self.spec, view=self.view)
        return m

    def generator(self, g):
        pg = self.var(f"pg[{g.id}]", g.pmin, g.pmax, tag=f"gen:{g.id}")
        qg = self.var(f"qg[{g.id}]", g.qmin, g.qmax, tag=f"gen:{g.id}")
        self.add(self.bal_p, str(g.bus), pg, 1.0)
        self.add(self.bal_q, str(g.bus), qg, 1.0)
        self.m.objective[pg] = self.m.objective.get(pg, 0.0) + g.c1
        self.m.obj_const += g.c0

    def balances(self):
        for k, d in self.bal_p.items():
            self.m.add_row("ac-balance", d, self.load_p[k], self.load_p[k], f"p[{k}]")
        for k, d in self.bal_q.items():
            self.m.add_row("ac-balance", d, self.load_q[k], self.load_q[k], f"q[{k}]")
        for k, d in self.bal_dc.items():
            self.m.add_row("dc-balance", d, self.load_dc[k], self.load_dc[k], f"pdc[{k}]")

    def exclusivity(self):
        mode = self.spec.exclusivity_mode
        done = set()
        for sw in self.view.switches:
            s = sw.sw
            if s.partner is None or s.id in done:
                continue
            done.update((s.id, s.partner))
            a, b = self.z[f"s{s.id}"], self.z[f"s{s.partner}"]
            self.m.add_row("exclusivity", {a: 1.0, b: 1.0}, 1.0 if mode == "eq" else -math.inf, 1.0,
                           f"excl[{s.id},{s.partner}]")
            self.m.pairs.append((a, b, mode))

    def switch_flows(self, sw, reactive=True):
        """Switch flow variables with their gated bounds and thermal limit."""
        s = sw.sw
        p = self.var(f"psw[{s.id}]", min(s.pmin, 0.0), max(s.pmax, 0.0), tag=sw.key)
        self.gated_bounds(p, s.pmin, s.pmax, sw.gate, "switch-flow-bound")
        q = None
        if reactive:
            q = self.var(f"qsw[{s.id}]", min(s.qmin, 0.0), max(s.qmax, 0.0), tag=sw.key)
            self.gated_bounds(q, s.qmin, s.qmax, sw.gate, "switch-flow-bound")
        return p, q

    def line_rate(self, ln):
        r = ln.rate
        return r if r is not None and math.isfinite(r) else None

    def flow_box(self, ln):
        r = self.line_rate(ln)
        return r if r is not None else INTERNAL_FLOW_BOUND

    # hooks ------------------------------------------------------------
    def voltages(self):  # pragma: no cover - abstract
        raise NotImplementedError

    def line(self, ln):  # pragma: no cover
        raise NotImplementedError

    def dc_line(self, dl):  # pragma: no cover
        raise NotImplementedError

    def converter(self, cv):  # pragma: no cover
        raise NotImplementedError

    def switch(self, sw):  # pragma: no cover
        raise NotImplementedError

    def shunts(self):  # pragma: no cover
        raise NotImplementedError
