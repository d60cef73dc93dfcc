"""Exact polar formulation with big-M (or bilinear) switch constraints."""
from __future__ import annotations

import math

from ..model import NonlinearRecord
from .base import Builder

# box for shunt injection variables
_SHUNT_BOX = 10.0


class ExactBuilder(Builder):
    name = "exact"

    def voltages(self):
        self.vm, self.va, self.u = {}, {}, {}
        for n in self.view.nodes:
            self.vm[n.key] = self.var(f"vm[{n.key}]", n.vmin, n.vmax, tag=f"bus:{n.key}")
            self.va[n.key] = self.var(f"va[{n.key}]", n.vamin, n.vamax, tag=f"bus:{n.key}")
            if n.ref:
                self.m.add_row("reference", {self.va[n.key]: 1.0}, 0.0, 0.0, f"ref[{n.key}]")
        for d in self.view.dc_nodes:
            k = str(d.id)
            self.u[k] = self.var(f"u[{k}]", d.vmin, d.vmax, tag=f"dcbus:{k}")

    def angle_diff(self, ln):
        d = {self.va[ln.f]: 1.0, self.va[ln.t]: -1.0}
        if ln.gate is None:
            self.m.add_row("angle-diff", d, ln.angmin, ln.angmax, f"ang[{ln.key}]")
            return
        z = self.z[ln.gate]
        big = self.spec.m_theta
        self.m.add_row("angle-diff", {**d, z: big}, hi=ln.angmax + big, name=f"ang[{ln.key}]")
        self.m.add_row("angle-diff", {**d, z: -big}, lo=ln.angmin - big, name=f"ang[{ln.key}]")

    def line(self, ln):
        box = self.flow_box(ln)
        lo, hi = self.flow_bound(-box, box, ln.gate)
        names = ("pf", "qf", "pt", "qt")
        out = tuple(self.var(f"{n}[{ln.key}]", lo, hi, tag=ln.key) for n in names)
        for i in out:
            self.gated_bounds(i, -box, box, ln.gate, "thermal")
        params = dict(g=ln.g, b=ln.b, bc=ln.bc, tap=ln.tap, shift=ln.shift)
        self.m.add_nl(NonlinearRecord(
            "ac-flow", "ac_line", out,
            (self.vm[ln.f], self.vm[ln.t], self.va[ln.f], self.va[ln.t]), params,
            None if ln.gate is None else self.z[ln.gate], f"flow[{ln.key}]"))
        rate = self.line_rate(ln)
        if rate is not None:
            for p, q in ((out[0], out[1]), (out[2], out[3])):
                self.m.add_cone("thermal", [({p: 1.0}, 0.0), ({q: 1.0}, 0.0)], ({}, rate),
                                f"rate[{ln.key}]")
        self.angle_diff(ln)
        self.add(self.bal_p, ln.f, out[0], -1.0)
        self.add(self.bal_q, ln.f, out[1], -1.0)
        self.add(self.bal_p, ln.t, out[2], -1.0)
        self.add(self.bal_q, ln.t, out[3], -1.0)

    def dc_line(self, dl):
        lo, hi = self.flow_bound(dl.pmin, dl.pmax, dl.gate)
        pf = self.var(f"pdcf[{dl.key}]", lo, hi, tag=dl.key)
        pt = self.var(f"pdct[{dl.key}]", lo, hi, tag=dl.key)
        for i in (pf, pt):
            self.gated_bounds(i, dl.pmin, dl.pmax, dl.gate, "dc-flow")
        self.m.add_nl(NonlinearRecord(
            "dc-flow", "dc_line", (pf, pt), (self.u[dl.f], self.u[dl.t]),
            dict(g=dl.g, poles=dl.poles), None if dl.gate is None else self.z[dl.gate],
            f"flow[{dl.key}]"))
        self.add(self.bal_dc, dl.f, pf, -1.0)
        self.add(self.bal_dc, dl.t, pt, -1.0)

    def converter_vars(self, cv):
        c, g = cv.conv, cv.gate
        k = cv.key
        pac = self.var(f"pac[{k}]", *self.flow_bound(c.pac_min, c.pac_max, g), tag=k)
        qac = self.var(f"qac[{k}]", *self.flow_bound(c.qac_min, c.qac_max, g), tag=k)
        pdc = self.var(f"pdc[{k}]", *self.flow_bound(c.pdc_min, c.pdc_max, g), tag=k)
        cur = self.var(f"i[{k}]", 0.0, c.imax, tag=k)
        self.gated_bounds(pac, c.pac_min, c.pac_max, g, "converter-coupling")
        self.gated_bounds(qac, c.qac_min, c.qac_max, g, "converter-coupling")
        self.gated_bounds(pdc, c.pdc_min, c.pdc_max, g, "converter-coupling")
        self.gated_bounds(cur, 0.0, c.imax, g, "converter-coupling")
        if c.smin > 0:
            raise ValueError(f"converter {c.id}: a positive apparent-power lower bound is not supported")
        if math.isfinite(c.smax):
            self.m.add_cone("converter-coupling", [({pac: 1.0}, 0.0), ({qac: 1.0}, 0.0)],
                            ({}, c.smax), f"smax[{k}]")
        self.add(self.bal_p, cv.ac_node, pac, -1.0)
        self.add(self.bal_q, cv.ac_node, qac, -1.0)
        self.add(self.bal_dc, cv.dc_node, pdc, -1.0)
        return pac, qac, pdc, cur

    def converter(self, cv):
        c = cv.conv
        pac, qac, pdc, cur = self.converter_vars(cv)
        gate = None if cv.gate is None else self.z[cv.gate]
        self.m.add_nl(NonlinearRecord("converter-loss", "conv_loss", (pac, pdc), (cur,),
                                      dict(a=c.a, b=c.b, c=c.c), gate, f"loss[{cv.key}]"))
        self.m.add_nl(NonlinearRecord("converter-coupling", "conv_current", (pac, qac),
                                      (self.vm[cv.ac_node], cur), {}, gate, f"cur[{cv.key}]"))
        u = self.u[cv.dc_node]
        self.m.add_row("converter-coupling", {pdc: 1.0, u: -c.imax}, hi=0.0, name=f"idc[{cv.key}]")
        self.m.add_row("converter-coupling", {pdc: -1.0, u: -c.imax}, hi=0.0, name=f"idc[{cv.key}]")

    def switch(self, sw):
        ac = sw.sw.side == "ac"
        p, q = self.switch_flows(sw, reactive=ac)
        z = self.z[sw.gate]
        if ac:
            self.m.add_cone("switch-flow-bound", [({p: 1.0}, 0.0), ({q: 1.0}, 0.0)],
                            ({}, sw.sw.rating), f"rate[{sw.key}]")
            pairs = ((self.va, self.spec.m_theta), (self.vm, self.spec.m_m))
            self.add(self.bal_p, sw.f, p, -1.0)
            self.add(self.bal_p, sw.t, p, 1.0)
            self.add(self.bal_q, sw.f, q, -1.0)
            self.add(self.bal_q, sw.t, q, 1.0)
        else:
            pairs = ((self.u, self.spec.m_dc),)
            self.add(self.bal_dc, sw.f, p, -1.0)
            self.add(self.bal_dc, sw.t, p, 1.0)
        for table, big in pairs:
            a, b = table[sw.f], table[sw.t]
            if self.spec.switch_model == "bilinear":
                self.m.add_nl(NonlinearRecord("switch-voltage", "switch_bilinear", (), (a, b), {},
                                              z, f"eq[{sw.key}]"))
            else:
                # -(1-z) M <= a - b <= (1-z) M
                self.m.add_row("switch-voltage", {a: 1.0, b: -1.0, z: big}, hi=big, name=f"eq[{sw.key}]")
                self.m.add_row("switch-voltage", {a: 1.0, b: -1.0, z: -big}, lo=-big, name=f"eq[{sw.key}]")

    def shunts(self):
        for n in self.view.nodes:
            if not (n.gs or n.bs):
                continue
            ps = self.var(f"psh[{n.key}]", -_SHUNT_BOX, _SHUNT_BOX, tag=f"bus:{n.key}")
            qs = self.var(f"qsh[{n.key}]", -_SHUNT_BOX, _SHUNT_BOX, tag=f"bus:{n.key}")
            self.m.add_nl(NonlinearRecord("shunt", "shunt", (ps, qs), (self.vm[n.key],),
                                          dict(gs=n.gs, bs=n.bs),
                                          None if n.gate is None else self.z[n.gate], f"sh[{n.key}]"))
            self.add(self.bal_p, n.key, ps, -1.0)
            self.add(self.bal_q, n.key, qs, -1.0)
        for d in self.view.dc_nodes:
            if not d.gs:
                continue
            k = str(d.id)
            ps = self.var(f"pshdc[{k}]", -_SHUNT_BOX, _SHUNT_BOX, tag=f"dcbus:{k}")
            self.m.add_nl(NonlinearRecord("shunt", "shunt", (ps,), (self.u[k],), dict(gs=d.gs, bs=0.0),
                                          None, f"shdc[{k}]"))
            self.add(self.bal_dc, k, ps, -1.0)
