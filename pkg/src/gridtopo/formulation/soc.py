"""Second-order cone relaxation in lifted variables.

Squared magnitudes become ``w``, products become ``wr, wi`` (AC) and
``wdc_ef`` (DC), the converter current square becomes ``isq``.  Switchable
branches get on/off copies of their end-point ``w`` so that every
constraint stays linear in the binaries.
"""
from __future__ import annotations

import math

from .base import Builder

_SHUNT_BOX = 10.0


def _wr_box(vmin_f, vmax_f, vmin_t, vmax_t, angmin, angmax):
    hi = vmax_f * vmax_t
    if -math.pi / 2 <= angmin and angmax <= math.pi / 2:
        lo = vmin_f * vmin_t * min(math.cos(angmin), math.cos(angmax))
    else:
        lo = -hi
    wi_lo = hi * math.sin(angmin) if angmin > -math.pi / 2 else -hi
    wi_hi = hi * math.sin(angmax) if angmax < math.pi / 2 else hi
    return (lo, hi), (wi_lo, wi_hi)


def pi_coeffs(ln):
    """Coefficients of the lifted pi-model:
    ``p_fr = a1 w_fr + a2 wr + a3 wi`` and so on."""
    g, b, bsh = ln.g, ln.b, ln.bc / 2
    tr, ti = ln.tap * math.cos(ln.shift), ln.tap * math.sin(ln.shift)
    tm2 = ln.tap ** 2
    pf = (g / tm2, (-g * tr + b * ti) / tm2, (-b * tr - g * ti) / tm2)
    qf = (-(b + bsh) / tm2, -(-b * tr - g * ti) / tm2, (-g * tr + b * ti) / tm2)
    pt = (g, (-g * tr - b * ti) / tm2, -(-b * tr + g * ti) / tm2)
    qt = (-(b + bsh), -(-b * tr + g * ti) / tm2, -(-g * tr - b * ti) / tm2)
    return pf, qf, pt, qt


class SocBuilder(Builder):
    name = "soc"

    def voltages(self):
        self.w, self.wdc = {}, {}
        for n in self.view.nodes:
            self.w[n.key] = self.var(f"w[{n.key}]", n.vmin ** 2, n.vmax ** 2, tag=f"bus:{n.key}")
        for d in self.view.dc_nodes:
            k = str(d.id)
            self.wdc[k] = self.var(f"wdc[{k}]", d.vmin ** 2, d.vmax ** 2, tag=f"dcbus:{k}")

    def _copy(self, name, src, vmin, vmax, gate, family):
        """On/off copy ``wl`` of ``src``: ``wl = z*src`` for binary z."""
        if gate is None:
            return src
        z = self.z[gate]
        wl = self.var(name, 0.0, vmax ** 2)
        self.gated_bounds(wl, vmin ** 2, vmax ** 2, gate, family)
        # src - wl within (1-z)[vmin^2, vmax^2]
        self.m.add_row(family, {src: 1.0, wl: -1.0, z: vmax ** 2}, hi=vmax ** 2)
        self.m.add_row(family, {src: 1.0, wl: -1.0, z: vmin ** 2}, lo=vmin ** 2)
        return wl

    def line(self, ln):
        nf, nt = self.view.node[ln.f], self.view.node[ln.t]
        g = ln.gate
        wf = self._copy(f"wfl[{ln.key}]", self.w[ln.f], nf.vmin, nf.vmax, g, "ac-flow")
        wt = self._copy(f"wtl[{ln.key}]", self.w[ln.t], nt.vmin, nt.vmax, g, "ac-flow")
        (rlo, rhi), (ilo, ihi) = _wr_box(nf.vmin, nf.vmax, nt.vmin, nt.vmax, ln.angmin, ln.angmax)
        wr = self.var(f"wr[{ln.key}]", *self.flow_bound(rlo, rhi, g), tag=ln.key)
        wi = self.var(f"wi[{ln.key}]", *self.flow_bound(ilo, ihi, g), tag=ln.key)
        self.gated_bounds(wr, rlo, rhi, g, "ac-flow")
        self.gated_bounds(wi, ilo, ihi, g, "ac-flow")
        self.m.add_rotated("ac-flow", [({wr: 1.0}, 0.0), ({wi: 1.0}, 0.0)], ({wf: 1.0}, 0.0),
                           ({wt: 1.0}, 0.0), f"w[{ln.key}]")
        if ln.angmax < math.pi / 2:
            self.m.add_row("angle-diff", {wi: 1.0, wr: -math.tan(ln.angmax)}, hi=0.0, name=f"ang[{ln.key}]")
        if ln.angmin > -math.pi / 2:
            self.m.add_row("angle-diff", {wi: 1.0, wr: -math.tan(ln.angmin)}, lo=0.0, name=f"ang[{ln.key}]")
        box = self.flow_box(ln)
        lo, hi = self.flow_bound(-box, box, g)
        cpf, cqf, cpt, cqt = pi_coeffs(ln)
        out = []
        for name, (c1, c2, c3), wend in (("pf", cpf, wf), ("qf", cqf, wf), ("pt", cpt, wt), ("qt", cqt, wt)):
            v = self.var(f"{name}[{ln.key}]", lo, hi, tag=ln.key)
            self.m.add_row("ac-flow", {v: 1.0, wend: -c1, wr: -c2, wi: -c3}, 0.0, 0.0, f"{name}[{ln.key}]")
            out.append(v)
        rate = self.line_rate(ln)
        if rate is not None:
            for p, q in ((out[0], out[1]), (out[2], out[3])):
                self.m.add_cone("thermal", [({p: 1.0}, 0.0), ({q: 1.0}, 0.0)], ({}, rate), f"rate[{ln.key}]")
        self.add(self.bal_p, ln.f, out[0], -1.0)
        self.add(self.bal_q, ln.f, out[1], -1.0)
        self.add(self.bal_p, ln.t, out[2], -1.0)
        self.add(self.bal_q, ln.t, out[3], -1.0)

    def dc_line(self, dl):
        g = dl.gate
        ef, et = self.net.dc_bus[int(dl.f)], self.net.dc_bus[int(dl.t)]
        wf = self._copy(f"wdcfl[{dl.key}]", self.wdc[dl.f], ef.vmin, ef.vmax, g, "dc-flow")
        wt = self._copy(f"wdctl[{dl.key}]", self.wdc[dl.t], et.vmin, et.vmax, g, "dc-flow")
        lo_ef, hi_ef = ef.vmin * et.vmin, ef.vmax * et.vmax
        wef = self.var(f"wdcef[{dl.key}]", *self.flow_bound(lo_ef, hi_ef, g), tag=dl.key)
        self.gated_bounds(wef, lo_ef, hi_ef, g, "dc-flow")
        self.m.add_rotated("dc-flow", [({wef: 1.0}, 0.0)], ({wf: 1.0}, 0.0), ({wt: 1.0}, 0.0),
                           f"wdc[{dl.key}]")
        lo, hi = self.flow_bound(dl.pmin, dl.pmax, g)
        k = dl.poles * dl.g
        pf = self.var(f"pdcf[{dl.key}]", lo, hi, tag=dl.key)
        pt = self.var(f"pdct[{dl.key}]", lo, hi, tag=dl.key)
        self.m.add_row("dc-flow", {pf: 1.0, wf: -k, wef: k}, 0.0, 0.0, f"pdcf[{dl.key}]")
        self.m.add_row("dc-flow", {pt: 1.0, wt: -k, wef: k}, 0.0, 0.0, f"pdct[{dl.key}]")
        self.add(self.bal_dc, dl.f, pf, -1.0)
        self.add(self.bal_dc, dl.t, pt, -1.0)

    def converter(self, cv):
        c, g = cv.conv, cv.gate
        k = cv.key
        pac = self.var(f"pac[{k}]", *self.flow_bound(c.pac_min, c.pac_max, g), tag=k)
        qac = self.var(f"qac[{k}]", *self.flow_bound(c.qac_min, c.qac_max, g), tag=k)
        pdc = self.var(f"pdc[{k}]", *self.flow_bound(c.pdc_min, c.pdc_max, g), tag=k)
        cur = self.var(f"i[{k}]", 0.0, c.imax, tag=k)
        isq = self.var(f"isq[{k}]", 0.0, c.imax ** 2, tag=k)
        for v, lo, hi in ((pac, c.pac_min, c.pac_max), (qac, c.qac_min, c.qac_max),
                          (pdc, c.pdc_min, c.pdc_max), (cur, 0.0, c.imax), (isq, 0.0, c.imax ** 2)):
            self.gated_bounds(v, lo, hi, g, "converter-coupling")
        row = {pac: 1.0, pdc: 1.0, cur: -c.b, isq: -c.c}
        if g is None:
            self.m.add_row("converter-loss", row, c.a, c.a, f"loss[{k}]")
        else:
            row[self.z[g]] = -c.a
            self.m.add_row("converter-loss", row, 0.0, 0.0, f"loss[{k}]")
        sq = [({pac: 1.0}, 0.0), ({qac: 1.0}, 0.0)]
        self.m.add_rotated("converter-coupling", sq, ({self.w[cv.ac_node]: 1.0}, 0.0),
                           ({isq: 1.0}, 0.0), f"s2[{k}]")
        self.m.add_rotated("converter-coupling", [({cur: 1.0}, 0.0)], ({isq: 1.0}, 0.0), ({}, 1.0),
                           f"i2[{k}]")
        vmax = self.view.node[cv.ac_node].vmax
        self.m.add_cone("converter-coupling", sq, ({cur: vmax}, 0.0), f"s1[{k}]")
        self.m.add_row("converter-coupling", {isq: 1.0, cur: -c.imax}, hi=0.0, name=f"isq[{k}]")
        if math.isfinite(c.smax):
            self.m.add_cone("converter-coupling", sq, ({}, c.smax), f"smax[{k}]")
        self.add(self.bal_p, cv.ac_node, pac, -1.0)
        self.add(self.bal_q, cv.ac_node, qac, -1.0)
        self.add(self.bal_dc, cv.dc_node, pdc, -1.0)

    def switch(self, sw):
        ac = sw.sw.side == "ac"
        p, q = self.switch_flows(sw, reactive=ac)
        z = self.z[sw.gate]
        if ac:
            self.m.add_cone("switch-flow-bound", [({p: 1.0}, 0.0), ({q: 1.0}, 0.0)],
                            ({}, sw.sw.rating), f"rate[{sw.key}]")
            a, b, big = self.w[sw.f], self.w[sw.t], self.spec.m_m
            self.add(self.bal_p, sw.f, p, -1.0)
            self.add(self.bal_p, sw.t, p, 1.0)
            self.add(self.bal_q, sw.f, q, -1.0)
            self.add(self.bal_q, sw.t, q, 1.0)
        else:
            a, b, big = self.wdc[sw.f], self.wdc[sw.t], self.spec.m_dc
            self.add(self.bal_dc, sw.f, p, -1.0)
            self.add(self.bal_dc, sw.t, p, 1.0)
        self.m.add_row("switch-voltage", {a: 1.0, b: -1.0, z: big}, hi=big, name=f"eq[{sw.key}]")
        self.m.add_row("switch-voltage", {a: 1.0, b: -1.0, z: -big}, lo=-big, name=f"eq[{sw.key}]")

    def shunts(self):
        for n in self.view.nodes:
            w = self.w[n.key]
            for val, bal, sign, nm in ((n.gs, self.bal_p, 1.0, "psh"), (n.bs, self.bal_q, -1.0, "qsh")):
                if not val:
                    continue
                if n.gate is None:
                    self.add(bal, n.key, w, -sign * val)
                    continue
                # s = sign*val*w when energized, 0 otherwise
                s = self.var(f"{nm}[{n.key}]", -_SHUNT_BOX, _SHUNT_BOX, tag=f"bus:{n.key}")
                self.bigm_link({s: 1.0, w: -sign * val}, 0.0, n.gate, "shunt")
                big = abs(val) * n.vmax ** 2
                self.gated_bounds(s, -big, big, n.gate, "shunt")
                self.add(bal, n.key, s, -1.0)
        for d in self.view.dc_nodes:
            if d.gs:
                k = str(d.id)
                self.add(self.bal_dc, k, self.wdc[k], -d.gs)
