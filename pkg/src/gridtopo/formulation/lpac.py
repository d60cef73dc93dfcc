"""Cold-start LPAC approximation.

Voltage magnitudes are ``1 + phi``; the cosine of each branch angle
difference is bounded above by tangent lines at uniformly spaced knots, and
DC flows are linearized around 1 p.u.
"""
from __future__ import annotations

import math

import numpy as np

from .base import Builder
from .soc import pi_coeffs

_SHUNT_BOX = 10.0
DEFAULT_WINDOW = (-math.pi / 6, math.pi / 6)


def cos_knots(lo: float, hi: float, segments: int) -> np.ndarray:
    """``segments + 1`` uniform knots on ``[lo, hi]``, with 0 forced onto
    the grid when it lies inside."""
    knots = np.linspace(lo, hi, segments + 1)
    if lo < 0 < hi and not np.any(np.isclose(knots, 0.0, atol=1e-15)):
        knots[np.argmin(np.abs(knots))] = 0.0
    return np.where(np.abs(knots) < 1e-15, 0.0, knots)


def cos_envelope(theta, knots) -> np.ndarray:
    """Tangent-line over-estimator of cos: ``min_k cos(a_k) - sin(a_k)(t - a_k)``."""
    t = np.atleast_1d(np.asarray(theta, dtype=float))[:, None]
    a = np.asarray(knots)[None, :]
    return np.min(np.cos(a) - np.sin(a) * (t - a), axis=1)


class LpacBuilder(Builder):
    name = "lpac"

    def window(self, ln):
        """Knot interval: the configured window intersected with the branch bounds.

        Tangents of cos over-estimate it on all of [-pi/2, pi/2], so the
        window only places knots and does not restrict the angle itself.
        """
        w = self.spec.lpac_window or DEFAULT_WINDOW
        if not (-math.pi / 2 <= w[0] < 0 < w[1] <= math.pi / 2):
            raise ValueError(f"LPAC angle window {w} must contain 0 and lie within +-pi/2")
        if ln.angmin < -math.pi / 2 or ln.angmax > math.pi / 2:
            raise ValueError(f"LPAC needs angle bounds of {ln.key} within +-pi/2")
        lo, hi = max(ln.angmin, w[0]), min(ln.angmax, w[1])
        if not lo < 0 < hi:
            raise ValueError(f"LPAC angle window {w} is inconsistent with the angle bounds of {ln.key}")
        return lo, hi

    def voltages(self):
        self.phi, self.va, self.phidc = {}, {}, {}
        for n in self.view.nodes:
            self.phi[n.key] = self.var(f"phi[{n.key}]", n.vmin - 1, n.vmax - 1, tag=f"bus:{n.key}")
            self.va[n.key] = self.var(f"va[{n.key}]", n.vamin, n.vamax, tag=f"bus:{n.key}")
            if n.ref:
                self.m.add_row("reference", {self.va[n.key]: 1.0}, 0.0, 0.0, f"ref[{n.key}]")
        for d in self.view.dc_nodes:
            k = str(d.id)
            self.phidc[k] = self.var(f"phidc[{k}]", d.vmin - 1, d.vmax - 1, tag=f"dcbus:{k}")

    def line(self, ln):
        lo, hi = self.window(ln)
        g = ln.gate
        d = {self.va[ln.f]: 1.0, self.va[ln.t]: -1.0}
        if g is None:
            self.m.add_row("angle-diff", d, ln.angmin, ln.angmax, f"ang[{ln.key}]")
            td = d
        else:
            t = self.var(f"td[{ln.key}]", ln.angmin, ln.angmax, tag=ln.key)
            self.bigm_link({**d, t: -1.0}, 0.0, g, "angle-diff")
            td = {t: 1.0}
        knots = cos_knots(lo, hi, self.spec.lpac_segments)
        cs = self.var(f"cs[{ln.key}]", min(math.cos(ln.angmin), math.cos(ln.angmax)), 1.0, tag=ln.key)
        for a in knots:
            # cs + sin(a)*td <= cos(a) + a*sin(a)
            row = {cs: 1.0}
            for i, c in td.items():
                row[i] = row.get(i, 0.0) + math.sin(a) * c
            self.m.add_row("ac-flow", row, hi=math.cos(a) + a * math.sin(a), name=f"cos[{ln.key}]")
        pf_f, qf_f, pt_f, qt_f = self.phi[ln.f], self.phi[ln.f], self.phi[ln.t], self.phi[ln.t]
        cpf, cqf, cpt, cqt = pi_coeffs(ln)
        box = self.flow_box(ln)
        vlo, vhi = self.flow_bound(-box, box, g)
        out = []
        # c3 already carries the sign of sin(theta_t - theta_f) on the to side
        for name, (c1, c2, c3), own in (("pf", cpf, pf_f), ("qf", cqf, qf_f),
                                         ("pt", cpt, pt_f), ("qt", cqt, qt_f)):
            v = self.var(f"{name}[{ln.key}]", vlo, vhi, tag=ln.key)
            # v = c1 (1 + 2 phi_own) + c2 (cs + phi_f + phi_t) + c3 td
            expr = {v: 1.0, own: -2 * c1, cs: -c2}
            expr[self.phi[ln.f]] = expr.get(self.phi[ln.f], 0.0) - c2
            expr[self.phi[ln.t]] = expr.get(self.phi[ln.t], 0.0) - c2
            for i, c in td.items():
                expr[i] = expr.get(i, 0.0) - c3 * c
            self.bigm_link(expr, -c1, g, "ac-flow")
            self.gated_bounds(v, -box, box, g, "thermal")
            out.append(v)
        rate = self.line_rate(ln)
        if rate is not None:
            self.polygon(out[0], out[1], {}, rate, "thermal")
            self.polygon(out[2], out[3], {}, rate, "thermal")
        self.add(self.bal_p, ln.f, out[0], -1.0)
        self.add(self.bal_q, ln.f, out[1], -1.0)
        self.add(self.bal_p, ln.t, out[2], -1.0)
        self.add(self.bal_q, ln.t, out[3], -1.0)

    def dc_line(self, dl):
        lo, hi = self.flow_bound(dl.pmin, dl.pmax, dl.gate)
        pf = self.var(f"pdcf[{dl.key}]", lo, hi, tag=dl.key)
        pt = self.var(f"pdct[{dl.key}]", lo, hi, tag=dl.key)
        k = dl.poles * dl.g
        a, b = self.phidc[dl.f], self.phidc[dl.t]
        self.bigm_link({pf: 1.0, a: -k, b: k}, 0.0, dl.gate, "dc-flow")
        self.m.add_row("dc-flow", {pf: 1.0, pt: 1.0}, 0.0, 0.0, f"lossless[{dl.key}]")
        self.gated_bounds(pf, dl.pmin, dl.pmax, dl.gate, "dc-flow")
        self.gated_bounds(pt, dl.pmin, dl.pmax, dl.gate, "dc-flow")
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
        # |S| <= I at nominal voltage, i^2 <= isq by tangents
        self.polygon(pac, qac, {cur: 1.0}, 0.0, "converter-coupling")
        for j in range(self.spec.lpac_segments + 1):
            i0 = c.imax * j / self.spec.lpac_segments
            self.m.add_row("converter-coupling", {isq: 1.0, cur: -2 * i0}, lo=-i0 * i0, name=f"isq[{k}]")
        if math.isfinite(c.smax):
            self.polygon(pac, qac, {}, c.smax, "converter-coupling")
        ph = self.phidc[cv.dc_node]
        self.m.add_row("converter-coupling", {pdc: 1.0, ph: -c.imax}, hi=c.imax, name=f"idc[{k}]")
        self.m.add_row("converter-coupling", {pdc: -1.0, ph: -c.imax}, hi=c.imax, name=f"idc[{k}]")
        self.add(self.bal_p, cv.ac_node, pac, -1.0)
        self.add(self.bal_q, cv.ac_node, qac, -1.0)
        self.add(self.bal_dc, cv.dc_node, pdc, -1.0)

    def switch(self, sw):
        ac = sw.sw.side == "ac"
        p, q = self.switch_flows(sw, reactive=ac)
        z = self.z[sw.gate]
        if ac:
            self.polygon(p, q, {}, sw.sw.rating, "switch-flow-bound")
            pairs = ((self.phi, self.spec.m_m), (self.va, self.spec.m_theta))
            self.add(self.bal_p, sw.f, p, -1.0)
            self.add(self.bal_p, sw.t, p, 1.0)
            self.add(self.bal_q, sw.f, q, -1.0)
            self.add(self.bal_q, sw.t, q, 1.0)
        else:
            pairs = ((self.phidc, self.spec.m_dc),)
            self.add(self.bal_dc, sw.f, p, -1.0)
            self.add(self.bal_dc, sw.t, p, 1.0)
        for table, big in pairs:
            a, b = table[sw.f], table[sw.t]
            self.m.add_row("switch-voltage", {a: 1.0, b: -1.0, z: big}, hi=big, name=f"eq[{sw.key}]")
            self.m.add_row("switch-voltage", {a: 1.0, b: -1.0, z: -big}, lo=-big, name=f"eq[{sw.key}]")

    def shunts(self):
        for n in self.view.nodes:
            ph = self.phi[n.key]
            for val, bal, sign, nm in ((n.gs, self.bal_p, 1.0, "psh"), (n.bs, self.bal_q, -1.0, "qsh")):
                if not val:
                    continue
                # withdrawal sign*val*(1 + 2 phi)
                if n.gate is None:
                    self.add(bal, n.key, ph, -2 * sign * val)
                    if bal is self.bal_p:
                        self.load_p[n.key] += sign * val
                    else:
                        self.load_q[n.key] += sign * val
                    continue
                s = self.var(f"{nm}[{n.key}]", -_SHUNT_BOX, _SHUNT_BOX, tag=f"bus:{n.key}")
                self.bigm_link({s: 1.0, ph: -2 * sign * val}, -sign * val, n.gate, "shunt")
                big = abs(val) * n.vmax ** 2
                self.gated_bounds(s, -big, big, n.gate, "shunt")
                self.add(bal, n.key, s, -1.0)
        for d in self.view.dc_nodes:
            if d.gs:
                k = str(d.id)
                self.add(self.bal_dc, k, self.phidc[k], -2 * d.gs)
                self.load_dc[k] += d.gs
