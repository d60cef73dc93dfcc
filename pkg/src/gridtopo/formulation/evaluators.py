"""Exact constraint kernels.

Every function takes an ``xp`` namespace providing ``sin`` and ``cos`` so
the same code evaluates numpy floats (audits) and casadi symbols (NLP).
"""
from __future__ import annotations

import math

import numpy as np


def ac_flow_exact(br, vm_i, vm_j, va_i, va_j, z=1, xp=np):
    """Polar pi-model flows ``(P_ij, Q_ij, P_ji, Q_ji)`` of a branch.

    ``br`` needs ``g, b, bc, tap, shift``; charging is split evenly.
    """
    g, b, bsh = br.g, br.b, br.bc / 2
    tr, ti = br.tap * math.cos(br.shift), br.tap * math.sin(br.shift)
    tm2 = br.tap ** 2
    d = va_i - va_j
    vv = vm_i * vm_j
    c, s = xp.cos(d), xp.sin(d)
    p_ij = g / tm2 * vm_i ** 2 + (-g * tr + b * ti) / tm2 * vv * c + (-b * tr - g * ti) / tm2 * vv * s
    q_ij = -(b + bsh) / tm2 * vm_i ** 2 - (-b * tr - g * ti) / tm2 * vv * c + (-g * tr + b * ti) / tm2 * vv * s
    p_ji = g * vm_j ** 2 + (-g * tr - b * ti) / tm2 * vv * c + (-b * tr + g * ti) / tm2 * vv * (-s)
    q_ji = -(b + bsh) * vm_j ** 2 - (-b * tr + g * ti) / tm2 * vv * c + (-g * tr - b * ti) / tm2 * vv * (-s)
    return z * p_ij, z * q_ij, z * p_ji, z * q_ji


def dc_flow(br, u_e, u_f, z=1):
    """Total (all-pole) DC flow from ``e`` to ``f``."""
    return z * br.poles * br.g * u_e * (u_e - u_f)


def converter_loss(conv, i_mag, z=1):
    return z * conv.a + conv.b * i_mag + conv.c * i_mag ** 2


def converter_coupling(conv, vm, i_mag, p_ac, p_dc, u_dc, z=1, q_ac=0.0) -> np.ndarray:
    """Residuals of one converter (all zero when satisfied).

    Order: DC-side current bound ``|P_dc| <= z*I_max*U_dc``, loss balance,
    current bound, AC power bound, DC power bound, ``P^2+Q^2 = U^2 I^2``.
    ``p_ac`` and ``p_dc`` are both withdrawals into the station.
    """
    return np.array([
        max(0.0, abs(p_dc) - z * conv.imax * u_dc),
        p_ac + p_dc - converter_loss(conv, i_mag, z),
        max(0.0, i_mag - z * conv.imax, -i_mag),
        max(0.0, p_ac - z * conv.pac_max, z * conv.pac_min - p_ac),
        max(0.0, p_dc - z * conv.pdc_max, z * conv.pdc_min - p_dc),
        p_ac ** 2 + q_ac ** 2 - vm ** 2 * i_mag ** 2,
    ])


def objective_eval(net, pg: dict) -> float:
    """Generation cost in $/h for ``pg`` (generator id -> p.u.)."""
    total = 0.0
    for g in net.generators:
        if g.id not in pg:
            raise KeyError(f"missing dispatch for generator {g.id}")
        total += g.c1 * pg[g.id] + g.c0
    return total


class _P:
    """Attribute view over a params dict."""

    def __init__(self, d):
        self.__dict__.update(d)


def record_residual(rec, x, xp=np):
    """Residual list of a nonlinear record at ``x`` (numpy or casadi)."""
    z = 1 if rec.gate is None else x[rec.gate]
    o = [x[i] for i in rec.out]
    a = [x[i] for i in rec.inputs]
    p = rec.params
    k = rec.kind
    if k == "ac_line":
        f = ac_flow_exact(_P(p), a[0], a[1], a[2], a[3], z, xp)
        return [o[n] - f[n] for n in range(4)]
    if k == "dc_line":
        br = _P(p)
        return [o[0] - dc_flow(br, a[0], a[1], z), o[1] - dc_flow(br, a[1], a[0], z)]
    if k == "conv_loss":
        return [o[0] + o[1] - (z * p["a"] + p["b"] * a[0] + p["c"] * a[0] ** 2)]
    if k == "conv_current":
        return [o[0] ** 2 + o[1] ** 2 - a[0] ** 2 * a[1] ** 2]
    if k == "shunt":
        res = [o[0] - z * p["gs"] * a[0] ** 2]
        if len(o) > 1:
            res.append(o[1] + z * p["bs"] * a[0] ** 2)
        return res
    if k == "switch_bilinear":
        return [z * (a[0] - a[1])]
    raise ValueError(f"unknown nonlinear record kind {k!r}")
