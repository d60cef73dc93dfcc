"""AC-feasibility check of a candidate topology.

The topology is applied to the network (closed switches merge buses,
de-energized elements are removed), the exact OPF is re-solved on the
resulting fixed network for the true cost, and the solution is mapped back
onto the original buses and switches and audited with the exact constraint
kernels.  A sequential AC/DC Newton power flow at the optimized setpoints
confirms that the operating point is a solution of the network equations.
"""
from __future__ import annotations

import json
import logging
import math
import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse import csr_matrix, diags
from scipy.sparse.linalg import MatrixRankWarning, spsolve

from .augment import AugmentedNetwork
from .formulation.evaluators import ac_flow_exact, converter_coupling, dc_flow
from .network import AC, Network, RawCase, expand, island_decomposition, validate, with_flags

log = logging.getLogger(__name__)

AUDIT_FAMILIES = ("balance", "flow", "converter", "bounds", "switch-equality")
STATUS_FEASIBLE = "feasible"
STATUS_INFEASIBLE = "infeasible"
STATUS_TOPOLOGY = "infeasible-topology"
STATUS_NONCONVERGENT = "nonconvergent"


def _owner(key: str) -> str | None:
    """Converter key owning a station-internal node (``cv3.f`` -> ``c3``)."""
    return "c" + key[2:].split(".")[0] if key.startswith("cv") else None


class AuditError(KeyError):
    """The assignment lacks a variable the audit needs."""


# ---------------------------------------------------------------------------
# topology application
# ---------------------------------------------------------------------------

class _UnionFind:
    def __init__(self, items):
        self.parent = {i: i for i in items}

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


@dataclass
class Reduction:
    """A topology applied to a network."""

    network: Network | None             # reduced network, None when the topology is infeasible
    ac_rep: dict = field(default_factory=dict)   # original AC bus -> reduced bus
    dc_rep: dict = field(default_factory=dict)
    dead_ac: set = field(default_factory=set)    # original buses left without any source or load
    dead_dc: set = field(default_factory=set)
    off: set = field(default_factory=set)        # element keys out of service (incl. dead ones)
    message: str = ""


def normalize_topology(net: Network, topology) -> dict:
    """Element-key topology (``l3``, ``d1``, ``c2``, ``s7`` -> 0/1).

    Accepts element keys or ``(kind, id)`` pairs.  Every switch must be
    given; branches and converters default to in service.
    """
    kinds = {"ac_branch": "l", "dc_branch": "d", "converter": "c", "switch": "s"}
    known = ({f"l{b.id}" for b in net.ac_branches} | {f"d{b.id}" for b in net.dc_branches}
             | {f"c{c.id}" for c in net.converters} | {f"s{s.id}" for s in net.switches})
    out = {}
    for k, v in dict(topology).items():
        if isinstance(k, tuple):
            k = f"{kinds[k[0]]}{k[1]}"
        if k not in known:
            raise ValueError(f"topology refers to unknown element {k!r}")
        v = float(v)
        if not (abs(v) < 1e-6 or abs(v - 1) < 1e-6):
            raise ValueError(f"topology value of {k} must be 0 or 1, got {v}")
        out[k] = int(round(v))
    missing = sorted(f"s{s.id}" for s in net.switches if f"s{s.id}" not in out)
    if missing:
        raise ValueError(f"topology does not cover switches {', '.join(missing)}")
    return out


def apply_topology(net: Network, topo: dict) -> Reduction:
    """Merge buses joined by closed switches and drop what is switched off.

    Islands holding load but no generator are reported as an infeasible
    topology.  Islands with neither are de-energized and dropped.  Each
    remaining AC island gets exactly one reference bus and each DC island
    a DC-voltage-controlling converter.
    """
    on = lambda key: topo.get(key, 1) == 1  # noqa: E731
    uf_ac = _UnionFind([b.id for b in net.ac_buses])
    uf_dc = _UnionFind([b.id for b in net.dc_buses])
    for s in net.switches:
        if on(f"s{s.id}"):
            (uf_ac if s.side == AC else uf_dc).union(s.f_bus, s.t_bus)
    ac_rep = {b.id: uf_ac.find(b.id) for b in net.ac_buses}
    dc_rep = {b.id: uf_dc.find(b.id) for b in net.dc_buses}
    off = {k for k, v in topo.items() if v == 0}
    notes = []

    ac_buses = {}
    for b in net.ac_buses:
        r = ac_rep[b.id]
        if r not in ac_buses:
            ac_buses[r] = replace(b, id=r)
        else:
            m = ac_buses[r]
            ac_buses[r] = replace(m, vmin=max(m.vmin, b.vmin), vmax=min(m.vmax, b.vmax),
                                  vamin=max(m.vamin, b.vamin), vamax=min(m.vamax, b.vamax),
                                  gs=m.gs + b.gs, bs=m.bs + b.bs, ref=m.ref or b.ref)
    dc_buses = {}
    for b in net.dc_buses:
        r = dc_rep[b.id]
        if r not in dc_buses:
            dc_buses[r] = replace(b, id=r)
        else:
            m = dc_buses[r]
            dc_buses[r] = replace(m, vmin=max(m.vmin, b.vmin), vmax=min(m.vmax, b.vmax), gs=m.gs + b.gs)
    for b in list(ac_buses.values()) + list(dc_buses.values()):
        if b.vmin > b.vmax:
            return Reduction(None, ac_rep, dc_rep, off=off,
                             message=f"merged bus {b.id} has inconsistent voltage bounds")

    branches = []
    for br in net.ac_branches:
        if not on(f"l{br.id}"):
            continue
        f, t = ac_rep[br.f_bus], ac_rep[br.t_bus]
        if f == t:
            notes.append(f"AC branch {br.id} shorted by closed switches")
            off.add(f"l{br.id}")
            continue
        branches.append(replace(br, f_bus=f, t_bus=t, switchable=False))
    dc_branches = []
    for br in net.dc_branches:
        if not on(f"d{br.id}"):
            continue
        f, t = dc_rep[br.f_bus], dc_rep[br.t_bus]
        if f == t:
            notes.append(f"DC branch {br.id} shorted by closed switches")
            off.add(f"d{br.id}")
            continue
        dc_branches.append(replace(br, f_bus=f, t_bus=t, switchable=False))
    convs = [replace(c, ac_bus=ac_rep[c.ac_bus], dc_bus=dc_rep[c.dc_bus], switchable=False)
             for c in net.converters if on(f"c{c.id}")]
    gens = [replace(g, bus=ac_rep[g.bus]) for g in net.generators]
    loads = [replace(ld, bus=(ac_rep if ld.side == AC else dc_rep)[ld.bus]) for ld in net.loads]

    # islands across converters
    uf = _UnionFind([("a", i) for i in ac_buses] + [("d", i) for i in dc_buses])
    for br in branches:
        uf.union(("a", br.f_bus), ("a", br.t_bus))
    for br in dc_branches:
        uf.union(("d", br.f_bus), ("d", br.t_bus))
    for c in convs:
        uf.union(("a", c.ac_bus), ("d", c.dc_bus))
    has_gen = {uf.find(("a", g.bus)) for g in gens}
    has_load = {uf.find(("a" if ld.side == AC else "d", ld.bus)) for ld in loads if ld.p or ld.q}
    starving = has_load - has_gen
    if starving:
        side, bus = min(starving)
        return Reduction(None, ac_rep, dc_rep, off=off,
                         message=f"load islanded without generation at {'AC' if side == 'a' else 'DC'} bus {bus}")
    live = has_gen
    dead_ac = {i for i in ac_buses if uf.find(("a", i)) not in live}
    dead_dc = {i for i in dc_buses if uf.find(("d", i)) not in live}
    for br in branches:
        if br.f_bus in dead_ac:
            off.add(f"l{br.id}")
    for br in dc_branches:
        if br.f_bus in dead_dc:
            off.add(f"d{br.id}")
    for c in convs:
        if c.ac_bus in dead_ac:
            off.add(f"c{c.id}")
    branches = [b for b in branches if b.f_bus not in dead_ac]
    dc_branches = [b for b in dc_branches if b.f_bus not in dead_dc]
    convs = [c for c in convs if c.ac_bus not in dead_ac]
    loads = [ld for ld in loads if ld.bus not in (dead_ac if ld.side == AC else dead_dc)]
    for i in dead_ac:
        del ac_buses[i]
    for i in dead_dc:
        del dc_buses[i]

    # one reference per AC island
    tmp = Network(net.base_mva, net.name, tuple(ac_buses.values()), tuple(dc_buses.values()),
                  tuple(branches), tuple(dc_branches))
    ac_isl, dc_isl = island_decomposition(tmp)
    gen_cap: dict[int, float] = {}
    for g in gens:
        gen_cap[g.bus] = gen_cap.get(g.bus, 0.0) + g.pmax
    conv_at = {c.ac_bus for c in convs}
    for isl in ac_isl:
        refs = [i for i in isl if ac_buses[i].ref]
        if len(refs) == 1:
            continue
        if refs:
            keep = refs[0]
        else:
            cands = [i for i in isl if i in gen_cap] or [i for i in isl if i in conv_at] or list(isl)
            keep = max(cands, key=lambda i: (gen_cap.get(i, 0.0), -i))
            notes.append(f"bus {keep} made reference of its AC island")
        for i in isl:
            ac_buses[i] = replace(ac_buses[i], ref=(i == keep))
    for isl in dc_isl:
        here = [c for c in convs if c.dc_bus in isl]
        if here and not any(c.dc_slack for c in here):
            pick = max(here, key=lambda c: (c.imax, -c.id))
            convs = [replace(c, dc_slack=(c.id == pick.id)) if c.dc_bus in isl else c for c in convs]
            notes.append(f"converter {pick.id} controls the DC voltage of its island")
    raw = RawCase(net.base_mva, net.name, list(ac_buses.values()), list(dc_buses.values()),
                  branches, dc_branches, convs, gens, loads, [])
    reduced = validate(raw)
    return Reduction(reduced, ac_rep, dc_rep, dead_ac={b for b, r in ac_rep.items() if r in dead_ac},
                     dead_dc={b for b, r in dc_rep.items() if r in dead_dc}, off=off,
                     message="; ".join(notes))


# ---------------------------------------------------------------------------
# residual audit
# ---------------------------------------------------------------------------

def residual_audit(net: Network, assignment: dict, tol: float = 1e-6, topology: dict | None = None,
                   skip_buses: tuple = ((), ())) -> dict:
    """Largest violation per family at a full variable assignment.

    Flows are re-derived from the voltages with the exact kernels; only
    generator, converter and switch set-points are read from the
    assignment.  ``topology`` maps element keys to 0/1 (default in
    service; switches default closed).  ``skip_buses`` lists AC and DC bus
    ids excluded from the balance family (de-energized buses).
    """
    if not tol > 0:
        raise ValueError("tolerance must be positive")
    topo = dict(topology or {})
    view = expand(with_flags(net), ots=False)

    def val(name):
        try:
            return float(assignment[name])
        except KeyError:
            raise AuditError(f"assignment lacks variable {name}") from None

    z = lambda key: topo.get(key, 1)  # noqa: E731
    out = {f: 0.0 for f in AUDIT_FAMILIES}

    def put(fam, v):
        out[fam] = max(out[fam], float(v))

    vm = {n.key: val(f"vm[{n.key}]") for n in view.nodes}
    va = {n.key: val(f"va[{n.key}]") for n in view.nodes}
    u = {str(d.id): val(f"u[{d.id}]") for d in view.dc_nodes}
    bp = {k: 0.0 for k in vm}
    bq = {k: 0.0 for k in vm}
    bd = {k: 0.0 for k in u}
    for n in view.nodes:
        put("bounds", max(n.vmin - vm[n.key], vm[n.key] - n.vmax, 0.0))
        put("bounds", max(n.vamin - va[n.key], va[n.key] - n.vamax, 0.0))
        on = z(_owner(n.key)) if _owner(n.key) else 1
        bp[n.key] -= on * n.gs * vm[n.key] ** 2
        bq[n.key] += on * n.bs * vm[n.key] ** 2
    for d in view.dc_nodes:
        k = str(d.id)
        put("bounds", max(d.vmin - u[k], u[k] - d.vmax, 0.0))
        bd[k] -= d.gs * u[k] ** 2
    for g in view.gens:
        p, q = val(f"pg[{g.id}]"), val(f"qg[{g.id}]")
        put("bounds", max(g.pmin - p, p - g.pmax, g.qmin - q, q - g.qmax, 0.0))
        bp[str(g.bus)] += p
        bq[str(g.bus)] += q
    for ld in view.loads:
        if ld.side == AC:
            bp[str(ld.bus)] -= ld.p
            bq[str(ld.bus)] -= ld.q
        else:
            bd[str(ld.bus)] -= ld.p
    for ln in view.lines:
        on = z(ln.owner or ln.key)
        pf, qf, pt, qt = ac_flow_exact(ln, vm[ln.f], vm[ln.t], va[ln.f], va[ln.t], on)
        bp[ln.f] -= pf
        bq[ln.f] -= qf
        bp[ln.t] -= pt
        bq[ln.t] -= qt
        if on and ln.rate is not None and math.isfinite(ln.rate):
            put("flow", max(math.hypot(pf, qf), math.hypot(pt, qt)) - ln.rate)
        if on:
            d = va[ln.f] - va[ln.t]
            put("flow", max(ln.angmin - d, d - ln.angmax, 0.0))
    for dl in view.dc_lines:
        on = z(dl.key)
        pf = dc_flow(dl, u[dl.f], u[dl.t], on)
        pt = dc_flow(dl, u[dl.t], u[dl.f], on)
        bd[dl.f] -= pf
        bd[dl.t] -= pt
        put("flow", max(dl.pmin * on - pf, pf - dl.pmax * on, dl.pmin * on - pt, pt - dl.pmax * on, 0.0))
    for cv in view.convs:
        on = z(cv.key)
        k = cv.key
        pac, qac, pdc, cur = (val(f"{v}[{k}]") for v in ("pac", "qac", "pdc", "i"))
        res = converter_coupling(cv.conv, vm[cv.ac_node], cur, pac, pdc, u[cv.dc_node], on, qac)
        put("converter", np.max(np.abs(res)))
        s = math.hypot(pac, qac)
        if math.isfinite(cv.conv.smax):
            put("converter", max(0.0, s - on * cv.conv.smax))
        put("converter", max(0.0, qac - on * cv.conv.qac_max, on * cv.conv.qac_min - qac))
        bp[cv.ac_node] -= pac
        bq[cv.ac_node] -= qac
        bd[cv.dc_node] -= pdc
    for se in view.switches:
        s, on = se.sw, z(se.key)
        p = val(f"psw[{s.id}]")
        q = val(f"qsw[{s.id}]") if s.side == AC else 0.0
        if on:
            put("flow", math.hypot(p, q) - s.rating)
            if s.side == AC:
                put("switch-equality", max(abs(va[se.f] - va[se.t]), abs(vm[se.f] - vm[se.t])))
            else:
                put("switch-equality", abs(u[se.f] - u[se.t]))
        else:
            put("flow", math.hypot(p, q))
        if s.side == AC:
            bp[se.f] -= p
            bp[se.t] += p
            bq[se.f] -= q
            bq[se.t] += q
        else:
            bd[se.f] -= p
            bd[se.t] += p
    skip_ac = {str(i) for i in skip_buses[0]}
    skip_dc = {str(i) for i in skip_buses[1]}
    for k in bp:
        if k not in skip_ac:
            put("balance", max(abs(bp[k]), abs(bq[k])))
    for k in bd:
        if k not in skip_dc:
            put("balance", abs(bd[k]))
    out["flow"] = max(out["flow"], 0.0)
    return out


# ---------------------------------------------------------------------------
# Newton power flow
# ---------------------------------------------------------------------------

@dataclass
class Dispatch:
    """Set-points for a power flow.

    ``pg`` generator id -> P; ``vset`` AC node key -> voltage magnitude at
    PV and reference buses; ``conv`` converter id -> (P_ac, Q_ac) withdrawn
    by the station core; ``udc`` DC bus id -> voltage at DC-slack buses.
    """

    pg: dict = field(default_factory=dict)
    vset: dict = field(default_factory=dict)
    conv: dict = field(default_factory=dict)
    udc: dict = field(default_factory=dict)


@dataclass
class PowerFlowResult:
    converged: bool
    vm: dict
    va: dict
    u: dict
    pg: dict
    qg: dict
    pac: dict
    qac: dict
    pdc: dict
    mismatch: list
    iterations: int
    message: str = ""

    @property
    def final_mismatch(self) -> float:
        return self.mismatch[-1] if self.mismatch else math.inf


class PowerFlowError(RuntimeError):
    pass


def _branch_admittance(ln):
    ys = complex(ln.g, ln.b)
    t = ln.tap * complex(math.cos(ln.shift), math.sin(ln.shift))
    yff = (ys + 0.5j * ln.bc) / ln.tap ** 2
    return yff, -ys / t.conjugate(), -ys / t, ys + 0.5j * ln.bc


def _newton(F, J, x, tol, max_iter, history, halvings=6, grow_limit=5):
    """Damped Newton on ``F(x) = 0``.  Returns ``(x, converged, iterations, message)``."""
    grow = 0
    f = F(x)
    norm = float(np.max(np.abs(f), initial=0.0))
    for it in range(1, max_iter + 1):
        history.append(norm)
        if norm < tol:
            return x, True, it, ""
        with warnings.catch_warnings():
            warnings.simplefilter("error", MatrixRankWarning)
            try:
                dx = spsolve(csr_matrix(J(x)), -f)
            except (MatrixRankWarning, RuntimeError):
                return x, False, it, "singular Jacobian"
        if not np.all(np.isfinite(dx)):
            return x, False, it, "singular Jacobian"
        step = 1.0
        for _ in range(halvings + 1):
            xn = x + step * dx
            fn = F(xn)
            nn = float(np.max(np.abs(fn), initial=0.0))
            if nn < norm:
                break
            step *= 0.5
        grow = grow + 1 if nn > norm else 0
        x, f, norm = xn, fn, nn
        if grow >= grow_limit:
            history.append(norm)
            return x, False, it, "diverged: mismatch grew over 5 consecutive iterations"
    history.append(norm)
    return x, norm < tol, max_iter, "" if norm < tol else "iteration limit"


def newton_acdc_power_flow(net: Network, dispatch: Dispatch, start: dict | None = None,
                           tol: float = 1e-9, max_iter: int = 30, max_outer: int = 30) -> PowerFlowResult:
    """Sequential AC/DC Newton power flow.

    The AC pass treats converter stations as constant (P, Q) withdrawals;
    the DC pass takes each converter's DC power from its loss balance and
    solves the DC voltages with DC-slack converters holding their buses.
    The slack converters' AC power is then updated and the passes repeat
    until it no longer changes.  ``start`` may hold ``vm``, ``va`` and
    ``u`` dictionaries; the default is a flat start.
    """
    view = expand(with_flags(net), ots=False)
    keys = [n.key for n in view.nodes]
    idx = {k: i for i, k in enumerate(keys)}
    nb = len(keys)
    Y = np.zeros((nb, nb), dtype=complex)
    for ln in view.lines:
        yff, yft, ytf, ytt = _branch_admittance(ln)
        i, j = idx[ln.f], idx[ln.t]
        Y[i, i] += yff
        Y[i, j] += yft
        Y[j, i] += ytf
        Y[j, j] += ytt
    for n in view.nodes:
        Y[idx[n.key], idx[n.key]] += complex(n.gs, n.bs)
    Y = csr_matrix(Y)

    ref = [idx[n.key] for n in view.nodes if n.ref]
    gen_bus = {}
    for g in view.gens:
        gen_bus.setdefault(str(g.bus), []).append(g)
    pv = [idx[k] for k in gen_bus if not view.node[k].ref and k in dispatch.vset]
    pq = [i for i in range(nb) if i not in ref and i not in pv]
    p_unknown = [i for i in range(nb) if i not in ref]
    start = start or {}
    vm0 = np.array([start.get("vm", {}).get(k, 1.0) for k in keys], dtype=float)
    va0 = np.array([start.get("va", {}).get(k, 0.0) for k in keys], dtype=float)
    for k, v in dispatch.vset.items():
        if k in idx and (idx[k] in pv or idx[k] in ref):
            vm0[idx[k]] = v

    s_fixed = np.zeros(nb, dtype=complex)
    for g in view.gens:
        s_fixed[idx[str(g.bus)]] += dispatch.pg.get(g.id, 0.0)
    for ld in view.loads:
        if ld.side == AC:
            s_fixed[idx[str(ld.bus)]] -= complex(ld.p, ld.q)

    convs = view.convs
    pac = {cv.conv.id: float(dispatch.conv.get(cv.conv.id, (0.0, 0.0))[0]) for cv in convs}
    qac = {cv.conv.id: float(dispatch.conv.get(cv.conv.id, (0.0, 0.0))[1]) for cv in convs}

    # DC data
    dkeys = [str(d.id) for d in view.dc_nodes]
    didx = {k: i for i, k in enumerate(dkeys)}
    nd = len(dkeys)
    G = np.zeros((nd, nd))
    for dl in view.dc_lines:
        w = dl.poles * dl.g
        i, j = didx[dl.f], didx[dl.t]
        G[i, i] += w
        G[j, j] += w
        G[i, j] -= w
        G[j, i] -= w
    gsh = np.array([d.gs for d in view.dc_nodes])
    dload = np.zeros(nd)
    for ld in view.loads:
        if ld.side != AC:
            dload[didx[str(ld.bus)]] += ld.p
    slack_conv = {cv.conv.id for cv in convs if cv.conv.dc_slack}
    slack_dc = sorted({didx[cv.dc_node] for cv in convs if cv.conv.id in slack_conv})
    if nd:
        _, dc_isl = island_decomposition(net)
        for isl in dc_isl:
            if not any(didx[str(b)] in slack_dc for b in isl):
                raise PowerFlowError(f"DC island containing bus {isl[0]} has no voltage-controlling converter")
    free_dc = [i for i in range(nd) if i not in slack_dc]
    u = np.array([start.get("u", {}).get(k, 1.0) for k in dkeys], dtype=float)
    for k, v in dispatch.udc.items():
        if str(k) in didx:
            u[didx[str(k)]] = v

    history: list[float] = []
    iters = 0
    V = vm0 * np.exp(1j * va0)
    pdc = {}
    message = ""
    converged = False
    for _outer in range(max_outer):
        s_spec = s_fixed.copy()
        for cv in convs:
            s_spec[idx[cv.ac_node]] -= complex(pac[cv.conv.id], qac[cv.conv.id])

        def F_ac(x, s_spec=s_spec):
            vm = np.abs(V).copy()
            va = np.angle(V).copy()
            va[p_unknown] = x[:len(p_unknown)]
            vm[pq] = x[len(p_unknown):]
            Vx = vm * np.exp(1j * va)
            mis = Vx * np.conj(Y @ Vx) - s_spec
            return np.concatenate([mis.real[p_unknown], mis.imag[pq]])

        def J_ac(x):
            vm = np.abs(V).copy()
            va = np.angle(V).copy()
            va[p_unknown] = x[:len(p_unknown)]
            vm[pq] = x[len(p_unknown):]
            Vx = vm * np.exp(1j * va)
            Ib = Y @ Vx
            dV = diags(Vx)
            dSm = dV @ np.conj(Y @ diags(Vx / np.abs(Vx))) + diags(np.conj(Ib) * Vx / np.abs(Vx))
            dSa = 1j * dV @ np.conj(diags(Ib) - Y @ dV)
            dSm, dSa = np.asarray(dSm.todense()), np.asarray(dSa.todense())
            top = np.hstack([dSa.real[np.ix_(p_unknown, p_unknown)], dSm.real[np.ix_(p_unknown, pq)]])
            bot = np.hstack([dSa.imag[np.ix_(pq, p_unknown)], dSm.imag[np.ix_(pq, pq)]])
            return np.vstack([top, bot])

        x0 = np.concatenate([np.angle(V)[p_unknown], np.abs(V)[pq]])
        x, ok, it, msg = _newton(F_ac, J_ac, x0, tol, max_iter, history)
        iters += it
        vm = np.abs(V).copy()
        va = np.angle(V).copy()
        va[p_unknown] = x[:len(p_unknown)]
        vm[pq] = x[len(p_unknown):]
        V = vm * np.exp(1j * va)
        if not ok:
            message = f"AC pass: {msg}"
            break

        def current(cv, p):
            return math.hypot(p, qac[cv.conv.id]) / abs(V[idx[cv.ac_node]])

        def loss(cv, p):
            c = cv.conv
            i_ = current(cv, p)
            return c.a + c.b * i_ + c.c * i_ ** 2

        pdc = {cv.conv.id: loss(cv, pac[cv.conv.id]) - pac[cv.conv.id] for cv in convs}
        if not nd:
            converged = True
            break
        inj = np.zeros(nd)
        for cv in convs:
            if cv.conv.id not in slack_conv:
                inj[didx[cv.dc_node]] += pdc[cv.conv.id]

        def F_dc(y):
            uu = u.copy()
            uu[free_dc] = y
            return (uu * (G @ uu) + gsh * uu ** 2 + dload + inj)[free_dc]

        def J_dc(y):
            uu = u.copy()
            uu[free_dc] = y
            Jf = np.diag(G @ uu + 2 * gsh * uu) + uu[:, None] * G
            return Jf[np.ix_(free_dc, free_dc)]

        y, ok, it, msg = _newton(F_dc, J_dc, u[free_dc], tol, max_iter, history)
        iters += it
        u[free_dc] = y
        if not ok:
            message = f"DC pass: {msg}"
            break
        # slack converters take the DC balance of their buses
        net_dc = u * (G @ u) + gsh * u ** 2 + dload + inj
        change = 0.0
        per_bus: dict[int, list] = {}
        for cv in convs:
            if cv.conv.id in slack_conv:
                per_bus.setdefault(didx[cv.dc_node], []).append(cv)
        for b, group in per_bus.items():
            share = -net_dc[b] / len(group)
            for cv in group:
                pdc[cv.conv.id] = share
                p = pac[cv.conv.id]
                for _ in range(50):
                    p_new = loss(cv, p) - share
                    if abs(p_new - p) < tol * 1e-2:
                        break
                    p = p_new
                change = max(change, abs(p_new - pac[cv.conv.id]))
                pac[cv.conv.id] = p_new
        history.append(change)
        if change < tol:
            converged = True
            break
    else:
        message = "outer AC/DC iteration limit"

    vm_d = {k: float(abs(V[i])) for k, i in idx.items()}
    va_d = {k: float(np.angle(V[i])) for k, i in idx.items()}
    S = V * np.conj(Y @ V)
    pg, qg = {}, {}
    for k, gs in gen_bus.items():
        i = idx[k]
        need = S[i] - s_fixed[i] + sum(complex(dispatch.pg.get(g.id, 0.0), 0) for g in gs)
        for cv in convs:
            if idx[cv.ac_node] == i:
                need += complex(pac[cv.conv.id], qac[cv.conv.id])
        for ld in view.loads:
            if ld.side == AC and str(ld.bus) == k:
                need += complex(ld.p, ld.q)
        share_q = need.imag / len(gs)
        for g in gs:
            pg[g.id] = need.real / len(gs) if view.node[k].ref else dispatch.pg.get(g.id, 0.0)
            qg[g.id] = share_q
    return PowerFlowResult(converged, vm_d, va_d, {k: float(u[i]) for k, i in didx.items()},
                           pg, qg, dict(pac), dict(qac), pdc, history, iters, message)


# ---------------------------------------------------------------------------
# the check
# ---------------------------------------------------------------------------

@dataclass
class FeasibilityReport:
    status: str
    ac_feasible: bool
    lower_objective: bool | None
    objective: float
    baseline: float
    benefit_pct: float | None
    residuals: dict
    tol: float
    time: float
    pf_converged: bool | None = None
    pf_mismatch: float | None = None
    pf_iterations: int = 0
    message: str = ""
    topology: dict = field(default_factory=dict)
    # full operating point on the original network (not serialized)
    state: dict = field(default_factory=dict, repr=False)

    def to_dict(self, timing: bool = False) -> dict:
        def num(v):
            return None if v is None or not math.isfinite(v) else v

        d = {
            "status": self.status,
            "ac_feasible": self.ac_feasible,
            "lower_objective": self.lower_objective,
            "objective": num(self.objective),
            "baseline": num(self.baseline),
            "benefit_pct": num(self.benefit_pct) if self.benefit_pct is not None else None,
            "residuals": dict(sorted(self.residuals.items())),
            "tol": self.tol,
            "power_flow": {"converged": self.pf_converged, "mismatch": num(self.pf_mismatch)
                           if self.pf_mismatch is not None else None, "iterations": self.pf_iterations},
            "message": self.message,
            "topology": dict(sorted(self.topology.items())),
        }
        if timing:
            d["time_s"] = self.time
        return d

    def to_json(self, timing: bool = False) -> str:
        return json.dumps(self.to_dict(timing), indent=1)

    def to_table(self, label: str = "") -> str:
        """Two-line text table: check time, verdicts, recomputed cost, benefit."""
        head = ("Model", "Check [s]", "AC feasible?", "LO?", "Objective", "Benefit [%]")
        yn = {True: "yes", False: "no", None: "-"}
        obj = f"{self.objective:.3f}" if math.isfinite(self.objective) else "-"
        ben = f"{self.benefit_pct:.2f}" if self.benefit_pct is not None else "-"
        row = (label or "-", f"{self.time:.3f}", yn[self.ac_feasible], yn[self.lower_objective], obj, ben)
        return "\n".join("  ".join(f"{c:>12}" for c in line) for line in (head, row)) + "\n"

    def verdict_line(self) -> str:
        if self.status == STATUS_TOPOLOGY:
            return f"infeasible-topology: {self.message}"
        if not self.ac_feasible:
            return f"not AC-feasible ({self.status}): {self.message}".rstrip(": ")
        lo = "lower" if self.lower_objective else "not lower"
        return (f"AC-feasible, objective {self.objective:.3f} $/h ({lo} than baseline "
                f"{self.baseline:.3f}), benefit {self.benefit_pct:.2f}%")


def _map_back(net: Network, red: Reduction, x: dict, topo: dict) -> dict:
    """Assignment on the original network from a reduced-network solution."""
    view = expand(with_flags(net), ots=False)
    a: dict[str, float] = {}
    for n in view.nodes:
        if n.key.startswith("cv"):
            cid = n.key[2:].split(".")[0]
            live = f"c{cid}" not in red.off
            src = n.key
        else:
            b = int(n.key)
            live = b not in red.dead_ac
            src = str(red.ac_rep[b])
        a[f"vm[{n.key}]"] = x.get(f"vm[{src}]", 1.0) if live else 1.0
        a[f"va[{n.key}]"] = x.get(f"va[{src}]", 0.0) if live else 0.0
    for d in net.dc_buses:
        live = d.id not in red.dead_dc
        a[f"u[{d.id}]"] = x[f"u[{red.dc_rep[d.id]}]"] if live else 1.0
    for g in net.generators:
        a[f"pg[{g.id}]"] = x[f"pg[{g.id}]"]
        a[f"qg[{g.id}]"] = x[f"qg[{g.id}]"]
    for c in net.converters:
        for v in ("pac", "qac", "pdc", "i"):
            a[f"{v}[c{c.id}]"] = 0.0 if f"c{c.id}" in red.off else x[f"{v}[c{c.id}]"]
    if net.switches:
        _switch_flows(net, view, a, topo, red)
    return a


def _switch_flows(net, view, a, topo, red):
    """Switch flows that close the nodal balances (least squares on the
    incidence matrix of the closed switches)."""
    on = lambda key: topo.get(key, 1) == 1 and key not in red.off  # noqa: E731
    bp = {n.key: 0.0 for n in view.nodes}
    bq = dict(bp)
    bd = {str(d.id): 0.0 for d in net.dc_buses}
    for n in view.nodes:
        live = int(on(_owner(n.key))) if _owner(n.key) else 1
        bp[n.key] -= live * n.gs * a[f"vm[{n.key}]"] ** 2
        bq[n.key] += live * n.bs * a[f"vm[{n.key}]"] ** 2
    for d in view.dc_nodes:
        bd[str(d.id)] -= d.gs * a[f"u[{d.id}]"] ** 2
    for g in view.gens:
        bp[str(g.bus)] += a[f"pg[{g.id}]"]
        bq[str(g.bus)] += a[f"qg[{g.id}]"]
    for ld in view.loads:
        if ld.side == AC:
            bp[str(ld.bus)] -= ld.p
            bq[str(ld.bus)] -= ld.q
        else:
            bd[str(ld.bus)] -= ld.p
    for ln in view.lines:
        z = int(on(ln.owner or ln.key))
        f = ac_flow_exact(ln, a[f"vm[{ln.f}]"], a[f"vm[{ln.t}]"], a[f"va[{ln.f}]"], a[f"va[{ln.t}]"], z)
        bp[ln.f] -= f[0]
        bq[ln.f] -= f[1]
        bp[ln.t] -= f[2]
        bq[ln.t] -= f[3]
    for dl in view.dc_lines:
        z = int(on(dl.key))
        bd[dl.f] -= dc_flow(dl, a[f"u[{dl.f}]"], a[f"u[{dl.t}]"], z)
        bd[dl.t] -= dc_flow(dl, a[f"u[{dl.t}]"], a[f"u[{dl.f}]"], z)
    for cv in view.convs:
        bp[cv.ac_node] -= a[f"pac[{cv.key}]"]
        bq[cv.ac_node] -= a[f"qac[{cv.key}]"]
        bd[cv.dc_node] -= a[f"pdc[{cv.key}]"]
    for side, tables in ((AC, (bp, bq)), ("dc", (bd,))):
        sws = [s for s in net.switches if s.side == side]
        closed = [s for s in sws if on(f"s{s.id}")]
        for s in sws:
            a[f"psw[{s.id}]"] = 0.0
            if side == AC:
                a[f"qsw[{s.id}]"] = 0.0
        if not closed:
            continue
        buses = sorted({s.f_bus for s in closed} | {s.t_bus for s in closed})
        row = {b: i for i, b in enumerate(buses)}
        B = np.zeros((len(buses), len(closed)))
        for j, s in enumerate(closed):
            B[row[s.f_bus], j] = 1.0
            B[row[s.t_bus], j] = -1.0
        for t, name in zip(tables, ("psw", "qsw")):
            r = np.array([t[str(b)] for b in buses])
            flows = np.linalg.lstsq(B, r, rcond=None)[0]
            for j, s in enumerate(closed):
                a[f"{name}[{s.id}]"] = float(flows[j])


def fix_and_check(net, topology, baseline: float, tol: float = 1e-6, opts=None) -> FeasibilityReport:
    """AC-feasibility check of ``topology`` on ``net`` against ``baseline`` $/h."""
    from .formulation import ProblemSpec, build_model
    from .solver import SolverOptions, solve_continuous

    t0 = time.perf_counter()
    if not tol > 0:
        raise ValueError("tolerance must be positive")
    if isinstance(net, AugmentedNetwork):
        net = net.network
    topo = normalize_topology(net, topology)

    def report(status, **kw):
        base = dict(status=status, ac_feasible=False, lower_objective=None, objective=math.nan,
                    baseline=baseline, benefit_pct=None, residuals={}, tol=tol,
                    time=time.perf_counter() - t0, topology=topo)
        base.update(kw)
        return FeasibilityReport(**base)

    red = apply_topology(net, topo)
    if red.network is None:
        return report(STATUS_TOPOLOGY, message=red.message)
    opts = opts or SolverOptions()
    model = build_model(red.network, ProblemSpec(kind="opf", formulation="exact"))
    res = solve_continuous(model, opts=opts)
    if res.status != "optimal":
        return report(STATUS_INFEASIBLE, message=f"fixed-topology OPF: {res.status} ({res.message})")
    x = res.assignment
    full = _map_back(net, red, x, topo)
    audit_topo = dict(topo)
    for k in red.off:
        audit_topo[k] = 0
    residuals = residual_audit(net, full, tol, audit_topo, (red.dead_ac, red.dead_dc))

    # power flow at the optimized set-points
    rnet = red.network
    rview = expand(rnet, ots=False)
    disp = Dispatch(
        pg={g.id: x[f"pg[{g.id}]"] for g in rnet.generators},
        vset={str(g.bus): x[f"vm[{g.bus}]"] for g in rnet.generators}
        | {n.key: x[f"vm[{n.key}]"] for n in rview.nodes if n.ref},
        conv={c.id: (x[f"pac[c{c.id}]"], x[f"qac[c{c.id}]"]) for c in rnet.converters},
        udc={c.dc_bus: x[f"u[{c.dc_bus}]"] for c in rnet.converters if c.dc_slack},
    )
    try:
        pf = newton_acdc_power_flow(rnet, disp, tol=min(tol, 1e-8))
        pf_ok, pf_mis, pf_it, pf_msg = pf.converged, pf.final_mismatch, pf.iterations, pf.message
    except PowerFlowError as exc:
        pf_ok, pf_mis, pf_it, pf_msg = False, None, 0, str(exc)
    worst = max(residuals.values(), default=0.0)
    feasible = worst <= tol and pf_ok
    status = STATUS_FEASIBLE if feasible else (STATUS_NONCONVERGENT if not pf_ok else STATUS_INFEASIBLE)
    obj = res.objective
    # differences inside the optimality gap are not an improvement
    margin = max(opts.gap_abs, opts.gap_rel * abs(baseline))
    lower = bool(obj < baseline - margin) if feasible else None
    benefit = (baseline - obj) / baseline * 100 if feasible else None
    notes = [m for m in (red.message, pf_msg, "" if worst <= tol else f"max residual {worst:.2e}") if m]
    return report(status, ac_feasible=feasible, lower_objective=lower, objective=obj,
                  benefit_pct=benefit, residuals=residuals, pf_converged=pf_ok, pf_mismatch=pf_mis,
                  pf_iterations=pf_it, message="; ".join(notes), state=full)
