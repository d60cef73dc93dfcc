"""Per-unit domain model of a hybrid AC/DC grid.

All element records are frozen dataclasses.  A :class:`RawCase` is what the
parsers produce; :func:`validate` turns it into a :class:`Network` after
checking cross references, bound consistency and reference-bus placement.

Converter stations keep their transformer / filter / phase reactor as
optional parameters.  :func:`expand` produces the electrical view used by
the formulations and the power-flow checker, in which those parts become
internal AC nodes and lines owned by the converter.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from functools import cached_property
from typing import Iterable, Mapping

AC = "ac"
DC = "dc"

SWITCH_KINDS = ("ac_switch", "ac_zil", "dc_switch", "dc_zil")


class ValidationError(ValueError):
    """Raised when a case violates a structural or bound invariant."""


@dataclass(frozen=True)
class AcBus:
    id: int
    vmin: float
    vmax: float
    vamin: float = -math.pi
    vamax: float = math.pi
    gs: float = 0.0
    bs: float = 0.0
    ref: bool = False


@dataclass(frozen=True)
class DcBus:
    id: int
    vmin: float
    vmax: float
    gs: float = 0.0


@dataclass(frozen=True)
class AcBranch:
    """pi-model branch; ``g + jb`` is the series admittance, ``bc`` the total
    charging susceptance (half at each end)."""

    id: int
    f_bus: int
    t_bus: int
    g: float
    b: float
    bc: float = 0.0
    tap: float = 1.0
    shift: float = 0.0
    rate: float = 1.0
    angmin: float = -math.pi / 3
    angmax: float = math.pi / 3
    switchable: bool = False


@dataclass(frozen=True)
class DcBranch:
    id: int
    f_bus: int
    t_bus: int
    g: float
    poles: int = 1
    pmin: float = -1.0
    pmax: float = 1.0
    switchable: bool = False


@dataclass(frozen=True)
class Converter:
    """VSC station between AC bus ``ac_bus`` and DC bus ``dc_bus``.

    Losses are ``a + b*I + c*I**2`` with ``I`` the AC-side current magnitude.
    ``tf_*``, ``filter_b`` and ``pr_*`` are ``None`` when the station has no
    transformer, filter or phase reactor respectively.
    """

    id: int
    ac_bus: int
    dc_bus: int
    a: float
    b: float
    c: float
    pac_min: float
    pac_max: float
    qac_min: float
    qac_max: float
    pdc_min: float
    pdc_max: float
    imax: float
    vmin: float = 0.9
    vmax: float = 1.1
    smin: float = 0.0
    smax: float = math.inf
    tf_g: float | None = None
    tf_b: float | None = None
    tf_tap: float = 1.0
    filter_b: float | None = None
    pr_g: float | None = None
    pr_b: float | None = None
    dc_slack: bool = False
    switchable: bool = False

    @property
    def has_transformer(self) -> bool:
        return self.tf_g is not None and self.tf_b is not None

    @property
    def has_reactor(self) -> bool:
        return self.pr_g is not None and self.pr_b is not None


@dataclass(frozen=True)
class Generator:
    """AC generator with affine cost ``c1 * pg + c0`` ($/h, pg in p.u.)."""

    id: int
    bus: int
    c1: float
    c0: float
    pmin: float
    pmax: float
    qmin: float
    qmax: float


@dataclass(frozen=True)
class Load:
    id: int
    bus: int
    side: str
    p: float
    q: float = 0.0


@dataclass(frozen=True)
class Switch:
    """Lossless switch or zero-impedance line between two buses of one side.

    ``busbar`` names the original busbar a split created the switch for and
    ``element`` the detached element it serves (``None`` for a ZIL).
    """

    id: int
    kind: str
    f_bus: int
    t_bus: int
    rating: float
    pmin: float
    pmax: float
    qmin: float = 0.0
    qmax: float = 0.0
    partner: int | None = None
    busbar: int | None = None
    element: str | None = None

    @property
    def side(self) -> str:
        return AC if self.kind.startswith("ac") else DC

    @property
    def is_zil(self) -> bool:
        return self.kind.endswith("zil")


_COLLECTIONS = (
    ("ac_buses", AcBus),
    ("dc_buses", DcBus),
    ("ac_branches", AcBranch),
    ("dc_branches", DcBranch),
    ("converters", Converter),
    ("generators", Generator),
    ("loads", Load),
    ("switches", Switch),
)


@dataclass
class RawCase:
    """Unvalidated, per-unit case contents as produced by a parser."""

    base_mva: float
    name: str = ""
    ac_buses: list = field(default_factory=list)
    dc_buses: list = field(default_factory=list)
    ac_branches: list = field(default_factory=list)
    dc_branches: list = field(default_factory=list)
    converters: list = field(default_factory=list)
    generators: list = field(default_factory=list)
    loads: list = field(default_factory=list)
    switches: list = field(default_factory=list)


@dataclass(frozen=True)
class Network:
    base_mva: float
    name: str
    ac_buses: tuple[AcBus, ...] = ()
    dc_buses: tuple[DcBus, ...] = ()
    ac_branches: tuple[AcBranch, ...] = ()
    dc_branches: tuple[DcBranch, ...] = ()
    converters: tuple[Converter, ...] = ()
    generators: tuple[Generator, ...] = ()
    loads: tuple[Load, ...] = ()
    switches: tuple[Switch, ...] = ()

    # id lookups; cached_property writes through __dict__ so frozen is fine
    @cached_property
    def ac_bus(self) -> dict[int, AcBus]:
        return {b.id: b for b in self.ac_buses}

    @cached_property
    def dc_bus(self) -> dict[int, DcBus]:
        return {b.id: b for b in self.dc_buses}

    @cached_property
    def ac_branch(self) -> dict[int, AcBranch]:
        return {b.id: b for b in self.ac_branches}

    @cached_property
    def dc_branch(self) -> dict[int, DcBranch]:
        return {b.id: b for b in self.dc_branches}

    @cached_property
    def converter(self) -> dict[int, Converter]:
        return {c.id: c for c in self.converters}

    @cached_property
    def generator(self) -> dict[int, Generator]:
        return {g.id: g for g in self.generators}

    @cached_property
    def switch(self) -> dict[int, Switch]:
        return {s.id: s for s in self.switches}

    def to_raw(self) -> RawCase:
        return RawCase(
            base_mva=self.base_mva,
            name=self.name,
            **{name: list(getattr(self, name)) for name, _ in _COLLECTIONS},
        )

    def reverse_ac(self) -> list[tuple[int, int, int]]:
        """Reverse AC topology: (l, j, i) for every branch (l, i, j)."""
        return [(br.id, br.t_bus, br.f_bus) for br in self.ac_branches]

    def reverse_dc(self) -> list[tuple[int, int, int]]:
        return [(br.id, br.t_bus, br.f_bus) for br in self.dc_branches]

    def counts(self) -> dict[str, int]:
        return {name: len(getattr(self, name)) for name, _ in _COLLECTIONS}


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def _unique(items, what: str) -> None:
    seen = set()
    for it in items:
        if it.id in seen:
            raise ValidationError(f"duplicate {what} id {it.id}")
        seen.add(it.id)


def _bounds(lo: float, hi: float, what: str) -> None:
    if lo > hi:
        raise ValidationError(f"bound inversion on {what}: {lo} > {hi}")


def validate(raw: RawCase | Network) -> Network:
    """Check every invariant of ``raw`` and return the frozen Network.

    Validating a Network returns an equal Network.
    """
    if raw.base_mva is None or not raw.base_mva > 0:
        raise ValidationError("base power must be positive")
    parts = {name: tuple(getattr(raw, name)) for name, _ in _COLLECTIONS}
    for name, cls in _COLLECTIONS:
        for item in parts[name]:
            if not isinstance(item, cls):
                raise ValidationError(f"{name} holds a {type(item).__name__}, expected {cls.__name__}")
        _unique(parts[name], name[:-1].replace("_", " "))

    ac_ids = {b.id for b in parts["ac_buses"]}
    dc_ids = {b.id for b in parts["dc_buses"]}

    for b in parts["ac_buses"]:
        if not b.vmin > 0:
            raise ValidationError(f"AC bus {b.id}: voltage lower bound must be positive")
        _bounds(b.vmin, b.vmax, f"AC bus {b.id} voltage")
        _bounds(b.vamin, b.vamax, f"AC bus {b.id} angle")
    for b in parts["dc_buses"]:
        if not b.vmin > 0:
            raise ValidationError(f"DC bus {b.id}: voltage lower bound must be positive")
        _bounds(b.vmin, b.vmax, f"DC bus {b.id} voltage")

    def need(bus, ids, what):
        if bus not in ids:
            raise ValidationError(f"dangling reference: {what} refers to missing bus {bus}")

    for br in parts["ac_branches"]:
        need(br.f_bus, ac_ids, f"AC branch {br.id}")
        need(br.t_bus, ac_ids, f"AC branch {br.id}")
        if not br.rate > 0:
            raise ValidationError(f"AC branch {br.id}: rating must be positive")
        if not br.tap > 0:
            raise ValidationError(f"AC branch {br.id}: tap magnitude must be positive")
        _bounds(br.angmin, br.angmax, f"AC branch {br.id} angle difference")
    for br in parts["dc_branches"]:
        need(br.f_bus, dc_ids, f"DC branch {br.id}")
        need(br.t_bus, dc_ids, f"DC branch {br.id}")
        if not br.g > 0:
            raise ValidationError(f"DC branch {br.id}: conductance must be positive")
        if br.poles not in (1, 2):
            raise ValidationError(f"DC branch {br.id}: pole count must be 1 or 2")
        _bounds(br.pmin, br.pmax, f"DC branch {br.id} power")
    for cv in parts["converters"]:
        if cv.ac_bus not in ac_ids or cv.dc_bus not in dc_ids:
            if cv.ac_bus in dc_ids and cv.ac_bus not in ac_ids or cv.dc_bus in ac_ids and cv.dc_bus not in dc_ids:
                raise ValidationError(f"converter {cv.id} bridges two buses of the same kind")
            need(cv.ac_bus, ac_ids, f"converter {cv.id}")
            need(cv.dc_bus, dc_ids, f"converter {cv.id}")
        if cv.a < 0 or cv.c < 0:
            raise ValidationError(f"converter {cv.id}: loss coefficients a, c must be non-negative")
        _bounds(cv.pac_min, cv.pac_max, f"converter {cv.id} AC power")
        _bounds(cv.qac_min, cv.qac_max, f"converter {cv.id} reactive power")
        _bounds(cv.pdc_min, cv.pdc_max, f"converter {cv.id} DC power")
        _bounds(cv.vmin, cv.vmax, f"converter {cv.id} voltage")
        if not (cv.smax >= cv.smin >= 0):
            raise ValidationError(f"converter {cv.id}: apparent-power bounds inconsistent")
        if not cv.imax > 0:
            raise ValidationError(f"converter {cv.id}: current bound must be positive")
    for g in parts["generators"]:
        need(g.bus, ac_ids, f"generator {g.id}")
        _bounds(g.pmin, g.pmax, f"generator {g.id} active power")
        _bounds(g.qmin, g.qmax, f"generator {g.id} reactive power")
    for ld in parts["loads"]:
        if ld.side not in (AC, DC):
            raise ValidationError(f"load {ld.id}: side must be 'ac' or 'dc'")
        need(ld.bus, ac_ids if ld.side == AC else dc_ids, f"load {ld.id}")
    sw_by_id = {s.id: s for s in parts["switches"]}
    for s in parts["switches"]:
        if s.kind not in SWITCH_KINDS:
            raise ValidationError(f"switch {s.id}: unknown kind {s.kind!r}")
        ids = ac_ids if s.side == AC else dc_ids
        need(s.f_bus, ids, f"switch {s.id}")
        need(s.t_bus, ids, f"switch {s.id}")
        _bounds(s.pmin, s.pmax, f"switch {s.id} active power")
        _bounds(s.qmin, s.qmax, f"switch {s.id} reactive power")
        if s.partner is not None:
            other = sw_by_id.get(s.partner)
            if other is None or other.partner != s.id:
                raise ValidationError(f"switch {s.id}: exclusivity partnership is not symmetric")

    net = Network(base_mva=raw.base_mva, name=raw.name, **parts)
    ac_islands, _ = island_decomposition(net)
    refs = {b.id for b in net.ac_buses if b.ref}
    for isl in ac_islands:
        n = len(refs.intersection(isl))
        if n == 0:
            raise ValidationError(f"no reference bus in AC island containing bus {isl[0]}")
        if n > 1:
            raise ValidationError(f"AC island containing bus {isl[0]} has {n} reference buses")
    return net


# ---------------------------------------------------------------------------
# topology
# ---------------------------------------------------------------------------

Topology = Mapping[tuple[str, int], int]


def _components(nodes: Iterable[int], edges: Iterable[tuple[int, int]]) -> list[tuple[int, ...]]:
    parent = {n: n for n in nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    groups: dict[int, list[int]] = {}
    for n in parent:
        groups.setdefault(find(n), []).append(n)
    return sorted((tuple(sorted(g)) for g in groups.values()), key=lambda g: g[0])


def island_decomposition(net: Network, topology: Topology | None = None):
    """Partition AC and DC buses into connected components.

    ``topology`` maps ``(kind, id)`` with kind in ``ac_branch``, ``dc_branch``
    or ``switch`` to 0 (open / out of service) or 1; missing keys count as
    closed.  Components are ordered by their smallest bus id.
    """
    topology = topology or {}

    def on(kind, i):
        return topology.get((kind, i), 1) >= 0.5

    ac_edges = [(b.f_bus, b.t_bus) for b in net.ac_branches if on("ac_branch", b.id)]
    dc_edges = [(b.f_bus, b.t_bus) for b in net.dc_branches if on("dc_branch", b.id)]
    for s in net.switches:
        if on("switch", s.id):
            (ac_edges if s.side == AC else dc_edges).append((s.f_bus, s.t_bus))
    return (
        _components([b.id for b in net.ac_buses], ac_edges),
        _components([b.id for b in net.dc_buses], dc_edges),
    )


def with_flags(net: Network, ac=(), dc=(), conv=()) -> Network:
    """Copy of ``net`` where exactly the listed ids are switchable."""
    ac, dc, conv = set(ac), set(dc), set(conv)
    return replace(
        net,
        ac_branches=tuple(replace(b, switchable=b.id in ac) for b in net.ac_branches),
        dc_branches=tuple(replace(b, switchable=b.id in dc) for b in net.dc_branches),
        converters=tuple(replace(c, switchable=c.id in conv) for c in net.converters),
    )


# ---------------------------------------------------------------------------
# electrical view with converter stations expanded
# ---------------------------------------------------------------------------

# flow bound for internal station lines, which carry no thermal rating
INTERNAL_FLOW_BOUND = 10.0


@dataclass(frozen=True)
class Node:
    key: str
    vmin: float
    vmax: float
    vamin: float
    vamax: float
    gs: float = 0.0
    bs: float = 0.0
    ref: bool = False
    gate: str | None = None   # binary key gating the shunt (converter filters)


@dataclass(frozen=True)
class Line:
    key: str
    f: str
    t: str
    g: float
    b: float
    bc: float
    tap: float
    shift: float
    rate: float | None
    angmin: float
    angmax: float
    gate: str | None = None   # binary key, None when always energized
    owner: str | None = None  # converter key for station-internal lines


@dataclass(frozen=True)
class DcLine:
    key: str
    f: str
    t: str
    g: float
    poles: int
    pmin: float
    pmax: float
    gate: str | None = None


@dataclass(frozen=True)
class ConvCore:
    key: str
    conv: Converter
    ac_node: str          # node where the converter core draws P_ac, Q_ac
    grid_node: str        # AC bus of the station's grid side
    dc_node: str
    gate: str | None = None


@dataclass(frozen=True)
class SwitchEdge:
    key: str
    sw: Switch
    f: str
    t: str
    gate: str


@dataclass
class ElectricalView:
    """Flat node/edge view consumed by the formulations and the checker."""

    network: Network
    nodes: list[Node]
    dc_nodes: list[DcBus]
    lines: list[Line]
    dc_lines: list[DcLine]
    convs: list[ConvCore]
    switches: list[SwitchEdge]
    gens: list[Generator]
    loads: list[Load]
    binaries: list[str]

    @cached_property
    def node(self) -> dict[str, Node]:
        return {n.key: n for n in self.nodes}


def node_key(bus_id: int) -> str:
    return str(bus_id)


def expand(net: Network, *, ots: bool = True, switches: bool = True) -> ElectricalView:
    """Build the electrical view of ``net``.

    With ``ots`` false the switchable flags are ignored (every element
    energized); with ``switches`` false the switch set is treated as absent
    of binaries, which is never wanted outside tests.
    """
    nodes = [
        Node(node_key(b.id), b.vmin, b.vmax, b.vamin, b.vamax, b.gs, b.bs, b.ref)
        for b in net.ac_buses
    ]
    lines: list[Line] = []
    binaries: list[str] = []
    for br in net.ac_branches:
        gate = f"l{br.id}" if ots and br.switchable else None
        if gate:
            binaries.append(gate)
        lines.append(Line(f"l{br.id}", node_key(br.f_bus), node_key(br.t_bus), br.g, br.b,
                          br.bc, br.tap, br.shift, br.rate, br.angmin, br.angmax, gate))
    dc_lines = []
    for br in net.dc_branches:
        gate = f"d{br.id}" if ots and br.switchable else None
        if gate:
            binaries.append(gate)
        dc_lines.append(DcLine(f"d{br.id}", node_key(br.f_bus), node_key(br.t_bus), br.g,
                               br.poles, br.pmin, br.pmax, gate))
    convs = []
    for cv in net.converters:
        key = f"c{cv.id}"
        gate = key if ots and cv.switchable else None
        if gate:
            binaries.append(gate)
        grid = node_key(cv.ac_bus)
        here = grid
        window = math.pi / 3
        if cv.has_transformer:
            f = f"cv{cv.id}.f"
            nodes.append(Node(f, cv.vmin, cv.vmax, -math.pi, math.pi,
                              bs=cv.filter_b or 0.0, gate=gate))
            y = complex(cv.tf_g, cv.tf_b)
            lines.append(Line(f"cv{cv.id}.tf", here, f, y.real, y.imag, 0.0, cv.tf_tap, 0.0,
                              None, -window, window, gate, key))
            here = f
        elif cv.filter_b:
            raise ValidationError(f"converter {cv.id}: a filter requires a transformer")
        if cv.has_reactor:
            c = f"cv{cv.id}.c"
            nodes.append(Node(c, cv.vmin, cv.vmax, -math.pi, math.pi, gate=gate))
            lines.append(Line(f"cv{cv.id}.pr", here, c, cv.pr_g, cv.pr_b, 0.0, 1.0, 0.0,
                              None, -window, window, gate, key))
            here = c
        convs.append(ConvCore(key, cv, here, grid, node_key(cv.dc_bus), gate))
    sws = []
    if switches:
        for s in net.switches:
            gate = f"s{s.id}"
            binaries.append(gate)
            sws.append(SwitchEdge(gate, s, node_key(s.f_bus), node_key(s.t_bus), gate))
    return ElectricalView(net, nodes, list(net.dc_buses), lines, dc_lines, convs, sws,
                          list(net.generators), list(net.loads), binaries)


def field_names(cls) -> list[str]:
    return [f.name for f in fields(cls)]
