"""Case readers and writers.

Two formats are supported: MATPOWER-style text extended with the MatACDC
DC tables (``busdc``, ``branchdc``, ``convdc``) and the native JSON schema
described in FORMATS.md.  Both produce a per-unit :class:`RawCase`.
"""
from __future__ import annotations

import dataclasses
import json
import math
import re
import typing
from pathlib import Path

from .network import (
    AC,
    DC,
    AcBranch,
    AcBus,
    Converter,
    DcBranch,
    DcBus,
    Generator,
    Load,
    Network,
    RawCase,
    Switch,
    validate,
)

SCHEMA_VERSION = 1


class CaseFormatError(ValueError):
    """Syntax or schema problem in a case file."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None,
                 pointer: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        if pointer is not None:
            where.append(f"at {pointer or '/'}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.line = line
        self.column = column
        self.pointer = pointer


# ---------------------------------------------------------------------------
# MATPOWER-style text
# ---------------------------------------------------------------------------

# allowed row widths per matrix section; gencost is checked per row
_WIDTHS = {
    "bus": (13, 17),
    "gen": (10, 21, 25),
    "branch": (11, 13, 17, 21),
    "busdc": (9,),
    "branchdc": (9,),
    "convdc": (34,),
    "gencost": None,
    "areas": (2,),
}
_SCALARS = {"version", "baseMVA", "dcpol"}

_ASSIGN = re.compile(r"^\s*mpc\.(\w+)\s*=\s*(.*)$")


def _strip_comment(line: str) -> str:
    out, quoted = [], False
    for ch in line:
        if ch == "'":
            quoted = not quoted
        elif ch == "%" and not quoted:
            break
        out.append(ch)
    return "".join(out)


def _number(tok: str, lineno: int, col: int) -> float:
    try:
        return float(tok)
    except ValueError:
        raise CaseFormatError(f"invalid number {tok!r}", lineno, col) from None


def _split_row(body: str, lineno: int, offset: int) -> list[float]:
    vals = []
    for m in re.finditer(r"[^\s,;]+", body):
        vals.append(_number(m.group(0), lineno, offset + m.start() + 1))
    return vals


def _tokenize(text: str) -> tuple[dict[str, object], dict[str, int]]:
    """Return ``{section: scalar | list[row]}`` and the line of each section."""
    sections: dict[str, object] = {}
    where: dict[str, int] = {}
    current: str | None = None
    rows: list[list[float]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line.strip():
            continue
        if current is not None:
            close = line.find("]")
            body = line if close < 0 else line[:close]
            for part in body.split(";"):
                if part.strip():
                    offset = line.find(part)
                    rows.append(_split_row(part, lineno, max(offset, 0)))
            if close >= 0:
                sections[current] = rows
                current, rows = None, []
            continue
        stripped = line.strip()
        if stripped.startswith("function") or stripped.startswith("end"):
            continue
        m = _ASSIGN.match(line)
        if not m:
            col = len(line) - len(line.lstrip()) + 1
            raise CaseFormatError(f"syntax error: unexpected {stripped[:20]!r}", lineno, col)
        name, value = m.group(1), m.group(2).strip()
        if name not in _SCALARS and name not in _WIDTHS:
            raise CaseFormatError(f"unknown section name {name!r}", lineno, m.start(1) + 1)
        if name in sections:
            raise CaseFormatError(f"section {name!r} defined twice", lineno, m.start(1) + 1)
        where[name] = lineno
        if value.startswith("["):
            if name in _SCALARS:
                raise CaseFormatError(f"section {name!r} must be a scalar", lineno, m.start(2) + 1)
            current = name
            rest = value[1:]
            close = rest.find("]")
            body = rest if close < 0 else rest[:close]
            for part in body.split(";"):
                if part.strip():
                    rows.append(_split_row(part, lineno, m.start(2) + 1))
            if close >= 0:
                sections[current] = rows
                current, rows = None, []
        else:
            if not value.endswith(";"):
                raise CaseFormatError("syntax error: missing ';'", lineno, len(line.rstrip()) + 1)
            value = value[:-1].strip()
            if name == "version":
                sections[name] = value.strip("'")
            else:
                sections[name] = _number(value, lineno, m.start(2) + 1)
    if current is not None:
        raise CaseFormatError(f"unterminated matrix for section {current!r}", where[current], 1)
    for name, rows in sections.items():
        if name in _SCALARS:
            continue
        allowed = _WIDTHS[name]
        if allowed is None or not rows:
            continue
        width = len(rows[0])
        for k, row in enumerate(rows):
            if len(row) != width or width not in allowed:
                raise CaseFormatError(
                    f"row width mismatch in section {name!r}: row {k + 1} has {len(row)} "
                    f"columns, expected one of {allowed}", where[name], 1)
    return sections, where


def parse_matpower_acdc(text: str, name: str = "") -> RawCase:
    """Parse a MATPOWER/MatACDC case file into per-unit records.

    Out-of-service rows are dropped; element ids are 1-based row positions
    so they stay stable whether or not earlier rows were dropped.
    """
    sec, where = _tokenize(text)
    if "baseMVA" not in sec:
        raise CaseFormatError("missing baseMVA", 1, 1)
    base = float(sec["baseMVA"])
    raw = RawCase(base_mva=base, name=name)
    bus_ids: set[int] = set()
    load_id = 0
    for row in sec.get("bus", []):
        bid = int(row[0])
        if bid in bus_ids:
            raise CaseFormatError(f"duplicate bus id {bid}", where["bus"], 1)
        bus_ids.add(bid)
        raw.ac_buses.append(AcBus(
            id=bid, vmin=row[12], vmax=row[11], gs=row[4] / base, bs=row[5] / base,
            ref=int(row[1]) == 3))
        if row[2] or row[3]:
            load_id += 1
            raw.loads.append(Load(load_id, bid, AC, row[2] / base, row[3] / base))

    gencost = sec.get("gencost", [])
    gens = sec.get("gen", [])
    if gens and len(gencost) < len(gens):
        raise CaseFormatError("gencost has fewer rows than gen", where.get("gencost", where["gen"]), 1)
    for k, row in enumerate(gens):
        cost = gencost[k]
        if int(cost[0]) != 2:
            raise CaseFormatError("only polynomial (model 2) costs are supported", where["gencost"], 1)
        n = int(cost[3])
        coeffs = cost[4:4 + n]
        if len(coeffs) != n:
            raise CaseFormatError(f"gencost row {k + 1} declares {n} coefficients", where["gencost"], 1)
        coeffs = [0.0] * (3 - n) + list(coeffs) if n <= 3 else coeffs
        if n > 3 or coeffs[0] != 0:
            raise CaseFormatError("generator costs must be affine in P", where["gencost"], 1)
        if row[7] <= 0:
            continue
        raw.generators.append(Generator(
            id=k + 1, bus=int(row[0]), c1=coeffs[1] * base, c0=coeffs[2],
            pmin=row[9] / base, pmax=row[8] / base, qmin=row[4] / base, qmax=row[3] / base))

    for k, row in enumerate(sec.get("branch", [])):
        if row[10] <= 0:
            continue
        y = 1 / complex(row[2], row[3])
        angmin, angmax = -math.pi / 3, math.pi / 3
        if len(row) >= 13 and not (row[11] == 0 and row[12] == 0):
            angmin = max(math.radians(row[11]), -math.pi / 2)
            angmax = min(math.radians(row[12]), math.pi / 2)
        raw.ac_branches.append(AcBranch(
            id=k + 1, f_bus=int(row[0]), t_bus=int(row[1]), g=y.real, b=y.imag, bc=row[4],
            tap=row[8] if row[8] else 1.0, shift=math.radians(row[9]),
            rate=row[5] / base if row[5] > 0 else math.inf, angmin=angmin, angmax=angmax))

    dc_ids: set[int] = set()
    dc_load_id = load_id
    for row in sec.get("busdc", []):
        bid = int(row[0])
        if bid in dc_ids:
            raise CaseFormatError(f"duplicate DC bus id {bid}", where["busdc"], 1)
        dc_ids.add(bid)
        raw.dc_buses.append(DcBus(id=bid, vmin=row[7], vmax=row[6]))
        if row[3]:
            dc_load_id += 1
            raw.loads.append(Load(dc_load_id, bid, DC, row[3] / base))

    poles = int(sec.get("dcpol", 2))
    for k, row in enumerate(sec.get("branchdc", [])):
        if row[8] <= 0:
            continue
        rate = row[5] / base if row[5] > 0 else math.inf
        raw.dc_branches.append(DcBranch(
            id=k + 1, f_bus=int(row[0]), t_bus=int(row[1]), g=1.0 / row[2], poles=poles,
            pmin=-rate, pmax=rate))

    for k, row in enumerate(sec.get("convdc", [])):
        if row[21] <= 0:
            continue
        kv = row[17]
        zbase = kv * kv / base
        a = row[22] / base
        # single-phase-equivalent current base I = S / (sqrt(3) V)
        b = row[23] / (math.sqrt(3) * kv)
        c = row[25] / (3 * zbase)
        imax = row[20]
        pac = max(abs(row[30]), abs(row[31])) / base
        pdc = pac + a + b * imax + c * imax * imax
        tf = 1 / complex(row[8], row[9]) if row[10] else None
        pr = 1 / complex(row[14], row[15]) if row[16] else None
        raw.converters.append(Converter(
            id=k + 1, ac_bus=int(row[1]), dc_bus=int(row[0]), a=a, b=b, c=c,
            pac_min=row[31] / base, pac_max=row[30] / base,
            qac_min=row[33] / base, qac_max=row[32] / base,
            pdc_min=-pdc, pdc_max=pdc, imax=imax, vmin=row[19], vmax=row[18],
            smin=0.0, smax=imax * row[18],
            tf_g=tf.real if tf else None, tf_b=tf.imag if tf else None,
            tf_tap=row[11] if row[10] and row[11] else 1.0,
            filter_b=row[12] if row[13] and tf else None,
            pr_g=pr.real if pr else None, pr_b=pr.imag if pr else None,
            dc_slack=int(row[2]) == 2))
    return raw


# ---------------------------------------------------------------------------
# native JSON
# ---------------------------------------------------------------------------

_JSON_SECTIONS = (
    ("ac_buses", AcBus),
    ("dc_buses", DcBus),
    ("ac_branches", AcBranch),
    ("dc_branches", DcBranch),
    ("converters", Converter),
    ("generators", Generator),
    ("loads", Load),
    ("switches", Switch),
)


def _coerce(value, tp, pointer: str):
    origin = typing.get_origin(tp)
    if origin is typing.Union or (origin is not None and str(origin) == "<class 'types.UnionType'>"):
        args = typing.get_args(tp)
        if value is None and type(None) in args:
            return None
        (tp,) = [a for a in args if a is not type(None)]
    if tp is bool:
        if not isinstance(value, bool):
            raise CaseFormatError("expected boolean", pointer=pointer)
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise CaseFormatError("expected integer", pointer=pointer)
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise CaseFormatError("expected number", pointer=pointer)
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise CaseFormatError("expected string", pointer=pointer)
        return value
    raise TypeError(tp)  # pragma: no cover


def _record(cls, obj, pointer: str):
    if not isinstance(obj, dict):
        raise CaseFormatError("expected object", pointer=pointer)
    hints = typing.get_type_hints(cls)
    known = {f.name for f in dataclasses.fields(cls)}
    for key in obj:
        if key not in known:
            raise CaseFormatError(f"unknown key {key!r}", pointer=f"{pointer}/{key}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in obj:
            if f.default is dataclasses.MISSING:
                raise CaseFormatError(f"missing required key {f.name!r}", pointer=pointer)
            continue
        kwargs[f.name] = _coerce(obj[f.name], hints[f.name], f"{pointer}/{f.name}")
    return cls(**kwargs)


def load_json_document(text: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseFormatError(f"invalid JSON: {exc.msg}", exc.lineno, exc.colno) from None
    if not isinstance(doc, dict):
        raise CaseFormatError("top level must be an object", pointer="")
    return doc


def parse_json_case(text: str) -> RawCase:
    doc = load_json_document(text)
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise CaseFormatError(f"unsupported schema_version {version!r}", pointer="/schema_version")
    if "baseMVA" in doc and "base_mva" not in doc:
        raise CaseFormatError("missing required key 'base_mva' (found 'baseMVA')", pointer="")
    if "base_mva" not in doc:
        raise CaseFormatError("missing required key 'base_mva'", pointer="")
    base = _coerce(doc["base_mva"], float, "/base_mva")
    name = _coerce(doc.get("name", ""), str, "/name")
    raw = RawCase(base_mva=base, name=name)
    for key, cls in _JSON_SECTIONS:
        items = doc.get(key, [])
        if not isinstance(items, list):
            raise CaseFormatError("expected array", pointer=f"/{key}")
        setattr(raw, key, [_record(cls, it, f"/{key}/{k}") for k, it in enumerate(items)])
    return raw


def _encode(item) -> dict:
    return {f.name: getattr(item, f.name) for f in dataclasses.fields(item)}


def write_json_case(net: Network, split_plan: dict | None = None, indent: int | None = 1) -> str:
    """Serialize ``net`` in the native schema.

    Floats go out in shortest round-trip form so parsing the document back
    reproduces every value bit for bit.  Empty collections are kept.
    """
    doc: dict = {"schema_version": SCHEMA_VERSION, "name": net.name, "base_mva": net.base_mva}
    for key, _ in _JSON_SECTIONS:
        doc[key] = [_encode(it) for it in getattr(net, key)]
    if split_plan is not None:
        doc["split_plan"] = split_plan
    return json.dumps(doc, indent=indent)


def read_case(path: str | Path) -> Network:
    """Read and validate a case; the format is picked from the extension."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        raw = parse_json_case(text)
    else:
        raw = parse_matpower_acdc(text, name=path.stem)
    return validate(raw)


def bundled_case(name: str) -> Path:
    """Path of a case file shipped with the package (e.g. ``case5_acdc.m``)."""
    return Path(__file__).parent / "data" / name
