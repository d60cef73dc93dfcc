import json
import math
from pathlib import Path

import pytest

from gridtopo.augment import SplitPlan, split_busbars
from gridtopo.case_io import (CaseFormatError, bundled_case, parse_json_case, parse_matpower_acdc,
                              read_case, write_json_case)
from gridtopo.network import validate

DATA = Path(bundled_case("case5_acdc.m")).parent

MINIMAL = {
    "schema_version": 1,
    "name": "two-bus",
    "base_mva": 100.0,
    "ac_buses": [{"id": 1, "vmin": 0.9, "vmax": 1.1, "ref": True}, {"id": 2, "vmin": 0.9, "vmax": 1.1}],
    "ac_branches": [{"id": 1, "f_bus": 1, "t_bus": 2, "g": 4.0, "b": -10.0}],
    "generators": [{"id": 1, "bus": 1, "c1": 10.0, "c0": 0.0, "pmin": 0.0, "pmax": 2.0,
                    "qmin": -1.0, "qmax": 1.0}],
    "loads": [{"id": 1, "bus": 2, "side": "ac", "p": 0.5, "q": 0.1}],
}


def test_five_bus_counts():
    raw = parse_matpower_acdc(Path(bundled_case("case5_acdc.m")).read_text())
    counts = (len(raw.ac_buses), len(raw.dc_buses), len(raw.converters),
              len(raw.ac_branches), len(raw.dc_branches))
    assert counts == (5, 3, 3, 7, 3)


def test_matpower_per_unit_conversion():
    raw = parse_matpower_acdc(Path(bundled_case("case5_acdc.m")).read_text())
    load = {ld.bus: ld for ld in raw.loads if ld.side == "ac"}
    assert load[3].p == pytest.approx(0.45)
    br = raw.ac_branches[0]
    # y = 1/(0.02 + 0.06j)
    assert br.g == pytest.approx(0.02 / (0.02 ** 2 + 0.06 ** 2))
    assert br.b == pytest.approx(-0.06 / (0.02 ** 2 + 0.06 ** 2))
    assert raw.dc_branches[0].poles == 2
    assert raw.ac_branches[0].angmax == pytest.approx(math.pi / 3)


def test_no_dc_sections():
    text = Path(bundled_case("case5_acdc.m")).read_text()
    head = text.split("%% DC grid topology")[0]
    raw = parse_matpower_acdc(head)
    assert raw.dc_buses == [] and raw.dc_branches == [] and raw.converters == []
    assert len(raw.ac_buses) == 5


def test_minimal_json_document():
    raw = parse_json_case(json.dumps(MINIMAL))
    assert (len(raw.ac_buses), len(raw.ac_branches), len(raw.generators), len(raw.loads)) == (2, 1, 1, 1)
    net = validate(raw)
    assert net.ac_bus[1].ref


def test_missing_base_mva_is_schema_error():
    doc = dict(MINIMAL)
    doc["baseMVA"] = doc.pop("base_mva")
    with pytest.raises(CaseFormatError, match="base_mva"):
        parse_json_case(json.dumps(doc))


def test_unknown_key_reports_pointer():
    doc = json.loads(json.dumps(MINIMAL))
    doc["ac_buses"][1]["vmaxx"] = 1.0
    with pytest.raises(CaseFormatError) as err:
        parse_json_case(json.dumps(doc))
    assert "/ac_buses/1/vmaxx" in str(err.value)


def test_json_rendering_equals_matpower(case5):
    again = validate(parse_json_case(write_json_case(case5)))
    assert again == case5
    for section in ("ac_buses", "dc_buses", "ac_branches", "dc_branches", "converters", "generators", "loads"):
        for a, b in zip(getattr(case5, section), getattr(again, section)):
            assert a == b


def test_round_trip_keeps_empty_dc_arrays():
    net = validate(parse_json_case(json.dumps(MINIMAL)))
    doc = json.loads(write_json_case(net))
    for key in ("dc_buses", "dc_branches", "converters", "switches"):
        assert key in doc and doc[key] == []
    assert validate(parse_json_case(write_json_case(net))) == net


def test_round_trip_of_split_network(case5):
    aug = split_busbars(case5, SplitPlan(busbars=(("ac", 2),)))
    text = write_json_case(aug.network, split_plan=aug.plan.to_dict())
    doc = json.loads(text)
    kinds = {s["kind"] for s in doc["switches"]}
    assert {"ac_switch", "ac_zil"} <= kinds
    assert doc["split_plan"]["busbars"] == [{"side": "ac", "bus": 2}]
    assert validate(parse_json_case(text)) == aug.network


def test_validate_is_idempotent(case5):
    assert validate(case5) == case5


def test_shortest_float_repr(case5):
    text = write_json_case(case5)
    assert "0.30000000000000004" not in text
    for token in json.loads(text)["ac_branches"][0].values():
        if isinstance(token, float):
            assert float(repr(token)) == token


def test_every_bundled_case_parses():
    files = sorted(DATA.iterdir())
    assert files
    for f in files:
        net = read_case(f)
        assert net.ac_buses


def test_read_case_json_path(tmp_path, case5):
    p = tmp_path / "c.json"
    p.write_text(write_json_case(case5))
    assert read_case(p) == case5


def test_matpower_syntax_error_has_location():
    bad = "mpc.baseMVA = 100;\nmpc.bus = [\n 1 3 0 0 0 0 1 1 0 345 1 1.1 0.9;\n 2 x 0;\n];\n"
    with pytest.raises(CaseFormatError) as err:
        parse_matpower_acdc(bad)
    assert "4" in str(err.value)
