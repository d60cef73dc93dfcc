import json

import pytest

from gridtopo.cli import CSV_COLUMNS, main, read_comparison


def run(args, capsys):
    code = main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def bs_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("bs")
    code = main(["bs", "--case", "case5_acdc", "--split", "ac:2", "--formulation", "exact",
                 "--formulation", "soc", "--formulation", "lpac", "--out", str(out)])
    return code, out


def test_bs_three_formulations(bs_run):
    code, out = bs_run
    assert code == 0
    rows = read_comparison(out / "comparison.csv")
    assert [r["model"] for r in rows] == ["EXACT-BS", "SOC-BS", "LPAC-BS"]
    assert list(rows[0]) == list(CSV_COLUMNS)
    assert all(r["binaries"] == 15 for r in rows)
    for name in ("result.json", "metadata.json", "selection_lpac.json", "topology_lpac.json"):
        assert (out / name).is_file()


def test_csv_benefit_is_consistent(bs_run):
    _, out = bs_run
    for r in read_comparison(out / "comparison.csv"):
        if r["ac_feasible"]:
            expect = (r["opf_objective"] - r["check_objective"]) / r["opf_objective"] * 100
            assert r["benefit_pct"] == pytest.approx(expect, abs=1e-8)
        else:
            assert r["benefit_pct"] is None


def test_result_json_is_reproducible(bs_run, tmp_path):
    _, out = bs_run
    assert main(["bs", "--case", "case5_acdc", "--split", "ac:2", "--formulation", "exact",
                 "--formulation", "soc", "--formulation", "lpac", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "result.json").read_bytes() == (out / "result.json").read_bytes()
    assert "_s\"" not in (out / "result.json").read_text()
    assert "solve_exact_s" in (out / "metadata.json").read_text()


def test_optimized_topology_case_is_readable(bs_run):
    from gridtopo.case_io import read_case
    net = read_case(bs_run[1] / "topology_lpac.json")
    assert net.switches == ()


def test_check_saved_selection(bs_run, tmp_path, capsys):
    code, out, _ = run(["check", "--case", "case5_acdc", "--topology", str(bs_run[1] / "selection_lpac.json"),
                        "--baseline", "194.139", "--out", str(tmp_path)], capsys)
    assert code == 0
    assert out.startswith("AC-feasible")
    rep = json.loads((tmp_path / "check.json").read_text())
    assert rep["ac_feasible"] and rep["lower_objective"]


def test_check_all_ones_gives_zero_benefit(tmp_path, capsys):
    (tmp_path / "t.json").write_text("{}")
    code, out, _ = run(["check", "--case", "case5_acdc", "--topology", str(tmp_path / "t.json"),
                        "--out", str(tmp_path)], capsys)
    assert code == 0
    assert json.loads((tmp_path / "check.json").read_text())["benefit_pct"] == pytest.approx(0, abs=1e-6)


def test_check_islanding_exits_one(tmp_path, capsys):
    (tmp_path / "t.json").write_text(json.dumps({"l1": 0, "l2": 0}))
    code, out, _ = run(["check", "--case", "case3_acdc", "--topology", str(tmp_path / "t.json"),
                        "--baseline", "100", "--out", str(tmp_path)], capsys)
    assert code == 1
    assert out.startswith("infeasible-topology")


def test_ots_without_switchable_elements_equals_opf(tmp_path, capsys):
    assert main(["opf", "--case", "case5_acdc", "--out", str(tmp_path / "a")]) == 0
    assert main(["ots", "--case", "case5_acdc", "--switchable", "none", "--out", str(tmp_path / "b")]) == 0
    a = json.loads((tmp_path / "a" / "result.json").read_text())["runs"][0]["result"]
    b = json.loads((tmp_path / "b" / "result.json").read_text())["runs"][0]["result"]
    assert a["objective"] == b["objective"]


def test_config_file_and_flag_override(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"case": "case3_acdc", "formulation": ["soc", "lpac"], "split": "ac:2",
                               "time-limit": 60, "out": str(tmp_path / "x")}))
    code, _, _ = run(["bs", "--config", str(cfg), "--formulation", "lpac"], capsys)
    assert code == 0
    rows = read_comparison(tmp_path / "x" / "comparison.csv")
    assert [r["model"] for r in rows] == ["LPAC-BS"]
    code, out, _ = run(["report", "--out", str(tmp_path / "x")], capsys)
    assert code == 0 and "LPAC-BS" in out


@pytest.mark.parametrize("args", [
    ["opf", "--case", "no-such-case"],
    ["bs", "--case", "case5_acdc"],
    ["bs", "--case", "case5_acdc", "--split", "ac:77"],
    ["bs", "--case", "case5_acdc", "--split", "zz:1"],
    ["opf", "--case", "case5_acdc", "--time-limit", "-1"],
])
def test_configuration_errors_exit_two(args, tmp_path, capsys):
    code, _, err = run(args + ["--out", str(tmp_path)], capsys)
    assert code == 2 and "error" in err


def test_bad_config_files_exit_two(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(["opf", "--config", str(bad)], capsys)[0] == 2
    bad.write_text(json.dumps({"case": "case5_acdc", "colour": "red"}))
    assert run(["opf", "--config", str(bad)], capsys)[0] == 2
    topo = tmp_path / "t.json"
    topo.write_text(json.dumps({"l1": "open"}))
    assert run(["check", "--case", "case5_acdc", "--topology", str(topo), "--baseline", "1"], capsys)[0] == 2


def test_infeasible_study_exits_one(tmp_path, capsys):
    from gridtopo.case_io import write_json_case
    from test_solver import overloaded
    case = tmp_path / "over.json"
    case.write_text(write_json_case(overloaded()))
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"case": str(case), "formulation": "lpac", "baseline": 1.0, "out": str(tmp_path)}))
    code, _, _ = run(["ots", "--config", str(cfg)], capsys)
    assert code == 1


def test_log_level_from_environment(monkeypatch, tmp_path, capsys):
    import logging
    monkeypatch.setenv("GRIDTOPO_LOG", "debug")
    logging.getLogger().handlers.clear()
    assert main(["opf", "--case", "case3_acdc", "--formulation", "lpac", "--out", str(tmp_path)]) == 0
    assert logging.getLogger().level == logging.DEBUG
    logging.getLogger().handlers.clear()
    logging.getLogger().setLevel(logging.WARNING)
