"""Command-line front end.

    gridtopo opf   --case case5_acdc.m --formulation exact
    gridtopo ots   --case case5_acdc.m --formulation soc --switchable ac
    gridtopo bs    --case case5_acdc.m --split ac:2 --formulation exact --formulation lpac
    gridtopo check --case case5_acdc.m --topology out/selection_lpac.json
    gridtopo report --out out

Settings come from ``--config`` (a JSON object with the long flag names as
keys, ``formulation`` may be a list) and are overridden by flags.  The log
level is taken from ``GRIDTOPO_LOG``.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .augment import AugmentedNetwork, SplitPlan, parse_split, split_busbars
from .case_io import CaseFormatError, bundled_case, read_case, write_json_case
from .feasibility import STATUS_TOPOLOGY, apply_topology, fix_and_check
from .formulation import FORMULATIONS, ProblemSpec, build_model
from .network import ValidationError
from .solver import SolverOptions, solve

log = logging.getLogger("gridtopo")

EXIT_OK, EXIT_INFEASIBLE, EXIT_CONFIG = 0, 1, 2
COMMANDS = ("opf", "ots", "bs", "check", "report")
SWITCHABLE = ("ac", "dc", "all", "none")
CSV_COLUMNS = ("model", "opf_objective", "topo_objective", "time_s", "binaries",
               "ac_feasible", "lo_vs_opf", "benefit_pct", "check_objective")
_KIND = {"opf": "opf", "ots": "ots", "bs": "bs"}
_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    case: str = ""
    formulations: tuple = ("exact",)
    split: str = ""
    switchable: str = "ac"
    exclusivity: str | None = None
    time_limit: float = 3600.0
    gap_rel: float = 1e-4
    gap_abs: float = 1e-6
    out: str = "gridtopo-out"
    check: bool = True
    topology: str = ""
    baseline: float | None = None
    extra: dict = field(default_factory=dict)

    def options(self) -> SolverOptions:
        return SolverOptions(time_limit=self.time_limit, gap_rel=self.gap_rel, gap_abs=self.gap_abs)

    def plan(self) -> SplitPlan:
        try:
            busbars = parse_split(self.split) if self.split else ()
            return SplitPlan(busbars=busbars, exclusivity=self.exclusivity or "eq")
        except ValueError as exc:
            raise ConfigError(f"invalid split plan: {exc}") from None

    def public(self) -> dict:
        d = asdict(self)
        d.pop("out")
        d.pop("extra")
        d["formulations"] = list(self.formulations)
        return d


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gridtopo", description="Optimal transmission switching and "
                                "busbar splitting for hybrid AC/DC grids.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON config file; flags override it")
        s.add_argument("--out", help="output directory")
        if name == "report":
            continue
        s.add_argument("--case", help="case file (.m or .json) or a bundled case name")
        s.add_argument("--split", help="busbars to split, ac:<bus>[,...] or dc:<bus>[,...]")
        s.add_argument("--exclusivity", choices=("eq", "leq"))
        s.add_argument("--time-limit", type=float)
        if name == "check":
            s.add_argument("--topology", help="topology JSON (element key -> 0/1)")
            s.add_argument("--baseline", type=float, help="baseline OPF objective ($/h)")
            continue
        s.add_argument("--formulation", action="append", choices=FORMULATIONS,
                       help="may be repeated to compare formulations")
        s.add_argument("--switchable", choices=SWITCHABLE)
        s.add_argument("--no-check", action="store_true", help="skip the AC-feasibility check")
    return p


def load_config(args: argparse.Namespace) -> RunConfig:
    doc: dict = {}
    if getattr(args, "config", None):
        try:
            doc = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
    doc = {k.replace("-", "_"): v for k, v in doc.items()}
    cfg = RunConfig(command=args.command)
    forms = doc.pop("formulation", doc.pop("formulations", None))
    if forms is not None:
        cfg.formulations = tuple([forms] if isinstance(forms, str) else forms)
    for key, val in doc.items():
        if key in ("command", "formulations", "extra") or not hasattr(cfg, key):
            cfg.extra[key] = val
        else:
            setattr(cfg, key, val)
    for key in ("case", "split", "switchable", "exclusivity", "time_limit", "out", "topology", "baseline"):
        v = getattr(args, key, None)
        if v is not None:
            setattr(cfg, key, v)
    if getattr(args, "formulation", None):
        cfg.formulations = tuple(args.formulation)
    if getattr(args, "no_check", False):
        cfg.check = False
    if cfg.extra:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(cfg.extra))}")
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if cfg.command == "report":
        return
    if not cfg.case:
        raise ConfigError("no case given (--case or config 'case')")
    cfg.case = str(resolve_case(cfg.case))
    if not cfg.formulations:
        raise ConfigError("at least one formulation is required")
    bad = [f for f in cfg.formulations if f not in FORMULATIONS]
    if bad:
        raise ConfigError(f"unknown formulation(s) {bad}; choose from {FORMULATIONS}")
    if len(set(cfg.formulations)) != len(cfg.formulations):
        raise ConfigError("formulations listed twice")
    if cfg.switchable not in SWITCHABLE:
        raise ConfigError(f"switchable must be one of {SWITCHABLE}")
    if cfg.exclusivity not in (None, "eq", "leq"):
        raise ConfigError("exclusivity must be 'eq' or 'leq'")
    if cfg.command == "bs" and not cfg.split:
        raise ConfigError("bs needs a split plan (--split)")
    if cfg.command == "check" and not cfg.topology:
        raise ConfigError("check needs a topology file (--topology)")
    if not (isinstance(cfg.time_limit, (int, float)) and cfg.time_limit > 0):
        raise ConfigError("time limit must be positive")
    cfg.plan()


def resolve_case(name: str) -> Path:
    path = Path(name)
    if path.is_file():
        return path
    for cand in (name, f"{name}.m", f"{name}.json"):
        b = bundled_case(cand)
        if b.is_file():
            return b
    raise ConfigError(f"case file not found: {name}")


def _stable(obj):
    """Floats rounded to 12 significant digits so reruns serialize identically."""
    if isinstance(obj, float):
        return float(f"{obj:.12g}") if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _stable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_stable(v) for v in obj]
    return obj


def _dump(path: Path, doc) -> None:
    path.write_text(json.dumps(_stable(doc), indent=1, sort_keys=True) + "\n")


def model_label(kind: str, formulation: str) -> str:
    return f"{formulation.upper()}-{kind.upper()}"


def baseline_opf(net, opts) -> float:
    res = solve(build_model(net, ProblemSpec(kind="opf", formulation="exact")), opts)
    if not res.solved:
        raise RuntimeError(f"baseline AC-OPF did not solve ({res.status})")
    return res.objective


def run_study(cfg: RunConfig) -> tuple[int, dict, list, dict]:
    """Run every formulation of ``cfg``.  Returns ``(exit code, result
    document, CSV rows, metadata)``; nothing is written."""
    net = read_case(cfg.case)
    opts = cfg.options()
    plan = cfg.plan()
    kind = cfg.command
    meta: dict = {"times": {}}
    t0 = time.perf_counter()
    baseline = cfg.baseline if cfg.baseline is not None else baseline_opf(net, opts)
    meta["times"]["baseline_s"] = time.perf_counter() - t0
    runs, rows = [], []
    code = EXIT_OK
    for form in cfg.formulations:
        if kind == "ots" and cfg.switchable == "none":
            spec = ProblemSpec(kind="opf", formulation=form)
        else:
            spec = ProblemSpec(kind=_KIND[kind], formulation=form,
                               scope=cfg.switchable if cfg.switchable != "none" else "ac",
                               plan=plan, exclusivity=cfg.exclusivity)
        model = build_model(net, spec)
        log.info("%s: %d binaries", model_label(kind, form), len(model.binaries))
        res = solve(model, opts)
        log.info("%s: %s %.6f in %.2fs", model_label(kind, form), res.status, res.objective, res.time)
        run = {"formulation": form, "model": model_label(kind, form), "binaries": len(model.binaries),
               "result": res.to_dict()}
        row = {"model": model_label(kind, form), "opf_objective": baseline,
               "topo_objective": res.objective if res.x is not None else None,
               "time_s": round(res.time, 3), "binaries": len(model.binaries),
               "ac_feasible": None, "lo_vs_opf": None, "benefit_pct": None, "check_objective": None}
        if res.status == "infeasible":
            code = EXIT_INFEASIBLE
        if res.x is not None:
            checked = model.meta["net"]
            run["_network"] = checked
            run["_topology"] = res.topology
            run["_plan"] = plan
            if cfg.check:
                rep = fix_and_check(checked, res.topology, baseline, opts=opts)
                run["check"] = rep.to_dict()
                meta["times"][f"check_{form}_s"] = rep.time
                row.update(ac_feasible=rep.ac_feasible, lo_vs_opf=rep.lower_objective,
                           check_objective=rep.objective if rep.ac_feasible else None,
                           benefit_pct=rep.benefit_pct)
                print(f"{model_label(kind, form)}: {rep.verdict_line()}")
        meta["times"][f"solve_{form}_s"] = res.time
        runs.append(run)
        rows.append(row)
    doc = {"config": cfg.public(), "baseline_opf": baseline,
           "runs": [{k: v for k, v in r.items() if not k.startswith("_")} for r in runs]}
    doc["_runs"] = runs
    return code, doc, rows, meta


def csv_text(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        out = {}
        for k in CSV_COLUMNS:
            v = r.get(k)
            if v is None:
                out[k] = ""
            elif isinstance(v, bool):
                out[k] = "yes" if v else "no"
            elif isinstance(v, float):
                out[k] = f"{v:.12g}"
            else:
                out[k] = v
        w.writerow(out)
    return buf.getvalue()


def write_study(cfg: RunConfig, doc: dict, rows: list, meta: dict) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    runs = doc.pop("_runs")
    _dump(out / "result.json", doc)
    (out / "comparison.csv").write_text(csv_text(rows))
    for run in runs:
        if "_topology" not in run:
            continue
        form = run["formulation"]
        _dump(out / f"selection_{form}.json", {"split_plan": run["_plan"].to_dict(),
                                                "topology": run["_topology"]})
        red = apply_topology(run["_network"], run["_topology"])
        if red.network is not None:
            (out / f"topology_{form}.json").write_text(write_json_case(red.network) + "\n")
    meta["written"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    _dump(out / "metadata.json", meta)
    return out


def cmd_study(cfg: RunConfig) -> int:
    code, doc, rows, meta = run_study(cfg)
    out = write_study(cfg, doc, rows, meta)
    sys.stdout.write(format_table(rows))
    log.info("results in %s", out)
    return code


def read_selection(path: str) -> tuple[SplitPlan, dict]:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read topology file: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"topology file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("topology file must hold a JSON object")
    if "topology" in doc:
        plan = SplitPlan.from_dict(doc.get("split_plan") or {})
        topo = doc["topology"]
    else:
        plan, topo = SplitPlan(), doc
    if not isinstance(topo, dict) or not all(isinstance(v, (int, float)) for v in topo.values()):
        raise ConfigError("topology must map element keys to 0 or 1")
    return plan, topo


def cmd_check(cfg: RunConfig) -> int:
    net = read_case(cfg.case)
    plan, topo = read_selection(cfg.topology)
    if cfg.split:
        plan = cfg.plan()
    target = split_busbars(net, plan) if plan.busbars else net
    baseline = cfg.baseline if cfg.baseline is not None else baseline_opf(net, cfg.options())
    try:
        rep = fix_and_check(target, topo, baseline, opts=cfg.options())
    except ValueError as exc:
        raise ConfigError(f"malformed topology: {exc}") from None
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    _dump(out / "check.json", rep.to_dict())
    _dump(out / "check_metadata.json", {"time_s": rep.time,
                                        "written": datetime.now(timezone.utc).isoformat(timespec="seconds")})
    print(rep.verdict_line())
    if rep.status == STATUS_TOPOLOGY or not rep.ac_feasible:
        return EXIT_INFEASIBLE
    return EXIT_OK


def format_table(rows) -> str:
    """Fixed-width comparison table, one line per model."""
    head = ("Model", "OPF obj", "Topo obj", "Time [s]", "Bin", "AC feas?", "LO?", "Check obj", "Benefit [%]")

    def f(v, spec):
        if v is None or v == "":
            return "-"
        if isinstance(v, bool):
            return "yes" if v else "no"
        return format(v, spec)

    lines = ["  ".join(f"{h:>11}" for h in head)]
    for r in rows:
        cells = (r["model"], f(r["opf_objective"], ".3f"), f(r["topo_objective"], ".3f"),
                 f(r["time_s"], ".2f"), str(r["binaries"]), f(r["ac_feasible"], ""),
                 f(r["lo_vs_opf"], ""), f(r["check_objective"], ".3f"), f(r["benefit_pct"], ".2f"))
        lines.append("  ".join(f"{c:>11}" for c in cells))
    return "\n".join(lines) + "\n"


def _parse_csv_value(v: str):
    if v == "":
        return None
    if v in ("yes", "no"):
        return v == "yes"
    try:
        return int(v)
    except ValueError:
        pass
    try:
        return float(v)
    except ValueError:
        return v


def read_comparison(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: _parse_csv_value(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def cmd_report(cfg: RunConfig) -> int:
    path = Path(cfg.out) / "comparison.csv"
    try:
        rows = read_comparison(path)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    sys.stdout.write(format_table(rows))
    return EXIT_OK


def _setup_logging() -> None:
    level = os.environ.get("GRIDTOPO_LOG", "warn").lower()
    logging.basicConfig(level=_LEVELS.get(level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    if level not in _LEVELS:
        log.warning("GRIDTOPO_LOG=%s not recognized; using warn", level)


def main(argv=None) -> int:
    _setup_logging()
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args)
        if cfg.command == "check":
            return cmd_check(cfg)
        if cfg.command == "report":
            return cmd_report(cfg)
        return cmd_study(cfg)
    except (ConfigError, CaseFormatError, ValidationError, OSError) as exc:
        print(f"gridtopo: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"gridtopo: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
