import pytest

from gridtopo.augment import SplitPlan, parse_split
from gridtopo.case_io import bundled_case, read_case
from gridtopo.formulation import ProblemSpec, build_model
from gridtopo.solver import SolverOptions, solve

TIGHT = SolverOptions(gap_rel=0.0, gap_abs=1e-7)


def bs_spec(formulation, split="ac:2", **kw):
    return ProblemSpec(kind="bs", formulation=formulation, plan=SplitPlan(busbars=parse_split(split)), **kw)


@pytest.fixture(scope="session")
def case5():
    return read_case(bundled_case("case5_acdc.m"))


@pytest.fixture(scope="session")
def case3():
    return read_case(bundled_case("case3_acdc.m"))


class Cache:
    """Session-wide memo of (model, result) pairs keyed by a label."""

    def __init__(self):
        self.store = {}

    def get(self, key, net, spec, opts=None):
        if key not in self.store:
            model = build_model(net, spec)
            self.store[key] = (model, solve(model, opts or SolverOptions()))
        return self.store[key]


@pytest.fixture(scope="session")
def solved():
    return Cache()


# ---- acceptance report ----------------------------------------------------
# Acceptance tests call `verdict(...)`; the lines are echoed immediately and
# repeated in the terminal summary so they survive output capture.
ACCEPTANCE_LINES = []


def record_verdict(criterion, ok, detail):
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
