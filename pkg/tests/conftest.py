import math

import numpy as np
import pytest

from flexopf import apply_overlay, assemble, load_case, load_overlay, solve
from flexopf.network import BranchParams, BranchTypology, Bus, Generator, Horizon, SystemCase


@pytest.fixture(scope="session")
def case6ww():
    return load_case("case6ww.m")


@pytest.fixture(scope="session")
def case118():
    return load_case("case118.m")


def six_bus(case6ww, name):
    return apply_overlay(case6ww, load_overlay(f"{name}.toml"))


@pytest.fixture(scope="session")
def ncuc_runs(case6ww):
    """Cases a)-e) assembled and solved once per session."""
    out = {}
    for name in ("case_a", "case_b", "case_c", "case_d", "case_e"):
        case, horizon = six_bus(case6ww, name)
        asm = assemble(case, horizon, "ncuc")
        out[name] = (asm, solve(asm))
    return out


def two_bus(f_max=100.0, b=10.0, load=50.0, cost=10.0, cap=100.0):
    """Generator at bus 1, load at bus 2, one AC line."""
    return SystemCase(
        100.0,
        [Bus(1, 0.0, True), Bus(2, load)],
        [Generator(1, 0.0, cap, variable_cost=cost)],
        [BranchParams(1, 2, b_min=b, b_max=b, f_max=f_max)],
        name="two_bus",
    )


def square(branch: BranchParams, second_gen_cost=30.0):
    """4-bus ring 1-2-3-4-1 plus the given branch between 1 and 3.

    Cheap generation at bus 1, expensive at bus 3, all load at bus 3, so that the
    extra branch is worth using.
    """
    buses = [Bus(1, 0.0, True), Bus(2, 0.0), Bus(3, 120.0), Bus(4, 0.0)]
    gens = [Generator(1, 0.0, 200.0, variable_cost=10.0), Generator(3, 0.0, 200.0, variable_cost=second_gen_cost)]
    ring = [BranchParams(a, b, b_min=10.0, b_max=10.0, f_max=40.0) for a, b in ((1, 2), (2, 3), (3, 4), (4, 1))]
    return SystemCase(100.0, buses, gens, ring + [branch], name="square")


ACCEPTANCE_LINES = []


@pytest.fixture
def report_line():
    """Record the one-line verdict of an acceptance criterion."""
    def record(criterion, ok, detail):
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
