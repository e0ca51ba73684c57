import numpy as np
import pytest

from flexopf.milp import INF, MilpModel, solve_milp
from flexopf.milp.external import available, solve_external, solve_mps_text
from flexopf.milp.mps import MpsError, export_mps, read_mps, write_mps

needs_highs = pytest.mark.skipif(not available(), reason="highspy not installed")


def tiny():
    m = MilpModel("tiny")
    x = m.add_var("x", 0, 4)
    y = m.add_var("y", kind="binary")
    m.set_objective([(x, 1.0), (y, 3.0)], constant=2.0)
    m.add_constraint([(x, 1.0), (y, 2.0)], ">=", 1.5, "need")
    return m


def test_minimal_document():
    assert write_mps(tiny()) == (
        "NAME tiny\n"
        "ROWS\n"
        " N OBJ\n"
        " G need\n"
        "COLUMNS\n"
        " x OBJ 1.0\n"
        " x need 1.0\n"
        " MARKER0 'MARKER' 'INTORG'\n"
        " y OBJ 3.0\n"
        " y need 2.0\n"
        " MARKER1 'MARKER' 'INTEND'\n"
        "RHS\n"
        " RHS OBJ -2.0\n"
        " RHS need 1.5\n"
        "BOUNDS\n"
        " UP BND x 4.0\n"
        " BV BND y\n"
        "ENDATA\n")


def test_every_integer_column_between_markers():
    m = MilpModel()
    kinds = ["continuous", "binary", "binary", "continuous", "integer", "continuous", "binary"]
    vs = [m.add_var(f"v{j}", 0, 5, k) for j, k in enumerate(kinds)]
    m.add_constraint([(v, 1.0) for v in vs], "<=", 9, "sum")
    inside, ints = False, set()
    for line in write_mps(m).split("COLUMNS\n")[1].split("RHS\n")[0].splitlines():
        tok = line.split()
        if tok[1] == "'MARKER'":
            inside = tok[2] == "'INTORG'"
        elif inside:
            ints.add(tok[0])
    assert ints == {v.name for v in vs if v.is_integer}


def test_bound_types_round_trip():
    m = MilpModel("bounds")
    specs = [(-INF, INF, "continuous"), (-INF, 3, "continuous"), (2, 2, "continuous"),
             (-1, 5, "continuous"), (0, INF, "integer"), (-2, 7, "integer"), (0, 1, "binary")]
    for j, (lo, hi, k) in enumerate(specs):
        m.add_var(f"v{j}", lo, hi, k)
    again = read_mps(write_mps(m))
    for a, b in zip(m.variables, again.variables):
        assert (a.name, a.lower, a.upper, a.kind) == (b.name, b.lower, b.upper, b.kind)


def test_round_trip_preserves_optimum():
    rng = np.random.default_rng(4)
    for _ in range(10):
        m = MilpModel("r")
        xs = [m.add_var(f"x{j}", 0, 3, "integer" if j % 2 else "continuous") for j in range(6)]
        m.set_objective(list(zip(xs, rng.integers(-5, 6, 6).astype(float))), constant=1.25)
        for i in range(4):
            m.add_constraint(list(zip(xs, rng.integers(-3, 4, 6).astype(float))), "<=",
                             float(rng.integers(1, 8)), f"c{i}")
        again = read_mps(write_mps(m))
        assert solve_milp(again).objective == pytest.approx(solve_milp(m).objective)


def test_name_collisions_disambiguated_with_warning():
    m = MilpModel()
    m.add_var("a b")
    m.add_var("a_b")
    m.add_var("x" * 300)
    exp = export_mps(m)
    assert exp.column_names[:2] == ["a_b", "a_b~2"]
    assert len(exp.column_names[2]) == 255
    assert len(exp.warnings) == 1 and "a_b~2" in exp.warnings[0]


def test_ranges_section_read():
    text = ("NAME r\nROWS\n N obj\n L c\nCOLUMNS\n x obj 1\n x c 1\nRHS\n RHS c 5\n"
            "RANGES\n RNG c 2\nBOUNDS\n UP BND x 10\nENDATA\n")
    m = read_mps(text)
    assert solve_milp(m).objective == pytest.approx(3.0)


def test_malformed_document():
    with pytest.raises(MpsError, match="line"):
        read_mps("NAME r\nROWS\n N obj\nCOLUMNS\n x obj notanumber\nENDATA\n")


@needs_highs
def test_highs_agrees_on_tiny_and_random_models():
    assert solve_external(tiny()).objective == pytest.approx(solve_milp(tiny()).objective)
    rng = np.random.default_rng(9)
    for _ in range(10):
        m = MilpModel("r")
        xs = [m.add_var(f"x{j}", 0, 1 if j % 2 else 4, "binary" if j % 2 else "continuous") for j in range(8)]
        m.set_objective(list(zip(xs, rng.integers(-5, 6, 8).astype(float))))
        for i in range(5):
            m.add_constraint(list(zip(xs, rng.integers(-3, 4, 8).astype(float))), "<=",
                             float(rng.integers(1, 8)), f"c{i}")
        assert solve_external(m).objective == pytest.approx(solve_milp(m).objective, abs=1e-7)


@needs_highs
def test_highs_reads_empty_columns():
    m = MilpModel()
    x = m.add_var("x", 1, 2)
    m.add_var("unused", 0, 1)
    m.set_objective([(x, 1.0)])
    r = solve_mps_text(write_mps(m), n_columns=2)
    assert r.objective == pytest.approx(1.0) and len(r.values) == 2
