import itertools

import numpy as np
import pytest

from flexopf.milp import INF, MilpModel, Status, solve_lp, solve_milp
from flexopf.milp.bnb import MilpOptions


def test_single_integer_rounds_down():
    m = MilpModel()
    x = m.add_var("x", 0, INF, "integer")
    m.set_objective([(x, -1)])
    m.add_constraint([(x, 1)], "<=", 1.5, "c")
    r = solve_milp(m)
    assert r.status is Status.OPTIMAL and r.objective == pytest.approx(-1) and r[x] == pytest.approx(1)


VALUES, WEIGHTS, CAPACITY = [10, 6, 4], [5, 4, 3], 8


def knapsack():
    m = MilpModel("knapsack")
    xs = [m.add_var(f"x{i}", kind="binary") for i in range(3)]
    m.set_objective([(x, -v) for x, v in zip(xs, VALUES)])
    m.add_constraint(list(zip(xs, WEIGHTS)), "<=", CAPACITY, "cap")
    return m, xs


def test_knapsack_matches_enumeration():
    best = min(-np.dot(VALUES, sel) for sel in itertools.product([0, 1], repeat=3)
               if np.dot(WEIGHTS, sel) <= CAPACITY)
    assert best == -14  # a and c; a with b would weigh 9
    m, xs = knapsack()
    r = solve_milp(m)
    assert r.objective == pytest.approx(best)
    assert [round(r[x]) for x in xs] == [1, 0, 1]


def test_lp_bound_below_milp():
    m, _ = knapsack()
    assert solve_lp(m).objective <= solve_milp(m).objective + 1e-9


def random_milp(rng, n=6, k=4):
    m = MilpModel("rnd")
    xs = []
    for j in range(n):
        kind = "binary" if j % 2 == 0 else ("integer" if j % 3 == 1 else "continuous")
        xs.append(m.add_var(f"x{j}", 0, 1 if kind == "binary" else 3, kind))
    m.set_objective(list(zip(xs, rng.integers(-9, 10, n).astype(float))))
    for i in range(k):
        m.add_constraint(list(zip(xs, rng.integers(-4, 6, n).astype(float))), "<=",
                         float(rng.integers(2, 12)), f"r{i}")
    return m


def test_deterministic_incumbent_sequence():
    rng = np.random.default_rng(11)
    for _ in range(10):
        m = random_milp(rng, 10, 6)
        a, b = solve_milp(m), solve_milp(m)
        assert a.stats.incumbents == b.stats.incumbents
        assert a.stats.nodes == b.stats.nodes
        assert np.array_equal(a.values, b.values)


def test_objective_scaling_invariance():
    rng = np.random.default_rng(5)
    for _ in range(10):
        m = random_milp(rng, 8, 5)
        r1 = solve_milp(m)
        m2 = m.copy()
        m2.set_objective([(v, 1000 * c) for v, c in m.objective])
        r2 = solve_milp(m2)
        assert r2.objective == pytest.approx(1000 * r1.objective, rel=1e-9, abs=1e-6)


def test_brute_force_pure_integer():
    rng = np.random.default_rng(7)
    for _ in range(40):
        n = 5
        m = MilpModel()
        xs = [m.add_var(f"x{j}", 0, 2, "integer") for j in range(n)]
        c = rng.integers(-6, 7, n)
        A = rng.integers(-3, 5, (3, n))
        b = rng.integers(1, 9, 3)
        m.set_objective(list(zip(xs, c.astype(float))))
        for i in range(3):
            m.add_constraint(list(zip(xs, A[i].astype(float))), "<=", float(b[i]), f"r{i}")
        best = min((c @ np.array(p) for p in itertools.product(range(3), repeat=n)
                    if np.all(A @ np.array(p) <= b)), default=None)
        r = solve_milp(m)
        assert r.status is Status.OPTIMAL  # x = 0 is always feasible
        assert r.objective == pytest.approx(best)


def test_node_limit_reports_status():
    rng = np.random.default_rng(2)
    m = random_milp(rng, 24, 10)
    r = solve_milp(m, options=MilpOptions(node_limit=1, dive_every=10**9))
    assert r.status in (Status.OPTIMAL, Status.NODE_LIMIT)
    if r.status is Status.NODE_LIMIT and r.values is not None:
        assert r.bound <= r.objective + 1e-9


def test_infeasible_milp():
    m = MilpModel()
    x = m.add_var("x", 0, 3, "integer")
    m.add_constraint([(x, 2)], "=", 3, "odd")
    assert solve_milp(m).status is Status.INFEASIBLE
