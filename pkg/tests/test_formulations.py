import math

import numpy as np
import pytest

from flexopf import apply_overlay, assemble, load_overlay, solve
from flexopf.formulations import demand, fix_topology
from flexopf.milp import Status, solve_milp
from flexopf.network import BranchParams, BranchTypology, Bus, Generator, Horizon, SystemCase

from conftest import six_bus, square, two_bus

T = BranchTypology


def test_two_bus_dispatch():
    asm = assemble(two_bus(), Horizon(), "ed")
    res = solve(asm)
    blk = asm.block
    assert res.objective == pytest.approx(500.0)
    assert res[blk.f[0, 0]] * 100 == pytest.approx(50.0)
    assert res[blk.delta[0, 0]] - res[blk.delta[0, 1]] == pytest.approx(0.05)
    assert asm.problem.output_mw(res)[0, 0] == pytest.approx(50.0)


def test_two_bus_capacity_below_load_is_infeasible():
    assert solve(assemble(two_bus(f_max=40.0), Horizon(), "ed")).status is Status.INFEASIBLE


def test_two_bus_transportation():
    res = solve(assemble(two_bus(), Horizon(), "transportation"))
    assert res.objective == pytest.approx(500.0)


def test_single_generator_stays_on():
    case = SystemCase(100.0, [Bus(1, 0, True), Bus(2, 40)],
                      [Generator(1, 10, 100, ramp_up=50, ramp_down=50, fixed_cost=7, startup_cost=100,
                                 shutdown_cost=50, variable_cost=10)],
                      [BranchParams(1, 2, b_min=10, b_max=10, f_max=100)])
    horizon = Horizon(4, (1.0, 1.0, 1.0, 1.0))
    asm = assemble(case, horizon, "ncuc")
    res = solve(asm)
    prob = asm.problem
    assert prob.commitment(res).ravel().tolist() == [1, 1, 1, 1]
    assert all(res[v] == 0 for v in list(prob.y.values()) + list(prob.w.values()))
    assert res.objective == pytest.approx(4 * (7 + 400))


def test_ramp_limits_bind():
    # load jumps from 20 to 80 MW; the cheap unit can only add 30 MW per hour
    case = SystemCase(100.0, [Bus(1, 0, True), Bus(2, 50)],
                      [Generator(1, 0, 100, ramp_up=30, ramp_down=30, startup_ramp=30, shutdown_ramp=30,
                                 variable_cost=10),
                       Generator(2, 0, 100, variable_cost=50)],
                      [BranchParams(1, 2, b_min=10, b_max=10, f_max=100)])
    asm = assemble(case, Horizon(2, (0.4, 1.6)), "ncuc")
    res = solve(asm)
    out = asm.problem.output_mw(res)
    assert out[0].tolist() == pytest.approx([20, 0], abs=1e-6)
    assert out[1].tolist() == pytest.approx([50, 30], abs=1e-6)


@pytest.mark.parametrize("name", ["case_a", "case_b", "case_c", "case_d", "case_e"])
def test_energy_balance(ncuc_runs, name):
    asm, res = ncuc_runs[name]
    out = asm.problem.output_mw(res)
    assert out.sum(axis=1) == pytest.approx(demand(asm.problem.case, asm.problem.horizon).sum(axis=1))
    assert out.sum(axis=1) == pytest.approx([210, 273, 168, 231, 147, 126, 210])


@pytest.mark.parametrize("name", ["case_a", "case_e"])
def test_commitment_logic_and_reserve(ncuc_runs, name):
    asm, res = ncuc_runs[name]
    prob = asm.problem
    gens = prob.case.generators
    u = prob.commitment(res)
    out = prob.output_mw(res)
    d = demand(prob.case, prob.horizon)
    for t in range(7):
        for g, gen in enumerate(gens):
            y, w = round(res[prob.y[t, g]]), round(res[prob.w[t, g]])
            prev = u[t - 1, g] if t else int(gen.initially_on)
            assert y + w <= 1 and u[t, g] - prev == y - w
            assert gen.p_min * u[t, g] - 1e-6 <= out[t, g] <= gen.p_max * u[t, g] + 1e-6
        spare = sum(g.p_max * u[t, i] for i, g in enumerate(gens)) - out[t].sum()
        assert spare >= 0.1 * d[t].sum() - 1e-6


def test_objectives_never_increase_across_cases(ncuc_runs):
    objs = [ncuc_runs[f"case_{c}"][1].objective for c in "abcde"]
    for a, b in zip(objs, objs[1:]):
        assert b <= a + 1e-6 * abs(a)


def test_relaxation_chain_on_small_network():
    flex = BranchParams(1, 3, T.VSSA, 2.0, 8.0, phi_min=-0.2, phi_max=0.2, f_max=100.0)
    base = square(BranchParams(1, 3, b_min=2.0, b_max=2.0, f_max=100.0))
    wider = square(flex)
    ts = wider.with_branches([BranchParams(**{**br.__dict__, "switchable": True}) for br in wider.branches])
    objs = [solve(assemble(c, Horizon(), f)).objective
            for c, f in ((base, "ed"), (wider, "ed"), (ts, "ed"), (base, "transportation"))]
    assert objs[0] >= objs[1] - 1e-7 >= objs[2] - 2e-7 >= objs[3] - 3e-7


def test_fixing_topology_to_optimal_pattern_reproduces_cost(ncuc_runs):
    asm, res = ncuc_runs["case_e"]
    mask = np.zeros((7, 11), bool)
    for (t, k), v in asm.block.tra.items():
        mask[t, k] = bool(round(res.value(v)))
    fixed = solve_milp(fix_topology(asm, mask))
    assert fixed.objective == pytest.approx(res.objective, rel=1e-9)


def independent_dcopf(case):
    """Angle-based DC-OPF written straight from the case data and solved by scipy."""
    from scipy.optimize import linprog
    base = case.base_mva
    idx = case.bus_index
    nb = case.n_buses
    cols = []  # (bus index, upper MW, $/MWh) per generation block
    for g in case.generators:
        if not g.in_service:
            continue
        blocks = g.cost_segments or ((g.p_max, g.variable_cost),)
        cols += [(idx[g.bus], w, c) for w, c in blocks]
    ng = len(cols)
    n = ng + nb
    c = np.array([cst for _, _, cst in cols] + [0.0] * nb)
    A_eq = np.zeros((nb + 1, n))
    b_eq = np.zeros(nb + 1)
    A_ub, b_ub = [], []
    for j, (bus, _, _) in enumerate(cols):
        A_eq[bus, j] = 1.0
    b_eq[:nb] = case.loads()
    for br in case.branches:
        if not br.in_service:
            continue
        i, k = idx[br.from_bus], idx[br.to_bus]
        row = np.zeros(n)
        row[ng + i], row[ng + k] = br.b_max * base, -br.b_max * base  # MW per rad
        A_eq[i] -= row
        A_eq[k] += row
        if math.isfinite(br.f_max):
            A_ub += [row, -row]
            b_ub += [br.f_max, br.f_max]
    A_eq[nb, ng + idx[case.reference_bus.id]] = 1.0
    bounds = [(0, w) for _, w, _ in cols] + [(None, None)] * nb
    res = linprog(c, A_ub=np.array(A_ub), b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
    assert res.status == 0
    return res.fun


def test_ieee118_base_matches_independent_dcopf(case118):
    case, horizon = apply_overlay(case118, load_overlay("ieee118_base.toml"))
    ours = solve(assemble(case, horizon, "ed"))
    oracle = independent_dcopf(case)
    assert ours.objective == pytest.approx(oracle, rel=1e-3)
    transport = solve(assemble(case, horizon, "transportation"))
    assert transport.objective < ours.objective
