"""Dispatch problems assembled on top of the branch block.

All builders work in per unit internally and report costs in $ for 1-hour periods.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .branch import BigMOptions, BranchBlock, build_branch_block
from .milp.bnb import MilpOptions, solve_milp
from .milp.model import INF, MilpModel, SolveResult, Status, VarKind, VarRef
from .network import Horizon, SystemCase

log = logging.getLogger(__name__)


class Formulation(str, enum.Enum):
    ED = "ed"
    NCUC = "ncuc"
    TRANSPORTATION = "transportation"


@dataclass
class EdProblem:
    model: MilpModel
    block: BranchBlock
    p: Dict[Tuple[int, int], VarRef]
    demand_mw: np.ndarray  # (N_T, N_N)
    segments: Dict[Tuple[int, int], List[VarRef]] = field(default_factory=dict)

    @property
    def case(self) -> SystemCase:
        return self.block.case

    @property
    def horizon(self) -> Horizon:
        return self.block.horizon

    def output_mw(self, res: SolveResult) -> np.ndarray:
        NT, NG = self.horizon.n_periods, len(self.case.generators)
        out = np.zeros((NT, NG))
        for (t, g), v in self.p.items():
            out[t, g] = res[v] * self.case.base_mva
        return out

    def commitment(self, res: SolveResult) -> Optional[np.ndarray]:
        return None

    def cost(self, values: Sequence[float]) -> float:
        return self.model.objective_value(values)


@dataclass
class UcProblem(EdProblem):
    u: Dict[Tuple[int, int], VarRef] = field(default_factory=dict)
    y: Dict[Tuple[int, int], VarRef] = field(default_factory=dict)
    w: Dict[Tuple[int, int], VarRef] = field(default_factory=dict)

    def commitment(self, res: SolveResult) -> np.ndarray:
        NT, NG = self.horizon.n_periods, len(self.case.generators)
        out = np.zeros((NT, NG), dtype=int)
        for (t, g), v in self.u.items():
            out[t, g] = int(round(res[v]))
        return out


def demand(case: SystemCase, horizon: Horizon) -> np.ndarray:
    return np.array([case.loads(m) for m in horizon.load_multipliers])


def _dispatch_vars(model: MilpModel, case: SystemCase, horizon: Horizon, block: BranchBlock,
                   lower_zero: bool = True):
    base = case.base_mva
    p: Dict[Tuple[int, int], VarRef] = {}
    segs: Dict[Tuple[int, int], List[VarRef]] = {}
    cost: Dict[VarRef, float] = {}
    d = demand(case, horizon)
    idx = case.bus_index
    for t in range(horizon.n_periods):
        for g, gen in enumerate(case.generators):
            cap = gen.p_max / base if gen.in_service else 0.0
            v = model.add_var(f"p[t={t + 1},g={g + 1}]", 0.0, cap)  # eq10
            p[t, g] = v
            if gen.cost_segments:
                parts = []
                for i, (width, slope) in enumerate(gen.cost_segments):
                    s = model.add_var(f"pseg[t={t + 1},g={g + 1},s={i + 1}]", 0.0, width / base)
                    parts.append(s)
                    cost[s] = slope * base
                terms = {v: 1.0}
                for s in parts:
                    terms[s] = -1.0
                model.add_constraint(terms, "=", 0.0, f"pseg[t={t + 1},g={g + 1}]")
                segs[t, g] = parts
            else:
                cost[v] = gen.variable_cost * base
        # eq11: nex = Mg p - d
        for n in range(case.n_buses):
            terms = {block.nex[t, n]: 1.0}
            for g, gen in enumerate(case.generators):
                if idx[gen.bus] == n:
                    terms[p[t, g]] = terms.get(p[t, g], 0.0) - 1.0
            model.add_constraint(terms, "=", -d[t, n] / base, f"eq11[t={t + 1},n={n + 1}]")
    return p, segs, cost, d


def build_ed(model: MilpModel, case: SystemCase, horizon: Horizon, block: BranchBlock) -> EdProblem:
    """Minimise linear generation cost subject to output limits and nodal balance."""
    p, segs, cost, d = _dispatch_vars(model, case, horizon, block)
    model.add_objective_terms(cost)
    return EdProblem(model, block, p, d, segs)


def build_transportation(model: MilpModel, case: SystemCase, horizon: Horizon,
                         opts: BigMOptions = BigMOptions()) -> EdProblem:
    """ED on the network-flow relaxation: balance and capacities, no angle physics."""
    block = build_branch_block(model, case, horizon, opts, transportation=True)
    return build_ed(model, case, horizon, block)


def build_ncuc(model: MilpModel, case: SystemCase, horizon: Horizon, block: BranchBlock) -> UcProblem:
    """Network-constrained unit commitment with ramping, start-up/shut-down and reserve.

    Period 1 has no ramp constraint (the pre-horizon output is unknown) and there
    are no minimum up/down times.
    """
    base = case.base_mva
    p, segs, cost, d = _dispatch_vars(model, case, horizon, block)
    u: Dict[Tuple[int, int], VarRef] = {}
    y: Dict[Tuple[int, int], VarRef] = {}
    w: Dict[Tuple[int, int], VarRef] = {}
    NT = horizon.n_periods
    for t in range(NT):
        for g, gen in enumerate(case.generators):
            tg = f"[t={t + 1},g={g + 1}]"
            u[t, g] = model.add_var("u" + tg, 0, 1 if gen.in_service else 0, VarKind.BINARY)
            y[t, g] = model.add_var("y" + tg, 0, 1, VarKind.BINARY)
            w[t, g] = model.add_var("w" + tg, 0, 1, VarKind.BINARY)
    for t in range(NT):
        for g, gen in enumerate(case.generators):
            tg = f"[t={t + 1},g={g + 1}]"
            pmin, pmax = gen.p_min / base, gen.p_max / base
            model.add_constraint({p[t, g]: 1.0, u[t, g]: -pmax}, "<=", 0.0, "pmax" + tg)
            model.add_constraint({p[t, g]: 1.0, u[t, g]: -pmin}, ">=", 0.0, "pmin" + tg)
            # u(t) - u(t-1) = y(t) - w(t)
            terms = {u[t, g]: 1.0, y[t, g]: -1.0, w[t, g]: 1.0}
            rhs = 0.0
            if t == 0:
                rhs = 1.0 if gen.initially_on else 0.0
            else:
                terms[u[t - 1, g]] = -1.0
            model.add_constraint(terms, "=", rhs, "logic" + tg)
            model.add_constraint({y[t, g]: 1.0, w[t, g]: 1.0}, "<=", 1.0, "yw" + tg)
            if t > 0:
                ru = _ramp(gen.ramp_up, base, pmax)
                su = _ramp(gen.startup_ramp, base, pmax)
                rd = _ramp(gen.ramp_down, base, pmax)
                sd = _ramp(gen.shutdown_ramp, base, pmax)
                model.add_constraint({p[t, g]: 1.0, p[t - 1, g]: -1.0, u[t - 1, g]: -ru, y[t, g]: -su},
                                     "<=", 0.0, "rampup" + tg)
                model.add_constraint({p[t - 1, g]: 1.0, p[t, g]: -1.0, u[t, g]: -rd, w[t, g]: -sd},
                                     "<=", 0.0, "rampdn" + tg)
            cost[u[t, g]] = cost.get(u[t, g], 0.0) + gen.fixed_cost
            cost[y[t, g]] = cost.get(y[t, g], 0.0) + gen.startup_cost
            cost[w[t, g]] = cost.get(w[t, g], 0.0) + gen.shutdown_cost
        if horizon.reserve_fraction > 0:
            terms = {}
            for g, gen in enumerate(case.generators):
                terms[u[t, g]] = gen.p_max / base
                terms[p[t, g]] = -1.0
            need = horizon.reserve_fraction * d[t].sum() / base
            model.add_constraint(terms, ">=", need, f"reserve[t={t + 1}]")
    model.add_objective_terms(cost)
    return UcProblem(model, block, p, d, segs, u, y, w)


def _ramp(v: float, base: float, pmax_pu: float) -> float:
    """Ramp limit in per unit; an unlimited ramp is capped at the unit's capacity."""
    return v / base if math.isfinite(v) else pmax_pu


@dataclass
class Assembled:
    formulation: Formulation
    model: MilpModel
    problem: EdProblem

    @property
    def block(self) -> BranchBlock:
        return self.problem.block


def assemble(case: SystemCase, horizon: Horizon, formulation, opts: BigMOptions = BigMOptions(),
             name: Optional[str] = None) -> Assembled:
    formulation = Formulation(formulation)
    model = MilpModel(name or f"{case.name}-{formulation.value}")
    if formulation is Formulation.TRANSPORTATION:
        prob = build_transportation(model, case, horizon, opts)
    else:
        block = build_branch_block(model, case, horizon, opts)
        if formulation is Formulation.ED:
            prob = build_ed(model, case, horizon, block)
        else:
            prob = build_ncuc(model, case, horizon, block)
    return Assembled(formulation, model, prob)


def fix_topology(asm: Assembled, open_mask: np.ndarray) -> MilpModel:
    """Copy of the model with every switching variable fixed to ``open_mask[t, k]``."""
    model = asm.model.copy()
    for (t, k), tra in asm.block.tra.items():
        if isinstance(tra, VarRef):
            v = float(bool(open_mask[t, k]))
            model.set_bounds(tra, v, v)
        elif bool(open_mask[t, k]) != bool(round(tra)):
            # a branch that cannot switch is asked to; make the model infeasible explicitly
            model.add_constraint({}, "=", 1.0, f"fixed_topology_conflict[t={t + 1},k={k + 1}]")
    return model


def solve(asm: Assembled, options: Optional[MilpOptions] = None,
          start: Optional[Sequence[float]] = None) -> SolveResult:
    return solve_milp(asm.model, options=options or MilpOptions(), start=start)


def solve_lexicographic(asm: Assembled, options: Optional[MilpOptions] = None) -> Tuple[SolveResult, List[SolveResult]]:
    """Cost first, then fewest open branches, then least total shift angle.

    Each later stage keeps the earlier objectives within the MILP gap tolerance, so
    the returned point is one of the cost-optimal solutions.
    """
    opts = options or MilpOptions()
    first = solve(asm, opts)
    stages = [first]
    if not first.ok:
        return first, stages
    model = asm.model
    best = first
    tra_vars = [v for v in asm.block.tra.values() if isinstance(v, VarRef)]
    phi_vars = [v for v in asm.block.phi.values() if isinstance(v, VarRef)]
    stage = model.copy()
    slack = opts.gap_tol * max(1.0, abs(first.objective))
    stage.add_constraint(dict(model.objective), "<=", first.objective - model.objective_constant + slack,
                         "lex_cost")
    if tra_vars:
        stage.set_objective({v: 1.0 for v in tra_vars})
        res = solve_milp(stage, options=opts, start=best.values)
        stages.append(res)
        if res.ok:
            best = res
            stage.add_constraint({v: 1.0 for v in tra_vars}, "<=", round(res.objective) + 0.5, "lex_switch")
    if phi_vars:
        abs_terms = {}
        for v in phi_vars:
            a = stage.add_var(f"absphi[{v.name}]", 0.0, INF)
            stage.add_constraint({a: 1.0, v: -1.0}, ">=", 0.0, f"absphi_pos[{v.name}]")
            stage.add_constraint({a: 1.0, v: 1.0}, ">=", 0.0, f"absphi_neg[{v.name}]")
            abs_terms[a] = 1.0
        stage.set_objective(abs_terms)
        start = None
        if best.values is not None:
            start = np.concatenate([best.values, np.abs(best.values[[v.index for v in phi_vars]])])
        res = solve_milp(stage, options=opts, start=start)
        stages.append(res)
        if res.ok:
            best = res
    values = best.values[: len(model.variables)]
    final = SolveResult(Status.OPTIMAL, model.objective_value(values), values, first.gap, first.bound,
                        first.stats)
    return final, stages
