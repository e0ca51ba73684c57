"""Unified DC branch model.

Each branch is two controlled injections: ``p_br`` follows the susceptance law of the
branch and ``p_top`` cancels it when the branch is open, so the terminal flow is
``f = p_br - p_top``.  One constraint family covers fixed AC branches, variable
susceptance and/or shift-angle devices (VSSA, with PST and TSCS as special cases),
HVDC links, zero-impedance lines and switched-out branches:

    eq1   nex[t,n]  = sum_k f[t,k] * Cft[k,n]
    eq2   f         = p_br - p_top
    eq3   -M z - (1-tra) p_c + Bmin theta <= p_br <= M z + (1-tra) p_c + Bmax theta
    eq4   -M (1-z) - (1-tra) p_c + Bmax theta <= p_br <= M (1-z) + (1-tra) p_c + Bmin theta
    eq5   |delta_from - delta_to| <= dmax + Mang tra
    eq6   (1-tra) phi_min <= phi <= (1-tra) phi_max
    eq7   |f| <= (1-tra) f_max
    eq8   |p_top| <= M tra

with ``theta = delta_from - delta_to + phi``.  ``tra`` and ``z`` are replaced by the
constant 0 wherever they cannot matter (non-switchable branch, fixed susceptance),
and ``tra`` is the constant 1 for out-of-service branches.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from .milp.model import INF, MilpModel, SolveResult, Status, VarKind, VarRef
from .network import DEFAULT_DELTA_MAX, BranchParams, BranchTypology, Horizon, SystemCase

Sym = Union[VarRef, float]


class NonIntegralBinary(RuntimeError):
    pass


@dataclass(frozen=True)
class BigMOptions:
    safety: float = 1.01
    default_delta_max: float = DEFAULT_DELTA_MAX
    angle_ceiling: float = math.pi / 2
    scale: float = 1.0  # multiplies every m_flow (used by the sufficiency check)


@dataclass
class BigM:
    m_flow: np.ndarray  # (N_T, N_K) per unit
    m_angle: float      # rad, relaxation of the angle limit on open branches
    cap: float


def angle_spread(n_buses: int, opts: BigMOptions = BigMOptions()) -> float:
    return min(n_buses * opts.default_delta_max, opts.angle_ceiling)


def branch_m_flow(br: BranchParams, base_mva: float, m_angle: float,
                  opts: BigMOptions = BigMOptions()) -> float:
    """Per-unit big-M of one branch.

    The angle term uses the branch limit, widened by ``m_angle`` when the branch may
    be opened (the angle limit is relaxed by the same amount then).
    """
    f_max = br.f_max / base_mva if math.isfinite(br.f_max) else 0.0
    p_c = br.p_c / base_mva
    delta_eff = br.delta_max + (m_angle if br.switchable else 0.0)
    phi = max(abs(br.phi_min), abs(br.phi_max))
    m = max(f_max, p_c, br.b_max * (delta_eff + phi))
    return opts.safety * opts.scale * m


def compute_big_m(case: SystemCase, horizon: Horizon, opts: BigMOptions = BigMOptions()) -> BigM:
    m_angle = angle_spread(case.n_buses, opts)
    per_branch = np.array([branch_m_flow(br, case.base_mva, m_angle, opts) for br in case.branches])
    m_flow = np.tile(per_branch, (horizon.n_periods, 1))
    cap = float(per_branch.max()) if per_branch.size else 0.0
    return BigM(m_flow, m_angle, cap)


@dataclass
class BranchBlock:
    case: SystemCase
    horizon: Horizon
    big_m: BigM
    f: Dict[Tuple[int, int], VarRef] = field(default_factory=dict)
    p_br: Dict[Tuple[int, int], VarRef] = field(default_factory=dict)
    p_top: Dict[Tuple[int, int], Sym] = field(default_factory=dict)
    phi: Dict[Tuple[int, int], Sym] = field(default_factory=dict)
    tra: Dict[Tuple[int, int], Sym] = field(default_factory=dict)
    z: Dict[Tuple[int, int], Sym] = field(default_factory=dict)
    delta: Dict[Tuple[int, int], VarRef] = field(default_factory=dict)
    nex: Dict[Tuple[int, int], VarRef] = field(default_factory=dict)
    rows: Dict[str, List[str]] = field(default_factory=dict)
    transportation: bool = False

    @property
    def base_mva(self) -> float:
        return self.case.base_mva

    def binaries(self) -> List[VarRef]:
        return [v for d in (self.tra, self.z) for v in d.values() if isinstance(v, VarRef)]

    def _row(self, eq: str, name: str):
        self.rows.setdefault(eq, []).append(name)


def _tag(t: int, k: int) -> str:
    return f"[t={t + 1},k={k + 1}]"


def _add(terms: Dict[VarRef, float], sym: Sym, coef: float) -> float:
    """Add ``coef * sym`` to ``terms``; returns the constant part."""
    if isinstance(sym, VarRef):
        terms[sym] = terms.get(sym, 0.0) + coef
        return 0.0
    return coef * float(sym)


def build_branch_block(model: MilpModel, case: SystemCase, horizon: Horizon,
                       opts: BigMOptions = BigMOptions(), transportation: bool = False) -> BranchBlock:
    """Add the branch variables and the eq1-eq8 rows for every period to ``model``.

    With ``transportation=True`` only the balance (eq1) and capacity (eq7) rows are
    built, which is the network-flow relaxation of the same grid.
    """
    base = case.base_mva
    big_m = compute_big_m(case, horizon, opts)
    blk = BranchBlock(case, horizon, big_m, transportation=transportation)
    idx = case.bus_index
    ref = idx[case.reference_bus.id]
    NT, NK, NN = horizon.n_periods, case.n_branches, case.n_buses
    incident: List[List[Tuple[int, float]]] = [[] for _ in range(NN)]
    for k, br in enumerate(case.branches):
        incident[idx[br.from_bus]].append((k, 1.0))
        incident[idx[br.to_bus]].append((k, -1.0))

    for t in range(NT):
        for n in range(NN):
            nm = f"[t={t + 1},n={n + 1}]"
            blk.nex[t, n] = model.add_var("nex" + nm, -INF, INF)
            if not transportation:
                blk.delta[t, n] = model.add_var("delta" + nm, -INF, INF)
        if not transportation:
            name = f"ref[t={t + 1}]"
            model.add_constraint({blk.delta[t, ref]: 1.0}, "=", 0.0, name)
            blk._row("ref", name)

        for k, br in enumerate(case.branches):
            tg = _tag(t, k)
            m_flow = float(big_m.m_flow[t, k])
            f_cap = br.f_max / base if math.isfinite(br.f_max) else m_flow
            p_c = br.p_c / base
            if not br.in_service:
                tra: Sym = 1.0
            elif br.switchable and not transportation:
                tra = model.add_var("tra" + tg, 0, 1, VarKind.BINARY)
            else:
                tra = 0.0
            blk.tra[t, k] = tra

            if transportation:
                f = model.add_var("f" + tg, -INF, INF)
                blk.f[t, k] = blk.p_br[t, k] = f
                blk.p_top[t, k] = blk.phi[t, k] = blk.z[t, k] = 0.0
                _eq7(model, blk, f, tra, f_cap, tg)
                continue

            p_br = model.add_var("pbr" + tg, -INF, INF)
            blk.p_br[t, k] = p_br
            if isinstance(tra, VarRef) or tra == 1.0:
                p_top: Sym = model.add_var("ptop" + tg, -INF, INF)
                f = model.add_var("f" + tg, -INF, INF)
                name = "eq2" + tg
                model.add_constraint({f: 1.0, p_br: -1.0, p_top: 1.0}, "=", 0.0, name)
                blk._row("eq2", name)
            else:
                p_top = 0.0
                f = p_br  # eq2 collapses to an identity
            blk.f[t, k] = f
            blk.p_top[t, k] = p_top

            phi: Sym = 0.0
            if br.variable_phi:
                phi = model.add_var("phi" + tg, -INF, INF)
            blk.phi[t, k] = phi
            z: Sym = model.add_var("z" + tg, 0, 1, VarKind.BINARY) if br.variable_b else 0.0
            blk.z[t, k] = z

            d_from = blk.delta[t, idx[br.from_bus]]
            d_to = blk.delta[t, idx[br.to_bus]]
            _eq34(model, blk, br, p_br, d_from, d_to, phi, tra, z, p_c, m_flow, tg)
            _eq5(model, blk, br, d_from, d_to, tra, big_m.m_angle, tg)
            if isinstance(phi, VarRef):
                _eq6(model, blk, br, phi, tra, tg)
            _eq7(model, blk, f, tra, f_cap, tg)
            if not isinstance(p_top, float):
                _eq8(model, blk, p_top, tra, m_flow, tg)

        # eq1: nex = f * Cft
        for n in range(NN):
            terms: Dict[VarRef, float] = {blk.nex[t, n]: 1.0}
            name = f"eq1[t={t + 1},n={n + 1}]"
            for k, sign in incident[n]:
                _add(terms, blk.f[t, k], -sign)
            model.add_constraint(terms, "=", 0.0, name)
            blk._row("eq1", name)
    return blk


def _theta(terms: Dict[VarRef, float], coef: float, d_from, d_to, phi) -> float:
    terms[d_from] = terms.get(d_from, 0.0) + coef
    terms[d_to] = terms.get(d_to, 0.0) - coef
    return _add(terms, phi, coef)


def _eq34(model, blk, br: BranchParams, p_br, d_from, d_to, phi, tra, z, p_c, m_flow, tg):
    """Susceptance law.  Rows are written as ``expr >= rhs`` / ``expr <= rhs``."""
    def side(b_coef: float, z_sign: float, pc_sign: float):
        # p_br - b*theta + z_sign*M*z + pc_sign*(1-tra)*p_c
        terms: Dict[VarRef, float] = {p_br: 1.0}
        const = _theta(terms, -b_coef, d_from, d_to, phi)
        const += _add(terms, z, z_sign * m_flow)
        const += pc_sign * p_c
        const += _add(terms, tra, -pc_sign * p_c)
        return terms, const

    fixed = not isinstance(z, VarRef)
    lo_terms, lo_c = side(br.b_min, 1.0, 1.0)    # p_br - Bmin th + M z + (1-tra) pc >= 0
    up_terms, up_c = side(br.b_max, -1.0, -1.0)  # p_br - Bmax th - M z - (1-tra) pc <= 0
    if fixed and br.b_min == br.b_max and p_c == 0.0:
        name = "eq3" + tg
        model.add_constraint(lo_terms, "=", -lo_c, name)
        blk._row("eq3", name)
    else:
        model.add_constraint(lo_terms, ">=", -lo_c, "eq3lo" + tg)
        model.add_constraint(up_terms, "<=", -up_c, "eq3up" + tg)
        blk._row("eq3", "eq3lo" + tg)
        blk._row("eq3", "eq3up" + tg)
    if fixed:
        return  # with z = 0 the eq4 pair is slack by M and omitted
    # eq4: p_br - Bmax th + M (1-z) + (1-tra) pc >= 0 ; p_br - Bmin th - M (1-z) - (1-tra) pc <= 0
    lo_terms, lo_c = side(br.b_max, -1.0, 1.0)
    lo_c += m_flow
    up_terms, up_c = side(br.b_min, 1.0, -1.0)
    up_c -= m_flow
    model.add_constraint(lo_terms, ">=", -lo_c, "eq4lo" + tg)
    model.add_constraint(up_terms, "<=", -up_c, "eq4up" + tg)
    blk._row("eq4", "eq4lo" + tg)
    blk._row("eq4", "eq4up" + tg)


def _eq5(model, blk, br, d_from, d_to, tra, m_angle, tg):
    terms = {d_from: 1.0, d_to: -1.0}
    if isinstance(tra, VarRef) or br.delta_max > 0 or tra == 1.0:
        lim = br.delta_max + (m_angle * tra if not isinstance(tra, VarRef) else 0.0)
        up = dict(terms)
        lo = dict(terms)
        if isinstance(tra, VarRef):
            up[tra] = -m_angle
            lo[tra] = m_angle
        model.add_constraint(up, "<=", lim, "eq5up" + tg)
        model.add_constraint(lo, ">=", -lim, "eq5lo" + tg)
        blk._row("eq5", "eq5up" + tg)
        blk._row("eq5", "eq5lo" + tg)
    else:
        model.add_constraint(terms, "=", 0.0, "eq5" + tg)
        blk._row("eq5", "eq5" + tg)


def _eq6(model, blk, br, phi, tra, tg):
    lo = {phi: 1.0}
    up = {phi: 1.0}
    lo_rhs = br.phi_min - _add(lo, tra, br.phi_min)
    up_rhs = br.phi_max - _add(up, tra, br.phi_max)
    model.add_constraint(lo, ">=", lo_rhs, "eq6lo" + tg)
    model.add_constraint(up, "<=", up_rhs, "eq6up" + tg)
    blk._row("eq6", "eq6lo" + tg)
    blk._row("eq6", "eq6up" + tg)


def _eq7(model, blk, f, tra, f_cap, tg):
    if not isinstance(tra, VarRef) and not math.isfinite(f_cap):
        return
    lo = {f: 1.0}
    up = {f: 1.0}
    up_rhs = f_cap - _add(up, tra, f_cap)
    lo_rhs = -f_cap - _add(lo, tra, -f_cap)
    model.add_constraint(up, "<=", up_rhs, "eq7up" + tg)
    model.add_constraint(lo, ">=", lo_rhs, "eq7lo" + tg)
    blk._row("eq7", "eq7up" + tg)
    blk._row("eq7", "eq7lo" + tg)


def _eq8(model, blk, p_top, tra, m_flow, tg):
    up = {p_top: 1.0}
    lo = {p_top: 1.0}
    up_rhs = -_add(up, tra, -m_flow)
    lo_rhs = -_add(lo, tra, m_flow)
    model.add_constraint(up, "<=", up_rhs, "eq8up" + tg)
    model.add_constraint(lo, ">=", lo_rhs, "eq8lo" + tg)
    blk._row("eq8", "eq8up" + tg)
    blk._row("eq8", "eq8lo" + tg)


# ---------------------------------------------------------------------------
# solution extraction

@dataclass(frozen=True)
class BranchState:
    period: int
    branch: int
    label: str
    flow_mw: float
    p_br_mw: float
    p_top_mw: float
    shift_deg: float
    angle_diff: float
    b_effective: Optional[float]
    is_open: bool


def _val(res: SolveResult, sym: Sym) -> float:
    return res.value(sym)


def extract_branch_state(block: BranchBlock, result: SolveResult,
                         int_tol: float = 1e-4) -> List[BranchState]:
    """Per-(t,k) records in MW/degrees; ``b_effective`` is None when indeterminate."""
    if result.status is not Status.OPTIMAL or result.values is None:
        raise ValueError(f"cannot extract branch state from a {result.status.value} result")
    base = block.base_mva
    case = block.case
    idx = case.bus_index
    out = []
    for t in range(block.horizon.n_periods):
        for k, br in enumerate(case.branches):
            tra = _val(result, block.tra[t, k])
            z = _val(result, block.z[t, k])
            for nm, v in (("tra", tra), ("z", z)):
                if abs(v - round(v)) > int_tol:
                    raise NonIntegralBinary(f"{nm}{_tag(t, k)} = {v}")
            f = _val(result, block.f[t, k])
            p_br = _val(result, block.p_br[t, k])
            p_top = _val(result, block.p_top[t, k])
            phi = _val(result, block.phi[t, k])
            if block.transportation:
                dd = math.nan
                b_eff = None
            else:
                dd = (_val(result, block.delta[t, idx[br.from_bus]])
                      - _val(result, block.delta[t, idx[br.to_bus]]))
                theta = dd + phi
                if br.typology in (BranchTypology.HVDC, BranchTypology.ZIL) or abs(theta) <= 1e-8:
                    b_eff = None
                else:
                    b_eff = p_br / theta
            out.append(BranchState(t, k, br.label, f * base, p_br * base, p_top * base,
                                   math.degrees(phi), dd, b_eff, bool(round(tra))))
    return out
