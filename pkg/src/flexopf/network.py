"""Grid, horizon and per-branch flexibility data.

Powers are stored in MW and angles in radians; the optimisation layer converts to
per unit on ``SystemCase.base_mva``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

DEFAULT_DELTA_MAX = math.pi / 2


class BranchTypology(str, enum.Enum):
    FIXED_AC = "FIXED_AC"
    VSSA = "VSSA"
    HVDC = "HVDC"
    ZIL = "ZIL"


@dataclass(frozen=True)
class Bus:
    id: int
    base_load: float = 0.0
    is_reference: bool = False
    base_kv: float = 0.0
    zone: int = 1


@dataclass(frozen=True)
class Generator:
    bus: int
    p_min: float
    p_max: float
    ramp_up: float = math.inf
    ramp_down: float = math.inf
    startup_ramp: float = math.inf
    shutdown_ramp: float = math.inf
    fixed_cost: float = 0.0
    startup_cost: float = 0.0
    shutdown_cost: float = 0.0
    variable_cost: float = 0.0
    initially_on: bool = True
    name: str = ""
    in_service: bool = True
    # optional convex piecewise-linear cost: (width MW, $/MWh) per segment from p_min upward
    cost_segments: Tuple[Tuple[float, float], ...] = ()


@dataclass(frozen=True)
class BranchParams:
    """Typology parameters of one branch (powers in MW, angles in rad, B in p.u.)."""

    from_bus: int
    to_bus: int
    typology: BranchTypology = BranchTypology.FIXED_AC
    b_min: float = 0.0
    b_max: float = 0.0
    p_c: float = 0.0
    delta_max: float = DEFAULT_DELTA_MAX
    phi_min: float = 0.0
    phi_max: float = 0.0
    f_max: float = math.inf
    switchable: bool = False
    in_service: bool = True
    # raw series data, kept only to recognise ZIL candidates and to write cases back
    r: float = 0.0
    x: float = 0.0
    charging_b: float = 0.0
    rate_a: float = 0.0
    tap: float = 0.0
    shift_deg: float = 0.0
    circuit: int = 1

    @property
    def label(self) -> str:
        base = f"{self.from_bus}-{self.to_bus}"
        return base if self.circuit == 1 else f"{base}#{self.circuit}"

    @property
    def variable_b(self) -> bool:
        return self.b_max > self.b_min

    @property
    def variable_phi(self) -> bool:
        return self.phi_max > self.phi_min


@dataclass(frozen=True)
class Horizon:
    n_periods: int = 1
    load_multipliers: Tuple[float, ...] = (1.0,)
    reserve_fraction: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "load_multipliers", tuple(float(v) for v in self.load_multipliers))
        problems = horizon_violations(self)
        if problems:
            raise ValueError("; ".join(problems))


def horizon_violations(h: Horizon) -> List[str]:
    out = []
    if h.n_periods < 1:
        out.append("n_periods must be >= 1")
    if len(h.load_multipliers) != h.n_periods:
        out.append(f"{len(h.load_multipliers)} load multipliers for {h.n_periods} periods")
    if any(v <= 0 for v in h.load_multipliers):
        out.append("load multipliers must be > 0")
    if not 0 <= h.reserve_fraction < 1:
        out.append("reserve_fraction must lie in [0, 1)")
    return out


@dataclass
class SystemCase:
    base_mva: float
    buses: List[Bus]
    generators: List[Generator]
    branches: List[BranchParams]
    name: str = "case"
    warnings: List[str] = field(default_factory=list)

    def __post_init__(self):
        self._index = {b.id: i for i, b in enumerate(self.buses)}

    @property
    def bus_index(self) -> Dict[int, int]:
        return self._index

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def n_branches(self) -> int:
        return len(self.branches)

    @property
    def reference_bus(self) -> Bus:
        return next(b for b in self.buses if b.is_reference)

    @property
    def cft(self) -> sp.csr_matrix:
        """N_K x N_N connection matrix (+1 at the from bus, -1 at the to bus)."""
        rows, cols, vals = [], [], []
        for k, br in enumerate(self.branches):
            rows += [k, k]
            cols += [self._index[br.from_bus], self._index[br.to_bus]]
            vals += [1.0, -1.0]
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n_branches, self.n_buses))

    @property
    def gen_map(self) -> sp.csr_matrix:
        """N_N x N_G generator-to-bus incidence."""
        rows = [self._index[g.bus] for g in self.generators]
        cols = list(range(len(self.generators)))
        return sp.csr_matrix((np.ones(len(rows)), (rows, cols)),
                             shape=(self.n_buses, len(self.generators)))

    def loads(self, multiplier: float = 1.0) -> np.ndarray:
        return np.array([b.base_load for b in self.buses]) * multiplier

    def find_branches(self, from_bus: int, to_bus: int) -> List[int]:
        pair = {(from_bus, to_bus), (to_bus, from_bus)}
        return [k for k, br in enumerate(self.branches) if (br.from_bus, br.to_bus) in pair]

    def branch_by_label(self, label: str) -> int:
        for k, br in enumerate(self.branches):
            if br.label == label:
                return k
        raise KeyError(label)

    def with_branches(self, branches: Sequence[BranchParams]) -> "SystemCase":
        return SystemCase(self.base_mva, list(self.buses), list(self.generators), list(branches),
                          self.name, list(self.warnings))

    def with_generators(self, generators: Sequence[Generator]) -> "SystemCase":
        return SystemCase(self.base_mva, list(self.buses), list(generators), list(self.branches),
                          self.name, list(self.warnings))


# ---------------------------------------------------------------------------
# validation

def branch_violations(br: BranchParams, where: str = "") -> List[str]:
    tag = where or f"branch {br.label}"
    out = []
    t = br.typology
    if br.b_min < 0 or br.b_max < 0:
        out.append(f"{tag}: susceptance bounds must be non-negative magnitudes")
    if br.b_min > br.b_max:
        out.append(f"{tag}: b_min {br.b_min} > b_max {br.b_max}")
    if t is BranchTypology.FIXED_AC and br.b_min != br.b_max:
        out.append(f"{tag}: FIXED_AC requires b_min == b_max")
    if t is BranchTypology.FIXED_AC and br.variable_phi:
        out.append(f"{tag}: FIXED_AC has no shift-angle range (retype as VSSA)")
    if t in (BranchTypology.ZIL, BranchTypology.HVDC):
        if br.b_min != 0 or br.b_max != 0:
            out.append(f"{tag}: {t.value} requires b_min = b_max = 0")
        if not br.p_c > 0:
            out.append(f"{tag}: {t.value} requires p_c > 0")
        if not math.isfinite(br.p_c):
            out.append(f"{tag}: {t.value} capacity p_c must be finite")
        if br.phi_min != 0 or br.phi_max != 0:
            out.append(f"{tag}: {t.value} requires phi_min = phi_max = 0")
    else:
        if br.p_c != 0:
            out.append(f"{tag}: {t.value} requires p_c = 0")
        if br.b_max <= 0:
            out.append(f"{tag}: {t.value} requires a positive susceptance")
    if t is BranchTypology.ZIL and br.delta_max != 0:
        out.append(f"{tag}: ZIL requires delta_max = 0 (got {br.delta_max})")
    if br.delta_max < 0:
        out.append(f"{tag}: delta_max must be >= 0")
    if not br.phi_min <= 0 <= br.phi_max:
        out.append(f"{tag}: shift range [{br.phi_min}, {br.phi_max}] must contain 0")
    if not br.f_max > 0:
        out.append(f"{tag}: f_max must be > 0")
    if not br.in_service and not br.switchable:
        out.append(f"{tag}: out-of-service branch must be switchable")
    return out


def validate_case(case: SystemCase, horizon: Optional[Horizon] = None,
                  allow_negative_load: bool = False) -> List[str]:
    """Return every invariant violation; an empty list means the case is valid.

    ``allow_negative_load`` accepts buses whose net load is negative (embedded
    generation folded into the load column, as in some distribution files).
    """
    out: List[str] = []
    refs = [b.id for b in case.buses if b.is_reference]
    if len(refs) != 1:
        out.append(f"expected exactly one reference bus, found {len(refs)}: {refs}")
    seen = set()
    for b in case.buses:
        if b.id in seen:
            out.append(f"bus {b.id}: duplicate id")
        seen.add(b.id)
        if b.base_load < 0 and not allow_negative_load:
            out.append(f"bus {b.id}: negative base load {b.base_load}")
    for i, g in enumerate(case.generators):
        tag = f"generator {i + 1} (bus {g.bus})"
        if g.bus not in case.bus_index:
            out.append(f"{tag}: unknown bus")
        if not 0 <= g.p_min <= g.p_max:
            out.append(f"{tag}: need 0 <= p_min <= p_max")
        for name in ("ramp_up", "ramp_down", "startup_ramp", "shutdown_ramp"):
            if not getattr(g, name) > 0:
                out.append(f"{tag}: {name} must be > 0")
    for br in case.branches:
        if br.from_bus not in case.bus_index or br.to_bus not in case.bus_index:
            out.append(f"branch {br.label}: unknown terminal bus")
            continue
        if br.from_bus == br.to_bus:
            out.append(f"branch {br.label}: both terminals on one bus")
        out.extend(branch_violations(br))
    if case.branches and not out:
        cft = case.cft
        sums = np.asarray(cft.sum(axis=1)).ravel()
        if np.any(sums != 0):
            out.append("connection matrix rows must sum to zero")
        adj = abs(cft.T) @ abs(cft)
        ncomp, _ = connected_components(adj, directed=False)
        if ncomp != 1:
            out.append(f"network graph has {ncomp} connected components")
    if horizon is not None:
        out.extend(horizon_violations(horizon))
    return out


def retype(br: BranchParams, **changes) -> BranchParams:
    return replace(br, **changes)
