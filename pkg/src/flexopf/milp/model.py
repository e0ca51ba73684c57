"""Solver-agnostic MILP container.

Variables and constraints are stored row by row with names; :meth:`MilpModel.to_arrays`
turns them into the sparse column form consumed by the solvers.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

INF = math.inf


class VarKind(str, enum.Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"
    INTEGER = "integer"


class Sense(str, enum.Enum):
    LE = "<="
    EQ = "="
    GE = ">="


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    ITERATION_LIMIT = "IterationLimit"
    NODE_LIMIT = "NodeLimit"
    TIME_LIMIT = "TimeLimit"


class ModelError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class VarRef:
    index: int
    name: str
    kind: VarKind
    lower: float
    upper: float
    owner: int = field(repr=False, default=0)

    def __hash__(self):
        return hash((self.owner, self.index))

    def __eq__(self, other):
        return isinstance(other, VarRef) and other.owner == self.owner and other.index == self.index

    @property
    def is_integer(self) -> bool:
        return self.kind is not VarKind.CONTINUOUS


@dataclass
class LinConstraint:
    terms: List[Tuple[VarRef, float]]
    sense: Sense
    rhs: float
    name: str

    def activity(self, values: Sequence[float]) -> float:
        return sum(coef * values[v.index] for v, coef in self.terms)

    def violation(self, values: Sequence[float]) -> float:
        a = self.activity(values)
        if self.sense is Sense.LE:
            return max(0.0, a - self.rhs)
        if self.sense is Sense.GE:
            return max(0.0, self.rhs - a)
        return abs(a - self.rhs)


Terms = Union[Mapping[VarRef, float], Iterable[Tuple[VarRef, float]]]


def _merge(terms: Terms) -> List[Tuple[VarRef, float]]:
    items = terms.items() if isinstance(terms, Mapping) else terms
    merged: Dict[VarRef, float] = {}
    for v, c in items:
        c = float(c)
        if not math.isfinite(c):
            raise ModelError(f"non-finite coefficient {c} on {v.name}")
        merged[v] = merged.get(v, 0.0) + c
    return [(v, c) for v, c in merged.items() if c != 0.0]


_model_ids = iter(range(1, 1 << 62))


class MilpModel:
    """A minimisation problem ``min c'x + c0`` over linear rows and bounded variables."""

    def __init__(self, name: str = "model"):
        self.name = name
        self.variables: List[VarRef] = []
        self.constraints: List[LinConstraint] = []
        self.objective: List[Tuple[VarRef, float]] = []
        self.objective_constant = 0.0
        self._id = next(_model_ids)
        self._names: Dict[str, VarRef] = {}

    def __repr__(self):
        return (f"MilpModel({self.name!r}, vars={len(self.variables)}, "
                f"rows={len(self.constraints)}, ints={self.num_integer})")

    @property
    def num_integer(self) -> int:
        return sum(v.is_integer for v in self.variables)

    def add_var(self, name: str, lower: float = 0.0, upper: float = INF,
                kind: VarKind = VarKind.CONTINUOUS) -> VarRef:
        kind = VarKind(kind)
        lower, upper = float(lower), float(upper)
        if kind is VarKind.BINARY:
            lower, upper = max(lower, 0.0), min(upper, 1.0)
        if lower > upper:
            raise ModelError(f"variable {name}: lower {lower} > upper {upper}")
        if name in self._names:
            raise ModelError(f"duplicate variable name {name}")
        v = VarRef(len(self.variables), name, kind, lower, upper, self._id)
        self.variables.append(v)
        self._names[name] = v
        return v

    def var(self, name: str) -> VarRef:
        return self._names[name]

    def set_bounds(self, v: VarRef, lower: float, upper: float) -> VarRef:
        self._check(v)
        nv = VarRef(v.index, v.name, v.kind, float(lower), float(upper), self._id)
        self.variables[v.index] = nv
        self._names[v.name] = nv
        return nv

    def _check(self, v: VarRef):
        if v.owner != self._id:
            raise ModelError(f"variable {v.name} belongs to another model")

    def add_constraint(self, terms: Terms, sense: Union[Sense, str], rhs: float,
                       name: str) -> LinConstraint:
        merged = _merge(terms)
        for v, _ in merged:
            self._check(v)
        if not math.isfinite(rhs):
            raise ModelError(f"constraint {name}: non-finite rhs")
        con = LinConstraint(merged, Sense(sense), float(rhs), name)
        self.constraints.append(con)
        return con

    def set_objective(self, terms: Terms, constant: float = 0.0):
        merged = _merge(terms)
        for v, _ in merged:
            self._check(v)
        self.objective = merged
        self.objective_constant = float(constant)

    def add_objective_terms(self, terms: Terms, constant: float = 0.0):
        self.set_objective(list(self.objective) + list(_merge(terms)),
                           self.objective_constant + constant)

    def copy(self) -> "MilpModel":
        m = MilpModel(self.name)
        m._id = self._id
        m.variables = list(self.variables)
        m._names = dict(self._names)
        m.constraints = [LinConstraint(list(c.terms), c.sense, c.rhs, c.name)
                         for c in self.constraints]
        m.objective = list(self.objective)
        m.objective_constant = self.objective_constant
        return m

    def relaxed(self) -> "MilpModel":
        """Copy with every integrality requirement dropped."""
        m = self.copy()
        m.variables = [VarRef(v.index, v.name, VarKind.CONTINUOUS, v.lower, v.upper, v.owner)
                       for v in self.variables]
        m._names = {v.name: v for v in m.variables}
        return m

    def objective_value(self, values: Sequence[float]) -> float:
        return self.objective_constant + sum(c * values[v.index] for v, c in self.objective)

    def max_violation(self, values: Sequence[float]) -> float:
        worst = 0.0
        for v in self.variables:
            x = values[v.index]
            worst = max(worst, v.lower - x, x - v.upper)
        for con in self.constraints:
            worst = max(worst, con.violation(values))
        return worst

    def to_arrays(self) -> "ModelArrays":
        n, m = len(self.variables), len(self.constraints)
        rows, cols, vals = [], [], []
        rl = np.empty(m)
        ru = np.empty(m)
        for i, con in enumerate(self.constraints):
            for v, c in con.terms:
                rows.append(i)
                cols.append(v.index)
                vals.append(c)
            rl[i] = con.rhs if con.sense is not Sense.LE else -INF
            ru[i] = con.rhs if con.sense is not Sense.GE else INF
        A = sp.csc_matrix((vals, (rows, cols)), shape=(m, n))
        c = np.zeros(n)
        for v, coef in self.objective:
            c[v.index] += coef
        lb = np.array([v.lower for v in self.variables], dtype=float)
        ub = np.array([v.upper for v in self.variables], dtype=float)
        integer = np.array([v.is_integer for v in self.variables], dtype=bool)
        return ModelArrays(c, A, rl, ru, lb, ub, integer, self.objective_constant)


@dataclass
class ModelArrays:
    c: np.ndarray
    A: sp.csc_matrix
    row_lower: np.ndarray
    row_upper: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    integer: np.ndarray
    offset: float = 0.0


@dataclass
class SolveStats:
    iterations: int = 0
    nodes: int = 0
    wall_time: float = 0.0
    incumbents: List[float] = field(default_factory=list)


@dataclass
class SolveResult:
    status: Status
    objective: float = math.nan
    values: Optional[np.ndarray] = None
    gap: float = math.inf
    bound: float = -math.inf
    stats: SolveStats = field(default_factory=SolveStats)
    duals: Optional[np.ndarray] = None

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL

    def __getitem__(self, v: VarRef) -> float:
        if self.values is None:
            raise KeyError(v.name)
        return float(self.values[v.index])

    def value(self, v, default: float = 0.0) -> float:
        """Value of ``v``; numbers pass through so constant-substituted symbols work."""
        if isinstance(v, VarRef):
            return self[v]
        if v is None:
            return default
        return float(v)
