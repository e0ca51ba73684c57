"""Solution tables, reference fixtures and verification.

A rendered solution has one row per period and the columns

    period, <generator outputs MW>, [on:<generator>], <branch flows MW>

where an open branch shows the literal ``OFF``.  Numbers are written with 17
significant digits so that parsing a rendering gives back the exact floats.
"""
from __future__ import annotations

import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .branch import BranchState, extract_branch_state
from .formulations import Assembled, Formulation, UcProblem
from .milp.model import SolveResult, Status
from .network import Generator, SystemCase

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

OFF = "OFF"
Cell = Union[float, str]


class DimensionMismatch(ValueError):
    pass


class ReferenceFormatError(ValueError):
    pass


@dataclass
class DispatchSolution:
    case_name: str
    formulation: str
    status: str
    objective: float
    gap: float
    generator_names: List[str]
    branch_labels: List[str]
    output_mw: np.ndarray                 # (N_T, N_G)
    commitment: Optional[np.ndarray]      # (N_T, N_G) 0/1, NCUC only
    startup: Optional[np.ndarray]
    shutdown: Optional[np.ndarray]
    branches: List[BranchState]
    iterations: int = 0
    nodes: int = 0
    case_fingerprint: str = ""
    overlay_fingerprint: str = ""
    label: str = ""

    @property
    def n_periods(self) -> int:
        return self.output_mw.shape[0]

    def flows(self) -> Tuple[np.ndarray, np.ndarray]:
        """(flow MW, open mask), both (N_T, N_K)."""
        NT, NK = self.n_periods, len(self.branch_labels)
        flow = np.zeros((NT, NK))
        open_ = np.zeros((NT, NK), dtype=bool)
        for s in self.branches:
            flow[s.period, s.branch] = s.flow_mw
            open_[s.period, s.branch] = s.is_open
        return flow, open_

    def columns(self) -> List[str]:
        cols = list(self.generator_names)
        if self.commitment is not None:
            cols += [f"on:{g}" for g in self.generator_names]
        return cols + list(self.branch_labels)

    def table(self) -> List[List[Cell]]:
        flow, open_ = self.flows()
        rows = []
        for t in range(self.n_periods):
            row: List[Cell] = [float(v) for v in self.output_mw[t]]
            if self.commitment is not None:
                row += [float(v) for v in self.commitment[t]]
            row += [OFF if open_[t, k] else float(flow[t, k]) for k in range(flow.shape[1])]
            rows.append(row)
        return rows

    def column(self, name: str) -> List[Cell]:
        cols = self.columns()
        if name not in cols:
            raise DimensionMismatch(f"solution has no column {name!r}")
        j = cols.index(name)
        return [row[j] for row in self.table()]


def solution_from_result(asm: Assembled, result: SolveResult, case_fingerprint: str = "",
                         overlay_fingerprint: str = "", label: str = "") -> DispatchSolution:
    if result.values is None:
        raise ValueError(f"no primal values to report (status {result.status.value})")
    prob = asm.problem
    case = prob.case
    commitment = startup = shutdown = None
    if isinstance(prob, UcProblem):
        commitment = prob.commitment(result)
        NT, NG = commitment.shape
        startup = np.zeros((NT, NG), dtype=int)
        shutdown = np.zeros((NT, NG), dtype=int)
        for (t, g), v in prob.y.items():
            startup[t, g] = int(round(result[v]))
        for (t, g), v in prob.w.items():
            shutdown[t, g] = int(round(result[v]))
    return DispatchSolution(
        case_name=case.name, formulation=asm.formulation.value, status=result.status.value,
        objective=float(result.objective), gap=float(result.gap),
        generator_names=[g.name or f"G{i + 1}" for i, g in enumerate(case.generators)],
        branch_labels=[br.label for br in case.branches],
        output_mw=prob.output_mw(result), commitment=commitment, startup=startup, shutdown=shutdown,
        branches=extract_branch_state(asm.block, result),
        iterations=result.stats.iterations, nodes=result.stats.nodes,
        case_fingerprint=case_fingerprint, overlay_fingerprint=overlay_fingerprint, label=label)


# ---------------------------------------------------------------------------
# cost recomputation

def energy_cost(gen: Generator, p_mw: float) -> float:
    """Variable cost of one hour at ``p_mw``; segments are filled cheapest first."""
    if not gen.cost_segments:
        return gen.variable_cost * p_mw
    left, total = p_mw, 0.0
    for width, slope in sorted(gen.cost_segments, key=lambda s: s[1]):
        take = min(width, max(left, 0.0))
        total += take * slope
        left -= take
    return total


def recompute_cost(sol: DispatchSolution, case: SystemCase) -> float:
    total = 0.0
    for t in range(sol.n_periods):
        for g, gen in enumerate(case.generators):
            total += energy_cost(gen, sol.output_mw[t, g])
            if sol.commitment is not None:
                total += gen.fixed_cost * sol.commitment[t, g]
                total += gen.startup_cost * sol.startup[t, g]
                total += gen.shutdown_cost * sol.shutdown[t, g]
    return total


def cost_discrepancy(sol: DispatchSolution, case: SystemCase) -> float:
    """Relative difference between the solver objective and the recomputed cost."""
    again = recompute_cost(sol, case)
    return abs(again - sol.objective) / max(1.0, abs(sol.objective))


# ---------------------------------------------------------------------------
# rendering

def _num(v: float) -> str:
    v = float(v) + 0.0  # no "-0"
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return format(v, ".17g")


def _cell(v: Cell) -> str:
    return v if isinstance(v, str) else _num(v)


def render_solution(sol: DispatchSolution, fmt: str = "csv") -> str:
    """Deterministic text rendering: ``csv`` or ``text`` (structured JSON)."""
    if fmt == "csv":
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["period"] + sol.columns())
        for t, row in enumerate(sol.table()):
            w.writerow([t + 1] + [_cell(v) for v in row])
        return out.getvalue()
    if fmt in ("text", "json", "structured-text"):
        doc = {
            "case": sol.case_name,
            "label": sol.label,
            "formulation": sol.formulation,
            "status": sol.status,
            "objective": _num(sol.objective),
            "gap": _num(sol.gap),
            "iterations": sol.iterations,
            "nodes": sol.nodes,
            "case_sha256": sol.case_fingerprint,
            "overlay_sha256": sol.overlay_fingerprint,
            "columns": ["period"] + sol.columns(),
            "rows": [[t + 1] + [_cell(v) for v in row] for t, row in enumerate(sol.table())],
            "branches": [
                {"period": s.period + 1, "branch": s.label, "open": s.is_open,
                 "flow_mw": _num(s.flow_mw), "shift_deg": _num(s.shift_deg),
                 "b_effective": None if s.b_effective is None else _num(s.b_effective)}
                for s in sol.branches
            ],
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


def parse_table(text: str) -> Tuple[List[str], List[List[Cell]]]:
    """Read a rendered CSV (``#`` comment lines allowed) into header and typed rows."""
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    rows = []
    for rec in reader:
        if len(rec) != len(header):
            raise DimensionMismatch(f"row {rec[:1]} has {len(rec)} cells, header has {len(header)}")
        rows.append([c.strip() if c.strip().upper() == OFF else float(c) for c in rec])
    return header, rows


# ---------------------------------------------------------------------------
# references

@dataclass
class RefCell:
    period: int          # 1-based
    column: str
    expected: Cell       # number (exact kind) or "OFF" (off-flag kind)
    tolerance: float = 0.0

    @property
    def kind(self) -> str:
        return "off-flag" if self.expected == OFF else "exact"


@dataclass
class ChainEntry:
    label: str
    overlay: Optional[str] = None
    formulation: Optional[str] = None


@dataclass
class ReferenceTable:
    """Expected values: per-cell table entries and/or an ordering chain of objectives.

    ``chain`` lists labels whose objectives must be non-increasing; pairs in
    ``strict`` must decrease strictly.  ``scalars`` are objective targets per label
    with a relative tolerance.
    """

    name: str = "reference"
    n_periods: Optional[int] = None
    cells: List[RefCell] = field(default_factory=list)
    chain: List[ChainEntry] = field(default_factory=list)
    strict: List[Tuple[str, str]] = field(default_factory=list)
    scalars: Dict[str, float] = field(default_factory=dict)
    scalar_rtol: float = 0.0
    description: str = ""


@dataclass
class Check:
    name: str
    kind: str
    expected: object
    actual: object
    ok: bool

    def line(self) -> str:
        flag = "ok  " if self.ok else "FAIL"
        return f"{flag} {self.name}: expected {self.expected}, got {self.actual}"


@dataclass
class VerifyReport:
    reference: str
    checks: List[Check]

    @property
    def passed(self) -> bool:
        return all(c.ok for c in self.checks)

    @property
    def failures(self) -> List[Check]:
        return [c for c in self.checks if not c.ok]

    def summary(self) -> str:
        n, bad = len(self.checks), len(self.failures)
        verdict = "PASS" if bad == 0 else "FAIL"
        return f"{verdict} {self.reference}: {n - bad}/{n} checks passed"

    def render(self) -> str:
        return "\n".join([c.line() for c in self.checks] + [self.summary()]) + "\n"


def reference_from_table(header: Sequence[str], rows: Sequence[Sequence[Cell]],
                         tolerance: float = 0.0, name: str = "table") -> ReferenceTable:
    cols = list(header)
    if cols and cols[0] == "period":
        cols = cols[1:]
        rows = [r[1:] for r in rows]
    cells = [RefCell(t + 1, c, v, tolerance) for t, row in enumerate(rows) for c, v in zip(cols, row)]
    return ReferenceTable(name=name, n_periods=len(rows), cells=cells)


def parse_reference(text: str, name: str = "reference") -> ReferenceTable:
    """Reference documents are TOML; see ``data/refs`` for the fields."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ReferenceFormatError(f"{name}: not valid TOML: {exc}") from exc
    ref = ReferenceTable(name=str(doc.get("name", name)), description=str(doc.get("description", "")))
    if "columns" in doc:
        tol = float(doc.get("tolerance", 0.0))
        rows = doc.get("rows", [])
        tab = reference_from_table(doc["columns"], [[v if isinstance(v, str) else float(v) for v in r]
                                                    for r in rows], tol, ref.name)
        for c in tab.cells:
            if isinstance(c.expected, str) and c.expected.upper() != OFF:
                raise ReferenceFormatError(f"{name}: unknown cell token {c.expected!r}")
        ref.cells, ref.n_periods = tab.cells, tab.n_periods
    for e in doc.get("chain", []):
        if isinstance(e, str):
            ref.chain.append(ChainEntry(e))
        else:
            ref.chain.append(ChainEntry(str(e["label"]), e.get("overlay"), e.get("formulation")))
    ref.strict = [(str(a), str(b)) for a, b in doc.get("strict", [])]
    labels = {e.label for e in ref.chain}
    for a, b in ref.strict:
        if a not in labels or b not in labels:
            raise ReferenceFormatError(f"{name}: strict pair {a}>{b} not in the chain")
    ref.scalars = {str(k): float(v) for k, v in doc.get("scalars", {}).items()}
    ref.scalar_rtol = float(doc.get("scalar_rtol", 0.0))
    return ref


def load_reference(path: Union[str, Path]) -> ReferenceTable:
    from .ingest import resolve_data_path
    p = resolve_data_path(path, "refs")
    return parse_reference(p.read_text(), name=p.stem)


def verify(sol: Union[DispatchSolution, Mapping[str, DispatchSolution], None], ref: ReferenceTable,
           objectives: Optional[Mapping[str, float]] = None,
           resolve: Optional[Callable[[ChainEntry], float]] = None) -> VerifyReport:
    """Check table cells against ``sol`` and chains/scalars against objectives.

    Objectives come from ``objectives``, from solutions keyed by label, or from
    ``resolve`` for chain entries that are still missing.
    """
    sols: Dict[str, DispatchSolution] = {}
    if isinstance(sol, DispatchSolution):
        sols[sol.label or sol.case_name] = sol
    elif sol is not None:
        sols.update(sol)
    objs: Dict[str, float] = {k: s.objective for k, s in sols.items()}
    objs.update(objectives or {})
    checks: List[Check] = []

    if ref.cells:
        if len(sols) != 1:
            raise DimensionMismatch("table references need exactly one solution")
        (only,) = sols.values()
        if ref.n_periods is not None and ref.n_periods != only.n_periods:
            raise DimensionMismatch(f"reference has {ref.n_periods} periods, solution {only.n_periods}")
        cols = only.columns()
        missing = sorted({c.column for c in ref.cells} - set(cols))
        if missing:
            raise DimensionMismatch(f"solution lacks columns {missing}")
        table = only.table()
        for c in ref.cells:
            got = table[c.period - 1][cols.index(c.column)]
            name = f"t={c.period} {c.column}"
            if c.kind == "off-flag":
                checks.append(Check(name, "off-flag", OFF, got, got == OFF))
            else:
                ok = not isinstance(got, str) and abs(got - c.expected) <= c.tolerance
                checks.append(Check(name, "exact", f"{_num(c.expected)}±{_num(c.tolerance)}",
                                    got if isinstance(got, str) else _num(round(got, 6)), ok))

    if ref.chain:
        for e in ref.chain:
            if e.label not in objs:
                if resolve is None:
                    raise DimensionMismatch(f"no objective for chain entry {e.label!r}")
                objs[e.label] = resolve(e)
        tol = 1e-6
        for a, b in zip(ref.chain, ref.chain[1:]):
            va, vb = objs[a.label], objs[b.label]
            ok = va >= vb - tol * max(1.0, abs(va))
            checks.append(Check(f"{a.label} >= {b.label}", "ordering-only",
                                f"{a.label} >= {b.label}", f"{_num(va)} vs {_num(vb)}", ok))
        for a, b in ref.strict:
            va, vb = objs[a], objs[b]
            ok = va > vb + tol * max(1.0, abs(va))
            checks.append(Check(f"{a} > {b}", "ordering-only", f"{a} > {b}", f"{_num(va)} vs {_num(vb)}", ok))

    for label, target in ref.scalars.items():
        if label not in objs:
            continue
        got = objs[label]
        ok = abs(got - target) <= ref.scalar_rtol * abs(target)
        checks.append(Check(f"objective {label}", "exact", f"{_num(target)} (rtol {ref.scalar_rtol})",
                            _num(round(got, 6)), ok))
    return VerifyReport(ref.name, checks)
