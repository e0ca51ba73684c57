"""Free-format MPS export (and a reader for the same subset).

Binary columns sit between ``INTORG``/``INTEND`` markers and carry a ``BV`` bound;
other integer columns get explicit ``LO``/``UP`` bounds.  The objective constant is
written as the negated right-hand side of the objective row, which is how common
readers (HiGHS, CPLEX, Gurobi) interpret it.
"""
from __future__ import annotations

import io
import logging
import math
import re
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

from .model import INF, MilpModel, Sense, VarKind

log = logging.getLogger(__name__)

MAX_NAME = 255
OBJ_ROW = "OBJ"
_BAD = re.compile(r"[^A-Za-z0-9_\[\]=,.:()+\-]")


class MpsError(ValueError):
    pass


@dataclass
class MpsExport:
    text: str
    column_names: List[str]
    row_names: List[str]
    warnings: List[str] = field(default_factory=list)


def _fmt(v: float) -> str:
    return repr(float(v))


class _Namer:
    def __init__(self, reserved=()):
        self.used = set(reserved)
        self.warnings: List[str] = []

    def __call__(self, name: str) -> str:
        clean = _BAD.sub("_", name) or "_"
        clean = clean[:MAX_NAME]
        if clean not in self.used:
            self.used.add(clean)
            return clean
        k = 2
        while True:
            suffix = f"~{k}"
            cand = clean[: MAX_NAME - len(suffix)] + suffix
            if cand not in self.used:
                break
            k += 1
        self.warnings.append(f"name collision after sanitising {name!r}: renamed to {cand!r}")
        self.used.add(cand)
        return cand


def export_mps(model: MilpModel) -> MpsExport:
    """Serialise ``model``; the returned names map model indices to MPS names."""
    rows = _Namer(reserved=[OBJ_ROW])
    row_names = [rows(c.name) for c in model.constraints]
    cols = _Namer()
    col_names = [cols(v.name) for v in model.variables]
    warnings = rows.warnings + cols.warnings
    for w in warnings:
        log.warning(w)

    entries: List[List[Tuple[str, float]]] = [[] for _ in model.variables]
    for v, c in model.objective:
        entries[v.index].append((OBJ_ROW, c))
    for i, con in enumerate(model.constraints):
        for v, c in con.terms:
            entries[v.index].append((row_names[i], c))

    out = io.StringIO()
    out.write(f"NAME {_BAD.sub('_', model.name) or 'model'}\n")
    out.write("ROWS\n")
    out.write(f" N {OBJ_ROW}\n")
    code = {Sense.LE: "L", Sense.GE: "G", Sense.EQ: "E"}
    for i, con in enumerate(model.constraints):
        out.write(f" {code[con.sense]} {row_names[i]}\n")

    out.write("COLUMNS\n")
    in_int = False
    marker = 0
    for j, v in enumerate(model.variables):
        if v.is_integer != in_int:
            tag = "INTORG" if v.is_integer else "INTEND"
            out.write(f" MARKER{marker} 'MARKER' '{tag}'\n")
            marker += 1
            in_int = v.is_integer
        if not entries[j]:
            # keep empty columns visible to the reader
            out.write(f" {col_names[j]} {OBJ_ROW} 0.0\n")
        for row, c in entries[j]:
            out.write(f" {col_names[j]} {row} {_fmt(c)}\n")
    if in_int:
        out.write(f" MARKER{marker} 'MARKER' 'INTEND'\n")

    out.write("RHS\n")
    if model.objective_constant:
        out.write(f" RHS {OBJ_ROW} {_fmt(-model.objective_constant)}\n")
    for i, con in enumerate(model.constraints):
        if con.rhs != 0.0:
            out.write(f" RHS {row_names[i]} {_fmt(con.rhs)}\n")

    out.write("BOUNDS\n")
    for j, v in enumerate(model.variables):
        name = col_names[j]
        lo, hi = v.lower, v.upper
        if v.kind is VarKind.BINARY and lo == 0.0 and hi == 1.0:
            out.write(f" BV BND {name}\n")
        elif lo == hi:
            out.write(f" FX BND {name} {_fmt(lo)}\n")
        elif lo == -INF and hi == INF:
            out.write(f" FR BND {name}\n")
        else:
            if lo == -INF:
                out.write(f" MI BND {name}\n")
            elif lo != 0.0 or v.is_integer:
                out.write(f" LO BND {name} {_fmt(lo)}\n")
            if hi != INF:
                out.write(f" UP BND {name} {_fmt(hi)}\n")
            elif v.is_integer:
                out.write(f" PL BND {name}\n")
    out.write("ENDATA\n")
    return MpsExport(out.getvalue(), col_names, row_names, warnings)


def write_mps(model: MilpModel) -> str:
    return export_mps(model).text


def read_mps(text: str) -> MilpModel:
    """Parse free-format MPS (the subset written by :func:`write_mps`, plus RANGES)."""
    section = None
    obj_row = None
    senses: Dict[str, Sense] = {}
    row_order: List[str] = []
    col_order: List[str] = []
    col_int: Dict[str, bool] = {}
    coefs: Dict[str, List[Tuple[str, float]]] = {}
    rhs: Dict[str, float] = {}
    ranges: Dict[str, float] = {}
    bounds: Dict[str, List[float]] = {}
    binary: Dict[str, bool] = {}
    name = "model"
    in_int = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("*"):
            continue
        tok = line.split()
        if not raw[0].isspace():
            section = tok[0].upper()
            if section == "NAME" and len(tok) > 1:
                name = tok[1]
            if section == "ENDATA":
                break
            continue
        try:
            if section == "ROWS":
                kind, row = tok[0].upper(), tok[1]
                if kind == "N":
                    if obj_row is None:
                        obj_row = row
                    continue
                senses[row] = {"L": Sense.LE, "G": Sense.GE, "E": Sense.EQ}[kind]
                row_order.append(row)
            elif section == "COLUMNS":
                if len(tok) >= 3 and tok[1].strip("'").upper() == "MARKER":
                    in_int = tok[2].strip("'").upper() == "INTORG"
                    continue
                col = tok[0]
                if col not in coefs:
                    coefs[col] = []
                    col_order.append(col)
                    col_int[col] = in_int
                for k in range(1, len(tok) - 1, 2):
                    coefs[col].append((tok[k], float(tok[k + 1])))
            elif section == "RHS":
                for k in range(1, len(tok) - 1, 2):
                    rhs[tok[k]] = float(tok[k + 1])
            elif section == "RANGES":
                for k in range(1, len(tok) - 1, 2):
                    ranges[tok[k]] = float(tok[k + 1])
            elif section == "BOUNDS":
                kind, col = tok[0].upper(), tok[2]
                b = bounds.setdefault(col, [0.0, INF])
                val = float(tok[3]) if len(tok) > 3 else math.nan
                if kind == "UP":
                    b[1] = val
                    if val < 0 and b[0] == 0.0:
                        b[0] = -INF
                elif kind == "LO":
                    b[0] = val
                elif kind == "FX":
                    b[0] = b[1] = val
                elif kind == "FR":
                    b[0], b[1] = -INF, INF
                elif kind == "MI":
                    b[0] = -INF
                elif kind == "PL":
                    b[1] = INF
                elif kind == "BV":
                    b[0], b[1] = 0.0, 1.0
                    binary[col] = True
                else:
                    raise MpsError(f"line {lineno}: unsupported bound type {kind}")
            else:
                raise MpsError(f"line {lineno}: data outside a known section")
        except (IndexError, KeyError, ValueError) as exc:
            if isinstance(exc, MpsError):
                raise
            raise MpsError(f"line {lineno}: cannot parse {line!r}") from exc

    model = MilpModel(name)
    refs = {}
    for col in col_order:
        lo, hi = bounds.get(col, [0.0, INF])
        if binary.get(col) or (col_int[col] and lo == 0.0 and hi == 1.0):
            kind = VarKind.BINARY
        elif col_int[col] or binary.get(col):
            kind = VarKind.INTEGER
        else:
            kind = VarKind.CONTINUOUS
        refs[col] = model.add_var(col, lo, hi, kind)
    rows: Dict[str, Dict] = {r: {} for r in row_order}
    objective = {}
    for col in col_order:
        for row, c in coefs[col]:
            if row == obj_row:
                objective[refs[col]] = objective.get(refs[col], 0.0) + c
            elif row in rows:
                rows[row][refs[col]] = rows[row].get(refs[col], 0.0) + c
            else:
                raise MpsError(f"column {col} references unknown row {row}")
    model.set_objective(objective, -rhs.get(obj_row, 0.0) if obj_row else 0.0)
    for row in row_order:
        sense, b = senses[row], rhs.get(row, 0.0)
        if row in ranges:
            r = ranges[row]
            if sense is Sense.EQ:
                lo, hi = (b, b + r) if r >= 0 else (b + r, b)
            elif sense is Sense.LE:
                lo, hi = b - abs(r), b
            else:
                lo, hi = b, b + abs(r)
            model.add_constraint(rows[row], ">=", lo, f"{row}.lo")
            model.add_constraint(rows[row], "<=", hi, f"{row}.hi")
        else:
            model.add_constraint(rows[row], sense, b, row)
    return model
