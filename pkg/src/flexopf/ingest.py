"""MATPOWER case reading/writing and flexibility overlays.

Only the matrix subset of the m-file format is understood: ``mpc.baseMVA`` and the
``bus``, ``gen``, ``branch`` and ``gencost`` matrices.  Anything else (cell arrays,
extra fields) is skipped.
"""
from __future__ import annotations

import hashlib
import io
import logging
import math
import re
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .network import (DEFAULT_DELTA_MAX, BranchParams, BranchTypology, Bus, Generator, Horizon,
                      SystemCase)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

DATA_DIR = Path(__file__).parent / "data"


class IngestError(ValueError):
    pass


class MalformedCase(IngestError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class UnsupportedFeature(IngestError):
    pass


class OverlayError(IngestError):
    pass


class UnknownBranch(OverlayError):
    pass


class ConflictingEdit(OverlayError):
    pass


# ---------------------------------------------------------------------------
# m-file tokenizer

_ASSIGN = re.compile(r"^\s*mpc\.(\w+)\s*=\s*(.*)$")
_NUMBER = re.compile(r"^[+-]?(\d+\.?\d*([eE][+-]?\d+)?|\.\d+([eE][+-]?\d+)?|Inf|inf|NaN|nan)$")


def _strip_comment(line: str) -> str:
    out = []
    in_str = False
    for ch in line:
        if ch == "'":
            in_str = not in_str
        elif ch == "%" and not in_str:
            break
        out.append(ch)
    return "".join(out)


def _read_matrices(text: str) -> Tuple[Dict[str, float], Dict[str, Tuple[List[List[float]], int]]]:
    scalars: Dict[str, float] = {}
    matrices: Dict[str, Tuple[List[List[float]], int]] = {}
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        line = _strip_comment(lines[i])
        m = _ASSIGN.match(line)
        if not m:
            i += 1
            continue
        name, rest = m.group(1), m.group(2).strip()
        if rest.startswith("{"):
            while "}" not in rest and i + 1 < len(lines):
                i += 1
                rest = _strip_comment(lines[i])
            i += 1
            continue
        if not rest.startswith("["):
            value = rest.rstrip(";").strip()
            try:
                scalars[name] = float(value)
            except ValueError:
                pass  # strings such as mpc.version = '2'
            i += 1
            continue
        start_line = i + 1
        body = rest[1:]
        rows: List[List[float]] = []
        width = None
        closed = False
        while True:
            if "]" in body:
                body = body[: body.index("]")]
                closed = True
            for chunk in body.split(";"):
                tokens = chunk.replace(",", " ").split()
                if not tokens:
                    continue
                vals = []
                for tok in tokens:
                    if tok == "...":
                        continue
                    if not _NUMBER.match(tok):
                        raise MalformedCase(f"non-numeric token {tok!r} in mpc.{name}", i + 1)
                    vals.append(float(tok))
                if width is None:
                    width = len(vals)
                elif len(vals) != width:
                    raise MalformedCase(
                        f"ragged row in mpc.{name}: {len(vals)} columns, expected {width}", i + 1)
                rows.append(vals)
            if closed:
                break
            i += 1
            if i >= len(lines):
                raise MalformedCase(f"unterminated matrix mpc.{name}", start_line)
            body = _strip_comment(lines[i])
        matrices[name] = (rows, start_line)
        i += 1
    return scalars, matrices


# ---------------------------------------------------------------------------
# case parsing

def linear_cost(row: Sequence[float], p_min: float, p_max: float, segments: int = 1,
                where: str = "") -> Tuple[float, float, Tuple[Tuple[float, float], ...]]:
    """Reduce a polynomial gencost row to (slope, constant, piecewise segments)."""
    model = int(row[0])
    if model != 2:
        raise UnsupportedFeature(f"{where}: only polynomial gencost rows (model 2) are supported")
    n = int(row[3])
    coefs = list(row[4:4 + n])
    if len(coefs) != n:
        raise MalformedCase(f"{where}: gencost declares {n} coefficients, has {len(coefs)}")
    coefs = coefs[::-1]  # ascending powers: c0, c1, c2, ...
    c0 = coefs[0] if n >= 1 else 0.0
    c1 = coefs[1] if n >= 2 else 0.0
    c2 = coefs[2] if n >= 3 else 0.0
    if n > 3 and any(coefs[3:]):
        raise UnsupportedFeature(f"{where}: cost polynomials above degree 2 are not supported")
    if c2 == 0.0 or segments <= 1:
        # secant over [p_min, p_max] equals the derivative at the midpoint for a quadratic
        return c1 + c2 * (p_min + p_max), c0, ()
    # dispatch models bound output below by 0, so the segments cover [0, p_max]
    width = p_max / segments
    segs = []
    for s in range(segments):
        a = s * width
        segs.append((width, c1 + c2 * (2 * a + width)))
    return c1 + c2 * (p_min + p_max), c0, tuple(segs)


def parse_case(text: str, name: str = "case", cost_segments: int = 1) -> SystemCase:
    scalars, mats = _read_matrices(text)
    for needed in ("bus", "gen", "branch"):
        if needed not in mats:
            raise MalformedCase(f"missing matrix mpc.{needed}")
    if "baseMVA" not in scalars:
        raise MalformedCase("missing scalar mpc.baseMVA")
    warnings: List[str] = []
    bus_rows, bus_line = mats["bus"]
    if bus_rows and len(bus_rows[0]) < 11:
        raise MalformedCase("mpc.bus needs at least 11 columns", bus_line)
    buses = [Bus(id=int(r[0]), base_load=r[2], is_reference=int(r[1]) == 3,
                 base_kv=r[9], zone=int(r[10])) for r in bus_rows]

    gen_rows, gen_line = mats["gen"]
    if gen_rows and len(gen_rows[0]) < 10:
        raise MalformedCase("mpc.gen needs at least 10 columns", gen_line)
    cost_rows = mats.get("gencost", ([], 0))[0]
    if cost_rows and len(cost_rows) < len(gen_rows):
        raise MalformedCase("mpc.gencost has fewer rows than mpc.gen", mats["gencost"][1])
    gens = []
    quadratic = False
    for g, r in enumerate(gen_rows):
        p_max, p_min = r[8], r[9]
        slope = c0 = 0.0
        segs: Tuple[Tuple[float, float], ...] = ()
        start = stop = 0.0
        if cost_rows:
            c = cost_rows[g]
            slope, c0, segs = linear_cost(c, max(p_min, 0.0), p_max, cost_segments,
                                          where=f"gencost row {g + 1}")
            start, stop = c[1], c[2]
            quadratic |= int(c[3]) >= 3 and c[4] != 0
        gens.append(Generator(bus=int(r[0]), p_min=p_min, p_max=p_max, fixed_cost=c0,
                              startup_cost=start, shutdown_cost=stop, variable_cost=slope,
                              initially_on=r[7] > 0, in_service=r[7] > 0, name=f"G{g + 1}",
                              cost_segments=segs))
    if quadratic:
        warnings.append(f"quadratic generator costs linearised with {cost_segments} segment(s) "
                        "(secant slope over [p_min, p_max])")

    br_rows, br_line = mats["branch"]
    if br_rows and len(br_rows[0]) < 11:
        raise MalformedCase("mpc.branch needs at least 11 columns", br_line)
    branches = []
    circuits: Dict[Tuple[int, int], int] = {}
    for k, r in enumerate(br_rows):
        f, t = int(r[0]), int(r[1])
        key = (min(f, t), max(f, t))
        circuits[key] = circuits.get(key, 0) + 1
        x = r[3]
        b = 1.0 / x if x != 0 else 0.0
        if x == 0:
            warnings.append(f"branch {f}-{t}: zero reactance, needs ZIL retyping")
        if x < 0:
            raise UnsupportedFeature(f"branch {f}-{t}: negative reactance")
        tap, shift = r[8], r[9]
        if tap not in (0.0, 1.0):
            warnings.append(f"branch {f}-{t}: tap ratio {tap} ignored by the DC model")
        if shift != 0.0:
            warnings.append(f"branch {f}-{t}: fixed shift {shift} deg ignored by the DC model")
        rate = r[5]
        in_service = r[10] > 0
        branches.append(BranchParams(
            from_bus=f, to_bus=t, typology=BranchTypology.FIXED_AC, b_min=b, b_max=b,
            f_max=rate if rate > 0 else math.inf, switchable=not in_service,
            in_service=in_service, r=r[2], x=x, charging_b=r[4], rate_a=rate, tap=tap,
            shift_deg=shift, circuit=circuits[key]))
    for w in warnings:
        log.debug("%s: %s", name, w)
    return SystemCase(scalars["baseMVA"], buses, gens, branches, name=name, warnings=warnings)


def load_case(path: Union[str, Path], cost_segments: int = 1) -> SystemCase:
    path = resolve_data_path(path, "cases")
    return parse_case(path.read_text(), name=path.stem, cost_segments=cost_segments)


def resolve_data_path(path: Union[str, Path], kind: str) -> Path:
    """Return ``path`` if it exists, otherwise the bundled file of that name."""
    p = Path(path)
    if p.exists():
        return p
    bundled = DATA_DIR / kind / p.name
    if bundled.exists():
        return bundled
    raise FileNotFoundError(str(path))


def _fmt(v: float) -> str:
    if math.isinf(v):
        return "Inf" if v > 0 else "-Inf"
    return repr(float(v)) if v != int(v) or abs(v) >= 1e15 else str(int(v))


def write_case(case: SystemCase) -> str:
    """Serialise a case back to the MATPOWER matrix subset read by :func:`parse_case`."""
    out = io.StringIO()
    out.write(f"function mpc = {case.name}\n")
    out.write("mpc.version = '2';\n")
    out.write(f"mpc.baseMVA = {_fmt(case.base_mva)};\n\n")
    gen_buses = {g.bus for g in case.generators}
    out.write("%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin\nmpc.bus = [\n")
    for b in case.buses:
        kind = 3 if b.is_reference else (2 if b.id in gen_buses else 1)
        row = [b.id, kind, b.base_load, 0, 0, 0, 1, 1, 0, b.base_kv, b.zone, 1.1, 0.9]
        out.write("\t" + "\t".join(_fmt(v) for v in row) + ";\n")
    out.write("];\n\nmpc.gen = [\n")
    for g in case.generators:
        st = 1 if g.in_service else 0
        row = [g.bus, 0, 0, 0, 0, 1, case.base_mva, st, g.p_max, g.p_min]
        out.write("\t" + "\t".join(_fmt(v) for v in row) + ";\n")
    out.write("];\n\nmpc.branch = [\n")
    for br in case.branches:
        rate = br.rate_a
        row = [br.from_bus, br.to_bus, br.r, br.x, br.charging_b, rate, rate, rate, br.tap,
               br.shift_deg, 1 if br.in_service else 0, -360, 360]
        out.write("\t" + "\t".join(_fmt(v) for v in row) + ";\n")
    out.write("];\n\nmpc.gencost = [\n")
    for g in case.generators:
        # the written slope already includes any linearisation, so c2 = 0 and p_min/p_max drop out
        row = [2, g.startup_cost, g.shutdown_cost, 2, g.variable_cost, g.fixed_cost]
        out.write("\t" + "\t".join(_fmt(v) for v in row) + ";\n")
    out.write("];\n")
    return out.getvalue()


def fingerprint(text: Union[str, bytes]) -> str:
    data = text.encode() if isinstance(text, str) else text
    return hashlib.sha256(data).hexdigest()[:16]


# ---------------------------------------------------------------------------
# overlays

@dataclass(frozen=True)
class BranchSpec:
    """Typology and bounds requested for a set of branches."""

    typology: BranchTypology = BranchTypology.FIXED_AC
    b_range_percent: Optional[float] = None
    b_min: Optional[float] = None
    b_max: Optional[float] = None
    phi_range_degrees: Tuple[float, float] = (0.0, 0.0)
    delta_max_degrees: Optional[float] = None
    capacity_mw: Optional[float] = None
    switchable: Optional[bool] = None


@dataclass(frozen=True)
class BranchEdit:
    from_bus: int
    to_bus: int
    spec: BranchSpec
    circuit: Optional[int] = None


@dataclass(frozen=True)
class ZoneRule:
    """Retype branches by zone membership: ``touches_zone`` or ``zone_boundary``."""

    select: str
    spec: BranchSpec
    zone: Optional[int] = None


@dataclass(frozen=True)
class ZilRule:
    base_kv: Optional[float] = None
    max_reactance: float = 1e-4
    require_zero_resistance: bool = True
    require_zero_charging: bool = True
    switchable: Optional[bool] = None

    def matches(self, br: BranchParams, kv_from: float, kv_to: float) -> bool:
        if self.base_kv is not None and not (kv_from == self.base_kv and kv_to == self.base_kv):
            return False
        if self.require_zero_resistance and br.r != 0:
            return False
        if self.require_zero_charging and br.charging_b != 0:
            return False
        return 0 <= br.x <= self.max_reactance


@dataclass(frozen=True)
class GeneratorEdit:
    bus: int
    values: Tuple[Tuple[str, float], ...]


@dataclass(frozen=True)
class FlexOverlay:
    horizon: Horizon = Horizon()
    branch_edits: Tuple[BranchEdit, ...] = ()
    global_switching: bool = False
    switchable_typologies: Tuple[BranchTypology, ...] = ()
    zone_rules: Tuple[ZoneRule, ...] = ()
    zil_detection: Optional[ZilRule] = None
    generator_buses: Optional[Tuple[int, ...]] = None
    generator_edits: Tuple[GeneratorEdit, ...] = ()
    default_rating_mw: Optional[float] = None
    default_delta_max_degrees: Optional[float] = None
    cost_segments: int = 1
    name: str = "overlay"
    description: str = ""


_GEN_FIELDS = {"p_min", "p_max", "ramp_up", "ramp_down", "startup_ramp", "shutdown_ramp",
               "fixed_cost", "startup_cost", "shutdown_cost", "variable_cost", "initially_on"}


def _spec_from(d: dict, where: str) -> BranchSpec:
    try:
        typ = BranchTypology(str(d.get("typology", "FIXED_AC")).upper())
    except ValueError as exc:
        raise OverlayError(f"{where}: unknown typology {d.get('typology')!r}") from exc
    pct = d.get("b_range_percent")
    if pct is not None and not 0 <= float(pct) < 100:
        raise OverlayError(f"{where}: b_range_percent must lie in [0, 100)")
    phi = d.get("phi_range_degrees", (0.0, 0.0))
    if not isinstance(phi, (list, tuple)) or len(phi) != 2:
        raise OverlayError(f"{where}: phi_range_degrees needs two values, e.g. [-10, 10]")
    return BranchSpec(
        typology=typ,
        b_range_percent=None if pct is None else float(pct),
        b_min=d.get("b_min"), b_max=d.get("b_max"),
        phi_range_degrees=(float(phi[0]), float(phi[1])),
        delta_max_degrees=d.get("delta_max_degrees"),
        capacity_mw=d.get("capacity_mw"),
        switchable=d.get("switchable"),
    )


_TOP_KEYS = {"name", "description", "horizon", "options", "branch_edits", "zone_rules",
             "zil_detection", "generators"}


def parse_overlay(text: str) -> FlexOverlay:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise OverlayError(f"overlay is not valid TOML: {exc}") from exc
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise OverlayError(f"unknown overlay keys: {sorted(unknown)}")
    hz = doc.get("horizon", {})
    mult = hz.get("load_multipliers", [1.0])
    try:
        horizon = Horizon(len(mult), tuple(mult), float(hz.get("reserve_fraction", 0.0)))
    except ValueError as exc:
        raise OverlayError(f"horizon: {exc}") from exc
    opts = doc.get("options", {})
    edits = []
    for i, e in enumerate(doc.get("branch_edits", [])):
        where = f"branch_edits[{i}]"
        if "from_bus" not in e or "to_bus" not in e:
            raise OverlayError(f"{where}: from_bus and to_bus are required")
        edits.append(BranchEdit(int(e["from_bus"]), int(e["to_bus"]), _spec_from(e, where),
                                e.get("circuit")))
    rules = []
    for i, r in enumerate(doc.get("zone_rules", [])):
        sel = r.get("select")
        if sel not in ("touches_zone", "zone_boundary"):
            raise OverlayError(f"zone_rules[{i}]: select must be touches_zone or zone_boundary")
        rules.append(ZoneRule(sel, _spec_from(r, f"zone_rules[{i}]"), r.get("zone")))
    zil = None
    if "zil_detection" in doc:
        z = doc["zil_detection"]
        zil = ZilRule(z.get("base_kv"), float(z.get("max_reactance", 1e-4)),
                      bool(z.get("require_zero_resistance", True)),
                      bool(z.get("require_zero_charging", True)), z.get("switchable"))
    gen_edits = []
    for i, g in enumerate(doc.get("generators", [])):
        if "bus" not in g:
            raise OverlayError(f"generators[{i}]: bus is required")
        bad = set(g) - _GEN_FIELDS - {"bus"}
        if bad:
            raise OverlayError(f"generators[{i}]: unknown fields {sorted(bad)}")
        gen_edits.append(GeneratorEdit(int(g["bus"]),
                                       tuple((k, v) for k, v in g.items() if k != "bus")))
    sw_types = tuple(BranchTypology(str(t).upper()) for t in opts.get("switchable_typologies", ()))
    gb = opts.get("generator_buses")
    return FlexOverlay(
        horizon=horizon,
        branch_edits=tuple(edits),
        global_switching=bool(opts.get("global_switching", False)),
        switchable_typologies=sw_types,
        zone_rules=tuple(rules),
        zil_detection=zil,
        generator_buses=None if gb is None else tuple(int(b) for b in gb),
        generator_edits=tuple(gen_edits),
        default_rating_mw=opts.get("default_rating_mw"),
        default_delta_max_degrees=opts.get("default_delta_max_degrees"),
        cost_segments=int(opts.get("cost_segments", 1)),
        name=str(doc.get("name", "overlay")),
        description=str(doc.get("description", "")),
    )


def load_overlay(path: Union[str, Path]) -> FlexOverlay:
    path = resolve_data_path(path, "overlays")
    return parse_overlay(path.read_text())


def typology_params(br: BranchParams, spec: BranchSpec, default_delta: float) -> BranchParams:
    """Table of per-typology parameters: ZIL/HVDC carry a capacity, AC-like carry B."""
    b0 = 1.0 / br.x if br.x > 0 else 0.0
    t = spec.typology
    delta = default_delta if spec.delta_max_degrees is None else math.radians(spec.delta_max_degrees)
    phi_lo, phi_hi = (math.radians(v) for v in spec.phi_range_degrees)
    f_max = br.f_max
    if t in (BranchTypology.HVDC, BranchTypology.ZIL):
        cap = spec.capacity_mw if spec.capacity_mw is not None else f_max
        return replace(br, typology=t, b_min=0.0, b_max=0.0, p_c=float(cap),
                       delta_max=0.0 if t is BranchTypology.ZIL else delta,
                       phi_min=0.0, phi_max=0.0)
    if spec.b_min is not None or spec.b_max is not None:
        b_lo = float(spec.b_min if spec.b_min is not None else b0)
        b_hi = float(spec.b_max if spec.b_max is not None else b0)
    elif spec.b_range_percent:
        b_lo = b0 * (1 - spec.b_range_percent / 100)
        b_hi = b0 * (1 + spec.b_range_percent / 100)
    else:
        b_lo = b_hi = b0
    if t is BranchTypology.FIXED_AC:
        b_lo = b_hi = b0 if spec.b_min is None and spec.b_max is None else b_lo
        phi_lo = phi_hi = 0.0
    return replace(br, typology=t, b_min=b_lo, b_max=b_hi, p_c=0.0, delta_max=delta,
                   phi_min=phi_lo, phi_max=phi_hi)


def apply_overlay(case: SystemCase, overlay: FlexOverlay) -> Tuple[SystemCase, Horizon]:
    """Retype branches and adjust generators; returns the new case and the horizon."""
    default_delta = (DEFAULT_DELTA_MAX if overlay.default_delta_max_degrees is None
                     else math.radians(overlay.default_delta_max_degrees))
    # generators
    gens = list(case.generators)
    if overlay.generator_buses is not None:
        wanted = set(overlay.generator_buses)
        missing = wanted - {g.bus for g in gens}
        if missing:
            raise OverlayError(f"generator_buses not in case: {sorted(missing)}")
        gens = [g for g in gens if g.bus in wanted]
    for ge in overlay.generator_edits:
        idx = [i for i, g in enumerate(gens) if g.bus == ge.bus]
        if not idx:
            raise OverlayError(f"no generator at bus {ge.bus}")
        for i in idx:
            vals = dict(ge.values)
            if "initially_on" in vals:
                vals["initially_on"] = bool(vals["initially_on"])
            gens[i] = replace(gens[i], cost_segments=() if "variable_cost" in vals else gens[i].cost_segments,
                              **vals)

    kv = {b.id: b.base_kv for b in case.buses}
    zone = {b.id: b.zone for b in case.buses}
    base = []
    for br in case.branches:
        f_max = br.rate_a if br.rate_a > 0 else (overlay.default_rating_mw or math.inf)
        reset = replace(br, f_max=float(f_max), switchable=not br.in_service)
        base.append(typology_params(reset, BranchSpec(), default_delta))

    specs: Dict[int, BranchSpec] = {}
    for e in overlay.branch_edits:
        ks = case.find_branches(e.from_bus, e.to_bus)
        if e.circuit is not None:
            ks = [k for k in ks if case.branches[k].circuit == e.circuit]
        if not ks:
            raise UnknownBranch(f"no branch {e.from_bus}-{e.to_bus}"
                                + (f" circuit {e.circuit}" if e.circuit else ""))
        for k in ks:
            if k in specs:
                raise ConflictingEdit(f"branch {case.branches[k].label} edited twice")
            specs[k] = e.spec
    for rule in overlay.zone_rules:
        for k, br in enumerate(case.branches):
            if k in specs:
                continue
            zf, zt = zone[br.from_bus], zone[br.to_bus]
            if rule.select == "zone_boundary":
                hit = zf != zt and (rule.zone is None or rule.zone in (zf, zt))
            else:
                hit = rule.zone in (zf, zt)
            if hit:
                specs[k] = rule.spec
    if overlay.zil_detection is not None:
        z = overlay.zil_detection
        for k, br in enumerate(case.branches):
            if k not in specs and z.matches(br, kv[br.from_bus], kv[br.to_bus]):
                specs[k] = BranchSpec(typology=BranchTypology.ZIL, switchable=z.switchable)

    out = []
    for k, br in enumerate(base):
        spec = specs.get(k)
        if spec is not None:
            br = typology_params(br, spec, default_delta)
        switchable = overlay.global_switching or br.typology in overlay.switchable_typologies
        if spec is not None and spec.switchable is not None:
            switchable = spec.switchable
        out.append(replace(br, switchable=switchable or not br.in_service))
    new = SystemCase(case.base_mva, list(case.buses), gens, out, case.name, list(case.warnings))
    return new, overlay.horizon


def typology_counts(case: SystemCase) -> Dict[str, int]:
    counts = {t.value: 0 for t in BranchTypology}
    for br in case.branches:
        counts[br.typology.value] += 1
    return counts
