"""``flexopf`` command line: validate, solve and export.

Exit codes: 0 success, 1 usage or input error, 2 infeasible, 3 unbounded,
4 verification or validation failure, 5 solver limit reached before optimality.
Log verbosity comes from ``FLEXOPF_LOG`` (e.g. ``INFO``, ``DEBUG``).
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path
from typing import List, Optional

from . import ingest
from .branch import BigMOptions, NonIntegralBinary
from .formulations import Assembled, Formulation, assemble, solve, solve_lexicographic
from .milp.bnb import MilpOptions
from .milp.model import Status
from .milp.mps import export_mps
from .network import validate_case
from .reporting import (ChainEntry, DimensionMismatch, ReferenceFormatError, load_reference,
                        render_solution, solution_from_result, verify)

log = logging.getLogger("flexopf")

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_UNBOUNDED, EXIT_VERIFY, EXIT_LIMIT = 0, 1, 2, 3, 4, 5


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="flexopf", description="DC-OPF with a unified flexible-branch MILP model.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="assemble and solve a dispatch problem")
    s.add_argument("--case", required=True, help="MATPOWER case file (or bundled case name)")
    s.add_argument("--overlay", required=True, help="flexibility overlay (TOML)")
    s.add_argument("--formulation", required=True, choices=[f.value for f in Formulation])
    s.add_argument("--solver", default="embedded", choices=["embedded", "mps"],
                   help="embedded B&B, or export MPS and solve it with HiGHS if installed")
    s.add_argument("--out", help="directory for solution.csv, solution.json and model.mps")
    s.add_argument("--verify", help="reference document to check the solution against")
    s.add_argument("--gap", type=float, default=1e-6, help="relative MILP gap (default 1e-6)")
    s.add_argument("--time-limit", type=float, default=math.inf, help="seconds")
    s.add_argument("--node-limit", type=int, default=1_000_000)
    s.add_argument("--tie-break", action="store_true",
                   help="among cost-optimal points prefer fewest open branches, then least shift")
    s.add_argument("--format", default="csv", choices=["csv", "text"],
                   help="format of the table written to standard output")

    v = sub.add_parser("validate", help="check case and overlay invariants")
    v.add_argument("--case", required=True)
    v.add_argument("--overlay")

    e = sub.add_parser("export", help="write the model as free-format MPS without solving")
    e.add_argument("--case", required=True)
    e.add_argument("--overlay", required=True)
    e.add_argument("--formulation", required=True, choices=[f.value for f in Formulation])
    e.add_argument("--out", required=True, help="output .mps path")
    return p


def _configure_logging():
    level = os.environ.get("FLEXOPF_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _load(case_arg: str, overlay_arg: Optional[str]):
    case_path = ingest.resolve_data_path(case_arg, "cases")
    case_text = case_path.read_text()
    overlay_text = ""
    overlay = ingest.FlexOverlay()
    overlay_path = None
    if overlay_arg:
        overlay_path = ingest.resolve_data_path(overlay_arg, "overlays")
        overlay_text = overlay_path.read_text()
        overlay = ingest.parse_overlay(overlay_text)
    case = ingest.parse_case(case_text, name=case_path.stem, cost_segments=overlay.cost_segments)
    case, horizon = ingest.apply_overlay(case, overlay)
    return case, horizon, overlay, ingest.fingerprint(case_text), ingest.fingerprint(overlay_text), overlay_path


def _checked(case, horizon) -> List[str]:
    problems = validate_case(case, horizon, allow_negative_load=True)
    negative = [b.id for b in case.buses if b.base_load < 0]
    if negative:
        log.warning("%d bus(es) with negative net load treated as injections", len(negative))
    return problems


def _status_exit(status: Status) -> int:
    return {Status.OPTIMAL: EXIT_OK, Status.INFEASIBLE: EXIT_INFEASIBLE,
            Status.UNBOUNDED: EXIT_UNBOUNDED}.get(status, EXIT_LIMIT)


def _run_solve(args) -> int:
    case, horizon, overlay, case_fp, ov_fp, ov_path = _load(args.case, args.overlay)
    problems = _checked(case, horizon)
    if problems:
        for msg in problems:
            print(msg, file=sys.stderr)
        return EXIT_USAGE
    opts = MilpOptions(gap_tol=args.gap, time_limit=args.time_limit, node_limit=args.node_limit)
    asm = assemble(case, horizon, args.formulation)
    out_dir = Path(args.out) if args.out else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)

    def run(a: Assembled):
        if args.solver == "mps":
            from .milp.external import ExternalSolverUnavailable, solve_external
            try:
                return solve_external(a.model, args.gap, args.time_limit)
            except ExternalSolverUnavailable as exc:
                raise SystemExit(f"--solver mps: {exc}; use `flexopf export` instead")
        if args.tie_break:
            return solve_lexicographic(a, opts)[0]
        return solve(a, opts)

    if args.solver == "mps" and out_dir:
        (out_dir / "model.mps").write_text(export_mps(asm.model).text)
    result = run(asm)
    print(f"status={result.status.value} objective={result.objective:.10g} gap={result.gap:.3g} "
          f"nodes={result.stats.nodes} time={result.stats.wall_time:.3f}s", file=sys.stderr)
    code = _status_exit(result.status)
    if result.values is None:
        return code
    try:
        sol = solution_from_result(asm, result, case_fp, ov_fp, label=overlay.name)
    except NonIntegralBinary as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LIMIT
    table = render_solution(sol, args.format)
    sys.stdout.write(table)
    if out_dir:
        (out_dir / "solution.csv").write_text(render_solution(sol, "csv"))
        (out_dir / "solution.json").write_text(render_solution(sol, "text"))

    if args.verify:
        ref_path = ingest.resolve_data_path(args.verify, "refs")
        ref = load_reference(ref_path)

        def resolve(entry: ChainEntry) -> float:
            if not entry.overlay:
                raise DimensionMismatch(f"chain entry {entry.label!r} has no overlay to solve")
            other = ref_path.parent / entry.overlay
            other = other if other.exists() else entry.overlay
            c2, h2, _, _, _, _ = _load(args.case, str(other))
            res = run(assemble(c2, h2, entry.formulation or args.formulation))
            log.info("reference run %s: %s %.10g", entry.label, res.status.value, res.objective)
            return res.objective if res.ok else math.nan

        try:
            report = verify(sol, ref, resolve=resolve)
        except DimensionMismatch as exc:
            print(f"verification error: {exc}", file=sys.stderr)
            return EXIT_VERIFY
        sys.stderr.write(report.render())
        if out_dir:
            (out_dir / "verification.txt").write_text(report.render())
        if not report.passed and code == EXIT_OK:
            code = EXIT_VERIFY
    return code


def _run_validate(args) -> int:
    case, horizon, _, _, _, _ = _load(args.case, args.overlay)
    problems = validate_case(case, horizon)
    for w in case.warnings:
        print(f"warning: {w}", file=sys.stderr)
    for msg in problems:
        print(msg)
    if problems:
        return EXIT_VERIFY
    counts = ingest.typology_counts(case)
    print(f"ok: {case.n_buses} buses, {case.n_branches} branches, {len(case.generators)} generators, "
          + ", ".join(f"{k}={v}" for k, v in counts.items()))
    return EXIT_OK


def _run_export(args) -> int:
    case, horizon, _, _, _, _ = _load(args.case, args.overlay)
    problems = _checked(case, horizon)
    if problems:
        for msg in problems:
            print(msg, file=sys.stderr)
        return EXIT_USAGE
    asm = assemble(case, horizon, args.formulation)
    exp = export_mps(asm.model)
    Path(args.out).write_text(exp.text)
    m = asm.model
    print(f"wrote {args.out}: {len(m.variables)} columns ({m.num_integer} integer), "
          f"{len(m.constraints)} rows")
    return EXIT_OK


def run(argv: Optional[List[str]] = None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handlers = {"solve": _run_solve, "validate": _run_validate, "export": _run_export}
    try:
        return handlers[args.command](args)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ingest.IngestError, ReferenceFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        if isinstance(exc.code, str):
            print(exc.code, file=sys.stderr)
            return EXIT_USAGE
        return int(exc.code or 0)


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
