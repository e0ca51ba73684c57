"""Hand an exported MPS model to HiGHS (``highspy``) when it is installed."""
from __future__ import annotations

import math
import os
import tempfile
import time
from typing import Optional

import numpy as np

from .model import MilpModel, SolveResult, SolveStats, Status
from .mps import export_mps


class ExternalSolverUnavailable(RuntimeError):
    pass


def available() -> bool:
    try:
        import highspy  # noqa: F401
    except ImportError:
        return False
    return True


def solve_mps_text(text: str, gap_tol: float = 1e-6, time_limit: float = math.inf,
                   n_columns: Optional[int] = None) -> SolveResult:
    """Solve an MPS document with HiGHS; values come back in column order."""
    try:
        import highspy
    except ImportError as exc:
        raise ExternalSolverUnavailable("highspy is not installed") from exc
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("mip_rel_gap", gap_tol)
    h.setOptionValue("random_seed", 0)
    if math.isfinite(time_limit):
        h.setOptionValue("time_limit", float(time_limit))
    fd, path = tempfile.mkstemp(suffix=".mps")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        t0 = time.perf_counter()
        h.readModel(path)
        h.run()
        wall = time.perf_counter() - t0
    finally:
        os.unlink(path)
    ms = h.getModelStatus()
    MS = highspy.HighsModelStatus
    mapping = {MS.kOptimal: Status.OPTIMAL, MS.kInfeasible: Status.INFEASIBLE,
               MS.kUnbounded: Status.UNBOUNDED, MS.kUnboundedOrInfeasible: Status.INFEASIBLE,
               MS.kTimeLimit: Status.TIME_LIMIT, MS.kIterationLimit: Status.ITERATION_LIMIT,
               MS.kSolutionLimit: Status.NODE_LIMIT}
    status = mapping.get(ms, Status.ITERATION_LIMIT)
    info = h.getInfo()
    stats = SolveStats(iterations=int(getattr(info, "simplex_iteration_count", 0)),
                       nodes=int(getattr(info, "mip_node_count", 0) or 0), wall_time=wall)
    sol = h.getSolution()
    values = np.array(sol.col_value, dtype=float) if sol.value_valid else None
    if values is not None and n_columns is not None:
        values = values[:n_columns]
    if values is None:
        return SolveResult(status, math.nan, None, stats=stats)
    obj = float(info.objective_function_value)
    gap = float(getattr(info, "mip_gap", 0.0) or 0.0)
    bound = float(getattr(info, "mip_dual_bound", obj))
    return SolveResult(status, obj, values, gap=max(gap, 0.0), bound=bound, stats=stats)


def solve_external(model: MilpModel, gap_tol: float = 1e-6, time_limit: float = math.inf) -> SolveResult:
    return solve_mps_text(export_mps(model).text, gap_tol, time_limit, len(model.variables))
