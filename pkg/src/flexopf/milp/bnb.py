"""Best-bound branch and bound over the bounded simplex.

Children re-optimise from the parent's optimal basis with the dual simplex.  Node
order is (LP bound, deeper first, creation order) and the branching variable is the
most fractional one with ties going to the lowest index, so a run is a pure function
of the model and the options.
"""
from __future__ import annotations

import heapq
import logging
import math
import time
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .model import MilpModel, ModelArrays, SolveResult, SolveStats, Status
from .simplex import Basis, BoundedSimplex, LPOutcome, SimplexOptions

log = logging.getLogger(__name__)


@dataclass
class MilpOptions:
    gap_tol: float = 1e-6
    int_tol: float = 1e-6
    node_limit: int = 1_000_000
    time_limit: float = math.inf
    dive_every: int = 200
    simplex: Optional[SimplexOptions] = None


@dataclass
class _Node:
    changes: Tuple[Tuple[int, float, float], ...]
    basis: Basis
    depth: int


def presolve_singletons(arrays: ModelArrays, int_tol: float = 1e-9) -> ModelArrays:
    """Fold rows with a single nonzero into variable bounds."""
    A = arrays.A.tocsr()
    counts = np.diff(A.indptr)
    keep = counts != 1
    lb = arrays.lower.copy()
    ub = arrays.upper.copy()
    for i in np.nonzero(counts == 1)[0]:
        j = A.indices[A.indptr[i]]
        a = A.data[A.indptr[i]]
        lo, hi = arrays.row_lower[i] / a, arrays.row_upper[i] / a
        if a < 0:
            lo, hi = hi, lo
        lb[j] = max(lb[j], lo)
        ub[j] = min(ub[j], hi)
    ints = arrays.integer
    lb[ints] = np.ceil(lb[ints] - int_tol)
    ub[ints] = np.floor(ub[ints] + int_tol)
    return ModelArrays(arrays.c, A[keep].tocsc(), arrays.row_lower[keep], arrays.row_upper[keep],
                       lb, ub, ints, arrays.offset)


class BranchAndBound:
    def __init__(self, arrays: ModelArrays, options: Optional[MilpOptions] = None):
        self.opt = options or MilpOptions()
        self.arrays = presolve_singletons(arrays)
        self.lp = BoundedSimplex(self.arrays.c, self.arrays.A, self.opt.simplex)
        self.ints = np.nonzero(self.arrays.integer)[0]
        self.stats = SolveStats()
        self.incumbent: Optional[np.ndarray] = None
        self.inc_obj = math.inf

    # ------------------------------------------------------------------
    def _bounds(self, changes):
        lb = self.arrays.lower.copy()
        ub = self.arrays.upper.copy()
        for j, lo, hi in changes:
            lb[j] = lo
            ub[j] = hi
        return lb, ub

    def _lp(self, lb, ub, basis, deadline) -> LPOutcome:
        out = self.lp.solve(lb, ub, self.arrays.row_lower, self.arrays.row_upper,
                            basis=basis, deadline=deadline)
        self.stats.iterations += out.iterations
        return out

    def _fractional(self, x: np.ndarray) -> Optional[int]:
        if self.ints.size == 0:
            return None
        xi = x[self.ints]
        frac = np.minimum(xi - np.floor(xi), np.ceil(xi) - xi)
        frac[frac <= self.opt.int_tol] = 0.0
        if not np.any(frac > 0):
            return None
        best = np.max(np.round(frac, 9))
        return int(self.ints[np.nonzero(np.round(frac, 9) == best)[0][0]])

    def _cutoff(self) -> float:
        if not math.isfinite(self.inc_obj):
            return math.inf
        return self.inc_obj - self.opt.gap_tol * max(1.0, abs(self.inc_obj))

    def _accept(self, x: np.ndarray, obj: float):
        if obj < self.inc_obj - 1e-12 * max(1.0, abs(obj)):
            x = x.copy()
            xi = x[self.ints]
            snapped = np.round(xi)
            close = np.abs(xi - snapped) <= 1e-9
            xi[close] = snapped[close]
            x[self.ints] = xi
            self.incumbent = x
            self.inc_obj = obj
            self.stats.incumbents.append(obj)
            log.debug("incumbent %.10g at node %d", obj, self.stats.nodes)

    def _dive(self, changes, basis, x, deadline):
        """Round-and-fix dive toward an integer point; updates the incumbent."""
        changes = list(changes)
        for _ in range(len(self.ints) + 1):
            j = self._closest_fractional(x)
            if j is None:
                self._accept(x, float(self.arrays.c @ x))
                return
            first = float(np.round(x[j]))
            for value in (first, (math.floor(x[j]) if first > x[j] else math.ceil(x[j]))):
                lb, ub = self._bounds(changes + [(j, value, value)])
                out = self._lp(lb, ub, basis, deadline)
                if out.status is Status.OPTIMAL and out.objective < self._cutoff():
                    changes.append((j, value, value))
                    basis, x = out.basis, out.x
                    break
            else:
                return

    def _closest_fractional(self, x) -> Optional[int]:
        xi = x[self.ints]
        frac = np.minimum(xi - np.floor(xi), np.ceil(xi) - xi)
        mask = frac > self.opt.int_tol
        if not np.any(mask):
            return None
        cand = np.nonzero(mask)[0]
        return int(self.ints[cand[np.argmin(frac[cand])]])

    # ------------------------------------------------------------------
    def solve(self, start: Optional[np.ndarray] = None) -> SolveResult:
        t0 = time.perf_counter()
        deadline = t0 + self.opt.time_limit
        offset = self.arrays.offset
        if start is not None:
            self._try_start(np.asarray(start, float), deadline)

        lb, ub = self._bounds(())
        root = self._lp(lb, ub, None, deadline)
        if root.status is not Status.OPTIMAL:
            status = root.status
            if status is Status.ITERATION_LIMIT:
                status = Status.TIME_LIMIT if time.perf_counter() > deadline else status
            return self._finish(status, -math.inf, t0)
        self.stats.nodes = 1
        if self._fractional(root.x) is None:
            self._accept(root.x, root.objective)
            return self._finish(Status.OPTIMAL, root.objective, t0)
        self._dive((), root.basis, root.x, deadline)

        heap: List[Tuple[float, int, int, _Node, np.ndarray]] = []
        seq = 0
        heapq.heappush(heap, (root.objective, 0, seq, _Node((), root.basis, 0), root.x))
        bound = root.objective
        status = Status.OPTIMAL
        while heap:
            bound = heap[0][0]
            if self._gap(bound) <= self.opt.gap_tol:
                break
            if self.stats.nodes >= self.opt.node_limit:
                status = Status.NODE_LIMIT
                break
            if time.perf_counter() > deadline:
                status = Status.TIME_LIMIT
                break
            node_bound, _, _, node, x = heapq.heappop(heap)
            if node_bound >= self._cutoff():
                continue
            j = self._fractional(x)
            if j is None:
                self._accept(x, node_bound)
                continue
            if self.opt.dive_every and self.stats.nodes % self.opt.dive_every == 0:
                self._dive(node.changes, node.basis, x, deadline)
            lo_j, hi_j = self._bounds(node.changes)
            lo_j, hi_j = lo_j[j], hi_j[j]
            for child_lo, child_hi in ((lo_j, math.floor(x[j])), (math.ceil(x[j]), hi_j)):
                changes = node.changes + ((j, float(child_lo), float(child_hi)),)
                clb, cub = self._bounds(changes)
                out = self._lp(clb, cub, node.basis, deadline)
                self.stats.nodes += 1
                if out.status is Status.ITERATION_LIMIT:
                    status = Status.TIME_LIMIT if time.perf_counter() > deadline else Status.ITERATION_LIMIT
                    heap.clear()
                    break
                if out.status is not Status.OPTIMAL or out.objective >= self._cutoff():
                    continue
                if self._fractional(out.x) is None:
                    self._accept(out.x, out.objective)
                    continue
                seq += 1
                heapq.heappush(heap, (out.objective, -(node.depth + 1), seq,
                                      _Node(changes, out.basis, node.depth + 1), out.x))
            else:
                continue
            break
        if not heap and status is Status.OPTIMAL:
            bound = self.inc_obj
        if status is Status.OPTIMAL and self.incumbent is None:
            status = Status.INFEASIBLE
        return self._finish(status, bound, t0)

    def _try_start(self, start: np.ndarray, deadline):
        """Fix the integer part of a supplied point and polish the continuous part."""
        lb, ub = self._bounds(())
        vals = np.round(start[self.ints])
        lb[self.ints] = np.maximum(lb[self.ints], vals)
        ub[self.ints] = np.minimum(ub[self.ints], vals)
        out = self._lp(lb, ub, None, deadline)
        if out.status is Status.OPTIMAL:
            self._accept(out.x, out.objective)

    def _gap(self, bound: float) -> float:
        if self.incumbent is None:
            return math.inf
        return max(0.0, self.inc_obj - bound) / max(1.0, abs(self.inc_obj))

    def _finish(self, status: Status, bound: float, t0: float) -> SolveResult:
        self.stats.wall_time = time.perf_counter() - t0
        offset = self.arrays.offset
        if self.incumbent is None:
            if status is Status.OPTIMAL:
                status = Status.INFEASIBLE
            return SolveResult(status, math.nan, None, math.inf, bound + offset, self.stats)
        bound = min(bound, self.inc_obj)
        return SolveResult(status, self.inc_obj + offset, self.incumbent, self._gap(bound),
                           bound + offset, self.stats)


def solve_milp(model: MilpModel, gap_tol: float = 1e-6, node_limit: int = 1_000_000,
               time_limit: float = math.inf, start: Optional[Sequence[float]] = None,
               options: Optional[MilpOptions] = None) -> SolveResult:
    """Solve ``model`` to proven optimality within ``gap_tol`` (relative)."""
    opts = options or MilpOptions(gap_tol=gap_tol, node_limit=node_limit, time_limit=time_limit)
    bb = BranchAndBound(model.to_arrays(), opts)
    res = bb.solve(None if start is None else np.asarray(start, float))
    log.info("%s: %s obj=%.10g gap=%.2e nodes=%d iters=%d %.2fs", model.name, res.status.value,
             res.objective, res.gap, res.stats.nodes, res.stats.iterations, res.stats.wall_time)
    return res
