"""Bounded-variable revised simplex.

Every row ``lo <= a'x <= hi`` gets a logical variable ``r`` with ``a'x - r = 0`` and
bounds ``[lo, hi]``, so the working matrix is ``[A | -I]`` and all right-hand sides
are zero.  The basis is kept as a sparse LU factor plus a product-form eta file.

The primal simplex (composite phase 1 / phase 2) solves cold starts.  The dual
simplex re-optimises from a dual-feasible basis after bound changes, which is the
branch-and-bound case.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .model import INF, MilpModel, ModelArrays, SolveResult, SolveStats, Status

log = logging.getLogger(__name__)

BASIC, AT_LB, AT_UB, FREE = 0, 1, 2, 3


@dataclass
class SimplexOptions:
    primal_tol: float = 1e-7
    dual_tol: float = 1e-9
    pivot_tol: float = 1e-9
    max_iter: int = 50_000
    refactor_every: int = 64
    bland_after: int = 60
    time_limit: float = math.inf


@dataclass
class Basis:
    head: np.ndarray
    status: np.ndarray

    def copy(self) -> "Basis":
        return Basis(self.head.copy(), self.status.copy())


@dataclass
class LPOutcome:
    status: Status
    x: np.ndarray
    objective: float
    basis: Basis
    iterations: int
    y: Optional[np.ndarray] = None
    d: Optional[np.ndarray] = None
    dual_bound: float = -math.inf
    ray: Optional[np.ndarray] = None


class SingularBasis(RuntimeError):
    pass


class _Factor:
    def __init__(self, B: sp.csc_matrix):
        try:
            self.lu = spla.splu(B, permc_spec="COLAMD", options={"SymmetricMode": False})
        except RuntimeError as exc:
            raise SingularBasis(str(exc)) from exc
        self.etas: List[Tuple[int, np.ndarray]] = []

    def ftran(self, a: np.ndarray) -> np.ndarray:
        v = self.lu.solve(a)
        for r, w in self.etas:
            vr = v[r] / w[r]
            if vr != 0.0:
                v -= vr * w
            v[r] = vr
        return v

    def btran(self, c: np.ndarray) -> np.ndarray:
        v = np.array(c, dtype=float)
        for r, w in reversed(self.etas):
            wr = w[r]
            v[r] = (v[r] - (w @ v - wr * v[r])) / wr
        return self.lu.solve(v, trans="T")

    def update(self, r: int, w: np.ndarray):
        self.etas.append((r, w))


class BoundedSimplex:
    """Solver bound to one constraint matrix; bounds and basis vary per call."""

    def __init__(self, c: np.ndarray, A: sp.spmatrix, options: Optional[SimplexOptions] = None):
        self.opt = options or SimplexOptions()
        A = sp.csc_matrix(A, dtype=float)
        self.m, self.n = A.shape
        self.A = A
        self.M = sp.hstack([A, -sp.identity(self.m, format="csc")], format="csc")
        self.MT = self.M.T.tocsr()
        scale = float(np.max(np.abs(c))) if c.size and np.any(c) else 1.0
        self.cscale = scale
        self.c = np.concatenate([np.asarray(c, float) / scale, np.zeros(self.m)])

    # helpers ---------------------------------------------------------------
    def column(self, j: int) -> np.ndarray:
        out = np.zeros(self.m)
        lo, hi = self.M.indptr[j], self.M.indptr[j + 1]
        out[self.M.indices[lo:hi]] = self.M.data[lo:hi]
        return out

    def slack_basis(self, lb: np.ndarray, ub: np.ndarray) -> Basis:
        status = np.empty(self.n + self.m, dtype=np.int8)
        for j in range(self.n + self.m):
            status[j] = _resting_status(lb[j], ub[j])
        head = np.arange(self.n, self.n + self.m)
        status[head] = BASIC
        return Basis(head, status)

    def _factor(self, head: np.ndarray) -> _Factor:
        return _Factor(self.M[:, head].tocsc())

    def _nonbasic_values(self, status, lb, ub) -> np.ndarray:
        x = np.zeros(self.n + self.m)
        at_lb = status == AT_LB
        at_ub = status == AT_UB
        x[at_lb] = lb[at_lb]
        x[at_ub] = ub[at_ub]
        return x

    def _basic_values(self, fac: _Factor, head, x) -> np.ndarray:
        xn = x.copy()
        xn[head] = 0.0
        return fac.ftran(-(self.M @ xn))

    # public ----------------------------------------------------------------
    def solve(self, lb_struct: np.ndarray, ub_struct: np.ndarray, row_lo: np.ndarray,
              row_hi: np.ndarray, basis: Optional[Basis] = None,
              deadline: float = math.inf) -> LPOutcome:
        lb = np.concatenate([lb_struct, row_lo]).astype(float)
        ub = np.concatenate([ub_struct, row_hi]).astype(float)
        if np.any(lb > ub + self.opt.primal_tol):
            bad = int(np.argmax(lb - ub))
            return self._trivial_infeasible(bad, lb, ub)
        if self.m == 0:
            return self._bounds_only(lb, ub)
        if basis is None:
            basis = self.slack_basis(lb, ub)
        else:
            basis = basis.copy()
            self._repair_status(basis, lb, ub)
        try:
            fac = self._factor(basis.head)
        except SingularBasis:
            basis = self.slack_basis(lb, ub)
            fac = self._factor(basis.head)
        state = _State(self, basis, fac, lb, ub, deadline)
        if state.dual_feasible(flip=True):
            out = state.dual_simplex()
            if out is not None:
                return out
        return state.primal_simplex()

    def _repair_status(self, basis: Basis, lb, ub):
        st = basis.status
        nb = st != BASIC
        for j in np.nonzero(nb)[0]:
            s = st[j]
            if s == AT_LB and not math.isfinite(lb[j]):
                st[j] = _resting_status(lb[j], ub[j])
            elif s == AT_UB and not math.isfinite(ub[j]):
                st[j] = _resting_status(lb[j], ub[j])
            elif s == FREE and (math.isfinite(lb[j]) or math.isfinite(ub[j])):
                st[j] = _resting_status(lb[j], ub[j])

    def _bounds_only(self, lb, ub) -> LPOutcome:
        c = self.c[: self.n]
        x = np.where(c > 0, lb[: self.n], np.where(c < 0, ub[: self.n], np.clip(0.0, lb[: self.n], ub[: self.n])))
        status = np.array([_resting_status(lb[j], ub[j]) for j in range(self.n)], dtype=np.int8)
        basis = Basis(np.arange(0), status)
        if not np.all(np.isfinite(x)):
            return LPOutcome(Status.UNBOUNDED, x, -math.inf, basis, 0)
        obj = float(c @ x) * self.cscale
        return LPOutcome(Status.OPTIMAL, x, obj, basis, 0, y=np.zeros(0), dual_bound=obj)

    def _trivial_infeasible(self, j, lb, ub) -> LPOutcome:
        basis = self.slack_basis(np.minimum(lb, ub), np.maximum(lb, ub))
        return LPOutcome(Status.INFEASIBLE, np.full(self.n, np.nan), math.nan, basis, 0)


def _resting_status(lo: float, hi: float) -> int:
    if math.isfinite(lo):
        return AT_LB
    if math.isfinite(hi):
        return AT_UB
    return FREE


class _State:
    def __init__(self, lp: BoundedSimplex, basis: Basis, fac: _Factor, lb, ub, deadline):
        self.lp = lp
        self.opt = lp.opt
        self.head = basis.head
        self.status = basis.status
        self.fac = fac
        self.lb = lb
        self.ub = ub
        self.deadline = deadline
        self.iters = 0
        self.x = lp._nonbasic_values(self.status, lb, ub)
        self.x[self.head] = lp._basic_values(fac, self.head, self.x)
        self.d = None
        self.y = None
        self.cost = lp.c

    # bookkeeping -------------------------------------------------------------
    def refactor(self):
        try:
            self.fac = self.lp._factor(self.head)
        except SingularBasis:
            log.debug("singular basis on refactor, restarting from slack basis")
            basis = self.lp.slack_basis(self.lb, self.ub)
            self.head, self.status = basis.head, basis.status
            self.fac = self.lp._factor(self.head)
        self.x = self.lp._nonbasic_values(self.status, self.lb, self.ub)
        self.x[self.head] = self.lp._basic_values(self.fac, self.head, self.x)

    def maybe_refactor(self):
        if len(self.fac.etas) >= self.opt.refactor_every:
            self.refactor()
            if self.d is not None:
                self.compute_duals()

    def compute_duals(self, cost: Optional[np.ndarray] = None):
        c = self.cost if cost is None else cost
        self.y = self.fac.btran(c[self.head])
        self.d = c - self.lp.MT @ self.y
        self.d[self.head] = 0.0

    def primal_infeasibility(self) -> np.ndarray:
        xb = self.x[self.head]
        tol = self.opt.primal_tol
        below = self.lb[self.head] - xb
        above = xb - self.ub[self.head]
        viol = np.maximum(below, above)
        viol[viol <= tol] = 0.0
        return viol

    def out_of_time(self) -> bool:
        return self.iters >= self.opt.max_iter or time.perf_counter() > self.deadline

    def dual_feasible(self, flip: bool) -> bool:
        self.compute_duals()
        tol = self.opt.dual_tol
        st, d = self.status, self.d
        bad_lb = (st == AT_LB) & (d < -tol) & (self.ub > self.lb)
        bad_ub = (st == AT_UB) & (d > tol) & (self.ub > self.lb)
        bad_free = (st == FREE) & (np.abs(d) > tol)
        if np.any(bad_free):
            return False
        if not flip:
            return not (np.any(bad_lb) or np.any(bad_ub))
        fin_ub = np.isfinite(self.ub)
        fin_lb = np.isfinite(self.lb)
        if np.any(bad_lb & ~fin_ub) or np.any(bad_ub & ~fin_lb):
            return False
        if np.any(bad_lb) or np.any(bad_ub):
            st[bad_lb] = AT_UB
            st[bad_ub] = AT_LB
            self.x = self.lp._nonbasic_values(st, self.lb, self.ub)
            self.x[self.head] = self.lp._basic_values(self.fac, self.head, self.x)
        return True

    def outcome(self, status: Status, ray=None) -> LPOutcome:
        lp = self.lp
        obj = math.nan
        dual_bound = -math.inf
        y = None
        if status is Status.OPTIMAL:
            self.compute_duals()
            obj = float(lp.c[: lp.n] @ self.x[: lp.n]) * lp.cscale
            dual_bound = self._dual_bound()
            y = self.y * lp.cscale
        return LPOutcome(status, self.x[: lp.n].copy(), obj, Basis(self.head.copy(), self.status.copy()),
                         self.iters, y=y, d=None if self.d is None else self.d * lp.cscale,
                         dual_bound=dual_bound, ray=ray)

    def _dual_bound(self) -> float:
        d = self.d
        tol = self.opt.dual_tol * 10
        total = 0.0
        for j in np.nonzero(np.abs(d) > tol)[0]:
            bound = self.lb[j] if d[j] > 0 else self.ub[j]
            if not math.isfinite(bound):
                return -math.inf
            total += d[j] * bound
        # nonbasic variables with near-zero reduced cost contribute d*x exactly
        small = (np.abs(d) <= tol) & (self.status != BASIC)
        total += float(d[small] @ self.x[small])
        return total * self.lp.cscale

    # primal simplex ------------------------------------------------------------
    def primal_simplex(self) -> LPOutcome:
        opt = self.opt
        degenerate = 0
        n_all = self.lp.n + self.lp.m
        while True:
            if self.out_of_time():
                return self.outcome(Status.ITERATION_LIMIT)
            viol = self.primal_infeasibility()
            phase1 = bool(np.any(viol > 0))
            if phase1:
                xb = self.x[self.head]
                cb = np.zeros(self.lp.m)
                cb[(self.lb[self.head] - xb) > opt.primal_tol] = -1.0
                cb[(xb - self.ub[self.head]) > opt.primal_tol] = 1.0
                y = self.fac.btran(cb)
                d = -(self.lp.MT @ y)
                d[self.head] = 0.0
            else:
                self.compute_duals()
                d = self.d
            st = self.status
            movable = self.ub > self.lb
            cand_up = ((st == AT_LB) | (st == FREE)) & (d < -opt.dual_tol) & movable
            cand_dn = ((st == AT_UB) | (st == FREE)) & (d > opt.dual_tol) & movable
            cand = cand_up | cand_dn
            if not np.any(cand):
                if phase1:
                    return self.outcome(Status.INFEASIBLE)
                return self.outcome(Status.OPTIMAL)
            if degenerate >= opt.bland_after:
                q = int(np.argmax(cand))
            else:
                score = np.where(cand, np.abs(d), -1.0)
                q = int(np.argmax(score))
            direction = 1.0 if cand_up[q] else -1.0
            w = self.fac.ftran(self.lp.column(q))
            alpha = -direction * w  # rate of change of basic variables
            t, r, bound_side = self._primal_ratio(alpha, phase1, bland=degenerate >= opt.bland_after)
            own = self.ub[q] - self.lb[q]
            if math.isfinite(own) and own <= t:
                t, r = own, -1
            if not math.isfinite(t):
                if phase1:
                    return self.outcome(Status.INFEASIBLE)
                ray = np.zeros(n_all)
                ray[q] = direction
                ray[self.head] = alpha
                return self.outcome(Status.UNBOUNDED, ray=ray[: self.lp.n])
            self.iters += 1
            degenerate = degenerate + 1 if t <= 1e-12 else 0
            self.x[self.head] += t * alpha
            self.x[q] += direction * t
            if r < 0:
                st[q] = AT_UB if direction > 0 else AT_LB
                self.x[q] = self.ub[q] if direction > 0 else self.lb[q]
                continue
            leaving = self.head[r]
            st[leaving] = bound_side
            self.x[leaving] = self.lb[leaving] if bound_side == AT_LB else self.ub[leaving]
            self.head[r] = q
            st[q] = BASIC
            self.fac.update(r, w)
            self.d = None
            self.maybe_refactor()

    def _primal_ratio(self, alpha, phase1: bool, bland: bool):
        """Harris two-pass ratio test; returns (step, row, status of leaving var)."""
        tol = self.opt.primal_tol
        ptol = self.opt.pivot_tol
        head = self.head
        xb = self.x[head]
        lo = self.lb[head]
        hi = self.ub[head]
        ratios = np.full(self.lp.m, INF)
        relaxed = np.full(self.lp.m, INF)
        side = np.zeros(self.lp.m, dtype=np.int8)
        dec = alpha < -ptol
        inc = alpha > ptol
        if phase1:
            below = xb < lo - tol
            above = xb > hi + tol
            feas = ~(below | above)
        else:
            below = above = np.zeros(self.lp.m, dtype=bool)
            feas = np.ones(self.lp.m, dtype=bool)
        # feasible basics decreasing to their lower bound
        m1 = feas & dec & np.isfinite(lo)
        ratios[m1] = (xb[m1] - lo[m1]) / -alpha[m1]
        relaxed[m1] = (xb[m1] - lo[m1] + tol) / -alpha[m1]
        side[m1] = AT_LB
        m2 = feas & inc & np.isfinite(hi)
        ratios[m2] = (hi[m2] - xb[m2]) / alpha[m2]
        relaxed[m2] = (hi[m2] - xb[m2] + tol) / alpha[m2]
        side[m2] = AT_UB
        if phase1:
            # infeasible basics stop once they reach the violated bound
            m3 = below & inc
            ratios[m3] = (lo[m3] - xb[m3]) / alpha[m3]
            relaxed[m3] = ratios[m3]
            side[m3] = AT_LB
            m4 = above & dec
            ratios[m4] = (xb[m4] - hi[m4]) / -alpha[m4]
            relaxed[m4] = ratios[m4]
            side[m4] = AT_UB
        np.maximum(ratios, 0.0, out=ratios)
        tmax = float(np.min(relaxed)) if relaxed.size else INF
        if not math.isfinite(tmax):
            return INF, -1, 0
        if bland:
            np.maximum(ratios, 0.0, out=ratios)
            elig = np.nonzero(ratios <= float(np.min(ratios)) + 1e-12)[0]
            r = int(elig[np.argmin(head[elig])])
            return float(ratios[r]), r, int(side[r])
        elig = np.nonzero(ratios <= tmax)[0]
        r = int(elig[np.argmax(np.abs(alpha[elig]))])
        return float(ratios[r]), r, int(side[r])

    # dual simplex ------------------------------------------------------------
    def _perturb_costs(self):
        """Shift nonbasic costs away from zero reduced cost, keeping dual feasibility.

        Dispatch models have many zero-cost columns (angles, flows), so without this
        the dual simplex can pivot indefinitely at a constant objective.  The shift is
        a fixed function of the column index, which keeps runs reproducible.
        """
        st = self.status
        movable = (st != BASIC) & (self.ub > self.lb)
        j = np.arange(st.size)
        xi = 1e-7 * (1.0 + np.abs(self.lp.c)) * (1.0 + ((j * 7919) % 1000) / 1000.0)
        self.xi = xi
        cost = self.lp.c.copy()
        up = movable & (st == AT_LB)
        dn = movable & (st == AT_UB)
        cost[up] += xi[up]
        cost[dn] -= xi[dn]
        self.cost = cost
        self.compute_duals()

    def dual_simplex(self) -> Optional[LPOutcome]:
        opt = self.opt
        lp = self.lp
        degenerate = 0
        self._perturb_costs()
        try:
            return self._dual_loop()
        finally:
            self.cost = lp.c

    def _dual_loop(self) -> Optional[LPOutcome]:
        opt = self.opt
        lp = self.lp
        degenerate = 0
        while True:
            if self.out_of_time():
                return self.outcome(Status.ITERATION_LIMIT)
            viol = self.primal_infeasibility()
            if not np.any(viol > 0):
                break
            bland = degenerate >= opt.bland_after
            if bland:
                rows = np.nonzero(viol > 0)[0]
                r = int(rows[np.argmin(self.head[rows])])
            else:
                r = int(np.argmax(viol))
            p = self.head[r]
            xp = self.x[p]
            to_lower = xp < self.lb[p]
            delta = xp - (self.lb[p] if to_lower else self.ub[p])
            e = np.zeros(lp.m)
            e[r] = 1.0
            rho = self.fac.btran(e)
            alpha_r = lp.MT @ rho
            st = self.status
            nonbasic = st != BASIC
            movable = (self.ub > self.lb) & nonbasic
            ptol = opt.pivot_tol
            if to_lower:
                elig = movable & (((st == AT_LB) & (alpha_r < -ptol)) | ((st == AT_UB) & (alpha_r > ptol))
                                  | ((st == FREE) & (np.abs(alpha_r) > ptol)))
            else:
                elig = movable & (((st == AT_LB) & (alpha_r > ptol)) | ((st == AT_UB) & (alpha_r < -ptol))
                                  | ((st == FREE) & (np.abs(alpha_r) > ptol)))
            idx = np.nonzero(elig)[0]
            if idx.size == 0:
                return self.outcome(Status.INFEASIBLE)
            a = np.abs(alpha_r[idx])
            # reduced costs with the sign they should have; slight infeasibilities left
            # by the relaxed ratio test count as zero
            sidx = st[idx]
            dj = np.where(sidx == AT_LB, self.d[idx], np.where(sidx == AT_UB, -self.d[idx], 0.0))
            np.maximum(dj, 0.0, out=dj)
            ratio = dj / a
            if bland:
                # exact minimum ratio, lowest index among ties: finite termination
                pick = np.nonzero(ratio <= float(np.min(ratio)) + 1e-12)[0]
                q = int(idx[pick[0]])
            else:
                tmax = float(np.min((dj + opt.dual_tol) / a))
                pick = np.nonzero(ratio <= tmax)[0]
                q = int(idx[pick[np.argmax(a[pick])]])
            theta_d = self.d[q] / alpha_r[q]
            w = self.fac.ftran(lp.column(q))
            if abs(w[r]) < ptol:
                # numerically unreliable pivot; refactor and retry once via primal
                return None
            theta_p = delta / w[r]
            self.iters += 1
            degenerate = degenerate + 1 if abs(theta_d) <= 1e-12 else 0
            self.d[nonbasic] -= theta_d * alpha_r[nonbasic]
            self.d[p] = -theta_d
            # a variable leaving at zero reduced cost gets its own small cost shift so
            # later pivots stay dual nondegenerate
            want = self.xi[p] if to_lower else -self.xi[p]
            if (self.d[p] < want) if to_lower else (self.d[p] > want):
                self.cost[p] += want - self.d[p]
                self.d[p] = want
            self.d[q] = 0.0
            self.x[self.head] -= theta_p * w
            self.x[q] += theta_p
            st[p] = AT_LB if to_lower else AT_UB
            self.x[p] = self.lb[p] if to_lower else self.ub[p]
            self.head[r] = q
            st[q] = BASIC
            self.fac.update(r, w)
            self.maybe_refactor()
        # drop the perturbation; residual dual infeasibilities go to the primal simplex
        self.cost = lp.c
        self.refactor()
        if self.dual_feasible(flip=False) and not np.any(self.primal_infeasibility() > 0):
            return self.outcome(Status.OPTIMAL)
        return None


def solve_arrays(arrays: ModelArrays, options: Optional[SimplexOptions] = None) -> Tuple[LPOutcome, BoundedSimplex]:
    lp = BoundedSimplex(arrays.c, arrays.A, options)
    out = lp.solve(arrays.lower, arrays.upper, arrays.row_lower, arrays.row_upper)
    return out, lp


def solve_lp(model: MilpModel, options: Optional[SimplexOptions] = None) -> SolveResult:
    """Solve ``model`` with integrality relaxed."""
    t0 = time.perf_counter()
    opts = options or SimplexOptions()
    arrays = model.to_arrays()
    lp = BoundedSimplex(arrays.c, arrays.A, opts)
    out = lp.solve(arrays.lower, arrays.upper, arrays.row_lower, arrays.row_upper,
                   deadline=t0 + opts.time_limit)
    stats = SolveStats(iterations=out.iterations, wall_time=time.perf_counter() - t0)
    if out.status is Status.OPTIMAL:
        obj = out.objective + arrays.offset
        return SolveResult(Status.OPTIMAL, obj, out.x, gap=0.0,
                           bound=out.dual_bound + arrays.offset, stats=stats, duals=out.y)
    return SolveResult(out.status, math.nan, out.x if out.status is not Status.INFEASIBLE else None,
                       stats=stats)
