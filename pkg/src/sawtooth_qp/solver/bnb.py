"""LP-based branch-and-bound for models with binaries and convex quadratic parts.

Each convex quadratic (the objective's and those of ``<=`` constraints) is
diagonalized, ``x'Mx = sum_k lam_k (v_k . x)**2``, and every term gets an
epigraph column ``s_k``.  Outer-approximation (OA) tangent cuts
``s_k >= lam_k (2 w_hat w_k - w_hat**2)`` are added at every LP optimum
where a term is underestimated by more than the OA tolerance.  All OA cuts
are globally valid and shared by every node.
"""

from __future__ import annotations

import heapq
import itertools
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .simplex import INFEASIBLE, OPTIMAL, LinearProgram, model_to_lp

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"
STATUS_TIME_LIMIT = "time_limit"
STATUS_NODE_LIMIT = "node_limit"

BRANCHING_RULES = ("most-fractional", "pseudo-cost-lite")


class SolverFailure(RuntimeError):
    """Raised when the LP kernel cannot produce a trustworthy answer."""


@dataclass
class MipOptions:
    node_limit: int = 1_000_000
    time_limit: float = 600.0
    cut_callback: Callable | None = None  # x -> iterable of (coeffs dict, sense, rhs)
    branching: str = "most-fractional"
    cutoff: float | None = None
    heuristic_every: int = 20
    oa_tol: float = 1e-7
    cut_tol: float = 1e-7
    gap_tol: float = 1e-6
    int_tol: float = 1e-6
    max_oa_rounds: int = 200
    node_oa_rounds: int = 10  # OA re-solves at a non-root node while binaries stay fractional
    node_oa_tol: float = 1e-4  # looser OA threshold (relative to the bound) at fractional non-root nodes
    purge_threshold: int = 150  # drop slack cuts once this many are in the LP
    max_callback_rounds: int = 20
    plunge_depth: int = 10
    root_only: bool = False


@dataclass
class SolveResult:
    status: str
    dual_bound: float
    primal_bound: float
    x: np.ndarray | None
    nodes: int
    oa_cuts: int = 0
    callback_cuts: int = 0
    lp_iterations: int = 0
    wall_time: float = 0.0
    root_bound: float = float("nan")
    bound_history: list = field(default_factory=list)

    @property
    def cuts_added(self) -> int:
        return self.oa_cuts + self.callback_cuts

    @property
    def gap(self) -> float:
        return gap(self.dual_bound, self.primal_bound)


def gap(db: float, bpb: float) -> float:
    """Relative optimality gap ``|db - bpb| / |bpb|`` (NaN when ``bpb`` is 0 or missing)."""
    if bpb is None or not np.isfinite(bpb) or bpb == 0:
        return float("nan")
    return abs(db - bpb) / abs(bpb)


def shifted_geomean(values, shift: float = 1.0) -> float:
    """``exp(mean(log(v + shift))) - shift``."""
    v = np.asarray(values, dtype=float) + shift
    if v.size == 0:
        raise ValueError("no values given")
    if np.any(v <= 0):
        raise ValueError("shifted values must be positive")
    return float(np.exp(np.mean(np.log(v))) - shift)


@dataclass(order=True)
class _Node:
    bound: float
    seq: int
    depth: int = field(compare=False)
    lb: np.ndarray = field(compare=False, repr=False)
    ub: np.ndarray = field(compare=False, repr=False)
    basis: object = field(compare=False, default=None, repr=False)
    # pseudo-cost bookkeeping: (var, direction, fractional distance, parent bound)
    origin: tuple | None = field(compare=False, default=None)


class _SeparablePiece:
    """A convex quadratic split along the eigenvectors of its matrix.

    ``x'Mx = sum_k lam_k (v_k . x)**2``, so the piece is represented by
    columns ``w_k = v_k . x`` and epigraph columns ``s_k >= lam_k w_k**2``
    whose univariate OA cuts are cheap and converge quickly.  The linear part
    and constant stay in the row or objective that uses ``sum_k s_k``.
    """

    def __init__(self, ids, form, lb, ub, linear=None, rhs=None):
        self.ids = np.asarray(ids, dtype=int)
        self.form = form
        self.linear = dict(linear or {})
        self.rhs = rhs  # None for the objective
        vals, vecs = np.linalg.eigh(form.matrix)
        scale = max(1.0, float(np.max(np.abs(vals), initial=0.0)))
        keep = vals > 1e-12 * scale
        self.lam = vals[keep]
        self.V = vecs[:, keep]
        lo, hi = lb[self.ids], ub[self.ids]
        self.w_lo = np.sum(np.minimum(self.V * lo[:, None], self.V * hi[:, None]), axis=0)
        self.w_hi = np.sum(np.maximum(self.V * lo[:, None], self.V * hi[:, None]), axis=0)
        self.s_hi = self.lam * np.maximum(self.w_lo**2, self.w_hi**2)
        self.w_cols = np.zeros(0, dtype=int)
        self.s_cols = np.zeros(0, dtype=int)

    @property
    def rank(self) -> int:
        return self.lam.size

    def value(self, x):
        return self.form.value(x[self.ids])

    def tangent(self, k, w, ncols):
        """Row and lower bound of ``s_k >= lam_k (2 w w_k - w**2)``."""
        row = np.zeros(ncols)
        row[self.s_cols[k]] = 1.0
        row[self.w_cols[k]] = -2.0 * self.lam[k] * w
        return row, -self.lam[k] * w * w


class BranchAndBound:
    def __init__(self, model, options: MipOptions | None = None):
        self.model = model
        self.opt = options or MipOptions()
        if self.opt.branching not in BRANCHING_RULES:
            raise ValueError(f"unknown branching rule {self.opt.branching!r}")
        self.nv = model.num_variables
        self.binaries = np.array(model.binary_ids(), dtype=int)
        self.pieces: list[_SeparablePiece] = []
        self._build_lp()
        self.oa_cuts = 0
        self.callback_cuts = 0
        self.pc_sum = np.zeros((self.nv, 2))
        self.pc_cnt = np.zeros((self.nv, 2))

    # ------------------------------------------------------------------
    def _build_lp(self):
        model = self.model
        base, _ = model_to_lp(model)
        lb, ub = model.bounds()
        c = np.zeros(self.nv)
        for j, a in model.objective_linear.items():
            c[j] += a
        self.constant = model.objective_constant
        if model.objective_quadratic is not None:
            form = model.objective_quadratic
            ids = np.asarray(model.objective_quad_vars, dtype=int)
            self.pieces.append(_SeparablePiece(ids, form, lb, ub))
            c[ids] += form.linear
            self.constant += form.constant
        for qc in model.quadratic_constraints:
            self.pieces.append(_SeparablePiece(qc.var_ids, qc.form, lb, ub, qc.linear, qc.rhs))

        ncols = self.nv
        aux_lo, aux_hi = [], []
        for piece in self.pieces:
            piece.w_cols = ncols + np.arange(piece.rank)
            piece.s_cols = ncols + piece.rank + np.arange(piece.rank)
            ncols += 2 * piece.rank
            aux_lo += list(piece.w_lo) + [0.0] * piece.rank
            aux_hi += list(piece.w_hi) + list(piece.s_hi)
        self.ncols = ncols
        self.total_rank = sum(p.rank for p in self.pieces)
        self.aux_lo = np.array(aux_lo)
        self.aux_hi = np.array(aux_hi)

        rows = [np.hstack([base.A, np.zeros((base.m, ncols - self.nv))])]
        row_lo, row_hi = [base.lo[self.nv:]], [base.hi[self.nv:]]
        cost = np.zeros(ncols)
        cost[: self.nv] = c
        for piece in self.pieces:
            link = np.zeros((piece.rank, ncols))
            link[:, piece.ids] = -piece.V.T
            link[np.arange(piece.rank), piece.w_cols] = 1.0
            rows.append(link)
            row_lo.append(np.zeros(piece.rank))
            row_hi.append(np.zeros(piece.rank))
            if piece.rhs is None:
                cost[piece.s_cols] = 1.0
            else:
                row = np.zeros((1, ncols))
                row[0, piece.s_cols] = 1.0
                row[0, piece.ids] += piece.form.linear
                for j, a in piece.linear.items():
                    row[0, j] += a
                rows.append(row)
                row_lo.append([-np.inf])
                row_hi.append([piece.rhs - piece.form.constant])
        A = np.vstack(rows)
        self.lp = LinearProgram(A, np.concatenate(row_lo), np.concatenate(row_hi), cost,
                                np.append(lb, self.aux_lo), np.append(ub, self.aux_hi))
        # seed each component with tangents at both ends and the middle of its range
        seed_rows, seed_lo = [], []
        for piece in self.pieces:
            for k in range(piece.rank):
                for w in np.linspace(piece.w_lo[k], piece.w_hi[k], 3):
                    row, lo = piece.tangent(k, w, ncols)
                    seed_rows.append(row)
                    seed_lo.append(lo)
        self.cut_rows: set[int] = set()
        if seed_rows:
            self.cut_rows.update(self.lp.add_rows(np.array(seed_rows), np.array(seed_lo), np.full(len(seed_rows), np.inf)).tolist())

    def _purge(self):
        """Remove cut rows that are slack at the current basis."""
        lp = self.lp
        if len(self.cut_rows) <= self.opt.purge_threshold:
            return
        values = lp._primal()
        basic = np.zeros(lp.n + lp.m, dtype=bool)
        basic[lp.basic] = True
        drop = []
        for k, rid in enumerate(lp.row_ids):
            if int(rid) not in self.cut_rows or not basic[lp.n + k]:
                continue
            r, lo, hi = values[lp.n + k], lp.lo[lp.n + k], lp.hi[lp.n + k]
            slack = min(r - lo, hi - r)
            if slack > 1e-6 * max(1.0, abs(lo) if np.isfinite(lo) else abs(hi)):
                drop.append(int(rid))
        if drop:
            lp.remove_rows(drop)
            self.cut_rows.difference_update(drop)

    # ------------------------------------------------------------------
    def _oa_violations(self, x, floor=0.0):
        """Tangent cuts for epigraph components underestimated by more than the tolerance (or ``floor``)."""
        rows, los = [], []
        for piece in self.pieces:
            w = x[piece.w_cols]
            gap = piece.lam * w * w - x[piece.s_cols]
            tol = np.maximum(self.opt.oa_tol * np.maximum(1.0, piece.lam * w * w), floor)
            for k in np.flatnonzero(gap > tol):
                row, lo = piece.tangent(k, w[k], self.ncols)
                rows.append(row)
                los.append(lo)
        return rows, los

    def _callback_rows(self, x):
        rows, los, his = [], [], []
        for coeffs, sense, rhs in self.opt.cut_callback(x[: self.nv]) or []:
            row = np.zeros(self.ncols)
            for j, a in coeffs.items():
                row[j] = a
            act = row @ x
            if sense == "<=":
                viol, lo, hi = act - rhs, -np.inf, rhs
            elif sense == ">=":
                viol, lo, hi = rhs - act, rhs, np.inf
            else:
                viol, lo, hi = abs(act - rhs), rhs, rhs
            if viol > self.opt.cut_tol:
                rows.append(row)
                los.append(lo)
                his.append(hi)
        return rows, los, his

    def _solve_relaxation(self, lb, ub, basis=None, cutoff=np.inf, use_callback=True, frac_rounds=None):
        """Solve the node LP with OA (and callback) rounds.

        Returns ``(status, bound, x, oa_converged)``; ``bound`` is always a
        valid lower bound for the node when status is optimal.
        """
        lp = self.lp
        lp.set_all_bounds(np.append(lb, self.aux_lo), np.append(ub, self.aux_hi))
        if basis is not None:
            lp.set_basis(basis)
        callback_rounds = 0
        bound = -np.inf
        for rounds in range(1, self.opt.max_oa_rounds + 1):
            sol = lp.solve()
            if sol.status == INFEASIBLE:
                return INFEASIBLE, np.inf, None, True
            if sol.status != OPTIMAL:
                lp.reset_basis()
                sol = lp.solve()
                if sol.status == INFEASIBLE:
                    return INFEASIBLE, np.inf, None, True
                if sol.status != OPTIMAL:
                    raise SolverFailure(f"LP kernel returned {sol.status}")
            self.lp_iterations += sol.iterations
            x = sol.x
            bound = max(bound, sol.objective + self.constant)
            if bound >= cutoff:
                return OPTIMAL, bound, x, False
            floor = 0.0
            if frac_rounds is not None and self._fractional(x)[0].size:
                floor = self.opt.node_oa_tol * max(1.0, abs(bound)) / max(1, self.total_rank)
            rows, los = self._oa_violations(x, floor)
            if rows:
                self.cut_rows.update(lp.add_rows(np.array(rows), np.array(los), np.full(len(rows), np.inf)).tolist())
                self.oa_cuts += len(rows)
                if frac_rounds is not None and rounds >= frac_rounds and self._fractional(x)[0].size:
                    # the bound is valid already; let branching do the rest
                    return OPTIMAL, bound, x, False
                continue
            if use_callback and self.opt.cut_callback is not None and callback_rounds < self.opt.max_callback_rounds:
                crow, clo, chi = self._callback_rows(x)
                if crow:
                    self.cut_rows.update(lp.add_rows(np.array(crow), np.array(clo), np.array(chi)).tolist())
                    self.callback_cuts += len(crow)
                    callback_rounds += 1
                    continue
            return OPTIMAL, bound, x, True
        return OPTIMAL, bound, x, False

    # ------------------------------------------------------------------
    def _fractional(self, x):
        if self.binaries.size == 0:
            return np.array([], dtype=int), np.array([])
        vals = x[self.binaries]
        frac = np.abs(vals - np.round(vals))
        mask = frac > self.opt.int_tol
        return self.binaries[mask], vals[mask]

    def _choose_branch(self, cols, vals):
        dist = np.minimum(vals - np.floor(vals), np.ceil(vals) - vals)
        if self.opt.branching == "pseudo-cost-lite":
            down = self.pc_cnt[cols, 0] > 0
            up = self.pc_cnt[cols, 1] > 0
            if np.any(down & up):
                avg_d = np.where(down, self.pc_sum[cols, 0] / np.maximum(self.pc_cnt[cols, 0], 1), 0.0)
                avg_u = np.where(up, self.pc_sum[cols, 1] / np.maximum(self.pc_cnt[cols, 1], 1), 0.0)
                mean_d = avg_d[down].mean() if np.any(down) else 1.0
                mean_u = avg_u[up].mean() if np.any(up) else 1.0
                avg_d = np.where(down, avg_d, mean_d)
                avg_u = np.where(up, avg_u, mean_u)
                f = vals - np.floor(vals)
                score = np.maximum(f * avg_d, 1e-6) * np.maximum((1 - f) * avg_u, 1e-6)
                best = np.flatnonzero(score >= score.max() - 1e-12)
                return int(cols[best[0]]), float(vals[best[0]])
        best = np.flatnonzero(dist >= dist.max() - 1e-12)
        return int(cols[best[0]]), float(vals[best[0]])

    def _try_incumbent(self, x, lb, ub):
        """Round binaries, re-solve with them fixed and report a feasible point if found."""
        lb2, ub2 = lb.copy(), ub.copy()
        if self.binaries.size:
            r = np.clip(np.round(x[self.binaries]), lb[self.binaries], ub[self.binaries])
            lb2[self.binaries] = r
            ub2[self.binaries] = r
        status, _, xf, converged = self._solve_relaxation(lb2, ub2, use_callback=False)
        if status != OPTIMAL or not converged:
            return None
        return self._accept(xf)

    def _accept(self, x):
        xm = x[: self.nv].copy()
        if self.binaries.size:
            xm[self.binaries] = np.round(xm[self.binaries])
        if self.model.max_violation(xm) > 1e-6:
            xm = x[: self.nv].copy()
            if self.model.max_violation(xm) > 1e-6:
                return None
        return self.model.objective_value(xm), xm

    # ------------------------------------------------------------------
    def solve(self) -> SolveResult:
        opt = self.opt
        start = time.perf_counter()
        self.lp_iterations = 0
        lb0, ub0 = self.model.bounds()
        incumbent_val = np.inf if opt.cutoff is None else float(opt.cutoff)
        incumbent_x = None
        counter = itertools.count()
        heap: list[_Node] = []
        history: list[float] = []
        pruned_floor = np.inf
        nodes = 0
        root_bound = np.nan
        status = None
        dive: _Node | None = _Node(-np.inf, next(counter), 0, lb0.copy(), ub0.copy())
        plunge = 0

        def prune_level():
            return incumbent_val - opt.gap_tol * max(1.0, abs(incumbent_val)) if np.isfinite(incumbent_val) else np.inf

        def current_db():
            cands = [incumbent_val, pruned_floor]
            if heap:
                cands.append(heap[0].bound)
            if dive is not None:
                cands.append(dive.bound)
            return min(cands)

        while dive is not None or heap:
            if nodes >= opt.node_limit:
                status = STATUS_NODE_LIMIT
                break
            if time.perf_counter() - start > opt.time_limit:
                status = STATUS_TIME_LIMIT
                break
            if dive is not None:
                node, dive = dive, None
            else:
                node = heapq.heappop(heap)
                plunge = 0
            level = prune_level()
            if node.bound >= level:
                pruned_floor = min(pruned_floor, node.bound)
                continue
            nodes += 1
            st, lp_bound, x, converged = self._solve_relaxation(
                node.lb, node.ub, node.basis, cutoff=level, frac_rounds=None if nodes == 1 else opt.node_oa_rounds)
            if st == INFEASIBLE:
                history.append(current_db())
                continue
            bound = max(lp_bound, node.bound)
            if nodes == 1:
                root_bound = bound
            if node.origin is not None and np.isfinite(node.origin[3]):
                var, direction, dist, parent = node.origin
                self.pc_sum[var, direction] += max(0.0, lp_bound - parent) / max(dist, 1e-6)
                self.pc_cnt[var, direction] += 1
            if bound >= level:
                pruned_floor = min(pruned_floor, bound)
                history.append(current_db())
                continue
            cols, vals = self._fractional(x)
            if cols.size == 0 and converged:
                found = self._accept(x)
                if found is not None and found[0] < incumbent_val:
                    incumbent_val, incumbent_x = found
                # integral node: its bound is attained (up to OA tolerance)
                pruned_floor = min(pruned_floor, bound)
                history.append(current_db())
                continue
            if (nodes == 1 or nodes % opt.heuristic_every == 0) and self.binaries.size:
                basis_keep = self.lp.get_basis()
                found = self._try_incumbent(x, node.lb, node.ub)
                self.lp.set_basis(basis_keep)
                if found is not None and found[0] < incumbent_val:
                    incumbent_val, incumbent_x = found
                    level = prune_level()
                    if bound >= level:
                        pruned_floor = min(pruned_floor, bound)
                        history.append(current_db())
                        continue
            if cols.size == 0:
                # OA did not converge within the round limit: keep the node open at its bound
                heapq.heappush(heap, _Node(bound, next(counter), node.depth, node.lb, node.ub, self.lp.get_basis()))
                history.append(current_db())
                continue
            if opt.root_only:
                heapq.heappush(heap, _Node(bound, next(counter), node.depth, node.lb, node.ub, None))
                status = STATUS_NODE_LIMIT
                break
            var, val = self._choose_branch(cols, vals)
            self._purge()
            basis = self.lp.get_basis()
            children = []
            for direction in (0, 1):
                lb, ub = node.lb.copy(), node.ub.copy()
                if direction == 0:
                    ub[var] = np.floor(val)
                else:
                    lb[var] = np.ceil(val)
                dist = val - np.floor(val) if direction == 0 else np.ceil(val) - val
                children.append(_Node(bound, next(counter), node.depth + 1, lb, ub, basis, (var, direction, dist, lp_bound)))
            prefer = 1 if val - np.floor(val) >= 0.5 else 0
            if plunge < opt.plunge_depth:
                dive = children[prefer]
                plunge += 1
                heapq.heappush(heap, children[1 - prefer])
            else:
                for ch in children:
                    heapq.heappush(heap, ch)
            history.append(current_db())

        if status is None:
            status = STATUS_OPTIMAL if np.isfinite(incumbent_val) else STATUS_INFEASIBLE
        db = current_db() if status != STATUS_INFEASIBLE else np.inf
        if status == STATUS_OPTIMAL:
            db = min(incumbent_val, pruned_floor)
        return SolveResult(
            status=status,
            dual_bound=float(db),
            primal_bound=float(incumbent_val),
            x=incumbent_x,
            nodes=nodes,
            oa_cuts=self.oa_cuts,
            callback_cuts=self.callback_cuts,
            lp_iterations=self.lp_iterations,
            wall_time=time.perf_counter() - start,
            root_bound=float(root_bound),
            bound_history=history,
        )


def solve_mip(model, options: MipOptions | None = None, **kwargs) -> SolveResult:
    """Branch-and-bound on ``model``; keyword arguments override :class:`MipOptions` fields."""
    opts = options or MipOptions()
    if kwargs:
        opts = MipOptions(**{**opts.__dict__, **kwargs})
    return BranchAndBound(model, opts).solve()
