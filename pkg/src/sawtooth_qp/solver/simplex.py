"""Dense bounded-variable dual simplex.

The LP is held in the computational form

    min c.x   s.t.   A x - r = 0,   lb <= x <= ub,   row_lo <= r <= row_hi

where every structural variable ``x`` has finite bounds and the row
activities ``r`` may be unbounded on one or both sides.  With all structural
bounds finite, the slack basis (all ``r`` basic) is dual feasible once each
structural sits at the bound matching the sign of its cost, so a cold start
never needs a phase one.  Bound changes and appended rows keep the current
basis dual feasible as well, which is what branch-and-bound and cutting-plane
loops need for cheap re-solves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL = "numerical_failure"
ITERATION_LIMIT = "iteration_limit"

PRIMAL_TOL = 1e-9
DUAL_TOL = 1e-9
PIVOT_TOL = 1e-9
REFACTOR_EVERY = 50

AT_LOWER, AT_UPPER = 0, 1


@dataclass
class LpSolution:
    status: str
    x: np.ndarray | None = None
    objective: float = float("nan")
    iterations: int = 0
    row_activity: np.ndarray | None = None
    duals: np.ndarray | None = None  # multipliers of the rows A x - r = 0

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


@dataclass
class Basis:
    """Snapshot of a basis that can be re-installed with :meth:`LinearProgram.set_basis`.

    Rows are referred to by permanent ids, so a snapshot stays meaningful
    after rows are appended (they enter as basic) or deleted (only rows that
    were basic in the snapshot may disappear).
    """

    basic_struct: np.ndarray
    struct_at_upper: np.ndarray
    nonbasic_rows: dict[int, bool] = field(default_factory=dict)  # row id -> sits at upper bound


class LinearProgram:
    """Mutable LP solved with the dual simplex method, reusing its last basis."""

    def __init__(self, A, row_lo, row_hi, c, lb, ub):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        self.n = A.shape[1] if A.size else len(np.atleast_1d(c))
        if A.size == 0:
            A = np.zeros((0, self.n))
        self.m = A.shape[0]
        self.c_struct = np.asarray(c, dtype=float).copy()
        lb = np.asarray(lb, dtype=float).copy()
        ub = np.asarray(ub, dtype=float).copy()
        if lb.shape != (self.n,) or ub.shape != (self.n,) or self.c_struct.shape != (self.n,):
            raise ValueError("bounds and costs must match the number of columns")
        if not (np.all(np.isfinite(lb)) and np.all(np.isfinite(ub))):
            raise ValueError("all structural variables need finite bounds")
        self.A = A.copy()  # activity columns -I are kept implicit
        self.lo = np.concatenate([lb, np.asarray(row_lo, dtype=float)])
        self.hi = np.concatenate([ub, np.asarray(row_hi, dtype=float)])
        self.cost = np.concatenate([self.c_struct, np.zeros(self.m)])
        self.iterations_total = 0
        self.row_ids = np.arange(self.m)
        self._next_row_id = self.m
        self.reset_basis()

    # ------------------------------------------------------------------
    # basis handling
    # ------------------------------------------------------------------
    def reset_basis(self):
        """Install the slack basis with structurals at their cost-preferred bounds."""
        n, m = self.n, self.m
        self.basic = np.arange(n, n + m)
        self.at_upper = np.zeros(n + m, dtype=bool)
        self.at_upper[:n] = self.c_struct < 0
        self.Binv = -np.eye(m)
        self._pivots_since_refactor = 0

    def get_basis(self) -> Basis:
        n = self.n
        basic_rows = np.zeros(self.m, dtype=bool)
        basic_rows[self.basic[self.basic >= n] - n] = True
        nonbasic = {int(self.row_ids[k]): bool(self.at_upper[n + k]) for k in np.flatnonzero(~basic_rows)}
        return Basis(np.sort(self.basic[self.basic < n]), self.at_upper[:n].copy(), nonbasic)

    def set_basis(self, basis: Basis) -> bool:
        """Re-install a stored basis; returns False (and cold-starts) if it no longer fits."""
        n = self.n
        position = {int(rid): k for k, rid in enumerate(self.row_ids)}
        if any(rid not in position for rid in basis.nonbasic_rows):
            self.reset_basis()
            return False
        nonbasic = np.array([position[rid] for rid in basis.nonbasic_rows], dtype=int)
        is_basic_row = np.ones(self.m, dtype=bool)
        is_basic_row[nonbasic] = False
        basic = np.concatenate([basis.basic_struct, n + np.flatnonzero(is_basic_row)]).astype(int)
        if basic.size != self.m:
            self.reset_basis()
            return False
        at_upper = np.zeros(n + self.m, dtype=bool)
        at_upper[:n] = basis.struct_at_upper
        at_upper[n + nonbasic] = [basis.nonbasic_rows[rid] for rid in basis.nonbasic_rows]
        self.basic, self.at_upper = basic, at_upper
        if not self._refactor():
            self.reset_basis()
            return False
        return True

    def _refactor(self) -> bool:
        B = self._columns(self.basic)
        try:
            self.Binv = np.linalg.inv(B) if self.m else np.zeros((0, 0))
        except np.linalg.LinAlgError:
            return False
        self._pivots_since_refactor = 0
        return bool(np.all(np.isfinite(self.Binv)))

    # ------------------------------------------------------------------
    # problem modification
    # ------------------------------------------------------------------
    def set_bounds(self, j: int, lb: float, ub: float):
        if j >= self.n:
            raise IndexError("only structural bounds can be changed")
        if not (np.isfinite(lb) and np.isfinite(ub)):
            raise ValueError("structural bounds must stay finite")
        self.lo[j], self.hi[j] = lb, ub

    def set_all_bounds(self, lb, ub):
        lb = np.asarray(lb, dtype=float)
        ub = np.asarray(ub, dtype=float)
        self.lo[: self.n] = lb
        self.hi[: self.n] = ub

    def structural_bounds(self):
        return self.lo[: self.n].copy(), self.hi[: self.n].copy()

    def set_objective(self, c):
        """Change the cost vector; falls back to the slack basis to regain dual feasibility."""
        self.c_struct = np.asarray(c, dtype=float).copy()
        self.cost = np.concatenate([self.c_struct, np.zeros(self.m)])
        self.reset_basis()

    def add_rows(self, A_new, lo_new, hi_new) -> np.ndarray:
        """Append rows ``lo <= A_new x <= hi``; their activities enter the basis.

        Returns the permanent ids of the new rows.
        """
        A_new = np.atleast_2d(np.asarray(A_new, dtype=float))
        k = A_new.shape[0]
        if k == 0:
            return np.zeros(0, dtype=int)
        n, m = self.n, self.m
        self.A = np.vstack([self.A, A_new])
        self.lo = np.concatenate([self.lo, np.asarray(lo_new, dtype=float)])
        self.hi = np.concatenate([self.hi, np.asarray(hi_new, dtype=float)])
        self.cost = np.concatenate([self.cost, np.zeros(k)])
        self.at_upper = np.concatenate([self.at_upper, np.zeros(k, dtype=bool)])
        W_basic = np.zeros((k, m))
        struct = self.basic < n
        W_basic[:, struct] = A_new[:, self.basic[struct]]
        WB = W_basic @ self.Binv
        self.Binv = np.block([[self.Binv, np.zeros((m, k))], [WB, -np.eye(k)]])
        self.basic = np.concatenate([self.basic, np.arange(n + m, n + m + k)])
        self.m = m + k
        ids = np.arange(self._next_row_id, self._next_row_id + k)
        self._next_row_id += k
        self.row_ids = np.concatenate([self.row_ids, ids])
        return ids

    def remove_rows(self, ids) -> None:
        """Delete rows (by id) whose activity variables are currently basic.

        With the activity column equal to ``-e_k`` the basis matrix is block
        triangular, so the reduced inverse is a submatrix of the current one.
        """
        n, m = self.n, self.m
        rows = np.flatnonzero(np.isin(self.row_ids, np.asarray(list(ids), dtype=int)))
        if rows.size == 0:
            return
        cols = n + rows
        gone = np.isin(self.basic, cols)
        if gone.sum() != rows.size:
            raise ValueError("only rows with a basic activity variable can be removed")
        keep_rows = np.setdiff1d(np.arange(m), rows)
        keep_cols = np.concatenate([np.arange(n), n + keep_rows])
        new_index = np.full(n + m, -1)
        new_index[keep_cols] = np.arange(keep_cols.size)
        self.Binv = self.Binv[np.ix_(~gone, keep_rows)]
        self.basic = new_index[self.basic[~gone]]
        self.A = self.A[keep_rows]
        self.lo, self.hi = self.lo[keep_cols], self.hi[keep_cols]
        self.cost, self.at_upper = self.cost[keep_cols], self.at_upper[keep_cols]
        self.row_ids = self.row_ids[keep_rows]
        self.m = keep_rows.size

    # ------------------------------------------------------------------
    # solve
    # ------------------------------------------------------------------
    def _columns(self, cols) -> np.ndarray:
        """Dense columns of ``[A, -I]``."""
        cols = np.asarray(cols, dtype=int)
        out = np.zeros((self.m, cols.size))
        struct = cols < self.n
        out[:, struct] = self.A[:, cols[struct]]
        rows = np.flatnonzero(~struct)
        out[cols[rows] - self.n, rows] = -1.0
        return out

    def _times(self, v) -> np.ndarray:
        """``[A, -I] @ v``."""
        return self.A @ v[: self.n] - v[self.n :]

    def _row_times(self, y) -> np.ndarray:
        """``y @ [A, -I]``."""
        return np.concatenate([y @ self.A, -y])

    def _nonbasic_values(self):
        x = np.where(self.at_upper, self.hi, self.lo)
        x[self.basic] = 0.0
        return x

    def _primal(self):
        x = self._nonbasic_values()
        if self.m:
            x[self.basic] = -self.Binv @ self._times(x)
        return x

    def _reduced_costs(self):
        y = self.cost[self.basic] @ self.Binv if self.m else np.zeros(0)
        d = self.cost - self._row_times(y) if self.m else self.cost.copy()
        d[self.basic] = 0.0
        return d, y

    def _repair_dual_feasibility(self, d) -> bool:
        """Flip boxed nonbasics whose reduced cost has the wrong sign; False if impossible."""
        nonbasic = np.ones(self.n + self.m, dtype=bool)
        nonbasic[self.basic] = False
        fixed = self.lo == self.hi
        wrong_low = nonbasic & ~self.at_upper & (d < -DUAL_TOL) & ~fixed
        wrong_up = nonbasic & self.at_upper & (d > DUAL_TOL) & ~fixed
        if np.any(wrong_low & ~np.isfinite(self.hi)) or np.any(wrong_up & ~np.isfinite(self.lo)):
            return False
        self.at_upper[wrong_low] = True
        self.at_upper[wrong_up] = False
        return True

    def solve(self, max_iter: int | None = None) -> LpSolution:
        n, m = self.n, self.m
        if np.any(self.lo > self.hi + PRIMAL_TOL):
            return LpSolution(INFEASIBLE)
        if max_iter is None:
            max_iter = 50 * (m + n) + 1000
        bland_after = 10 * (m + n)
        iters = 0
        # a nonbasic row activity cannot sit at an infinite bound
        nb_inf = np.ones(n + m, dtype=bool)
        nb_inf[self.basic] = False
        nb_inf &= ~np.isfinite(np.where(self.at_upper, self.hi, self.lo))
        if np.any(nb_inf):
            self.reset_basis()
        d, _ = self._reduced_costs()
        if not self._repair_dual_feasibility(d):
            self.reset_basis()
            d, _ = self._reduced_costs()
        for _attempt in range(2):
            status = self._iterate(max_iter, bland_after)
            if status is not None:
                iters = self._last_iters
                break
            # loss of accuracy: refactor from scratch once before giving up
            if not self._refactor():
                self.reset_basis()
        else:
            return LpSolution(NUMERICAL, iterations=self._last_iters)
        self.iterations_total += iters
        if status != OPTIMAL:
            return LpSolution(status, iterations=iters)
        x = self._primal()
        _, y = self._reduced_costs()
        xs = x[:n]
        act = self.A @ xs if m else np.zeros(0)
        return LpSolution(OPTIMAL, xs.copy(), float(self.c_struct @ xs), iters, act, y)

    def _iterate(self, max_iter, bland_after):
        degenerate = 0
        self._last_iters = 0
        use_bland = False
        for it in range(max_iter):
            self._last_iters = it
            x = self._primal()
            xb = x[self.basic]
            lo_b = self.lo[self.basic]
            hi_b = self.hi[self.basic]
            below = lo_b - xb
            above = xb - hi_b
            infeas = np.maximum(below, above)
            tol = PRIMAL_TOL * np.maximum(1.0, np.abs(np.where(below > above, lo_b, hi_b)))
            tol = np.where(np.isfinite(tol), tol, PRIMAL_TOL)
            cand = infeas > tol
            if not np.any(cand):
                if not self._accurate(x):
                    return None
                return OPTIMAL
            if use_bland:
                rows = np.flatnonzero(cand)
                r = rows[np.argmin(self.basic[rows])]
            else:
                r = int(np.argmax(np.where(cand, infeas, -np.inf)))
            to_lower = below[r] > above[r]
            d, _ = self._reduced_costs()
            alpha = self._row_times(self.Binv[r])
            alpha[self.basic] = 0.0
            free = self.lo != self.hi
            if to_lower:
                elig = free & (((~self.at_upper) & (alpha < -PIVOT_TOL)) | (self.at_upper & (alpha > PIVOT_TOL)))
            else:
                elig = free & (((~self.at_upper) & (alpha > PIVOT_TOL)) | (self.at_upper & (alpha < -PIVOT_TOL)))
            elig[self.basic] = False
            cols = np.flatnonzero(elig)
            if cols.size == 0:
                return INFEASIBLE
            dc = d[cols]
            ratios = np.abs(dc) / np.abs(alpha[cols])
            # a reduced cost of the wrong sign can only be roundoff here
            ratios[np.where(self.at_upper[cols], dc > 0, dc < 0)] = 0.0
            best = ratios.min()
            ties = cols[ratios <= best + 1e-12]
            if use_bland:
                q = int(ties.min())
            else:
                q = int(ties[np.argmax(np.abs(alpha[ties]))])
            if best <= 1e-12:
                degenerate += 1
                if degenerate > bland_after:
                    use_bland = True
            self._pivot(r, q, to_lower)
        return ITERATION_LIMIT

    def _accurate(self, x) -> bool:
        if self.m == 0:
            return True
        resid = self._times(x)
        scale = max(1.0, float(np.max(np.abs(x))))
        return bool(np.max(np.abs(resid)) <= 1e-9 * scale)

    def _pivot(self, r, q, leave_to_lower):
        w = self.Binv @ self._columns([q])[:, 0]
        piv = w[r]
        leaving = self.basic[r]
        self.at_upper[leaving] = not leave_to_lower
        self.at_upper[q] = False
        row = self.Binv[r] / piv
        self.Binv -= np.outer(w, row)
        self.Binv[r] = row
        self.basic[r] = q
        self._pivots_since_refactor += 1
        if self._pivots_since_refactor >= REFACTOR_EVERY:
            if not self._refactor():
                raise np.linalg.LinAlgError("basis became singular")


def model_to_lp(model, objective=None) -> tuple[LinearProgram, list[int]]:
    """Build a :class:`LinearProgram` from the linear part of a model.

    ``objective`` overrides the model's linear objective (a dense vector).
    Quadratic constraints are ignored here; callers handle them with cuts.
    """
    nv = model.num_variables
    lb, ub = model.bounds()
    A = np.zeros((len(model.constraints), nv))
    lo = np.empty(len(model.constraints))
    hi = np.empty(len(model.constraints))
    for k, con in enumerate(model.constraints):
        for j, a in con.coeffs.items():
            A[k, j] = a
        lo[k] = con.rhs if con.sense in (">=", "=") else -np.inf
        hi[k] = con.rhs if con.sense in ("<=", "=") else np.inf
    if objective is None:
        c = np.zeros(nv)
        for j, a in model.objective_linear.items():
            c[j] = a
    else:
        c = np.asarray(objective, dtype=float)
    return LinearProgram(A, lo, hi, c, lb, ub), list(range(nv))


def solve_lp(model, objective=None) -> LpSolution:
    """Solve the continuous relaxation of a model with a linear objective."""
    if objective is None and model.objective_quadratic is not None:
        raise ValueError("solve_lp needs a linear objective; use solve_mip for quadratic ones")
    lp, _ = model_to_lp(model, objective)
    sol = lp.solve()
    if sol.ok and objective is None:
        sol.objective += model.objective_constant
    return sol
