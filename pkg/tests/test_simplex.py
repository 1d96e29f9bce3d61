import numpy as np
import pytest
from scipy.optimize import linprog

from sawtooth_qp.model import new_model
from sawtooth_qp.solver.simplex import INFEASIBLE, OPTIMAL, LinearProgram, solve_lp


def _scipy(A, lo, hi, c, lb, ub):
    A_ub, b_ub = [], []
    for row, l, h in zip(A, lo, hi):
        if np.isfinite(h):
            A_ub.append(row)
            b_ub.append(h)
        if np.isfinite(l):
            A_ub.append(-row)
            b_ub.append(-l)
    res = linprog(c, A_ub=np.array(A_ub) if A_ub else None, b_ub=np.array(b_ub) if b_ub else None,
                  bounds=list(zip(lb, ub)), method="highs")
    return res


def _random_lp(rng, m, n):
    A = rng.normal(size=(m, n)) * (rng.random((m, n)) < 0.6)
    x0 = rng.uniform(-1, 1, n)
    act = A @ x0
    lo = np.where(rng.random(m) < 0.5, act - rng.uniform(0, 2, m), -np.inf)
    hi = np.where(rng.random(m) < 0.7, act + rng.uniform(0, 2, m), np.inf)
    lb = -rng.uniform(1, 3, n)
    ub = rng.uniform(1, 3, n)
    c = rng.normal(size=n)
    return A, lo, hi, c, lb, ub


def _check(lp, A, lo, hi, c, lb, ub):
    sol = lp.solve()
    ref = _scipy(A, lo, hi, c, lb, ub)
    if ref.status == 2:
        assert sol.status == INFEASIBLE
        return
    assert ref.status == 0
    assert sol.status == OPTIMAL
    assert sol.objective == pytest.approx(ref.fun, abs=1e-7, rel=1e-7)
    assert np.all(sol.x >= lb - 1e-9) and np.all(sol.x <= ub + 1e-9)
    act = A @ sol.x
    assert np.all(act >= lo - 1e-8) and np.all(act <= hi + 1e-8)


@pytest.mark.parametrize("seed", range(40))
def test_random_lps_match_reference(seed):
    rng = np.random.default_rng(seed)
    m, n = rng.integers(1, 12), rng.integers(1, 12)
    A, lo, hi, c, lb, ub = _random_lp(rng, m, n)
    lp = LinearProgram(A, lo, hi, c, lb, ub)
    _check(lp, A, lo, hi, c, lb, ub)
    # warm re-solve after tightening a bound
    j = rng.integers(n)
    ub = ub.copy()
    ub[j] = lb[j] + 0.3 * (ub[j] - lb[j])
    lp.set_all_bounds(lb, ub)
    _check(lp, A, lo, hi, c, lb, ub)
    # warm re-solve after appending rows
    extra = rng.normal(size=(2, n))
    elo, ehi = np.array([-np.inf, -1.0]), np.array([0.5, np.inf])
    ids = lp.add_rows(extra, elo, ehi)
    A2, lo2, hi2 = np.vstack([A, extra]), np.concatenate([lo, elo]), np.concatenate([hi, ehi])
    _check(lp, A2, lo2, hi2, c, lb, ub)
    # drop the appended rows that ended up basic, then re-solve
    basis = lp.get_basis()
    removable = [rid for rid in ids if rid not in basis.nonbasic_rows]
    lp.remove_rows(removable)
    keep = [k for k, rid in enumerate(range(len(lo), len(lo) + 2)) if ids[k] not in removable]
    A3 = np.vstack([A] + [extra[k : k + 1] for k in keep])
    lo3 = np.concatenate([lo, elo[keep]])
    hi3 = np.concatenate([hi, ehi[keep]])
    _check(lp, A3, lo3, hi3, c, lb, ub)


def test_basis_snapshot_survives_row_changes():
    rng = np.random.default_rng(7)
    A, lo, hi, c, lb, ub = _random_lp(rng, 6, 5)
    lp = LinearProgram(A, lo, hi, c, lb, ub)
    first = lp.solve()
    snap = lp.get_basis()
    ids = lp.add_rows(rng.normal(size=(1, 5)), [-np.inf], [100.0])
    lp.solve()
    lp.remove_rows(ids)
    assert lp.set_basis(snap)
    again = lp.solve()
    assert again.iterations == 0
    assert again.objective == pytest.approx(first.objective)


def test_trivial_bound_only_lp():
    m = new_model()
    x = m.add_variable("x", 0.3, 1.0)
    m.set_objective(linear={x: 1.0})
    sol = solve_lp(m)
    assert sol.status == OPTIMAL and sol.objective == pytest.approx(0.3)


def test_contradictory_rows_are_infeasible():
    m = new_model()
    x = m.add_variable("x", -5, 5)
    m.add_linear_constraint({x: 1.0}, "<=", 0.0)
    m.add_linear_constraint({x: 1.0}, ">=", 1.0)
    m.set_objective(linear={x: 1.0})
    assert solve_lp(m).status == INFEASIBLE


def test_equality_row_with_empty_range_is_infeasible():
    lp = LinearProgram(np.array([[1.0, 1.0]]), [2.0], [1.0], [1.0, 1.0], [0, 0], [5, 5])
    assert lp.solve().status == INFEASIBLE


def test_quadratic_objective_needs_override():
    from sawtooth_qp.model import QuadraticForm

    m = new_model()
    x = m.add_variable("x", 0, 1)
    m.set_objective(QuadraticForm(np.eye(1)), [x])
    with pytest.raises(ValueError):
        solve_lp(m)
    assert solve_lp(m, np.array([-1.0])).objective == pytest.approx(-1.0)
