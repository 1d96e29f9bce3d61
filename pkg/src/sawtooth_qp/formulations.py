"""Relaxation fragments for ``y = x**2`` and whole-problem relaxations.

Every fragment lives on the unit interval.  General bounds are handled by
:func:`scale_to_unit`, which links an original variable to a unit-interval
copy and maps the fragment's output back to the square of the original.

Methods
-------
``NN``      sawtooth graph formulation: ``y`` equals the piecewise-linear
            interpolant of ``x**2`` at every binary point.
``BHH1``    the same layers, ``y`` between the interpolant and tangent cuts
            taken at the breakpoints of the coarser levels.
``BHH2``    BHH1 plus the tangent cuts of the finest level.
``NMDT``    radix-2 discretization with McCormick envelopes for ``x*beta_i``
            and ``x*dx``.
``TNMDT``   radix-2 discretization with envelopes for ``(x+dx)*beta_i`` and
            the square of the residual ``dx``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import BINARY, Model, QuadraticForm
from .shift import ShiftVector, eigen_shift, validate_psd

METHODS = ("NN", "BHH1", "BHH2", "NMDT", "TNMDT")
ZERO_TOL = 1e-12


@dataclass
class FormulationHandle:
    """Variable ids exposed by one fragment (all ids refer to the host model)."""

    method: str
    L: int
    x: int
    y: int
    alpha: list[int] = field(default_factory=list)
    g: list[int] = field(default_factory=list)
    beta: list[int] = field(default_factory=list)
    delta_x: int | None = None
    u: list[int] = field(default_factory=list)
    delta_u: int | None = None
    # filled in when the fragment models the square of a variable on [lower, upper]
    source_x: int | None = None
    source_y: int | None = None
    lower: float = 0.0
    upper: float = 1.0

    @property
    def binaries(self) -> list[int]:
        return self.alpha if self.alpha else self.beta


def normalize_method(method: str) -> str:
    key = method.upper().replace("-", "").replace("_", "")
    if key not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    return key


def _unit_pair(model: Model, prefix: str, x, y):
    if x is None:
        x = model.add_variable(prefix + "x", 0.0, 1.0)
    if y is None:
        y = model.add_variable(prefix + "y", 0.0, 1.0)
    return x, y


def _sawtooth_layers(model: Model, L: int, x: int, prefix: str):
    """Add g_0..g_L, alpha_1..alpha_L and the per-layer hull inequalities."""
    g = [model.add_variable(f"{prefix}g0", 0.0, 1.0)]
    model.add_linear_constraint({g[0]: 1.0, x: -1.0}, "=", 0.0, name=f"{prefix}in")
    alpha = []
    for i in range(1, L + 1):
        a = model.add_variable(f"{prefix}a{i}", 0.0, 1.0, BINARY)
        gi = model.add_variable(f"{prefix}g{i}", 0.0, 1.0)
        prev = g[-1]
        # reflected branch (a = 1) and doubling branch (a = 0) of the tent map
        model.add_linear_constraint({gi: 1.0, prev: 2.0, a: -2.0}, ">=", 0.0, name=f"{prefix}s{i}a")
        model.add_linear_constraint({gi: 1.0, prev: 2.0}, "<=", 2.0, name=f"{prefix}s{i}b")
        model.add_linear_constraint({gi: 1.0, prev: -2.0, a: 2.0}, ">=", 0.0, name=f"{prefix}s{i}c")
        model.add_linear_constraint({gi: 1.0, prev: -2.0}, "<=", 0.0, name=f"{prefix}s{i}d")
        g.append(gi)
        alpha.append(a)
    return g, alpha


def _interpolant_terms(x: int, g: list[int], upto: int) -> dict[int, float]:
    """Coefficients of ``x - sum_{i<=upto} 4**-i g_i``."""
    terms = {x: 1.0}
    for i in range(1, upto + 1):
        terms[g[i]] = -(4.0**-i)
    return terms


def nn_graph_fragment(model: Model, L: int, x: int | None = None, y: int | None = None, prefix: str | None = None) -> FormulationHandle:
    """Sawtooth graph formulation of ``y = F_L(x)`` on ``[0, 1]``."""
    if L < 1:
        raise ValueError("the sawtooth fragment needs at least one layer")
    prefix = prefix or model.fresh_prefix("nn")
    x, y = _unit_pair(model, prefix, x, y)
    g, alpha = _sawtooth_layers(model, L, x, prefix)
    out = _interpolant_terms(x, g, L)
    out[y] = -1.0
    model.add_linear_constraint(out, "=", 0.0, name=f"{prefix}out")
    return FormulationHandle("NN", L, x, y, alpha, g)


def bhh_relaxation(model: Model, L: int, variant: int, x: int | None = None, y: int | None = None, prefix: str | None = None) -> FormulationHandle:
    """Two-sided sawtooth relaxation of ``y = x**2``.

    ``L = 0`` is accepted and gives the plain McCormick triangle (variant 1) or
    the triangle with the midpoint tangent (variant 2).
    """
    if variant not in (1, 2):
        raise ValueError(f"variant must be 1 or 2, got {variant!r}")
    if L < 0:
        raise ValueError("layer count must be nonnegative")
    prefix = prefix or model.fresh_prefix(f"bhh{variant}_")
    x, y = _unit_pair(model, prefix, x, y)
    g, alpha = _sawtooth_layers(model, L, x, prefix)
    upper = {k: -v for k, v in _interpolant_terms(x, g, L).items()}
    upper[y] = 1.0
    model.add_linear_constraint(upper, "<=", 0.0, name=f"{prefix}up")
    last = L - 1 if variant == 1 else L
    for j in range(0, last + 1):
        # tangent lines of x**2 at the level-j segment midpoints
        lower = {k: -v for k, v in _interpolant_terms(x, g, j).items()}
        lower[y] = 1.0
        model.add_linear_constraint(lower, ">=", -(4.0**-j) / 4.0, name=f"{prefix}lo{j}")
    model.add_linear_constraint({y: 1.0, x: -2.0}, ">=", -1.0, name=f"{prefix}t1")
    model.add_linear_constraint({y: 1.0}, ">=", 0.0, name=f"{prefix}t0")
    return FormulationHandle(f"BHH{variant}", L, x, y, alpha, g)


def _mccormick_binary(model, u, w_terms, beta, w_min, w_max, prefix):
    """Envelope of ``u = w * beta`` for ``w`` (a linear expression) in ``[w_min, w_max]``, beta in [0, 1]."""
    model.add_linear_constraint({u: 1.0, beta: -w_min}, ">=", 0.0, name=f"{prefix}m1")
    model.add_linear_constraint({u: 1.0, beta: -w_max}, "<=", 0.0, name=f"{prefix}m2")
    # w - w_max (1 - beta) <= u  and  u <= w - w_min (1 - beta)
    lo = {u: 1.0, beta: -w_max}
    hi = {u: 1.0, beta: -w_min}
    for v, a in w_terms.items():
        lo[v] = lo.get(v, 0.0) - a
        hi[v] = hi.get(v, 0.0) - a
    model.add_linear_constraint(lo, ">=", -w_max, name=f"{prefix}m3")
    model.add_linear_constraint(hi, "<=", -w_min, name=f"{prefix}m4")


def nmdt_fragment(model: Model, L: int, tightened: bool = False, x: int | None = None, y: int | None = None, prefix: str | None = None) -> FormulationHandle:
    """Radix-2 discretization relaxation of ``y = x**2`` on ``[0, 1]``."""
    if L < 1:
        raise ValueError("the discretization needs at least one binary digit")
    prefix = prefix or model.fresh_prefix("tnmdt" if tightened else "nmdt")
    x, y = _unit_pair(model, prefix, x, y)
    h = 2.0**-L
    dx = model.add_variable(f"{prefix}dx", 0.0, h)
    beta, u = [], []
    u_hi = 1.0 + h if tightened else 1.0
    for i in range(1, L + 1):
        beta.append(model.add_variable(f"{prefix}b{i}", 0.0, 1.0, BINARY))
        u.append(model.add_variable(f"{prefix}u{i}", 0.0, u_hi))
    du = model.add_variable(f"{prefix}du", 0.0, h * h if tightened else h)

    expansion = {x: 1.0, dx: -1.0}
    for i, b in enumerate(beta, start=1):
        expansion[b] = -(2.0**-i)
    model.add_linear_constraint(expansion, "=", 0.0, name=f"{prefix}digits")
    square = {y: 1.0, du: -1.0}
    for i, ui in enumerate(u, start=1):
        square[ui] = -(2.0**-i)
    model.add_linear_constraint(square, "=", 0.0, name=f"{prefix}out")

    for i, (b, ui) in enumerate(zip(beta, u), start=1):
        if tightened:
            _mccormick_binary(model, ui, {x: 1.0, dx: 1.0}, b, 0.0, 1.0 + h, f"{prefix}u{i}")
        else:
            _mccormick_binary(model, ui, {x: 1.0}, b, 0.0, 1.0, f"{prefix}u{i}")
    if tightened:
        # envelope of du = dx**2 on [0, h]: tangents at 0 and h, secant above
        model.add_linear_constraint({du: 1.0, dx: -2.0 * h}, ">=", -h * h, name=f"{prefix}sq1")
        model.add_linear_constraint({du: 1.0, dx: -h}, "<=", 0.0, name=f"{prefix}sq2")
    else:
        # envelope of du = dx * x with dx in [0, h] and x in [0, 1]
        model.add_linear_constraint({du: 1.0, x: -h, dx: -1.0}, ">=", -h, name=f"{prefix}bl1")
        model.add_linear_constraint({du: 1.0, x: -h}, "<=", 0.0, name=f"{prefix}bl2")
        model.add_linear_constraint({du: 1.0, dx: -1.0}, "<=", 0.0, name=f"{prefix}bl3")
    method = "TNMDT" if tightened else "NMDT"
    return FormulationHandle(method, L, x, y, beta=beta, delta_x=dx, u=u, delta_u=du)


def scale_to_unit(model: Model, x: int, prefix: str | None = None) -> tuple[int, int, int]:
    """Link ``x`` in ``[l, u]`` to ``xt`` in ``[0, 1]`` and a square proxy ``y`` to ``yt``.

    Adds ``x = l + (u-l) xt`` and ``y = l**2 + 2 l (u-l) xt + (u-l)**2 yt``,
    so that ``yt = xt**2`` holds exactly when ``y = x**2``.
    """
    var = model.variables[x]
    lo, hi = var.lb, var.ub
    if not lo < hi:
        raise ValueError(f"variable {var.name!r} needs lower < upper to be scaled")
    prefix = prefix or f"{var.name}_"
    width = hi - lo
    xt = model.add_variable(prefix + "xt", 0.0, 1.0)
    yt = model.add_variable(prefix + "yt", 0.0, 1.0)
    slope = 2.0 * lo * width
    y_lo = lo * lo + min(0.0, slope)
    y_hi = lo * lo + max(0.0, slope) + width * width
    y = model.add_variable(prefix + "sq", y_lo, y_hi)
    model.add_linear_constraint({x: 1.0, xt: -width}, "=", lo, name=prefix + "map")
    model.add_linear_constraint({y: 1.0, xt: -slope, yt: -width * width}, "=", lo * lo, name=prefix + "sqmap")
    return xt, yt, y


def build_fragment(model: Model, method: str, L: int, x=None, y=None, prefix=None) -> FormulationHandle:
    method = normalize_method(method)
    if method == "NN":
        return nn_graph_fragment(model, L, x, y, prefix)
    if method in ("BHH1", "BHH2"):
        return bhh_relaxation(model, L, int(method[-1]), x, y, prefix)
    return nmdt_fragment(model, L, method == "TNMDT", x, y, prefix)


def square_fragment(model: Model, x: int, method: str, L: int) -> FormulationHandle:
    """Fragment for the square of an arbitrary bounded variable ``x``."""
    name = model.variables[x].name
    xt, yt, y = scale_to_unit(model, x, prefix=f"{name}_")
    handle = build_fragment(model, method, L, xt, yt, prefix=f"{name}_{normalize_method(method).lower()}_")
    handle.source_x, handle.source_y = x, y
    handle.lower, handle.upper = model.variables[x].lb, model.variables[x].ub
    return handle


def _shift_array(shift, n) -> np.ndarray:
    d = np.asarray(getattr(shift, "delta", shift), dtype=float).ravel()
    if d.shape[0] != n:
        raise ValueError(f"shift has length {d.shape[0]}, expected {n}")
    if np.any(d < 0):
        raise ValueError("shift entries must be nonnegative")
    return d


class _RelaxationBuilder:
    """Shares one square fragment per original variable across objective and constraints."""

    def __init__(self, model: Model, x_ids: list[int], method: str, L: int):
        self.model = model
        self.x_ids = x_ids
        self.method = normalize_method(method)
        self.L = L
        self.handles: dict[int, FormulationHandle] = {}

    def square_of(self, k: int) -> int:
        if k not in self.handles:
            self.handles[k] = square_fragment(self.model, self.x_ids[k], self.method, self.L)
        return self.handles[k].source_y

    def shifted_parts(self, Q, c, delta):
        """Return (convex matrix or None, linear dict) for ``x'(Q+D)x + c.x - delta.y``."""
        Qd = np.asarray(Q, dtype=float) + np.diag(delta)
        linear = {self.x_ids[k]: float(c[k]) for k in range(len(self.x_ids)) if c[k] != 0.0}
        for k, dk in enumerate(delta):
            if dk > 0.0:
                y = self.square_of(k)
                linear[y] = linear.get(y, 0.0) - dk
        convex = None if np.max(np.abs(Qd), initial=0.0) <= ZERO_TOL else Qd
        return convex, linear


def relax_quadratic_constraint(model: Model, x_ids, form: QuadraticForm, rhs: float, method: str, L: int,
                               shift=None, builder: _RelaxationBuilder | None = None, extra_linear=None, name=None):
    """Add the shifted relaxation of ``form(x) + extra_linear <= rhs`` and return the fragments it used."""
    if rhs is None or not np.isfinite(rhs):
        raise ValueError("a quadratic constraint needs a finite right-hand side")
    x_ids = list(x_ids)
    n = len(x_ids)
    if form.n != n:
        raise ValueError("form dimension does not match the variable list")
    delta = eigen_shift(form.matrix).delta if shift is None else _shift_array(shift, n)
    if not validate_psd(form.matrix, delta):
        raise ValueError("shift does not make the constraint matrix positive semidefinite")
    builder = builder or _RelaxationBuilder(model, x_ids, method, L)
    convex, linear = builder.shifted_parts(form.matrix, form.linear, delta)
    for v, a in (extra_linear or {}).items():
        linear[v] = linear.get(v, 0.0) + a
    bound = rhs - form.constant
    if convex is None:
        model.add_linear_constraint(linear, "<=", bound, name=name)
    else:
        model.add_quadratic_constraint(x_ids, QuadraticForm(convex), bound, linear, name=name)
    return [builder.handles[k] for k in sorted(builder.handles)]


def relax_qp(instance, method: str, L: int, shift=None) -> tuple[Model, list[FormulationHandle]]:
    """Mixed-integer convex relaxation of a (possibly nonconvex) quadratic instance.

    The objective becomes ``x'(Q+D)x + c.x - delta.y`` where each ``y_i`` is
    tied to ``x_i**2`` by a fragment of the requested method.  Quadratic
    constraints of the instance are relaxed the same way with their own
    eigenvalue shift.  Returns the model and the fragment handles ordered by
    variable index.
    """
    n = instance.n
    Q = np.asarray(instance.Q, dtype=float)
    c = np.asarray(instance.c, dtype=float)
    if Q.shape != (n, n) or c.shape != (n,):
        raise ValueError("instance dimensions are inconsistent")
    if shift is None:
        shift = eigen_shift(Q) if n else ShiftVector(np.zeros(0))
    delta = _shift_array(shift, n)
    if not validate_psd(Q, delta):
        raise ValueError("shift does not make Q + diag(delta) positive semidefinite")
    method = normalize_method(method)
    model = Model(name=f"{instance.name}_{method.lower()}_L{L}")
    x_ids = [model.add_variable(f"x{k}", lo, hi) for k, (lo, hi) in enumerate(zip(instance.lower, instance.upper))]
    aux_ids = [model.add_variable(f"t{k}", lo, hi) for k, (lo, hi) in enumerate(zip(instance.aux_lower, instance.aux_upper))]
    all_ids = x_ids + aux_ids
    builder = _RelaxationBuilder(model, x_ids, method, L)

    for coeffs, sense, rhs in instance.linear_constraints:
        model.add_linear_constraint({all_ids[k]: a for k, a in coeffs.items()}, sense, rhs)

    for qc in instance.quadratic_constraints:
        Qc, cc, rhs = np.asarray(qc.Q, dtype=float), np.asarray(qc.c, dtype=float), qc.rhs
        if qc.sense == ">=":
            Qc, cc, rhs = -Qc, -cc, -rhs
        elif qc.sense != "<=":
            raise ValueError("quadratic constraints must use <= or >=")
        relax_quadratic_constraint(model, x_ids, QuadraticForm(Qc, cc), rhs, method, L, qc.shift, builder)

    convex, linear = builder.shifted_parts(Q, c, delta)
    for k, a in enumerate(instance.aux_cost):
        if a != 0.0:
            linear[aux_ids[k]] = linear.get(aux_ids[k], 0.0) + float(a)
    if convex is None:
        model.set_objective(None, None, linear)
    else:
        model.set_objective(QuadraticForm(convex), x_ids, linear)
    return model, [builder.handles[k] for k in sorted(builder.handles)]
