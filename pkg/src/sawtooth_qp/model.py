"""Small optimization-model container shared by every relaxation builder.

A :class:`Model` holds bounded variables (continuous or binary), sparse linear
constraints, an objective made of linear terms plus an optional convex
quadratic form over a subset of the variables, and optional convex quadratic
``<=`` constraints.  The sense is always minimization.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np

from .shift import validate_psd

CONTINUOUS = "continuous"
BINARY = "binary"
SENSES = ("<=", "=", ">=")
_SENSE_ALIASES = {"<=": "<=", "≤": "<=", "L": "<=", "=": "=", "==": "=", "E": "=", ">=": ">=", "≥": ">=", "G": ">="}


@dataclass
class Variable:
    id: int
    name: str
    lb: float
    ub: float
    kind: str = CONTINUOUS

    @property
    def is_binary(self):
        return self.kind == BINARY


@dataclass
class LinearConstraint:
    id: int
    coeffs: dict[int, float]  # variable id -> coefficient, insertion ordered
    sense: str
    rhs: float
    name: str = ""

    def activity(self, x) -> float:
        return float(sum(a * x[j] for j, a in self.coeffs.items()))

    def violation(self, x) -> float:
        lhs = self.activity(x)
        if self.sense == "<=":
            return max(0.0, lhs - self.rhs)
        if self.sense == ">=":
            return max(0.0, self.rhs - lhs)
        return abs(lhs - self.rhs)


@dataclass
class QuadraticForm:
    """``x' Q x + c . x + constant`` with ``Q`` stored symmetrized."""

    matrix: np.ndarray
    linear: np.ndarray | None = None
    constant: float = 0.0

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        if Q.shape[0] != Q.shape[1]:
            raise ValueError(f"quadratic form needs a square matrix, got {Q.shape}")
        self.matrix = 0.5 * (Q + Q.T)
        n = Q.shape[0]
        self.linear = np.zeros(n) if self.linear is None else np.asarray(self.linear, dtype=float).ravel()
        if self.linear.shape[0] != n:
            raise ValueError("linear part does not match the matrix dimension")
        self.constant = float(self.constant)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(x @ self.matrix @ x + self.linear @ x + self.constant)

    def gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return 2.0 * self.matrix @ x + self.linear


@dataclass
class QuadraticConstraint:
    """Convex constraint ``form(x[var_ids]) + sum(linear) <= rhs``."""

    id: int
    var_ids: list[int]
    form: QuadraticForm
    linear: dict[int, float]
    rhs: float
    name: str = ""

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return self.form.value(x[self.var_ids]) + sum(a * x[j] for j, a in self.linear.items())

    def violation(self, x) -> float:
        return max(0.0, self.value(x) - self.rhs)


def _check_name(name: str) -> str:
    if not name or any(ch.isspace() for ch in name):
        raise ValueError(f"invalid name {name!r}: must be nonempty without whitespace")
    return name


@dataclass
class Model:
    variables: list[Variable] = field(default_factory=list)
    constraints: list[LinearConstraint] = field(default_factory=list)
    quadratic_constraints: list[QuadraticConstraint] = field(default_factory=list)
    objective_linear: dict[int, float] = field(default_factory=dict)
    objective_constant: float = 0.0
    objective_quadratic: QuadraticForm | None = None
    objective_quad_vars: list[int] = field(default_factory=list)
    name: str = "model"

    def __post_init__(self):
        self._names = {v.name: v.id for v in self.variables}
        self._prefix_counts: dict[str, int] = {}

    def fresh_prefix(self, stem: str) -> str:
        """Return ``stem<k>_`` for the first k whose names are not yet in use."""
        k = self._prefix_counts.get(stem, 0)
        while any(name.startswith(f"{stem}{k}_") for name in self._names):
            k += 1
        self._prefix_counts[stem] = k + 1
        return f"{stem}{k}_"

    # -- construction -----------------------------------------------------
    def add_variable(self, name: str, lb: float, ub: float, kind: str = CONTINUOUS) -> int:
        _check_name(name)
        if name in self._names:
            raise ValueError(f"duplicate variable name {name!r}")
        lb, ub = float(lb), float(ub)
        if not (math.isfinite(lb) and math.isfinite(ub)):
            raise ValueError(f"variable {name!r} needs finite bounds")
        if lb > ub:
            raise ValueError(f"variable {name!r} has lower bound {lb} above upper bound {ub}")
        if kind not in (CONTINUOUS, BINARY):
            raise ValueError(f"unknown variable kind {kind!r}")
        if kind == BINARY and (lb < 0 or ub > 1):
            raise ValueError(f"binary variable {name!r} must have bounds inside [0, 1]")
        vid = len(self.variables)
        self.variables.append(Variable(vid, name, lb, ub, kind))
        self._names[name] = vid
        return vid

    def _coeff_dict(self, coeffs) -> dict[int, float]:
        items = coeffs.items() if isinstance(coeffs, dict) else coeffs
        out: dict[int, float] = {}
        for vid, a in items:
            vid = int(vid)
            if not 0 <= vid < len(self.variables):
                raise ValueError(f"unknown variable id {vid}")
            if vid in out:
                raise ValueError(f"duplicate variable id {vid} in coefficient list")
            a = float(a)
            if not math.isfinite(a):
                raise ValueError("coefficients must be finite")
            if a != 0.0:
                out[vid] = a
        return out

    def add_linear_constraint(self, coeffs, sense: str, rhs: float, name: str | None = None) -> int:
        if sense not in _SENSE_ALIASES:
            raise ValueError(f"unknown constraint sense {sense!r}")
        terms = self._coeff_dict(coeffs)
        if not terms:
            raise ValueError("constraint has no nonzero coefficient")
        rhs = float(rhs)
        if not math.isfinite(rhs):
            raise ValueError("right-hand side must be finite")
        cid = len(self.constraints)
        self.constraints.append(LinearConstraint(cid, terms, _SENSE_ALIASES[sense], rhs, _check_name(name or f"R{cid}")))
        return cid

    def set_objective(self, quadratic: QuadraticForm | None = None, quad_vars=None, linear=None, constant: float = 0.0):
        """Replace the objective.  ``quadratic`` acts on ``quad_vars`` (in that order) and must be convex."""
        if quadratic is not None:
            quad_vars = [int(v) for v in quad_vars]
            if len(quad_vars) != quadratic.n or len(set(quad_vars)) != len(quad_vars):
                raise ValueError("quad_vars must list distinct variables matching the form dimension")
            for v in quad_vars:
                if not 0 <= v < len(self.variables):
                    raise ValueError(f"unknown variable id {v}")
            if not validate_psd(quadratic.matrix, np.zeros(quadratic.n)):
                raise ValueError("quadratic objective is not positive semidefinite")
        self.objective_quadratic = quadratic
        self.objective_quad_vars = list(quad_vars) if quadratic is not None else []
        self.objective_linear = self._coeff_dict(linear or {})
        self.objective_constant = float(constant)

    def add_quadratic_constraint(self, var_ids, form: QuadraticForm, rhs: float, linear=None, name: str | None = None) -> int:
        var_ids = [int(v) for v in var_ids]
        if len(var_ids) != form.n:
            raise ValueError("var_ids must match the form dimension")
        for v in var_ids:
            if not 0 <= v < len(self.variables):
                raise ValueError(f"unknown variable id {v}")
        if not validate_psd(form.matrix, np.zeros(form.n)):
            raise ValueError("quadratic constraint is not convex")
        qid = len(self.quadratic_constraints)
        self.quadratic_constraints.append(
            QuadraticConstraint(qid, var_ids, form, self._coeff_dict(linear or {}), float(rhs), _check_name(name or f"Q{qid}"))
        )
        return qid

    # -- queries ------------------------------------------------------------
    @property
    def num_variables(self) -> int:
        return len(self.variables)

    @property
    def num_constraints(self) -> int:
        return len(self.constraints)

    def binary_ids(self) -> list[int]:
        return [v.id for v in self.variables if v.is_binary]

    def var_id(self, name: str) -> int:
        return self._names[name]

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array([v.lb for v in self.variables]), np.array([v.ub for v in self.variables])

    def objective_value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        val = self.objective_constant + sum(a * x[j] for j, a in self.objective_linear.items())
        if self.objective_quadratic is not None:
            val += self.objective_quadratic.value(x[self.objective_quad_vars])
        return float(val)

    def max_violation(self, x) -> float:
        """Largest bound, linear or quadratic constraint violation at ``x``."""
        x = np.asarray(x, dtype=float)
        lb, ub = self.bounds()
        worst = float(np.max(np.maximum(lb - x, x - ub), initial=0.0))
        for con in self.constraints:
            worst = max(worst, con.violation(x))
        for qc in self.quadratic_constraints:
            worst = max(worst, qc.violation(x))
        return worst

    def copy(self) -> "Model":
        return copy.deepcopy(self)


def new_model(name: str = "model") -> Model:
    return Model(name=name)
