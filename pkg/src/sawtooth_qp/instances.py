"""Problem instances: containers, file formats, generators and exact oracles.

boxQP text format
-----------------
Whitespace separated numbers, ``#`` starts a comment::

    n
    c_1 ... c_n
    Q_11 ... Q_1n
    ...
    Q_n1 ... Q_nn

The instance is ``min x'Qx + c.x`` over ``[0, 1]^n``.  Archives that store
``0.5 x'Qx`` or maximization problems must be converted before reading.

Random numbers
--------------
Generators draw from :class:`Lcg64`, the 64-bit linear congruential
generator ``s <- (6364136223846793005 s + 1442695040888963407) mod 2**64``.
A uniform draw on [0, 1) uses the top 53 bits, ``(s >> 11) / 2**53``, taken
after advancing the state.  The state is initialised to the seed itself.
"""

from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

LCG_MULTIPLIER = 6364136223846793005
LCG_INCREMENT = 1442695040888963407
LCG_MASK = (1 << 64) - 1


class Lcg64:
    """Portable 64-bit linear congruential generator (see module docstring)."""

    def __init__(self, seed: int):
        self.state = int(seed) & LCG_MASK

    def next_u64(self) -> int:
        self.state = (LCG_MULTIPLIER * self.state + LCG_INCREMENT) & LCG_MASK
        return self.state

    def uniform(self, low: float = 0.0, high: float = 1.0) -> float:
        return low + (high - low) * ((self.next_u64() >> 11) / float(1 << 53))


@dataclass
class QuadConstraintSpec:
    """``x'Qx + c.x  (sense)  rhs`` over the instance's original variables."""

    Q: np.ndarray
    c: np.ndarray
    sense: str
    rhs: float
    shift: np.ndarray | None = None  # optional external shift for this row

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        if self.sense not in ("<=", ">="):
            raise ValueError("quadratic constraint sense must be <= or >=")

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(x @ self.Q @ x + self.c @ x)


@dataclass
class QpInstance:
    """``min x'Qx + c.x + aux_cost.t`` subject to bounds and optional extra rows.

    ``t`` are auxiliary continuous variables (used to linearize 1-norm
    objectives); ``linear_constraints`` index the stacked vector ``(x, t)``.
    """

    n: int
    Q: np.ndarray
    c: np.ndarray
    lower: np.ndarray = None
    upper: np.ndarray = None
    quadratic_constraints: list[QuadConstraintSpec] = field(default_factory=list)
    name: str = "instance"
    aux_lower: list[float] = field(default_factory=list)
    aux_upper: list[float] = field(default_factory=list)
    aux_cost: list[float] = field(default_factory=list)
    linear_constraints: list[tuple[dict[int, float], str, float]] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=float).reshape(self.n, self.n)
        if np.max(np.abs(self.Q - self.Q.T), initial=0.0) > 1e-9 * max(1.0, np.max(np.abs(self.Q), initial=0.0)):
            raise ValueError("Q must be symmetric")
        self.Q = 0.5 * (self.Q + self.Q.T)
        self.c = np.asarray(self.c, dtype=float).reshape(self.n)
        self.lower = np.zeros(self.n) if self.lower is None else np.asarray(self.lower, dtype=float)
        self.upper = np.ones(self.n) if self.upper is None else np.asarray(self.upper, dtype=float)
        if not (np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper))):
            raise ValueError("bounds must be finite")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound above upper bound")
        if not len(self.aux_lower) == len(self.aux_upper) == len(self.aux_cost):
            raise ValueError("auxiliary variable data have inconsistent lengths")

    @property
    def is_box(self) -> bool:
        return not (self.quadratic_constraints or self.linear_constraints or self.aux_cost)

    def objective(self, x, aux=None) -> float:
        x = np.asarray(x, dtype=float)
        val = float(x @ self.Q @ x + self.c @ x)
        if aux is not None and len(self.aux_cost):
            val += float(np.asarray(self.aux_cost) @ np.asarray(aux))
        return val

    # -- JSON -------------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "n": self.n,
            "Q": self.Q.tolist(),
            "c": self.c.tolist(),
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "aux_lower": list(map(float, self.aux_lower)),
            "aux_upper": list(map(float, self.aux_upper)),
            "aux_cost": list(map(float, self.aux_cost)),
            "linear_constraints": [
                {"coeffs": {str(k): v for k, v in coeffs.items()}, "sense": s, "rhs": r}
                for coeffs, s, r in self.linear_constraints
            ],
            "quadratic_constraints": [
                {"Q": qc.Q.tolist(), "c": qc.c.tolist(), "sense": qc.sense, "rhs": qc.rhs} for qc in self.quadratic_constraints
            ],
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QpInstance":
        return cls(
            n=int(d["n"]),
            Q=np.array(d["Q"], dtype=float),
            c=np.array(d["c"], dtype=float),
            lower=np.array(d.get("lower", [0.0] * int(d["n"])), dtype=float),
            upper=np.array(d.get("upper", [1.0] * int(d["n"])), dtype=float),
            quadratic_constraints=[
                QuadConstraintSpec(np.array(q["Q"]), np.array(q["c"]), q["sense"], float(q["rhs"]))
                for q in d.get("quadratic_constraints", [])
            ],
            name=d.get("name", "instance"),
            aux_lower=list(d.get("aux_lower", [])),
            aux_upper=list(d.get("aux_upper", [])),
            aux_cost=list(d.get("aux_cost", [])),
            linear_constraints=[
                ({int(k): float(v) for k, v in row["coeffs"].items()}, row["sense"], float(row["rhs"]))
                for row in d.get("linear_constraints", [])
            ],
            meta=d.get("meta", {}),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "QpInstance":
        return cls.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# boxQP text format
# ---------------------------------------------------------------------------


class InstanceFormatError(ValueError):
    pass


def parse_boxqp(text: str, name: str = "boxqp") -> QpInstance:
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            rows.append((lineno, [float(tok) for tok in line.replace("−", "-").split()]))
        except ValueError:
            raise InstanceFormatError(f"line {lineno}: non-numeric token in {line!r}") from None
    if not rows:
        raise InstanceFormatError("empty instance file")
    lineno, first = rows[0]
    if len(first) != 1 or first[0] != int(first[0]) or first[0] < 1:
        raise InstanceFormatError(f"line {lineno}: first line must hold the dimension n >= 1")
    n = int(first[0])
    if len(rows) != n + 2:
        raise InstanceFormatError(f"expected {n + 2} data lines (n, c and {n} rows of Q), found {len(rows)}")
    lineno, c = rows[1]
    if len(c) != n:
        raise InstanceFormatError(f"line {lineno}: linear term has {len(c)} entries, expected {n}")
    Q = np.zeros((n, n))
    for k, (lineno, vals) in enumerate(rows[2:]):
        if len(vals) != n:
            raise InstanceFormatError(f"line {lineno}: row {k + 1} of Q has {len(vals)} entries, expected {n}")
        Q[k] = vals
    asym = np.max(np.abs(Q - Q.T))
    scale = max(1.0, np.max(np.abs(Q)))
    if asym > 1e-9 * scale:
        raise InstanceFormatError(f"Q is not symmetric (max asymmetry {asym:g})")
    if asym > 0:
        warnings.warn(f"symmetrizing Q (max asymmetry {asym:g})", stacklevel=2)
    return QpInstance(n, 0.5 * (Q + Q.T), np.array(c), name=name)


def format_boxqp(instance: QpInstance) -> str:
    lines = [str(instance.n), " ".join(repr(float(v)) for v in instance.c)]
    lines += [" ".join(repr(float(v)) for v in row) for row in instance.Q]
    return "\n".join(lines) + "\n"


def read_instance(path) -> QpInstance:
    """Load a boxQP text file or a JSON dump (chosen by the ``.json`` suffix)."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        return QpInstance.from_json(text)
    return parse_boxqp(text, name=path.stem)


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------


def gen_boxqp(n: int, seed: int, low: float = -5.0, high: float = 5.0) -> QpInstance:
    """Random boxQP: upper-triangle and linear entries uniform on ``[low, high]``."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = Lcg64(seed)
    Q = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            Q[i, j] = Q[j, i] = rng.uniform(low, high)
    c = np.array([rng.uniform(low, high) for _ in range(n)])
    return QpInstance(n, Q, c, name=f"boxqp_n{n}_s{seed}")


def qcp_perturbations(n: int, seed: int) -> np.ndarray:
    rng = Lcg64(seed)
    eps = np.array([rng.uniform(-1.0, 1.0) * 1e-3 for _ in range(n)])
    return eps[np.argsort(np.abs(eps), kind="stable")]


def gen_qcp(n: int, seed: int = 0) -> QpInstance:
    """``min (100/n) sum |x_i - eps_i|`` s.t. ``sum x_i**2 >= n - 0.5``, ``x`` in ``[-1, 1]^n``."""
    if n < 1:
        raise ValueError("n must be positive")
    eps = qcp_perturbations(n, seed)
    rows = []
    for i in range(n):
        # t_i >= x_i - eps_i and t_i >= eps_i - x_i
        rows.append(({n + i: 1.0, i: -1.0}, ">=", -float(eps[i])))
        rows.append(({n + i: 1.0, i: 1.0}, ">=", float(eps[i])))
    constraint = QuadConstraintSpec(np.eye(n), np.zeros(n), ">=", n - 0.5)
    return QpInstance(
        n, np.zeros((n, n)), np.zeros(n), -np.ones(n), np.ones(n), [constraint], name=f"qcp_n{n}_s{seed}",
        aux_lower=[0.0] * n, aux_upper=[2.0] * n, aux_cost=[100.0 / n] * n, linear_constraints=rows,
        meta={"eps": eps.tolist()},
    )


def qcp_closed_form(n: int, eps) -> float:
    """Optimal value of the perturbed sphere-exterior problem built by :func:`gen_qcp`."""
    eps = np.abs(np.asarray(eps, dtype=float))
    if eps.shape != (n,):
        raise ValueError("eps must have length n")
    if np.any(eps >= math.sqrt(0.5)):
        raise ValueError("perturbations must be smaller than sqrt(0.5) in magnitude")
    full = 1.0 - eps
    best = min(np.sum(full) - full[j] + (math.sqrt(0.5) - eps[j]) for j in range(n))
    return 100.0 / n * float(best)


def qcp_closed_form_point(eps) -> np.ndarray:
    """A minimizer: every coordinate at ``sign(eps_i)`` except the smallest-|eps| one at ``sign * sqrt(0.5)``."""
    eps = np.asarray(eps, dtype=float)
    sign = np.where(eps < 0, -1.0, 1.0)
    x = sign.copy()
    j = int(np.argmin(np.abs(eps)))
    x[j] = sign[j] * math.sqrt(0.5)
    return x


def gen_best_nearest(instance: QpInstance, gamma_hat: float, target: float = 0.5) -> QpInstance:
    """Closest point (1-norm) to ``target`` whose boxQP cost is at most ``0.95 * gamma_hat``."""
    if gamma_hat >= 0:
        raise ValueError("the reference cost must be negative")
    n = instance.n
    rows = []
    for i in range(n):
        rows.append(({n + i: 1.0, i: -1.0}, ">=", -target))
        rows.append(({n + i: 1.0, i: 1.0}, ">=", target))
    reach = float(np.max(np.maximum(instance.upper - target, target - instance.lower)))
    constraint = QuadConstraintSpec(instance.Q, instance.c, "<=", 0.95 * gamma_hat)
    return QpInstance(
        n, np.zeros((n, n)), np.zeros(n), instance.lower.copy(), instance.upper.copy(), [constraint],
        name=f"{instance.name}_nearest", aux_lower=[0.0] * n, aux_upper=[reach] * n, aux_cost=[1.0] * n,
        linear_constraints=rows, meta={"gamma_hat": gamma_hat, "target": target},
    )


# ---------------------------------------------------------------------------
# exact oracle
# ---------------------------------------------------------------------------


def boxqp_bruteforce(instance: QpInstance) -> tuple[float, np.ndarray]:
    """Global minimum of ``x'Qx + c.x`` over the box by enumerating active sets.

    Each coordinate is at its lower bound, at its upper bound, or free; free
    coordinates must satisfy ``2 Q_FF x_F = -(c_F + 2 Q_FB x_B)``.  Patterns
    with a singular free block are skipped: a minimizer on such a face can be
    moved along the null space to a face with more active bounds.
    """
    n = instance.n
    if n > 10:
        raise ValueError("brute force is limited to n <= 10")
    Q, c, lo, hi = instance.Q, instance.c, instance.lower, instance.upper
    best_val, best_x = np.inf, None
    for pattern in itertools.product((0, 1, 2), repeat=n):
        pattern = np.array(pattern)
        x = np.where(pattern == 0, lo, hi).astype(float)
        free = np.flatnonzero(pattern == 2)
        if free.size:
            bound = np.flatnonzero(pattern != 2)
            A = 2.0 * Q[np.ix_(free, free)]
            rhs = -(c[free] + 2.0 * Q[np.ix_(free, bound)] @ x[bound])
            if np.linalg.cond(A) > 1e12:
                continue
            xf = np.linalg.solve(A, rhs)
            if np.any(xf < lo[free] - 1e-12) or np.any(xf > hi[free] + 1e-12):
                continue
            x[free] = np.clip(xf, lo[free], hi[free])
        val = float(x @ Q @ x + c @ x)
        if val < best_val - 1e-12:
            best_val, best_x = val, x
    return best_val, best_x
