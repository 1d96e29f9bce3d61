"""Areas, error constants and LP-based sharpness checks for the square relaxations."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .formulations import bhh_relaxation, nmdt_fragment, nn_graph_fragment, normalize_method, square_fragment
from .graycode import gray_encode, restricted_sequence
from .model import new_model
from .sawtooth import interpolant_eval
from .solver.simplex import OPTIMAL, model_to_lp


class AnalysisError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# closed forms
# ---------------------------------------------------------------------------


def mccormick_area(x1: float, x2: float) -> float:
    """Area between the secant and the two endpoint tangents of ``x**2`` on ``[x1, x2]``."""
    if x1 > x2:
        raise ValueError("need x1 <= x2")
    return (x2 - x1) ** 3 / 4.0


def bhh_area(L: int, a: float, b: float, variant: int) -> float:
    if not a < b:
        raise ValueError("need a < b")
    if L < 0:
        raise ValueError("L must be nonnegative")
    scale = (b - a) ** 3 * 2.0 ** (-2 * L)
    if variant == 1:
        return scale / 4.0
    if variant == 2:
        return 3.0 * scale / 16.0
    raise ValueError("variant must be 1 or 2")


def closed_form_area(method: str, L: int, a: float, b: float) -> float | None:
    method = normalize_method(method)
    if a == b:
        return 0.0
    if method == "NN":
        return 0.0
    if method in ("BHH1", "BHH2"):
        return bhh_area(L, a, b, int(method[-1]))
    return None


# ---------------------------------------------------------------------------
# LP probes at fixed x
# ---------------------------------------------------------------------------


class FixedPointProbe:
    """Minimize and maximize one variable of a model with some variables pinned.

    Two warm-started LPs are kept so consecutive probes reuse their bases.
    """

    def __init__(self, model, target: int):
        obj = np.zeros(model.num_variables)
        obj[target] = 1.0
        self.lp_min, _ = model_to_lp(model, obj)
        self.lp_max, _ = model_to_lp(model, -obj)
        self.base_lb, self.base_ub = model.bounds()

    def interval(self, pins: dict[int, float]) -> tuple[float, float]:
        lb, ub = self.base_lb.copy(), self.base_ub.copy()
        for vid, val in pins.items():
            lb[vid] = ub[vid] = val
        out = []
        for lp, sign in ((self.lp_min, 1.0), (self.lp_max, -1.0)):
            lp.set_all_bounds(lb, ub)
            sol = lp.solve()
            if sol.status != OPTIMAL:
                lp.reset_basis()
                sol = lp.solve()
            if sol.status != OPTIMAL:
                raise AnalysisError(f"probe LP returned {sol.status}")
            out.append(sign * sol.objective)
        return out[0], out[1]


def _cell_assignment(method: str, L: int, xt: float) -> list[int]:
    """Binary values selecting the cell of ``[0, 1]`` that contains ``xt``."""
    k = min(int(np.floor(xt * 2**L)), 2**L - 1) if L > 0 else 0
    if method in ("NMDT", "TNMDT"):
        return [(k >> (L - i)) & 1 for i in range(1, L + 1)]
    return list(gray_encode(k, L).bits) if L > 0 else []


def riemann_area(method: str, L: int, a: float, b: float, samples: int = 10_000) -> float:
    """Left-endpoint Riemann sum of the relaxation's y-extent over ``[a, b]``.

    At each sample the binaries are fixed to the cell containing the point,
    so the sum measures the union of the per-cell polytopes.
    """
    if samples < 100:
        raise ValueError("use at least 100 samples")
    if a == b:
        return 0.0
    if a > b:
        raise ValueError("need a <= b")
    method = normalize_method(method)
    model = new_model("area")
    x = model.add_variable("x", a, b)
    handle = square_fragment(model, x, method, L)
    probe = FixedPointProbe(model, handle.source_y)
    binaries = handle.binaries
    step = (b - a) / samples
    total = 0.0
    for k in range(samples):
        pins = {x: a + k * step}
        for vid, val in zip(binaries, _cell_assignment(method, L, k / samples)):
            pins[vid] = float(val)
        lo, hi = probe.interval(pins)
        total += max(hi - lo, 0.0)
    return total * step


@dataclass
class AreaReport:
    method: str
    L: int
    interval: tuple[float, float]
    closed_form: float | None
    riemann: float | None
    samples: int

    @property
    def relative_difference(self) -> float | None:
        if self.closed_form is None or self.riemann is None or self.closed_form == 0:
            return None
        return abs(self.riemann - self.closed_form) / self.closed_form


def _ratios(values) -> list[float | None]:
    out = []
    for prev, cur in zip(values, values[1:]):
        out.append(prev / cur if prev is not None and cur not in (None, 0) else None)
    return out


def area_ratio_table(method: str, interval=(0.0, 1.0), L_max: int = 4, samples: int = 10_000, numeric: bool = True) -> list[AreaReport]:
    method = normalize_method(method)
    a, b = map(float, interval)
    reports = []
    for L in range(0, L_max + 1):
        if method in ("NN", "NMDT", "TNMDT") and L == 0:
            continue
        riemann = riemann_area(method, L, a, b, samples) if numeric else None
        reports.append(AreaReport(method, L, (a, b), closed_form_area(method, L, a, b), riemann, samples))
    return reports


def closed_form_ratios(reports: list[AreaReport]) -> list[float | None]:
    return _ratios([r.closed_form for r in reports])


def riemann_ratios(reports: list[AreaReport]) -> list[float | None]:
    return _ratios([r.riemann for r in reports])


AREA_CSV_HEADER = ["method", "L", "a", "b", "closed_form", "riemann", "samples", "closed_ratio", "riemann_ratio"]


def area_csv(reports: list[AreaReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(AREA_CSV_HEADER)
    closed = [None] + closed_form_ratios(reports)
    numeric = [None] + riemann_ratios(reports)

    def fmt(v):
        return "" if v is None else f"{v:.6g}"

    for r, cr, nr in zip(reports, closed, numeric):
        writer.writerow([r.method, r.L, fmt(r.interval[0]), fmt(r.interval[1]), fmt(r.closed_form), fmt(r.riemann), r.samples, fmt(cr), fmt(nr)])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# sharpness
# ---------------------------------------------------------------------------


@dataclass
class SharpnessReport:
    L: int
    grid: int
    lower_deviation: float
    upper_deviation: float

    @property
    def max_deviation(self) -> float:
        return max(self.lower_deviation, self.upper_deviation)


def sharpness_check(L: int, grid: int = 513) -> SharpnessReport:
    """Compare the fragment LP's y-range at fixed x with ``[F_L(x), x]``."""
    if not 1 <= L <= 6:
        raise ValueError("sharpness check supports 1 <= L <= 6")
    model = new_model("sharp")
    h = nn_graph_fragment(model, L)
    probe = FixedPointProbe(model, h.y)
    lower_dev = upper_dev = 0.0
    for xv in np.linspace(0.0, 1.0, grid):
        lo, hi = probe.interval({h.x: float(xv)})
        lower_dev = max(lower_dev, abs(lo - float(interpolant_eval(L, xv))))
        upper_dev = max(upper_dev, abs(hi - float(xv)))
    return SharpnessReport(L, grid, lower_dev, upper_dev)


def bound_recursion(L: int, fixed: dict[int, int]) -> list[tuple[Fraction, Fraction]]:
    """Intervals ``[a_i, b_i]`` for ``g_0..g_L`` under a partial assignment of the binaries.

    Starts from ``[0, 1]`` at layer ``L`` and walks down: a fixed 0 halves the
    interval, a fixed 1 reflects it through ``1 - t/2``, and a free binary
    gives ``[a/2, 1 - a/2]``.
    """
    bounds = [(Fraction(0), Fraction(1))]
    for i in range(L, 0, -1):
        lo, hi = bounds[0]
        if i in fixed and fixed[i] == 0:
            new = (lo / 2, hi / 2)
        elif i in fixed:
            new = (1 - hi / 2, 1 - lo / 2)
        else:
            new = (lo / 2, 1 - lo / 2)
        bounds.insert(0, new)
    return bounds


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points) -> list[tuple[Fraction, Fraction]]:
    """Monotone-chain hull in counter-clockwise order (collinear points dropped)."""
    pts = sorted(set(points))
    if len(pts) <= 2:
        return pts
    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def _chains(points):
    """Lower and upper hull chains, each sorted by x."""
    pts = sorted(set(points))
    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) >= 0:
            upper.pop()
        upper.append(p)
    return lower, upper


def _chain_value(chain, x: float) -> float:
    xs = [float(p[0]) for p in chain]
    ys = [float(p[1]) for p in chain]
    return float(np.interp(x, xs, ys))


@dataclass
class HereditaryReport:
    L: int
    fixed: dict[int, int]
    interval: tuple[Fraction, Fraction]
    cells: list[int]
    deviation: float


def hereditary_check(L: int, fixed: dict[int, int], grid: int = 129) -> HereditaryReport:
    """LP y-range of the restricted fragment against the hull of the feasible graph pieces."""
    if not 1 <= L <= 6:
        raise ValueError("hereditary check supports 1 <= L <= 6")
    seq = restricted_sequence(L, fixed)
    if not seq.values:
        raise AnalysisError("restriction leaves no feasible cell")
    width = Fraction(1, 2**L)
    points = []
    for k in seq.values:
        for xk in (k * width, (k + 1) * width):
            points.append((xk, xk * xk))  # the interpolant is exact at breakpoints
    lower_chain, upper_chain = _chains(points)
    a0, b0 = bound_recursion(L, fixed)[0]
    deviation = float(max(abs(a0 - lower_chain[0][0]), abs(b0 - lower_chain[-1][0])))

    model = new_model("hereditary")
    h = nn_graph_fragment(model, L)
    probe = FixedPointProbe(model, h.y)
    pins = {h.alpha[pos - 1]: float(val) for pos, val in fixed.items()}
    for xv in np.linspace(float(a0), float(b0), grid):
        pins[h.x] = float(xv)
        lo, hi = probe.interval(pins)
        deviation = max(deviation, abs(lo - _chain_value(lower_chain, xv)), abs(hi - _chain_value(upper_chain, xv)))
    return HereditaryReport(L, dict(fixed), (a0, b0), list(seq.values), deviation)


# ---------------------------------------------------------------------------
# discretization error constants
# ---------------------------------------------------------------------------


@dataclass
class CellError:
    cell: int
    over: float  # max of y - x**2 over the cell
    under: float  # max of x**2 - y over the cell

    @property
    def worst(self) -> float:
        return max(self.over, self.under)


def nmdt_cell_errors(L: int, tightened: bool, points_per_cell: int = 33) -> list[CellError]:
    """Per-cell LP maximum of ``|y - x**2|`` with the digits fixed to the cell.

    Points include both cell endpoints and the midpoint (``points_per_cell`` odd).
    """
    if points_per_cell % 2 == 0:
        raise ValueError("points_per_cell must be odd so that the midpoint is sampled")
    model = new_model("nmdt_error")
    h = nmdt_fragment(model, L, tightened)
    probe = FixedPointProbe(model, h.y)
    width = 2.0**-L
    out = []
    for k in range(2**L):
        digits = [(k >> (L - i)) & 1 for i in range(1, L + 1)]
        over = under = 0.0
        for xv in k * width + np.linspace(0.0, width, points_per_cell):
            pins = {h.x: float(xv)}
            pins.update({b: float(d) for b, d in zip(h.beta, digits)})
            lo, hi = probe.interval(pins)
            over = max(over, hi - xv * xv)
            under = max(under, xv * xv - lo)
        out.append(CellError(k, over, under))
    return out


def bilinear_envelope_gap(width: float) -> float:
    """Largest gap of the box envelope of ``d * x`` on ``[0, width] x [0, 1]``.

    Attained at the box center, where the upper and lower envelopes differ by
    ``width / 2`` and either side is ``width / 4`` from the product.
    """
    d, x = width / 2.0, 0.5
    upper = min(width * x, d)
    lower = max(0.0, width * x + d - width)
    return max(upper - d * x, d * x - lower)


def residual_envelope_errors(L: int, samples: int = 1_000_000, seed: int = 0) -> tuple[float, float]:
    """Monte-Carlo mean over- and under-estimation of the residual-square envelope.

    The residual ``d`` is uniform on ``[0, h]`` with ``h = 2**-L``; the envelope
    uses the secant above and the endpoint tangents below.
    """
    h = 2.0**-L
    d = np.random.default_rng(seed).uniform(0.0, h, samples)
    sq = d * d
    secant = h * d
    tangent = np.maximum(0.0, 2.0 * h * d - h * h)
    return float(np.mean(secant - sq)), float(np.mean(sq - tangent))


# ---------------------------------------------------------------------------
# lower envelope of the two-sided relaxation
# ---------------------------------------------------------------------------


def tangent_envelope(L: int, x) -> np.ndarray:
    """Pointwise max of the tangents of ``x**2`` at ``i * 2**-(L+1)``."""
    x = np.asarray(x, dtype=float)
    knots = np.arange(2 ** (L + 1) + 1) * 2.0 ** -(L + 1)
    return np.max(knots[:, None] * (2.0 * x[None, :] - knots[:, None]), axis=0)


def bhh_lower_envelope_deviation(L: int, grid: int = 1000, variant: int = 2) -> float:
    """Max gap between the relaxation's min-y (binaries at the cell) and the tangent envelope."""
    model = new_model("envelope")
    h = bhh_relaxation(model, L, variant)
    probe = FixedPointProbe(model, h.y)
    xs = np.linspace(0.0, 1.0, grid)
    ref = tangent_envelope(L if variant == 2 else L - 1, xs)
    worst = 0.0
    for xv, r in zip(xs, ref):
        pins = {h.x: float(xv)}
        pins.update({a: float(v) for a, v in zip(h.alpha, _cell_assignment("BHH2", L, xv))})
        lo, _ = probe.interval(pins)
        worst = max(worst, abs(lo - r))
    return worst
