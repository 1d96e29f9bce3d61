"""Valid inequalities for the integer hull of the sawtooth graph fragment.

With ``h_i = 2 g_i - 1`` and ``a_i = 1 - 2 alpha_i`` the layer recursion reads
``h_i = 2 a_i h_{i-1} + 1``.  Writing ``b_j`` for the running product
``a_1 ... a_j`` and relaxing the bilinear term ``h_L b_L`` gives two base
inequalities that are linear in ``(g_0, g_L)`` and in the products ``b_j``::

    g_L <= +2**(L-1) (2 g_0 - 1) + 1 + sum_j 2**(L-1-j) (+b_j)      (sign +1)
    g_L <= -2**(L-1) (2 g_0 - 1) + 1 + sum_j 2**(L-1-j) (-b_j)      (sign -1)

for ``j = 1 .. L-1``.  Each signed product is then bounded by a facet of a
parity polytope: for a subset ``I`` of ``{1..j}``,

    sign * b_j <= 2 (sum_{i not in I} alpha_i + sum_{i in I} (1 - alpha_i)) - 1

with ``|I|`` odd for sign +1 and even for sign -1.  Substituting one such
bound per ``j`` yields a linear cut in ``(g_0, g_L, alpha_1..alpha_{L-1})``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

VIOLATION_TOL = 1e-7


@dataclass(frozen=True)
class BaseCut:
    """Template ``g_L <= g0_coef*g_0 + constant + sum_j weights[j-1] * sign * b_j``."""

    L: int
    sign: int
    g0_coef: float
    constant: float
    weights: tuple[float, ...]  # weight of b_j for j = 1..L-1

    def value_bound(self, g0: float, products) -> float:
        return self.g0_coef * g0 + self.constant + sum(w * self.sign * b for w, b in zip(self.weights, products))


@dataclass
class Cut:
    """``gL_coef*g_L + g0_coef*g_0 + alpha_coefs . alpha <= rhs``."""

    L: int
    g0_coef: float
    gL_coef: float
    alpha_coefs: np.ndarray  # over alpha_1 .. alpha_{L-1}
    rhs: float
    tag: str = "base"
    subsets: list[tuple[int, ...]] = field(default_factory=list)

    def lhs(self, g0: float, gL: float, alpha) -> float:
        alpha = np.asarray(alpha, dtype=float)[: len(self.alpha_coefs)]
        return float(self.gL_coef * gL + self.g0_coef * g0 + self.alpha_coefs @ alpha)

    def violation(self, g0: float, gL: float, alpha) -> float:
        return self.lhs(g0, gL, alpha) - self.rhs

    def upper_bound_form(self) -> str:
        """Render as ``g_L <= ...`` (assumes ``gL_coef == 1``)."""
        terms = [f"{-self.g0_coef:+g} g0"]
        terms += [f"{-a:+g} a{i}" for i, a in enumerate(self.alpha_coefs, start=1) if a != 0]
        if self.rhs != 0:
            terms.append(f"{self.rhs:+g}")
        return f"g{self.L} <= " + " ".join(terms)

    def as_coefficients(self, handle) -> dict[int, float]:
        """Map onto model variable ids of a fragment handle with ``g`` and ``alpha``."""
        coeffs: dict[int, float] = {}

        def add(vid, a):
            if a != 0.0:
                coeffs[vid] = coeffs.get(vid, 0.0) + float(a)

        add(handle.g[0], self.g0_coef)
        add(handle.g[self.L], self.gL_coef)
        for i, a in enumerate(self.alpha_coefs):
            add(handle.alpha[i], a)
        return coeffs


def base_cuts(L: int) -> tuple[BaseCut, BaseCut]:
    if L < 1:
        raise ValueError("base cuts need L >= 1")
    top = 2.0 ** (L - 1)
    weights = tuple(2.0 ** (L - 1 - j) for j in range(1, L))
    # +top*(2 g0 - 1) + 1  and  -top*(2 g0 - 1) + 1
    return (BaseCut(L, +1, 2.0 * top, 1.0 - top, weights), BaseCut(L, -1, -2.0 * top, 1.0 + top, weights))


@dataclass(frozen=True)
class ParityBound:
    """``sign * b_j <= alpha_coefs . alpha_{1..j} + constant``."""

    j: int
    subset: tuple[int, ...]
    sign: int
    alpha_coefs: tuple[float, ...]
    constant: float

    def rhs_value(self, alpha) -> float:
        return float(sum(a * v for a, v in zip(self.alpha_coefs, alpha)) + self.constant)


def parity_bound(j: int, subset) -> ParityBound:
    """Parity-polytope bound on ``b_j``; ``subset`` holds 1-based indices that pay ``1 - alpha_i``."""
    subset = tuple(sorted(set(int(i) for i in subset)))
    if j < 1 or any(not 1 <= i <= j for i in subset):
        raise ValueError("subset must lie inside {1..j}")
    sign = +1 if len(subset) % 2 == 1 else -1
    coefs = tuple(-2.0 if i in subset else 2.0 for i in range(1, j + 1))
    return ParityBound(j, subset, sign, coefs, 2.0 * len(subset) - 1.0)


def subset_cost(alpha, subset) -> float:
    """``sum_{i not in I} alpha_i + sum_{i in I} (1 - alpha_i)`` over the first ``len(alpha)`` indices."""
    return float(sum((1.0 - a) if i in subset else a for i, a in enumerate(alpha, start=1)))


def greedy_subset(alpha, odd: bool) -> tuple[int, ...]:
    """Cheapest subset of the required parity: take the cheaper side per index, then fix parity."""
    alpha = np.asarray(alpha, dtype=float)
    chosen = [i + 1 for i, a in enumerate(alpha) if 1.0 - a < a]
    if (len(chosen) % 2 == 1) != odd:
        penalty = np.abs(1.0 - 2.0 * alpha)
        flip = int(np.argmin(penalty)) + 1  # argmin picks the lowest index on ties
        chosen = sorted(set(chosen) ^ {flip})
    return tuple(chosen)


def exhaustive_subset(alpha, odd: bool) -> tuple[int, ...]:
    j = len(alpha)
    best, best_cost = None, np.inf
    for r in range(1 if odd else 0, j + 1, 2):
        for subset in itertools.combinations(range(1, j + 1), r):
            cost = subset_cost(alpha, subset)
            if cost < best_cost - 1e-15:
                best, best_cost = subset, cost
    return best


def assemble(base: BaseCut, subsets) -> Cut:
    """Substitute one parity bound per product into a base cut."""
    L = base.L
    if len(subsets) != L - 1:
        raise ValueError(f"need {L - 1} subsets, got {len(subsets)}")
    alpha_coefs = np.zeros(max(L - 1, 0))
    constant = base.constant
    for j, (w, subset) in enumerate(zip(base.weights, subsets), start=1):
        pb = parity_bound(j, subset)
        if pb.sign != base.sign:
            raise ValueError(f"subset {subset} has the wrong parity for this base cut")
        alpha_coefs[:j] += w * np.array(pb.alpha_coefs)
        constant += w * pb.constant
    # g_L - g0_coef g0 - alpha_coefs.alpha <= constant
    tag = "root+parity(" + ";".join("{" + ",".join(map(str, s)) + "}" for s in subsets) + ")" if L > 1 else "base"
    return Cut(L, -base.g0_coef, 1.0, -alpha_coefs, constant, tag, [tuple(s) for s in subsets])


def best_cut_for(base: BaseCut, alpha, chooser=greedy_subset) -> Cut:
    alpha = np.asarray(alpha, dtype=float)
    odd = base.sign > 0
    return assemble(base, [chooser(alpha[:j], odd) for j in range(1, base.L)])


def separate(g0: float, gL: float, alpha, L: int, tol: float = VIOLATION_TOL) -> Cut | None:
    """Most violated parity inequality at a fractional point, or ``None``."""
    alpha = np.asarray(alpha, dtype=float)
    if alpha.size < L - 1:
        raise ValueError("need at least L-1 alpha values")
    values = np.concatenate(([g0, gL], alpha))
    if np.any(values < -1e-9) or np.any(values > 1 + 1e-9):
        raise ValueError("point must lie in the unit cube")
    best, best_viol = None, tol
    for base in base_cuts(L):
        cut = best_cut_for(base, alpha)
        viol = cut.violation(g0, gL, alpha)
        if viol > best_viol:
            best, best_viol = cut, viol
    return best


def integer_points(L: int):
    """Vertices of the fragment's integer-feasible set as ``(g0, g_chain, alpha)``.

    For fixed ``alpha`` the feasible set is a segment whose endpoints are
    breakpoints ``k / 2**L``; every assignment feasible at some breakpoint is
    reported, which covers both endpoints of every segment.
    """
    for alpha in itertools.product((0, 1), repeat=L):
        for k in range(2**L + 1):
            g = [k / 2**L]
            for a in alpha:
                g.append(2.0 * g[-1] if a == 0 else 2.0 - 2.0 * g[-1])
            if all(-1e-12 <= v <= 1 + 1e-12 for v in g):
                yield g[0], tuple(g), alpha


def parity_callback(handles, tol: float = VIOLATION_TOL):
    """Cut callback for branch-and-bound over fragments exposing ``g`` and ``alpha``."""
    handles = [h for h in handles if h.L >= 2 and len(h.alpha) == h.L]

    def callback(x):
        cuts = []
        for h in handles:
            alpha = np.clip([x[a] for a in h.alpha], 0.0, 1.0)
            g0 = float(np.clip(x[h.g[0]], 0.0, 1.0))
            gL = float(np.clip(x[h.g[h.L]], 0.0, 1.0))
            cut = separate(g0, gL, alpha, h.L, tol)
            if cut is not None:
                cuts.append((cut.as_coefficients(h), "<=", cut.rhs))
        return cuts

    return callback
