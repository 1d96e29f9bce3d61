"""Sawtooth (tent map iterate) functions and the piecewise-linear interpolant of x**2."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_LAYERS = 30


def _check_domain(x):
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0.0) or np.any(arr > 1.0) or np.any(np.isnan(arr)):
        raise ValueError("sawtooth functions are defined on [0, 1] only")
    return arr


def _tent(g):
    # values exactly at 1/2 take the reflected branch
    return np.where(g < 0.5, 2.0 * g, 2.0 * (1.0 - g))


def sawtooth_eval(i: int, x):
    """``i``-fold tent map applied to ``x`` (scalar or array)."""
    if i < 0:
        raise ValueError("layer index must be nonnegative")
    g = _check_domain(x)
    for _ in range(i):
        g = _tent(g)
    return float(g) if g.ndim == 0 else g


def sawtooth_layers(L: int, x) -> np.ndarray:
    """Stack ``[G_0(x), ..., G_L(x)]`` along a new leading axis."""
    g = _check_domain(x)
    out = [g]
    for _ in range(L):
        g = _tent(g)
        out.append(g)
    return np.stack(out)


def interpolant_eval(L: int, x):
    """Piecewise-linear interpolant of x**2 with ``2**L`` equal segments."""
    if not 0 <= L <= MAX_LAYERS:
        raise ValueError(f"layer count must be in [0, {MAX_LAYERS}]")
    g = _check_domain(x)
    total = g.copy()
    for i in range(1, L + 1):
        g = _tent(g)
        total = total - 4.0**-i * g
    return float(total) if total.ndim == 0 else total


def max_error(L: int) -> float:
    """Largest gap between the interpolant and x**2: attained at segment midpoints."""
    if L < 0:
        raise ValueError("layer count must be nonnegative")
    return 2.0 ** (-2 * L - 2)


def breakpoints(L: int) -> np.ndarray:
    if L < 0:
        raise ValueError("layer count must be nonnegative")
    return np.arange(2**L + 1) / 2.0**L


@dataclass(frozen=True)
class SawtoothApprox:
    """Convenience wrapper bundling a layer count with the evaluation helpers."""

    L: int

    def __post_init__(self):
        if not 0 <= self.L <= MAX_LAYERS:
            raise ValueError(f"layer count must be in [0, {MAX_LAYERS}]")

    def __call__(self, x):
        return interpolant_eval(self.L, x)

    def layer(self, i, x):
        return sawtooth_eval(i, x)

    @property
    def error_bound(self):
        return max_error(self.L)

    @property
    def breakpoints(self):
        return breakpoints(self.L)
