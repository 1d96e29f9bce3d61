"""Diagonal shifts that make an indefinite quadratic form convex.

The smallest eigenvalue is found with the cyclic Jacobi method and PSD-ness is
decided from the pivots of a symmetric LDL^T factorization with diagonal
pivoting.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

SYMMETRY_TOL = 1e-12
JACOBI_TOL = 1e-12
PIVOT_TOL = 1e-9


def _as_symmetric(Q, tol=SYMMETRY_TOL) -> np.ndarray:
    A = np.atleast_2d(np.asarray(Q, dtype=float))
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
        raise ValueError(f"expected a nonempty square matrix, got shape {A.shape}")
    scale = max(1.0, float(np.max(np.abs(A))))
    if np.max(np.abs(A - A.T)) > tol * scale:
        raise ValueError("matrix is not symmetric")
    return 0.5 * (A + A.T)


def jacobi_eigenvalues(Q, tol=JACOBI_TOL, max_sweeps=100) -> np.ndarray:
    """All eigenvalues of a symmetric matrix by cyclic Jacobi rotations (sorted ascending)."""
    A = _as_symmetric(Q).copy()
    n = A.shape[0]
    scale = max(1.0, float(np.linalg.norm(A)))
    for _ in range(max_sweeps):
        off = float(np.linalg.norm(A - np.diag(np.diag(A))))
        if off < tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-18 * scale:
                    A[p, q] = A[q, p] = 0.0
                    continue
                # rotation angle chosen to annihilate A[p, q]
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rp = A[p, :].copy()
                rq = A[q, :].copy()
                A[p, :] = c * rp - s * rq
                A[q, :] = s * rp + c * rq
                cp = A[:, p].copy()
                cq = A[:, q].copy()
                A[:, p] = c * cp - s * cq
                A[:, q] = s * cp + c * cq
                A[p, q] = A[q, p] = 0.0
    else:
        raise RuntimeError("Jacobi iteration did not converge")
    return np.sort(np.diag(A))


def min_eigenvalue(Q) -> float:
    return float(jacobi_eigenvalues(Q)[0])


@dataclass
class ShiftVector:
    """Nonnegative diagonal perturbation together with where it came from."""

    delta: np.ndarray
    source: str = "eigenvalue"  # or "external"

    def __post_init__(self):
        self.delta = np.asarray(self.delta, dtype=float).ravel()
        if np.any(self.delta < 0) or not np.all(np.isfinite(self.delta)):
            raise ValueError("shift entries must be finite and nonnegative")
        if self.source not in ("eigenvalue", "external"):
            raise ValueError(f"unknown shift source {self.source!r}")

    def __len__(self):
        return len(self.delta)


def eigen_shift(Q) -> ShiftVector:
    """Uniform shift by the negated smallest eigenvalue (zero when already PSD)."""
    A = _as_symmetric(Q)
    lam = min_eigenvalue(A)
    return ShiftVector(np.full(A.shape[0], max(0.0, -lam)), "eigenvalue")


def validate_psd(Q, delta) -> bool:
    """True when ``Q + diag(delta)`` is positive semidefinite up to a relative 1e-9 tolerance."""
    A = _as_symmetric(Q, tol=1e-9)
    d = np.asarray(getattr(delta, "delta", delta), dtype=float).ravel()
    if d.shape[0] != A.shape[0]:
        raise ValueError(f"shift has length {d.shape[0]}, matrix has order {A.shape[0]}")
    M = A + np.diag(d)
    scale = max(1.0, float(np.max(np.abs(M))))
    tol = PIVOT_TOL * scale
    S = M.copy()
    active = list(range(M.shape[0]))
    while active:
        diag = np.array([S[k, k] for k in active])
        if np.min(diag) < -tol:
            return False
        best = int(np.argmax(diag))
        if diag[best] <= tol:
            # every remaining diagonal is ~0, so a PSD remainder must vanish entirely
            block = S[np.ix_(active, active)]
            return bool(np.max(np.abs(block)) <= tol)
        k = active.pop(best)
        col = S[active, k]
        S[np.ix_(active, active)] -= np.outer(col, col) / S[k, k]
    return True


def load_shift_file(path, n: int | None = None) -> ShiftVector:
    """Read one decimal per line (blank lines and ``#`` comments ignored)."""
    values = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            values.append(float(line))
        except ValueError:
            raise ValueError(f"{path}:{lineno}: not a number: {line!r}") from None
    if n is not None and len(values) != n:
        raise ValueError(f"{path}: expected {n} shift values, found {len(values)}")
    return ShiftVector(np.array(values), "external")


def write_shift_file(path, shift) -> None:
    d = np.asarray(getattr(shift, "delta", shift), dtype=float)
    Path(path).write_text("".join(f"{float(v)!r}\n" for v in d))
