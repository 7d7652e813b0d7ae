"""Dense two-phase simplex for small linear programs.

Solves ``max c^T x`` subject to ``A x <= b`` and ``x >= 0``. Rows are scaled to
unit maximum magnitude, rows with negative right-hand side receive an
artificial variable, and Bland's rule (lowest index enters, lowest basic
index leaves on ties) prevents cycling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TOL = 1e-11


@dataclass(frozen=True)
class LPResult:
    x: np.ndarray
    objective: float
    status: str      # "optimal" | "infeasible" | "unbounded"
    pivots: int


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    for i in range(T.shape[0]):
        if i != row and T[i, col] != 0.0:
            T[i] -= T[i, col] * T[row]


def _run(T: np.ndarray, basis: list[int], n_cols: int, max_pivots: int) -> tuple[str, int]:
    """Maximize the objective held in the last row as reduced costs (``-c``)."""
    m = T.shape[0] - 1
    for it in range(max_pivots):
        obj = T[-1, :n_cols]
        entering = next((j for j in range(n_cols) if obj[j] < -TOL), None)
        if entering is None:
            return "optimal", it
        col = T[:m, entering]
        best, leave = None, None
        for i in range(m):
            if col[i] > TOL:
                ratio = T[i, -1] / col[i]
                if (best is None or ratio < best - TOL
                        or (abs(ratio - best) <= TOL and basis[i] < basis[leave])):
                    best, leave = ratio, i
        if leave is None:
            return "unbounded", it
        _pivot(T, leave, entering)
        basis[leave] = entering
    raise RuntimeError("simplex pivot limit reached")


def simplex_max(c: np.ndarray, A: np.ndarray, b: np.ndarray,
                max_pivots: int = 10_000) -> LPResult:
    c = np.asarray(c, dtype=float)
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    m, n = A.shape
    scale = np.max(np.abs(A), axis=1)
    scale[scale == 0] = 1.0
    A /= scale[:, None]
    b /= scale

    neg = b < 0
    n_art = int(neg.sum())
    # columns: x (n) | slack (m) | artificial (n_art) | rhs
    width = n + m + n_art
    T = np.zeros((m + 1, width + 1))
    basis = []
    art = 0
    for i in range(m):
        sign = -1.0 if neg[i] else 1.0
        T[i, :n] = sign * A[i]
        T[i, n + i] = sign
        T[i, -1] = sign * b[i]
        if neg[i]:
            T[i, n + m + art] = 1.0
            basis.append(n + m + art)
            art += 1
        else:
            basis.append(n + i)

    pivots = 0
    if n_art:
        # phase 1: maximize -sum(artificials)
        T[-1, n + m:width] = 1.0
        for i in range(m):
            if neg[i]:
                T[-1] -= T[i]
        status, p = _run(T, basis, width, max_pivots)
        pivots += p
        if T[-1, -1] < -1e-9 * max(1.0, np.abs(b).max()):
            return LPResult(np.zeros(n), float("nan"), "infeasible", pivots)
        # drive remaining artificials out of the basis
        for i in range(m):
            if basis[i] >= n + m:
                j = next((j for j in range(n + m) if abs(T[i, j]) > TOL), None)
                if j is not None:
                    _pivot(T, i, j)
                    basis[i] = j
        T = np.delete(T, np.s_[n + m:width], axis=1)
        width = n + m

    T[-1] = 0.0
    T[-1, :n] = -c
    for i in range(m):
        if basis[i] < n and c[basis[i]] != 0.0:
            T[-1] += c[basis[i]] * T[i]
    status, p = _run(T, basis, width, max_pivots)
    pivots += p
    x = np.zeros(width)
    for i, j in enumerate(basis):
        if j < width:
            x[j] = T[i, -1]
    return LPResult(x[:n], float(c @ x[:n]), status, pivots)
