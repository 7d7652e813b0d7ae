"""Max-min power control over the SINR lower bound.

Dinkelbach iterations solve one linear program per step with the in-repo
simplex; the bisection oracle checks feasibility with SciPy's HiGHS solver so
that the two routes share no LP code.

By default every LP row is divided by that UE's SINR denominator at the
previous iterate. The fixed point is unchanged (the sign of each row is), but
the LP value is then an SINR margin, which keeps the number of iterations
small when denominators differ by orders of magnitude across UEs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .link import LinkStatistics, sinr_lb
from .lp import simplex_max

DINKELBACH_MAX_ITERS = 200


class ConvergenceError(RuntimeError):
    """Raised when Dinkelbach iterations exceed their cap."""


@dataclass(frozen=True)
class PowerSolution:
    eta: np.ndarray
    t: float
    trace: list = field(default_factory=list)  # (t_min, w*) per iteration
    status: str = "converged"

    @property
    def iterations(self) -> int:
        return len(self.trace)


def _parametric_rows(t_min: float, stats: LinkStatistics) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients of ``f_k(eta) = a_k . eta - b_k`` whose minimum is maximized."""
    Ka = stats.num_active
    A = -t_min * stats.cross.copy()
    A[np.arange(Ka), np.arange(Ka)] += (1.0 + t_min) * stats.coh
    b = t_min * stats.cnorm / stats.rho_u
    return A, b


def lp_solve(t_min: float, stats: LinkStatistics,
             row_weights: np.ndarray | None = None) -> tuple[np.ndarray, float]:
    """Maximize ``w`` subject to ``f_k(eta) / r_k >= w`` and ``0 <= eta <= 1``.

    Variables are ``eta`` and ``w = w_plus - w_minus`` (all nonnegative).
    ``row_weights`` ``r_k`` default to one.
    """
    if t_min < 0:
        raise ValueError("t_min must be nonnegative")
    A, b = _parametric_rows(t_min, stats)
    if row_weights is not None:
        r = np.asarray(row_weights, dtype=float)
        A, b = A / r[:, None], b / r
    Ka = stats.num_active
    # w - a_k . eta <= -b_k
    rows = np.hstack([-A, np.ones((Ka, 1)), -np.ones((Ka, 1))])
    box = np.hstack([np.eye(Ka), np.zeros((Ka, 2))])
    res = simplex_max(np.r_[np.zeros(Ka), 1.0, -1.0],
                      np.vstack([rows, box]), np.r_[-b, np.ones(Ka)])
    if res.status != "optimal":
        raise RuntimeError(f"power-control LP ended with status {res.status}")
    eta = np.clip(res.x[:Ka], 0.0, 1.0)
    if t_min == 0.0:
        # only the weakest UE is pinned at t_min = 0; full power is an optimum
        eta = np.ones(Ka)
    return eta, float(np.min(A @ eta - b))


def interference_plus_noise(eta, stats: LinkStatistics) -> np.ndarray:
    eta = np.asarray(eta, dtype=float)
    return stats.cross @ eta - eta * stats.coh + stats.cnorm / stats.rho_u


def dinkelbach(stats: LinkStatistics, epsilon: float,
               max_iters: int = DINKELBACH_MAX_ITERS, normalized: bool = True) -> PowerSolution:
    """Dinkelbach iterations from ``t_min = 0`` until the LP value drops to ``epsilon``.

    With ``normalized`` each LP row is divided by its SINR denominator at the
    previous iterate, so ``w`` is measured in SINR units and the stopping test
    does not depend on the scale of the statistics.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    t = 0.0
    trace = []
    eta = np.ones(stats.num_active)
    for _ in range(max_iters):
        weights = interference_plus_noise(eta, stats) if normalized else None
        eta, w = lp_solve(t, stats, weights)
        trace.append((t, w))
        t = float(np.min(sinr_lb(eta, stats)))
        if w <= epsilon:
            return PowerSolution(eta, t, trace)
    raise ConvergenceError(f"no convergence within {max_iters} iterations (last w* = {w:.3g})")


def _feasible(t: float, stats: LinkStatistics) -> bool:
    A, b = _parametric_rows(t, stats)
    Ka = stats.num_active
    res = linprog(np.zeros(Ka), A_ub=-A, b_ub=-b, bounds=[(0.0, 1.0)] * Ka, method="highs",
                  options={"primal_feasibility_tolerance": 1e-10})
    return res.status == 0


def bisection_oracle(stats: LinkStatistics, tol: float) -> float:
    """Largest achievable min-SINR by bisection on LP feasibility."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    lo = 0.0
    hi = float(np.max(stats.coh * stats.rho_u / stats.cnorm))
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _feasible(mid, stats):
            lo = mid
        else:
            hi = mid
    return lo
