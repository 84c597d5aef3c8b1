"""
Quasi-Newton minimization: BFGS with a strong-Wolfe line search.

Only what the pulse optimizer needs: dense inverse-Hessian updates, a
bracketing/zoom line search with cubic interpolation, and early exit once the
objective drops below a target value.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = ["BFGSResult", "NonFiniteObjective", "line_search_wolfe", "minimize_bfgs"]


class NonFiniteObjective(FloatingPointError):
    """Objective or gradient evaluated to NaN/inf."""


@dataclass
class BFGSResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    iterations: int
    evaluations: int
    status: str
    trace: list = field(default_factory=list)

    @property
    def success(self) -> bool:
        return self.status in ("target", "gtol")


def _cubic_min(a, fa, ga, b, fb, gb):
    """Minimizer of the cubic interpolating values and slopes at ``a`` and ``b``."""
    d1 = ga + gb - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - ga * gb
    if disc < 0:
        return None
    d2 = np.copysign(np.sqrt(disc), b - a)
    denom = gb - ga + 2.0 * d2
    if denom == 0:
        return None
    return b - (b - a) * (gb + d2 - d1) / denom


def line_search_wolfe(phi: Callable, f0: float, g0: float, alpha1: float = 1.0,
                      c1: float = 1e-4, c2: float = 0.9, alpha_max: float = 1e3,
                      max_iter: int = 30):
    """Find a step satisfying the strong Wolfe conditions.

    ``phi(alpha)`` returns ``(value, slope, payload)``. Returns
    ``(alpha, value, payload)`` or ``None`` if no acceptable step was found.
    """
    if g0 >= 0:
        return None

    def zoom(lo, f_lo, g_lo, hi, f_hi, g_hi, payload_lo):
        for _ in range(max_iter):
            a = _cubic_min(lo, f_lo, g_lo, hi, f_hi, g_hi)
            width = hi - lo
            # keep the trial safely inside the bracket
            if a is None or not np.isfinite(a) or not (min(lo, hi) + 0.1 * abs(width)
                                                       <= a <= max(lo, hi) - 0.1 * abs(width)):
                a = lo + 0.5 * width
            f_a, g_a, pay = phi(a)
            if f_a > f0 + c1 * a * g0 or f_a >= f_lo:
                hi, f_hi, g_hi = a, f_a, g_a
            else:
                if abs(g_a) <= -c2 * g0:
                    return a, f_a, pay
                if g_a * (hi - lo) >= 0:
                    hi, f_hi, g_hi = lo, f_lo, g_lo
                lo, f_lo, g_lo, payload_lo = a, f_a, g_a, pay
            if abs(hi - lo) < 1e-16 * max(1.0, abs(lo)):
                break
        # fall back to the best sufficient-decrease point seen, if any
        if lo > 0 and f_lo < f0:
            return lo, f_lo, payload_lo
        return None

    a_prev, f_prev, g_prev, pay_prev = 0.0, f0, g0, None
    a = alpha1
    for i in range(max_iter):
        f_a, g_a, pay = phi(a)
        if f_a > f0 + c1 * a * g0 or (i > 0 and f_a >= f_prev):
            return zoom(a_prev, f_prev, g_prev, a, f_a, g_a, pay_prev)
        if abs(g_a) <= -c2 * g0:
            return a, f_a, pay
        if g_a >= 0:
            return zoom(a, f_a, g_a, a_prev, f_prev, g_prev, pay)
        a_prev, f_prev, g_prev, pay_prev = a, f_a, g_a, pay
        if a >= alpha_max:
            break
        a = min(2.0 * a, alpha_max)
    return None


def minimize_bfgs(fun_grad: Callable, x0, max_iter: int = 1000, gtol: float = 1e-9,
                  f_target: float = -np.inf, callback: Optional[Callable] = None,
                  stall_window: Optional[int] = None, stall_ratio: float = 0.5) -> BFGSResult:
    """Minimize ``fun_grad(x) -> (f, g)`` from ``x0``.

    Stops with status ``"target"`` when ``f <= f_target``, ``"gtol"`` when
    ``max|g| <= gtol``, ``"maxiter"``, ``"linesearch"`` when no descent step
    can be found even after resetting the curvature estimate, or
    ``"stalled"`` when ``f`` has not dropped below ``stall_ratio`` times its
    value ``stall_window`` iterations earlier. Raises
    :class:`NonFiniteObjective` if the objective is not finite at ``x0``.
    """
    x = np.array(x0, dtype=float)
    n = x.size
    f, g = fun_grad(x)
    evals = 1
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        raise NonFiniteObjective("objective is not finite at the starting point")
    h_inv = np.eye(n)
    fresh = True
    trace = [float(f)]
    status = "maxiter"
    it = 0
    for it in range(1, max_iter + 1):
        if f <= f_target:
            status, it = "target", it - 1
            break
        if np.max(np.abs(g)) <= gtol:
            status, it = "gtol", it - 1
            break
        p = -h_inv @ g
        slope = float(g @ p)
        if slope >= 0:
            h_inv, fresh = np.eye(n), True
            p, slope = -g, -float(g @ g)

        def phi(a, p=p):
            nonlocal evals
            evals += 1
            fa, ga = fun_grad(x + a * p)
            if not (np.isfinite(fa) and np.all(np.isfinite(ga))):
                return np.inf, np.inf, None
            return fa, float(ga @ p), ga

        alpha1 = 1.0
        if fresh:
            alpha1 = min(1.0, 1.0 / max(np.max(np.abs(p)), 1e-300))
        ls = line_search_wolfe(phi, f, slope, alpha1)
        if ls is None:
            if fresh:
                status = "linesearch"
                break
            h_inv, fresh = np.eye(n), True
            trace.append(float(f))
            continue
        alpha, f_new, g_new = ls
        s = alpha * p
        y = g_new - g
        x = x + s
        f, g = f_new, g_new
        trace.append(float(f))
        sy = float(s @ y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if fresh:
                h_inv = (sy / float(y @ y)) * np.eye(n)
                fresh = False
            rho = 1.0 / sy
            hy = h_inv @ y
            h_inv = (h_inv - rho * (np.outer(s, hy) + np.outer(hy, s))
                     + (rho * rho * float(y @ hy) + rho) * np.outer(s, s))
        if callback is not None:
            callback(x, f)
        if stall_window and it >= stall_window and f > stall_ratio * trace[it - stall_window]:
            status = "stalled"
            break
    else:
        if f <= f_target:
            status = "target"
        elif np.max(np.abs(g)) <= gtol:
            status = "gtol"
    return BFGSResult(x, float(f), g, it, evals, status, trace)
