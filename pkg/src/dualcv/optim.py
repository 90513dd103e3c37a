"""Small maximizers used by the estimators.

Both routines maximize; convergence is judged on the scaled gradient
``max_i |g_i| * max(1, |x_i|) / max(1, |f|)``, which is invariant to the
sample size and to the units of each parameter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass
class OptimResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    converged: bool
    iterations: int
    gradient_norm: float
    message: str = ""


def scaled_gradient_norm(g: np.ndarray, x: np.ndarray, f: float) -> float:
    return float(np.max(np.abs(g) * np.maximum(1.0, np.abs(x))) / max(1.0, abs(f))) if g.size else 0.0


def _ascent_direction(g, H):
    """Newton direction; falls back to a modified Hessian if -H is not PD."""
    negH = -0.5 * (H + H.T)
    try:
        L = np.linalg.cholesky(negH)
        return np.linalg.solve(L.T, np.linalg.solve(L, g)), True
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(negH)
        floor = max(1e-8, 1e-6 * float(np.max(np.abs(vals))))
        vals = np.maximum(np.abs(vals), floor)
        return vecs @ ((vecs.T @ g) / vals), False


def newton_maximize(
    fgh: Callable[[np.ndarray], tuple[float, np.ndarray, np.ndarray]],
    x0: np.ndarray,
    tol: float = 1e-8,
    maxiter: int = 200,
    on_step: Callable[[np.ndarray, float, float], None] | None = None,
) -> OptimResult:
    """Newton-Raphson with step halving.

    ``fgh`` returns (value, gradient, Hessian).  ``on_step(x, f_old, f_new)``
    is called after every accepted step and may raise to abort.
    """
    x = np.asarray(x0, dtype=float).copy()
    f, g, H = fgh(x)
    for it in range(maxiter + 1):
        gn = scaled_gradient_norm(g, x, f)
        if gn <= tol:
            return OptimResult(x, f, g, True, it, gn, "scaled gradient below tolerance")
        if it == maxiter:
            break
        step, _ = _ascent_direction(g, H)
        t = 1.0
        while True:
            xn = x + t * step
            fn, gn_, Hn = fgh(xn)
            # rounding noise near the optimum must not trigger step halving
            if math.isfinite(fn) and fn >= f - 1e-12 * max(1.0, abs(f)):
                break
            t *= 0.5
            if t < 1e-14:
                return OptimResult(x, f, g, gn <= 100 * tol, it, gn, "line search failed")
        if on_step is not None:
            on_step(xn, f, fn)
        x, f, g, H = xn, fn, gn_, Hn
    return OptimResult(x, f, g, False, maxiter, scaled_gradient_norm(g, x, f), "iteration limit reached")


def bfgs_maximize(
    fg: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0: np.ndarray,
    inv_hess0: np.ndarray,
    gtol: float = 1e-6,
    ftol: float = 1e-10,
    maxiter: int = 500,
    on_step: Callable[[np.ndarray, float, float], None] | None = None,
) -> OptimResult:
    """BFGS on the inverse negative Hessian with a step-halving line search.

    Converged when the scaled gradient is below ``gtol`` and the last
    relative change of the objective is below ``ftol``; a stalled line
    search at a point that meets ``gtol`` also counts.
    """
    x = np.asarray(x0, dtype=float).copy()
    B0 = np.asarray(inv_hess0, dtype=float)
    B = B0.copy()
    f, g = fg(x)
    rel = math.inf
    resets = 0
    for it in range(maxiter + 1):
        gn = scaled_gradient_norm(g, x, f)
        if gn <= gtol and rel <= ftol:
            return OptimResult(x, f, g, True, it, gn, "converged")
        if it == maxiter:
            break
        d = B @ g
        slope = float(g @ d)
        if not slope > 0:
            B = B0.copy()
            d = B @ g
            slope = float(g @ d)
        t = 1.0
        while True:
            xn = x + t * d
            fn, gn_ = fg(xn)
            if math.isfinite(fn) and fn >= f + 1e-4 * t * slope:
                break
            t *= 0.5
            if t < 1e-14:
                break
        if t < 1e-14:
            if gn <= gtol:
                return OptimResult(x, f, g, True, it, gn, "converged (no further ascent possible)")
            if resets < 2:
                resets += 1
                B = B0.copy()
                continue
            return OptimResult(x, f, g, False, it, gn, "line search failed")
        s = xn - x
        y = g - gn_
        sy = float(s @ y)
        if sy > 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(y)):
            By = B @ y
            B = B + ((sy + y @ By) / sy**2) * np.outer(s, s) - (np.outer(By, s) + np.outer(s, By)) / sy
        rel = abs(fn - f) / max(1.0, abs(f))
        if on_step is not None:
            on_step(xn, f, fn)
        x, f, g = xn, fn, gn_
    return OptimResult(x, f, g, False, maxiter, scaled_gradient_norm(g, x, f), "iteration limit reached")


def numerical_hessian(grad: Callable[[np.ndarray], np.ndarray], x: np.ndarray, rel_step: float = 1e-5) -> np.ndarray:
    """Central differences of an analytic gradient, symmetrized."""
    x = np.asarray(x, dtype=float)
    p = x.size
    H = np.empty((p, p))
    for j in range(p):
        h = rel_step * max(1.0, abs(x[j]))
        e = np.zeros(p)
        e[j] = h
        H[:, j] = (grad(x + e) - grad(x - e)) / (2.0 * h)
    return 0.5 * (H + H.T)


def covariance_from_hessian(H: np.ndarray) -> tuple[np.ndarray, bool]:
    """Inverse of -H; falls back to the pseudo-inverse when -H is singular."""
    negH = -0.5 * (H + H.T)
    try:
        np.linalg.cholesky(negH)
        V = np.linalg.inv(negH)
        return 0.5 * (V + V.T), True
    except np.linalg.LinAlgError:
        V = np.linalg.pinv(negH, hermitian=True)
        return 0.5 * (V + V.T), False
