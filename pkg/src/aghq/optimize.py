"""Quasi-Newton maximization used to locate posterior modes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import OptimizationError


@dataclass
class OptimizerOptions:
    """Stopping rule ``max|grad| <= tol * max(1, |f|)`` and iteration budget."""

    tol: float = 1e-8
    max_iter: int = 500
    armijo: float = 1e-4
    max_backtracks: int = 60
    # relative size of function changes treated as rounding noise
    noise: float = 1e-12


@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    iterations: int
    trace: list = field(default_factory=list)


def _value(f, x):
    try:
        val = float(f(x))
    except (ValueError, ArithmeticError, OverflowError):
        return -math.inf
    return val if math.isfinite(val) else -math.inf


def bfgs_maximize(f, grad, x0, options=None):
    """Maximize ``f`` with BFGS and an Armijo backtracking line search.

    Non-finite function values (or evaluation errors) during the line search
    are treated as failed steps, so the search backs off out of regions where
    ``f`` is undefined.
    """
    opts = options or OptimizerOptions()
    x = np.array(x0, dtype=float)
    fx = float(f(x))
    if not math.isfinite(fx):
        raise OptimizationError(f"objective is not finite at the starting point ({fx})")
    g = np.asarray(grad(x), dtype=float)
    n = x.size
    inv_h = np.eye(n)
    first = True
    trace = []
    for it in range(opts.max_iter + 1):
        gnorm = float(np.max(np.abs(g)))
        trace.append((it, fx, gnorm))
        if gnorm <= opts.tol * max(1.0, abs(fx)):
            return OptimizeResult(x=x, fun=fx, grad=g, iterations=it, trace=trace)
        if it == opts.max_iter:
            break
        # ascent direction for f
        d = inv_h @ g
        if first:
            d = d / max(1.0, float(np.linalg.norm(d)))
        slope = float(g @ d)
        if slope <= 0.0:
            inv_h = np.eye(n)
            d = g / max(1.0, float(np.linalg.norm(g)))
            slope = float(g @ d)
        t = 1.0
        noise = opts.noise * max(1.0, abs(fx))
        for _ in range(opts.max_backtracks):
            x_new = x + t * d
            f_new = _value(f, x_new)
            if f_new > fx and f_new >= fx + opts.armijo * t * slope:
                g_new = np.asarray(grad(x_new), dtype=float)
                break
            if abs(f_new - fx) <= noise:
                # f is flat to rounding here; steer by the gradient instead
                g_new = np.asarray(grad(x_new), dtype=float)
                if float(np.max(np.abs(g_new))) < gnorm:
                    break
            t *= 0.5
        else:
            raise OptimizationError(
                f"line search failed at iteration {it} (max|grad|={gnorm:.3e})", trace
            )
        if not np.all(np.isfinite(g_new)):
            raise OptimizationError(f"non-finite gradient at iteration {it}", trace)
        # BFGS works on the minimization problem -f
        s = x_new - x
        y = g - g_new
        sy = float(s @ y)
        if sy > 1e-12 * float(np.linalg.norm(s)) * float(np.linalg.norm(y)):
            if first:
                inv_h = np.eye(n) * (sy / float(y @ y))
            rho = 1.0 / sy
            v = np.eye(n) - rho * np.outer(s, y)
            inv_h = v @ inv_h @ v.T + rho * np.outer(s, s)
            first = False
        x, fx, g = x_new, f_new, g_new
    raise OptimizationError(f"no convergence after {opts.max_iter} iterations", trace)
