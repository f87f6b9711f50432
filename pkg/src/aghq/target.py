"""Unnormalized log-posterior targets, reparameterizations and finite differences."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DerivativeEvaluationError, DomainError

EPS = np.finfo(float).eps
GRADIENT_STEP = EPS ** (1.0 / 3.0)
HESSIAN_STEP = EPS**0.25


@dataclass(frozen=True)
class LogTarget:
    """An unnormalized log-posterior on ``R^p``.

    Parameters
    ----------
    dim : int
        Parameter dimension ``p``.
    logdensity : callable
        ``theta -> float``, the log posterior up to an additive constant.
    start : array_like
        Starting point for the mode search. Required.
    gradient, hessian : callable, optional
        Analytic derivatives of ``logdensity``. Finite differences are used
        for whichever is missing.
    """

    dim: int
    logdensity: Callable[[np.ndarray], float]
    start: np.ndarray
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    hessian: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        start = np.atleast_1d(np.asarray(self.start, dtype=float)).copy()
        if start.shape != (self.dim,):
            raise ValueError(f"start has shape {start.shape}, expected ({self.dim},)")
        if not np.all(np.isfinite(start)):
            raise ValueError("start must be finite")
        start.setflags(write=False)
        object.__setattr__(self, "start", start)

    def __call__(self, theta):
        return float(self.logdensity(np.asarray(theta, dtype=float)))

    def grad(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.gradient is not None:
            return np.asarray(self.gradient(theta), dtype=float).reshape(self.dim)
        return fd_gradient(self.logdensity, theta)

    def hess(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.hessian is not None:
            h = np.asarray(self.hessian(theta), dtype=float).reshape(self.dim, self.dim)
            return 0.5 * (h + h.T)
        if self.gradient is not None:
            return _fd_jacobian_of_gradient(self.gradient, theta)
        return fd_hessian(self.logdensity, theta)

    def check_derivatives(self, theta=None, rtol=1e-4):
        """Compare supplied derivatives with finite differences.

        Returns a dict of relative discrepancies; warns if any exceeds
        ``rtol``.
        """
        theta = self.start if theta is None else np.asarray(theta, dtype=float)
        out = {}
        if self.gradient is not None:
            out["gradient"] = _rel_diff(self.grad(theta), fd_gradient(self.logdensity, theta))
        if self.hessian is not None:
            out["hessian"] = _rel_diff(self.hess(theta), fd_hessian(self.logdensity, theta))
        for name, diff in out.items():
            if diff > rtol:
                warnings.warn(f"supplied {name} differs from finite differences by {diff:.2e}")
        return out


def _rel_diff(a, b):
    scale = max(1.0, float(np.max(np.abs(b))))
    return float(np.max(np.abs(a - b))) / scale


def _checked(f, x, index):
    try:
        val = float(f(x))
    except (ValueError, ArithmeticError, DomainError) as exc:
        raise DerivativeEvaluationError(index, f"evaluation failed: {exc}") from exc
    if not math.isfinite(val):
        raise DerivativeEvaluationError(index, f"non-finite value {val} at {x.tolist()}")
    return val


def fd_gradient(f, theta, step=GRADIENT_STEP):
    """Central-difference gradient with step ``step * max(1, |theta_i|)``."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    grad = np.empty_like(theta)
    for i in range(theta.size):
        h = step * max(1.0, abs(theta[i]))
        up, down = theta.copy(), theta.copy()
        up[i] += h
        down[i] -= h
        # use the representable step actually taken
        grad[i] = (_checked(f, up, i) - _checked(f, down, i)) / (up[i] - down[i])
    return grad


def fd_hessian(f, theta, step=HESSIAN_STEP):
    """Central second differences, symmetrized.

    Diagonal entries use the three-point stencil and off-diagonal entries the
    four-point cross stencil, with step ``step * max(1, |theta_i|)``.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    p = theta.size
    h = step * np.maximum(1.0, np.abs(theta))
    f0 = _checked(f, theta, 0)
    out = np.empty((p, p))

    def at(shifts):
        x = theta.copy()
        for i, s in shifts:
            x[i] += s * h[i]
        return _checked(f, x, shifts[0][0])

    for i in range(p):
        out[i, i] = (at([(i, 1)]) - 2.0 * f0 + at([(i, -1)])) / h[i] ** 2
        for j in range(i):
            val = (
                at([(i, 1), (j, 1)]) - at([(i, 1), (j, -1)]) - at([(i, -1), (j, 1)]) + at([(i, -1), (j, -1)])
            ) / (4.0 * h[i] * h[j])
            out[i, j] = out[j, i] = val
    return _symmetrize(out)


def _fd_jacobian_of_gradient(gradient, theta, step=GRADIENT_STEP):
    p = theta.size
    out = np.empty((p, p))
    for i in range(p):
        h = step * max(1.0, abs(theta[i]))
        up, down = theta.copy(), theta.copy()
        up[i] += h
        down[i] -= h
        g_up = np.asarray(gradient(up), dtype=float)
        g_down = np.asarray(gradient(down), dtype=float)
        if not (np.all(np.isfinite(g_up)) and np.all(np.isfinite(g_down))):
            raise DerivativeEvaluationError(i, "non-finite gradient")
        out[:, i] = (g_up - g_down) / (up[i] - down[i])
    return _symmetrize(out)


def _symmetrize(a):
    sym = 0.5 * (a + a.T)
    scale = max(float(np.max(np.abs(sym))), np.finfo(float).tiny)
    if float(np.max(np.abs(a - a.T))) > 1e-3 * scale:
        warnings.warn("Hessian asymmetry above 1e-3 relative before symmetrization")
    return sym


@dataclass(frozen=True)
class Transform:
    """Map between a constrained parameter space and ``R^p``.

    ``forward`` maps constrained to unconstrained, ``inverse`` maps back, and
    ``log_jacobian(theta)`` is ``log |det d inverse / d theta|``. Coordinate-wise
    transforms also carry the first two derivatives of ``inverse`` and of the
    log-Jacobian, which lets derivatives be pushed through by the chain rule.
    """

    kind: str
    forward: Callable
    inverse: Callable
    log_jacobian: Callable
    d_inverse: Optional[Callable] = None
    d2_inverse: Optional[Callable] = None
    d_log_jacobian: Optional[Callable] = None
    d2_log_jacobian: Optional[Callable] = None

    @property
    def elementwise(self):
        return self.d_inverse is not None


def identity_transform():
    zero = lambda t: np.zeros_like(np.asarray(t, dtype=float))  # noqa: E731
    return Transform(
        kind="identity",
        forward=lambda x: np.asarray(x, dtype=float),
        inverse=lambda t: np.asarray(t, dtype=float),
        log_jacobian=lambda t: 0.0,
        d_inverse=lambda t: np.ones_like(np.asarray(t, dtype=float)),
        d2_inverse=zero,
        d_log_jacobian=zero,
        d2_log_jacobian=zero,
    )


def log_transform():
    """``theta = log(x)`` per coordinate, for positive parameters."""

    def forward(x):
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0):
            raise DomainError("log transform needs positive values")
        return np.log(x)

    return Transform(
        kind="log",
        forward=forward,
        inverse=lambda t: np.exp(np.asarray(t, dtype=float)),
        log_jacobian=lambda t: float(np.sum(t)),
        d_inverse=lambda t: np.exp(np.asarray(t, dtype=float)),
        d2_inverse=lambda t: np.exp(np.asarray(t, dtype=float)),
        d_log_jacobian=lambda t: np.ones_like(np.asarray(t, dtype=float)),
        d2_log_jacobian=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
    )


def double_log_interval_transform(a, b):
    """``theta = log(-log((x - a) / (b - a)))`` per coordinate, for ``a < x < b``.

    ``a`` and ``b`` may be scalars or arrays broadcasting against ``x``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(b <= a):
        raise ValueError("need a < b")
    width = b - a

    def forward(x):
        u = (np.asarray(x, dtype=float) - a) / width
        if np.any((u <= 0) | (u >= 1)):
            raise DomainError("value outside the open interval (a, b)")
        return np.log(-np.log(u))

    def inverse(t):
        return a + width * np.exp(-np.exp(np.asarray(t, dtype=float)))

    def d_inverse(t):
        t = np.asarray(t, dtype=float)
        return -width * np.exp(t - np.exp(t))

    def d2_inverse(t):
        t = np.asarray(t, dtype=float)
        return -width * np.exp(t - np.exp(t)) * (1.0 - np.exp(t))

    def log_jacobian(t):
        t = np.asarray(t, dtype=float)
        return float(np.sum(np.broadcast_to(np.log(width), t.shape) + t - np.exp(t)))

    return Transform(
        kind="double-log-interval",
        forward=forward,
        inverse=inverse,
        log_jacobian=log_jacobian,
        d_inverse=d_inverse,
        d2_inverse=d2_inverse,
        d_log_jacobian=lambda t: 1.0 - np.exp(np.asarray(t, dtype=float)),
        d2_log_jacobian=lambda t: -np.exp(np.asarray(t, dtype=float)),
    )


def custom_transform(forward, inverse, log_jacobian):
    """A user transform; derivatives of wrapped targets fall back to finite differences."""
    return Transform(kind="custom", forward=forward, inverse=inverse, log_jacobian=log_jacobian)


def wrap_transformed(base, transform, start=None):
    """Express ``base`` (on the constrained space) as a target on ``R^p``.

    The returned log density is ``base(inverse(theta)) + log_jacobian(theta)``.
    The default starting point is ``forward(base.start)``.
    """

    def logdensity(theta):
        x = transform.inverse(theta)
        val = base.logdensity(x)
        return float(val) + float(transform.log_jacobian(theta))

    if start is None:
        start = transform.forward(base.start)

    gradient = hessian = None
    if transform.elementwise and base.gradient is not None:

        def gradient(theta):
            x = transform.inverse(theta)
            g = np.asarray(base.gradient(x), dtype=float)
            return g * transform.d_inverse(theta) + transform.d_log_jacobian(theta)

        if base.hessian is not None:

            def hessian(theta):
                x = transform.inverse(theta)
                g = np.asarray(base.gradient(x), dtype=float)
                h = np.asarray(base.hessian(x), dtype=float).reshape(base.dim, base.dim)
                jac = transform.d_inverse(theta)
                out = h * np.outer(jac, jac)
                out[np.diag_indices(base.dim)] += g * transform.d2_inverse(theta) + transform.d2_log_jacobian(theta)
                return out

    return LogTarget(dim=base.dim, logdensity=logdensity, start=start, gradient=gradient, hessian=hessian)
