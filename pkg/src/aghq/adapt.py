"""Adaptive Gauss-Hermite quadrature: mode, curvature and normalizing constant."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
import numpy as np
from scipy.linalg import cholesky, solve_triangular
from scipy.special import logsumexp

from .errors import CurvatureError, NodeEvaluationError
from .optimize import OptimizerOptions, bfgs_maximize
from .quadrature import DEFAULT_POINT_CAP, ProductRule, product_rule
from .target import LogTarget

LOG_2PI = math.log(2.0 * math.pi)

# log-density drop one standard deviation from the mode, relative to the
# quadratic prediction of 1/2, beyond which the curvature is deemed degenerate
_MAX_PROBE_DROP = 50.0


@dataclass(frozen=True)
class ModeResult:
    mode: np.ndarray
    neg_hessian: np.ndarray
    chol: np.ndarray
    logdensity: float
    iterations: int


def inverse_curvature_cholesky(neg_hessian):
    """Lower-triangular ``L`` with ``L @ L.T == inv(neg_hessian)``.

    ``inv(H)`` is never formed: with ``J`` the reversal permutation and
    ``J H J = R R^T``, the factor is ``J R^{-T} J``.
    """
    h = np.asarray(neg_hessian, dtype=float)
    flipped = h[::-1, ::-1]
    try:
        r = cholesky(flipped, lower=True)
    except np.linalg.LinAlgError as exc:
        raise CurvatureError(
            "negative Hessian at the mode is not positive definite; "
            "consider reparameterizing (e.g. a log or logit-type transform)"
        ) from exc
    upper = solve_triangular(r, np.eye(h.shape[0]), lower=True, trans="T")
    return np.ascontiguousarray(upper[::-1, ::-1])


def find_mode(target, options=None):
    """Maximize ``target`` and factor the inverse curvature at the maximum."""
    opts = options or OptimizerOptions()
    res = bfgs_maximize(target, target.grad, target.start, opts)
    x, fx = res.x, res.fun
    neg_h = -target.hess(x)
    if not np.all(np.isfinite(neg_h)):
        raise CurvatureError("non-finite Hessian at the mode")
    polished = _newton_polish(target, x, fx, neg_h, opts.noise)
    if polished is not None:
        x, fx = polished
        neg_h = -target.hess(x)
        if not np.all(np.isfinite(neg_h)):
            raise CurvatureError("non-finite Hessian at the mode")
    chol = inverse_curvature_cholesky(neg_h)
    _probe_curvature(target, x, fx, chol)
    return ModeResult(mode=x, neg_hessian=neg_h, chol=chol, logdensity=fx, iterations=res.iterations)


def _newton_polish(target, x, fx, neg_h, noise):
    # one Newton step from the quasi-Newton optimum; kept only if it shrinks
    # the gradient without lowering the log density beyond rounding
    g = np.asarray(target.grad(x), dtype=float)
    try:
        step = np.linalg.solve(neg_h, g)
    except np.linalg.LinAlgError:
        return None
    x_new = x + step
    try:
        f_new = float(target(x_new))
        g_new = np.asarray(target.grad(x_new), dtype=float)
    except (ValueError, ArithmeticError):
        return None
    if not (math.isfinite(f_new) and np.all(np.isfinite(g_new))):
        return None
    if f_new < fx - noise * max(1.0, abs(fx)) or np.max(np.abs(g_new)) >= np.max(np.abs(g)):
        return None
    return x_new, f_new


def _probe_curvature(target, mode, fmode, chol):
    for i in range(chol.shape[1]):
        for sign in (1.0, -1.0):
            try:
                drop = fmode - target(mode + sign * chol[:, i])
            except (ValueError, ArithmeticError):
                drop = math.inf
            if not drop >= -1e-8 * max(1.0, abs(fmode)):
                raise CurvatureError(
                    "the located point is not a local maximum along the curvature axes; "
                    "consider reparameterizing"
                )
            if not drop <= _MAX_PROBE_DROP:
                raise CurvatureError(
                    f"curvature at the mode is degenerate (log density drops by {drop:.3g} "
                    "one standard deviation away, expected about 0.5); consider reparameterizing"
                )


def _log_abs_det(chol):
    return float(np.sum(np.log(np.diag(chol))))


def evaluate_nodes(target, rule, mode, chol):
    """Adapted nodes ``L z + mode`` and the log-integrand there."""
    nodes = mode + rule.points @ chol.T
    values = np.empty(rule.size)
    for i, x in enumerate(nodes):
        try:
            values[i] = target(x)
        except (ValueError, ArithmeticError):
            values[i] = math.nan
    bad = ~np.isfinite(values)
    if np.any(bad):
        raise NodeEvaluationError(rule.points[bad])
    return nodes, values


def log_norm_const(target, rule, mode, chol):
    """Log of the adapted normalizing-constant approximation.

    ``log|L| + logsumexp(logdensity(L z + mode) + log w(z))``.
    """
    if rule.p != target.dim:
        raise ValueError(f"rule dimension {rule.p} does not match target dimension {target.dim}")
    _, values = evaluate_nodes(target, rule, mode, chol)
    return _log_abs_det(chol) + float(logsumexp(values + rule.log_weights))


@dataclass(frozen=True)
class AdaptedPosterior:
    """A fitted adaptive quadrature approximation.

    Attributes
    ----------
    nodes_theta : ndarray, shape (k**p, p)
        Adapted nodes ``L z + mode`` in rule enumeration order.
    log_integrand : ndarray, shape (k**p,)
        Unnormalized log posterior at ``nodes_theta``.
    """

    target: LogTarget = field(repr=False)
    k: int
    rule: ProductRule = field(repr=False)
    mode: np.ndarray
    neg_hessian: np.ndarray
    chol: np.ndarray
    log_norm_const: float
    nodes_theta: np.ndarray = field(repr=False)
    log_integrand: np.ndarray = field(repr=False)

    @property
    def dim(self):
        return self.target.dim

    @property
    def log_node_weights(self):
        """Log posterior mass carried by each node (sums to one on the exp scale)."""
        return _log_abs_det(self.chol) + self.log_integrand + self.rule.log_weights - self.log_norm_const

    def logpdf(self, theta):
        """Approximate log posterior density ``logdensity(theta) - log Z``."""
        return self.target(theta) - self.log_norm_const

    def to_dict(self):
        return {
            "k": self.k,
            "p": self.dim,
            "mode": self.mode.tolist(),
            "negHessian": self.neg_hessian.tolist(),
            "cholFactor": self.chol.tolist(),
            "logNormConst": self.log_norm_const,
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)


def fit(target, k, options=None, mode=None, point_cap=DEFAULT_POINT_CAP):
    """Fit adaptive Gauss-Hermite quadrature with ``k`` points per dimension.

    ``mode`` may carry a previous :class:`ModeResult` for the same target, so
    several values of ``k`` can share one optimization.
    """
    rule = product_rule(k, target.dim, point_cap=point_cap)
    m = mode if mode is not None else find_mode(target, options)
    nodes, values = evaluate_nodes(target, rule, m.mode, m.chol)
    log_z = _log_abs_det(m.chol) + float(logsumexp(values + rule.log_weights))
    if not math.isfinite(log_z):
        raise NodeEvaluationError(rule.points[:1])
    for arr in (nodes, values):
        arr.setflags(write=False)
    return AdaptedPosterior(
        target=target,
        k=k,
        rule=rule,
        mode=m.mode,
        neg_hessian=m.neg_hessian,
        chol=m.chol,
        log_norm_const=log_z,
        nodes_theta=nodes,
        log_integrand=values,
    )


def laplace_log_norm_const(logdensity_at_mode, chol):
    """``logdensity(mode) + (p/2) log(2 pi) + log|L|``; equals a ``k = 1`` fit."""
    p = chol.shape[0]
    return logdensity_at_mode + 0.5 * p * LOG_2PI + _log_abs_det(chol)


def relative_error(log_z_true, log_z_approx):
    """``|Z / Z_approx - 1|`` evaluated from log normalizing constants."""
    return abs(math.expm1(log_z_true - log_z_approx))
