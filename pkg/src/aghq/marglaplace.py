"""Marginal Laplace approximation for models with a high-dimensional latent block.

For each adapted quadrature node ``theta_j`` the latent block ``W`` is
integrated out with a Laplace approximation. Adaptive quadrature then
normalizes over ``theta``, and the same nodes and weights turn the
conditional Gaussian approximations of ``W`` into a finite Gaussian mixture
that can be sampled exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.special import logsumexp

from . import adapt
from .errors import ComponentError, OptimizationError
from .optimize import OptimizerOptions, bfgs_maximize
from .target import LogTarget, fd_gradient, fd_hessian

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class JointTarget:
    """Unnormalized ``log pi(W, theta, Y)`` with ``W`` in ``R^m`` and ``theta`` in ``R^p``."""

    dim_w: int
    dim_theta: int
    logjoint: Callable[[np.ndarray, np.ndarray], float]
    start_w: np.ndarray
    start_theta: np.ndarray
    gradient_w: Optional[Callable] = None
    hessian_w: Optional[Callable] = None

    def __post_init__(self):
        for name, size in (("start_w", self.dim_w), ("start_theta", self.dim_theta)):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=float)).copy()
            if arr.shape != (size,):
                raise ValueError(f"{name} has shape {arr.shape}, expected ({size},)")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class LaplaceProfile:
    w_hat: np.ndarray
    precision_chol: np.ndarray
    log_la: float


def _newton_inner(jt, theta, w0, tol, max_iter=100):
    w = np.array(w0, dtype=float)
    f = float(jt.logjoint(w, theta))
    if not math.isfinite(f):
        raise ComponentError(theta, "log joint not finite at the inner starting point")
    for _ in range(max_iter):
        g = np.asarray(jt.gradient_w(w, theta), dtype=float)
        if float(np.max(np.abs(g))) <= tol * max(1.0, abs(f)):
            return w, f
        neg_h = -np.asarray(jt.hessian_w(w, theta), dtype=float)
        try:
            c = cholesky(neg_h, lower=True)
        except np.linalg.LinAlgError as exc:
            raise ComponentError(theta, "inner Hessian not negative definite") from exc
        step = cho_solve((c, True), g)
        slope = float(g @ step)
        t = 1.0
        for _ in range(60):
            f_new = float(jt.logjoint(w + t * step, theta))
            if math.isfinite(f_new) and f_new >= f + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            # no further ascent is representable; accept if the gradient is tiny
            if float(np.max(np.abs(g))) <= 1e3 * tol * max(1.0, abs(f)):
                return w, f
            raise ComponentError(theta, "inner line search failed")
        w = w + t * step
        f = f_new
    raise ComponentError(theta, f"inner Newton iteration did not converge in {max_iter} steps")


def laplace_profile(jt, theta, w0=None, tol=1e-10):
    """Laplace approximation of ``log integral pi(W, theta, Y) dW`` at fixed ``theta``.

    Returns the inner mode, the lower Cholesky factor of the negative inner
    Hessian (the conditional precision), and
    ``logjoint(W_hat) + (m/2) log(2 pi) - (1/2) log det H_W``.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    w0 = jt.start_w if w0 is None else w0
    if jt.gradient_w is not None and jt.hessian_w is not None:
        w_hat, f_hat = _newton_inner(jt, theta, w0, tol)
        neg_h = -np.asarray(jt.hessian_w(w_hat, theta), dtype=float)
    else:
        f = lambda w: jt.logjoint(w, theta)  # noqa: E731
        grad = (lambda w: jt.gradient_w(w, theta)) if jt.gradient_w is not None else (lambda w: fd_gradient(f, w))
        try:
            res = bfgs_maximize(f, grad, w0, OptimizerOptions(tol=tol))
        except OptimizationError as exc:
            raise ComponentError(theta, str(exc)) from exc
        w_hat, f_hat = res.x, res.fun
        if jt.hessian_w is not None:
            neg_h = -np.asarray(jt.hessian_w(w_hat, theta), dtype=float)
        else:
            neg_h = -fd_hessian(f, w_hat)
    try:
        chol = cholesky(0.5 * (neg_h + neg_h.T), lower=True)
    except np.linalg.LinAlgError as exc:
        raise ComponentError(theta, "inner Hessian not negative definite at the optimum") from exc
    log_la = f_hat + 0.5 * jt.dim_w * LOG_2PI - float(np.sum(np.log(np.diag(chol))))
    return LaplaceProfile(w_hat=w_hat, precision_chol=chol, log_la=log_la)


@dataclass(frozen=True)
class MixtureApproximation:
    """Gaussian mixture approximation to ``pi(W | Y)``.

    Component ``j`` is ``N(means[j], inv(P_j))`` where
    ``P_j = precision_chols[j] @ precision_chols[j].T``.
    """

    theta_nodes: np.ndarray
    means: np.ndarray
    precision_chols: np.ndarray
    log_weights: np.ndarray

    @property
    def weights(self):
        return np.exp(self.log_weights)

    @property
    def size(self):
        return self.log_weights.size

    def mean(self):
        return self.weights @ self.means

    def covariance(self):
        w = self.weights
        mu = w @ self.means
        out = np.zeros((self.means.shape[1],) * 2)
        for wj, m, c in zip(w, self.means, self.precision_chols):
            cov = cho_solve((c, True), np.eye(c.shape[0]))
            d = m - mu
            out += wj * (cov + np.outer(d, d))
        return out

    def sample(self, n, seed=None):
        """Draw ``n`` exact samples; identical ``seed`` gives identical draws."""
        return sample_mixture(self, n, seed)


def sample_mixture(mix, n, seed=None):
    if n < 1:
        raise ValueError("sample count must be at least 1")
    rng = np.random.default_rng(seed)
    p = mix.weights / mix.weights.sum()
    comp = rng.choice(mix.size, size=n, p=p)
    eps = rng.standard_normal((n, mix.means.shape[1]))
    out = np.empty_like(eps)
    for j in np.unique(comp):
        rows = comp == j
        # W = mean + L^{-T} eps has covariance (L L^T)^{-1}
        out[rows] = mix.means[j] + solve_triangular(mix.precision_chols[j], eps[rows].T, lower=True, trans="T").T
    return out


def fit_marginal_laplace(jt, k, options=None, point_cap=adapt.DEFAULT_POINT_CAP):
    """Adaptive quadrature over ``theta`` of the Laplace-approximate marginal.

    Inner optimizations warm-start from the previous optimum, in evaluation
    order, so results are deterministic for a given call.

    Returns
    -------
    ap : AdaptedPosterior
        Fit over ``theta`` whose target is the Laplace-approximate log marginal.
    mixture : MixtureApproximation
        Gaussian mixture over ``W`` on the quadrature nodes of ``ap``.
    """
    state = {"w": jt.start_w}

    def log_la(theta):
        prof = laplace_profile(jt, theta, state["w"])
        state["w"] = prof.w_hat
        return prof.log_la

    target = LogTarget(dim=jt.dim_theta, logdensity=log_la, start=jt.start_theta)
    ap = adapt.fit(target, k, options=options, point_cap=point_cap)

    means, chols, log_la_nodes = [], [], []
    for theta in ap.nodes_theta:
        prof = laplace_profile(jt, theta, state["w"])
        state["w"] = prof.w_hat
        means.append(prof.w_hat)
        chols.append(prof.precision_chol)
        log_la_nodes.append(prof.log_la)
    log_abs_det = float(np.sum(np.log(np.diag(ap.chol))))
    lw = np.array(log_la_nodes) + ap.rule.log_weights + log_abs_det - ap.log_norm_const
    lw = lw - logsumexp(lw)
    mixture = MixtureApproximation(
        theta_nodes=np.array(ap.nodes_theta),
        means=np.array(means),
        precision_chols=np.array(chols),
        log_weights=lw,
    )
    return ap, mixture
