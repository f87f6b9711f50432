"""Posterior summaries from a fitted :class:`~aghq.adapt.AdaptedPosterior`.

Moments reuse the fitted nodes. Marginal densities are computed at the
adapted nodes of the dimension of interest, interpolated on the log scale by
a Lagrange polynomial, and integrated on a fine grid to give a CDF and
quantiles that fall on grid points.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .adapt import evaluate_nodes, inverse_curvature_cholesky
from .errors import InterpolationUnavailableError, LevelError

DEFAULT_GRID_SIZE = 1000
DEFAULT_GRID_SPAN = 2.5


def moment(ap, f):
    """Approximate ``E[f(theta) | Y]`` using the fitted nodes and weights.

    Positive and negative parts of ``f`` are accumulated separately on the
    log scale.
    """
    values = np.array([float(f(x)) for x in ap.nodes_theta])
    if not np.all(np.isfinite(values)):
        bad = np.flatnonzero(~np.isfinite(values))
        raise ValueError(f"f is not finite at nodes {ap.nodes_theta[bad].tolist()}")
    lw = ap.log_node_weights
    pos, neg = values > 0, values < 0
    total = 0.0
    if np.any(pos):
        total += math.exp(logsumexp(lw[pos] + np.log(values[pos])))
    if np.any(neg):
        total -= math.exp(logsumexp(lw[neg] + np.log(-values[neg])))
    return total


def posterior_mean(ap):
    w = np.exp(ap.log_node_weights)
    return w @ ap.nodes_theta / w.sum()


def posterior_covariance(ap):
    w = np.exp(ap.log_node_weights)
    w = w / w.sum()
    centred = ap.nodes_theta - w @ ap.nodes_theta
    return (centred * w[:, None]).T @ centred


@dataclass(frozen=True)
class Reordered:
    """Coordinates permuted so that the dimension of interest comes first."""

    perm: np.ndarray
    mode: np.ndarray
    chol: np.ndarray
    nodes: np.ndarray

    def to_original(self, x):
        out = np.empty_like(x)
        out[..., self.perm] = x
        return out


def reorder_for_marginal(ap, dim):
    """Swap ``dim`` (0-based) to the front and refactor the inverse curvature.

    The Cholesky factor is recomputed from the permuted curvature rather than
    permuting rows and columns of the original factor, which would not be
    triangular.
    """
    p = ap.dim
    if not 0 <= dim < p:
        raise IndexError(f"dimension {dim} out of range for p={p}")
    perm = np.arange(p)
    perm[[0, dim]] = perm[[dim, 0]]
    h = ap.neg_hessian[np.ix_(perm, perm)]
    chol = ap.chol if dim == 0 else inverse_curvature_cholesky(h)
    mode = ap.mode[perm]
    nodes = mode + ap.rule.points @ chol.T
    return Reordered(perm=perm, mode=mode, chol=chol, nodes=nodes)


class LagrangeInterpolant:
    """Polynomial through ``(x_j, y_j)`` evaluated in barycentric form."""

    def __init__(self, x, y):
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        if self.x.size < 2:
            raise InterpolationUnavailableError("need at least two points")
        diff = self.x[:, None] - self.x[None, :]
        np.fill_diagonal(diff, 1.0)
        # rescale to avoid overflow in the products for larger k
        scale = 4.0 / (self.x.max() - self.x.min())
        self.w = 1.0 / np.prod(diff * scale, axis=1)

    @property
    def degree(self):
        return self.x.size - 1

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        flat = np.atleast_1d(t).ravel()
        d = flat[:, None] - self.x[None, :]
        exact = d == 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            c = self.w / d
            out = (c @ self.y) / c.sum(axis=1)
        rows, cols = np.nonzero(exact)
        out[rows] = self.y[cols]
        return out.reshape(t.shape) if t.ndim else float(out[0])


@dataclass(frozen=True)
class MarginalSummary:
    """Approximate marginal posterior of one coordinate.

    ``support`` and ``log_marginal`` hold the log marginal density at the
    ``k`` adapted nodes; ``scale`` is the leading entry of the reordered
    Cholesky factor. The grid fields are filled by :func:`cdf_and_quantiles`.
    """

    dim: int
    support: np.ndarray
    log_marginal: np.ndarray
    scale: float
    log_weights: np.ndarray
    mode: float
    grid: Optional[np.ndarray] = None
    density: Optional[np.ndarray] = None
    cdf: Optional[np.ndarray] = None

    @property
    def k(self):
        return self.support.size

    def normalization(self):
        """Quadrature integral of the marginal over its own nodes; equals 1."""
        return self.scale * float(np.sum(np.exp(self.log_marginal + self.log_weights)))

    def cdf_at(self, x):
        """Step-function CDF on the grid (0 below the first grid point)."""
        if self.grid is None:
            raise ValueError("CDF not computed; call cdf_and_quantiles first")
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.grid, x, side="right") - 1
        out = np.where(idx >= 0, self.cdf[np.clip(idx, 0, None)], 0.0)
        return out if out.ndim else float(out)


def marginal_at_nodes(ap, dim):
    """Log marginal density of coordinate ``dim`` at its ``k`` adapted nodes."""
    rule = ap.rule
    k = ap.k
    uni_lw = rule.univariate.log_weights
    reo = reorder_for_marginal(ap, dim)
    if dim == 0:
        values = ap.log_integrand
        log_z = ap.log_norm_const
    else:
        _, values = evaluate_nodes(ap.target, rule, ap.mode, _permuted_chol(reo))
        # the reordered nodes give their own estimate of log Z; using it keeps
        # the marginal's quadrature integral at exactly 1
        log_z = float(np.sum(np.log(np.diag(reo.chol)))) + float(logsumexp(values + rule.log_weights))
    log_rest = float(np.sum(np.log(np.diag(reo.chol)[1:])))
    first = rule.index[:, 0]
    reduced_lw = rule.log_weights - uni_lw[first]
    terms = values - log_z + reduced_lw
    log_marg = np.array([log_rest + logsumexp(terms[first == j]) for j in range(k)])
    scale = float(reo.chol[0, 0])
    support = scale * rule.univariate.nodes + reo.mode[0]
    return MarginalSummary(
        dim=dim,
        support=support,
        log_marginal=log_marg,
        scale=scale,
        log_weights=np.asarray(uni_lw),
        mode=float(reo.mode[0]),
    )


def _permuted_chol(reo):
    # the map z -> chol' z + mode' in permuted coordinates, expressed on the
    # original coordinates: x = P^T (chol' z + mode'), i.e. rows permuted back
    out = np.empty_like(reo.chol)
    out[reo.perm] = reo.chol
    return out


def interpolate_log_marginal(ms):
    """Lagrange interpolant of the log marginal through its ``k`` nodes."""
    if ms.k < 2:
        raise InterpolationUnavailableError(
            "log-marginal interpolation needs k >= 2; with k = 1 use the Laplace "
            "Gaussian marginal (see gaussian_marginal)"
        )
    return LagrangeInterpolant(ms.support, ms.log_marginal)


def gaussian_marginal(ap, dim):
    """Mean and standard deviation of the Laplace Gaussian marginal for ``dim``."""
    reo = reorder_for_marginal(ap, dim)
    return float(reo.mode[0]), float(reo.chol[0, 0])


def make_grid(ms, grid_size=DEFAULT_GRID_SIZE, span=DEFAULT_GRID_SPAN):
    lo = ms.support.min() - span * ms.scale
    hi = ms.support.max() + span * ms.scale
    return np.linspace(lo, hi, grid_size)


def cdf_and_quantiles(ms, alphas=(0.025, 0.5, 0.975), grid_size=DEFAULT_GRID_SIZE, span=DEFAULT_GRID_SPAN, grid=None):
    """Fine-grid CDF and grid quantiles of an interpolated marginal.

    ``F(x_l) = sum_{m <= l} exp(P(x_m)) (x_{m+1} - x_m)``, the final
    spacing repeating the previous one, and ``q(alpha) = min{x_l : F(x_l) >= alpha}``.

    Returns the summary with grid, density and CDF filled in, and a dict
    mapping each level to its quantile.
    """
    for a in alphas:
        if not 0.0 < a < 1.0:
            raise LevelError(f"quantile level must lie in (0, 1), got {a}")
    interp = interpolate_log_marginal(ms)
    x = make_grid(ms, grid_size, span) if grid is None else np.asarray(grid, dtype=float)
    spacing = np.diff(x)
    if np.any(spacing <= 0):
        raise ValueError("grid must be strictly increasing")
    density = np.exp(interp(x))
    cdf = np.cumsum(density * np.append(spacing, spacing[-1]))
    out = replace(ms, grid=x, density=density, cdf=cdf)
    return out, {a: grid_quantile(out, a) for a in alphas}


def grid_quantile(ms, alpha):
    if not 0.0 < alpha < 1.0:
        raise LevelError(f"quantile level must lie in (0, 1), got {alpha}")
    hit = np.flatnonzero(ms.cdf >= alpha)
    if hit.size == 0:
        warnings.warn(f"grid CDF never reaches {alpha}; returning the last grid point")
        return float(ms.grid[-1])
    return float(ms.grid[hit[0]])


def ks_distance(cdf_a, cdf_b, probe):
    """Largest absolute difference between two CDFs over ``probe`` points."""
    probe = np.asarray(probe, dtype=float)
    return float(np.max(np.abs(np.asarray(cdf_a(probe)) - np.asarray(cdf_b(probe)))))


def marginal_summary(ap, dim, alphas=(0.025, 0.5, 0.975), grid_size=DEFAULT_GRID_SIZE, span=DEFAULT_GRID_SPAN):
    """Nodes, interpolant, CDF and quantiles for one coordinate."""
    ms = marginal_at_nodes(ap, dim)
    return cdf_and_quantiles(ms, alphas, grid_size, span)
