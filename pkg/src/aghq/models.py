"""Built-in models with exact oracles, and their data-file readers.

``poisson-gamma``
    ``Y_i ~ Poisson(lambda)``, ``lambda ~ Exponential(1)``, fitted on
    ``theta = log(lambda)``. The posterior of ``lambda`` is
    ``Gamma(1 + sum(Y), n + 1)``. Data: CSV with a single column ``y``.
``gaussian``
    Unnormalized ``N(mu, Sigma)`` log density. Data: CSV with columns
    ``mu,cov1,...,covp``, one row per coordinate.
``random-intercept``
    ``mu ~ N(0, s0^2)``, ``W_g | mu ~ N(mu, tau^2)``, ``y_gj | W_g ~ N(W_g, sigma^2)``
    with known ``sigma``, ``tau``, ``s0``; ``theta = mu`` and ``W`` is the
    latent block. Data: CSV with columns ``group,y``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import gammainc, gammaincinv, gammaln, ndtr

from .errors import DataError
from .marglaplace import JointTarget
from .target import LogTarget, Transform, identity_transform, log_transform, wrap_transformed

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class ConjugateModelInstance:
    """Poisson counts with an Exponential(1) prior on the rate."""

    data: np.ndarray
    n: int
    sum_y: int
    log_z_exact: float

    @property
    def shape(self):
        return 1.0 + self.sum_y

    @property
    def rate(self):
        return self.n + 1.0


def conjugate_instance(y):
    y = np.asarray(y)
    if y.ndim != 1 or y.size == 0:
        raise ValueError("need a non-empty 1-d array of counts")
    if np.any(y < 0) or np.any(y != np.floor(y)):
        raise ValueError("counts must be non-negative integers")
    y = y.astype(np.int64)
    n, s = int(y.size), int(y.sum())
    log_z = float(gammaln(1.0 + s) - (1.0 + s) * math.log(n + 1.0) - np.sum(gammaln(y + 1.0)))
    return ConjugateModelInstance(data=y, n=n, sum_y=s, log_z_exact=log_z)


def poisson_rate_target(inst):
    """Unnormalized log posterior of ``lambda`` (constrained scale), start at the prior mean."""
    c = float(np.sum(gammaln(inst.data + 1.0)))
    n1, s = inst.rate, float(inst.sum_y)

    def logdensity(lam):
        lam = float(lam[0])
        if lam <= 0:
            return -math.inf
        return -n1 * lam + (s * math.log(lam) if s else 0.0) - c

    return LogTarget(
        dim=1,
        logdensity=logdensity,
        start=[1.0],
        gradient=lambda lam: np.array([-n1 + s / lam[0]]),
        hessian=lambda lam: np.array([[-s / lam[0] ** 2]]),
    )


def poisson_log_rate_target(inst):
    """Log posterior of ``theta = log(lambda)`` including the Jacobian term."""
    return wrap_transformed(poisson_rate_target(inst), log_transform())


@dataclass(frozen=True)
class GaussianModel:
    mean: np.ndarray
    cov: np.ndarray

    @property
    def dim(self):
        return self.mean.size

    @property
    def log_z_exact(self):
        """Log integral of the unnormalized density ``exp(-(x-mu)' P (x-mu) / 2)``."""
        _, logdet = np.linalg.slogdet(self.cov)
        return 0.5 * self.dim * LOG_2PI + 0.5 * logdet

    def target(self, start=None):
        prec = np.linalg.inv(self.cov)
        prec = 0.5 * (prec + prec.T)
        mu = self.mean

        def logdensity(x):
            d = x - mu
            return -0.5 * float(d @ prec @ d)

        return LogTarget(
            dim=self.dim,
            logdensity=logdensity,
            start=np.zeros(self.dim) if start is None else start,
            gradient=lambda x: -prec @ (x - mu),
            hessian=lambda x: -prec,
        )

    def marginal_cdf(self, dim):
        sd = math.sqrt(self.cov[dim, dim])
        return lambda x: ndtr((np.asarray(x) - self.mean[dim]) / sd)


@dataclass(frozen=True)
class RandomInterceptModel:
    """Normal-normal random intercept model with known variances."""

    groups: np.ndarray
    y: np.ndarray
    sigma: float = 1.0
    tau: float = 1.0
    prior_sd: float = 10.0
    n_groups: int = field(init=False)

    def __post_init__(self):
        groups = np.asarray(self.groups, dtype=np.int64)
        labels, codes = np.unique(groups, return_inverse=True)
        object.__setattr__(self, "groups", codes)
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float))
        object.__setattr__(self, "n_groups", int(labels.size))

    def logjoint(self, w, theta):
        mu = float(theta[0])
        resid = self.y - w[self.groups]
        return (
            -0.5 * (mu / self.prior_sd) ** 2
            - 0.5 * float(np.sum((w - mu) ** 2)) / self.tau**2
            - 0.5 * float(resid @ resid) / self.sigma**2
            - 0.5 * LOG_2PI * (1 + self.n_groups + self.y.size)
            - math.log(self.prior_sd)
            - self.n_groups * math.log(self.tau)
            - self.y.size * math.log(self.sigma)
        )

    def gradient_w(self, w, theta):
        resid = self.y - w[self.groups]
        return -(w - theta[0]) / self.tau**2 + np.bincount(self.groups, resid, self.n_groups) / self.sigma**2

    def hessian_w(self, w, theta):
        counts = np.bincount(self.groups, minlength=self.n_groups)
        return -np.diag(1.0 / self.tau**2 + counts / self.sigma**2)

    def joint_target(self):
        return JointTarget(
            dim_w=self.n_groups,
            dim_theta=1,
            logjoint=self.logjoint,
            start_w=np.zeros(self.n_groups),
            start_theta=np.zeros(1),
            gradient_w=self.gradient_w,
            hessian_w=self.hessian_w,
        )

    def full_target(self):
        """Log joint as a target on ``(W, mu)`` for direct quadrature."""
        m = self.n_groups
        return LogTarget(dim=m + 1, logdensity=lambda x: self.logjoint(x[:m], x[m:]), start=np.zeros(m + 1))

    # closed-form oracles -------------------------------------------------

    def _moments(self):
        m, n = self.n_groups, self.y.size
        z = np.zeros((n, m))
        z[np.arange(n), self.groups] = 1.0
        s0 = self.prior_sd**2
        cov_y = s0 * np.ones((n, n)) + self.tau**2 * z @ z.T + self.sigma**2 * np.eye(n)
        cov_wy = s0 * np.ones((m, n)) + self.tau**2 * z.T
        cov_w = s0 * np.ones((m, m)) + self.tau**2 * np.eye(m)
        cov_muy = s0 * np.ones(n)
        return cov_y, cov_wy, cov_w, cov_muy

    def exact_log_marginal(self):
        cov_y = self._moments()[0]
        _, logdet = np.linalg.slogdet(cov_y)
        quad = float(self.y @ np.linalg.solve(cov_y, self.y))
        return -0.5 * (self.y.size * LOG_2PI + logdet + quad)

    def exact_posterior_w(self):
        cov_y, cov_wy, cov_w, _ = self._moments()
        gain = np.linalg.solve(cov_y, cov_wy.T).T
        return gain @ self.y, cov_w - gain @ cov_wy.T

    def exact_posterior_mu(self):
        cov_y, _, _, cov_muy = self._moments()
        gain = np.linalg.solve(cov_y, cov_muy)
        return float(gain @ self.y), float(self.prior_sd**2 - gain @ cov_muy)


# data files ------------------------------------------------------------------


def _read_rows(path, expected):
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"{path}: cannot open ({exc})") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}:1: empty file")
        header = [h.strip() for h in header]
        if expected is not None and header != expected:
            raise DataError(f"{path}:1: expected header {','.join(expected)}, got {','.join(header)}")
        rows = []
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{reader.line_num}: expected {len(header)} fields, got {len(row)}")
            rows.append((reader.line_num, [c.strip() for c in row]))
    if not rows:
        raise DataError(f"{path}: no data rows")
    return header, rows


def read_counts(path):
    _, rows = _read_rows(path, ["y"])
    out = []
    for line, (cell,) in rows:
        try:
            val = int(cell)
        except ValueError:
            raise DataError(f"{path}:{line}: not an integer count: {cell!r}") from None
        if val < 0:
            raise DataError(f"{path}:{line}: negative count {val}")
        out.append(val)
    return np.array(out, dtype=np.int64)


def _float(path, line, cell):
    try:
        return float(cell)
    except ValueError:
        raise DataError(f"{path}:{line}: not a number: {cell!r}") from None


def read_gaussian(path):
    header, rows = _read_rows(path, None)
    p = len(rows)
    if header != ["mu"] + [f"cov{i + 1}" for i in range(p)]:
        raise DataError(f"{path}:1: expected header mu,cov1..cov{p} for {p} rows")
    mu = np.array([_float(path, line, r[0]) for line, r in rows])
    cov = np.array([[_float(path, line, c) for c in r[1:]] for line, r in rows])
    if not np.allclose(cov, cov.T):
        raise DataError(f"{path}: covariance is not symmetric")
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise DataError(f"{path}: covariance is not positive definite") from None
    return GaussianModel(mean=mu, cov=cov)


def read_grouped(path):
    _, rows = _read_rows(path, ["group", "y"])
    groups, ys = [], []
    for line, (g, y) in rows:
        try:
            groups.append(int(g))
        except ValueError:
            raise DataError(f"{path}:{line}: group must be an integer: {g!r}") from None
        ys.append(_float(path, line, y))
    return np.array(groups), np.array(ys)


# registry ------------------------------------------------------------------


@dataclass
class Model:
    """A named model ready for fitting.

    ``target`` works on the unconstrained scale; ``transform.inverse`` maps
    back to the reported scale. ``marginal_cdf(dim)`` gives the exact
    marginal CDF on the unconstrained scale when known.
    """

    name: str
    target: Optional[LogTarget] = None
    joint: Optional[JointTarget] = None
    transform: Transform = field(default_factory=identity_transform)
    log_z_exact: Optional[float] = None
    marginal_cdf: Optional[Callable[[int], Callable]] = None
    marginal_quantile: Optional[Callable[[int, float], float]] = None
    extra: dict = field(default_factory=dict)


def _poisson_gamma(path, params):
    inst = conjugate_instance(read_counts(path))
    a, b = inst.shape, inst.rate
    return Model(
        name="poisson-gamma",
        target=poisson_log_rate_target(inst),
        transform=log_transform(),
        log_z_exact=inst.log_z_exact,
        marginal_cdf=lambda dim: (lambda x: gammainc(a, b * np.exp(np.asarray(x)))),
        marginal_quantile=lambda dim, alpha: math.log(gammaincinv(a, alpha) / b),
        extra={"n": inst.n, "sum_y": inst.sum_y, "posterior_mean": a / b},
    )


def _gaussian(path, params):
    g = read_gaussian(path)
    return Model(
        name="gaussian",
        target=g.target(),
        log_z_exact=g.log_z_exact,
        marginal_cdf=g.marginal_cdf,
        extra={"mean": g.mean.tolist()},
    )


def _random_intercept(path, params):
    groups, y = read_grouped(path)
    model = RandomInterceptModel(groups=groups, y=y, **params)
    mu_mean, mu_var = model.exact_posterior_mu()
    w_mean, _ = model.exact_posterior_w()
    return Model(
        name="random-intercept",
        joint=model.joint_target(),
        log_z_exact=model.exact_log_marginal(),
        marginal_cdf=lambda dim: (lambda x: ndtr((np.asarray(x) - mu_mean) / math.sqrt(mu_var))),
        extra={"exact_posterior_mean_w": w_mean.tolist()},
    )


REGISTRY = {
    "poisson-gamma": _poisson_gamma,
    "gaussian": _gaussian,
    "random-intercept": _random_intercept,
}


def load_model(name, path, params=None):
    """Build a registered model from its data file."""
    try:
        builder = REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown model {name!r}; available: {', '.join(sorted(REGISTRY))}") from None
    return builder(path, dict(params or {}))
