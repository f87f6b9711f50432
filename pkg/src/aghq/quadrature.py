"""Gauss-Hermite rules for the probabilists' weight and their product extension.

Weights follow the convention where the rule is applied to ``phi(z) * f(z)``::

    integral phi(z) f(z) dz  ~=  sum_j phi(z_j) f(z_j) w_j

so a single node at zero has weight ``sqrt(2 pi)``. Nodes come from the
Golub-Welsch eigenvalue problem on the Jacobi matrix, solved in-house with an
implicit-shift QL iteration.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DimensionalBlowupError, InvalidOrderError

MAX_ORDER = 50
DEFAULT_POINT_CAP = 10**6
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def hermite_eval(k, x):
    """Probabilists' Hermite polynomial ``He_k`` evaluated at ``x``.

    Uses the recurrence ``He_{j+1}(x) = x He_j(x) - j He_{j-1}(x)``. ``x`` may
    be a scalar or an array.
    """
    if k < 0:
        raise ValueError("Hermite degree must be non-negative")
    x = np.asarray(x, dtype=float)
    h_prev = np.ones_like(x)
    if k == 0:
        return h_prev if h_prev.ndim else float(h_prev)
    h = x.copy()
    for j in range(1, k):
        h_prev, h = h, x * h - j * h_prev
    return h if h.ndim else float(h)


def _tridiagonal_eigenvalues(diag, offdiag):
    """Eigenvalues of a symmetric tridiagonal matrix (implicit QL, no vectors)."""
    d = [float(v) for v in diag]
    n = len(d)
    e = [float(v) for v in offdiag] + [0.0]
    eps = np.finfo(float).eps
    for l in range(n):
        iterations = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd:
                    break
                m += 1
            if m == l:
                break
            iterations += 1
            if iterations > 60:
                raise RuntimeError("QL iteration failed to converge")
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = c = 1.0
            p = 0.0
            deflated = False
            for i in range(m - 1, l - 1, -1):
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    deflated = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
            if deflated:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return np.sort(np.array(d))


def _hermite_pair(k, x):
    """Return ``(He_k(x), He_{k-1}(x))``."""
    h_prev, h = np.ones_like(x), x.copy()
    for j in range(1, k):
        h_prev, h = h, x * h - j * h_prev
    return h, h_prev


def _eigenvector_weights(k, nodes):
    """Gaussian-absorbed weights ``v_0^2`` from the normalized Jacobi eigenvectors.

    The eigenvector of the Jacobi matrix at eigenvalue ``x`` is proportional
    to the orthonormal Hermite values ``He_i(x) / sqrt(i!)``; its squared
    first component is ``1 / sum_i He_i(x)^2 / i!``.
    """
    total = np.zeros_like(nodes)
    h_prev, h = np.zeros_like(nodes), np.ones_like(nodes)
    for i in range(k):
        total += h * h / math.factorial(i)
        h_prev, h = h, nodes * h - i * h_prev
    return 1.0 / total


def _closed_form_log_weights(k, nodes):
    """``log(k! / (He_{k+1}(x)^2 phi(x)))``."""
    h_next = hermite_eval(k + 1, nodes)
    log_phi = -0.5 * nodes**2 - _LOG_SQRT_2PI
    return math.lgamma(k + 1) - 2.0 * np.log(np.abs(h_next)) - log_phi


@dataclass(frozen=True)
class UnivariateRule:
    """Gauss-Hermite nodes and weights for ``k`` points."""

    k: int
    nodes: np.ndarray
    weights: np.ndarray
    log_weights: np.ndarray = field(repr=False)

    def integrate(self, f):
        """Approximate ``E[f(Z)]`` for ``Z ~ N(0, 1)``."""
        phi = np.exp(-0.5 * self.nodes**2 - _LOG_SQRT_2PI)
        return float(np.sum(phi * self.weights * f(self.nodes)))


@lru_cache(maxsize=None)
def _univariate_rule_cached(k):
    if k == 1:
        nodes = np.zeros(1)
    else:
        off = np.sqrt(np.arange(1, k, dtype=float))
        raw = _tridiagonal_eigenvalues(np.zeros(k), off)
        # one Newton polish on He_k, then mirror the positive half
        h, h_prev = _hermite_pair(k, raw)
        raw = raw - h / (k * h_prev)
        positive = np.abs(raw[(k + 1) // 2 :])
        middle = [0.0] if k % 2 else []
        nodes = np.concatenate([-positive[::-1], middle, positive])
    log_w = _closed_form_log_weights(k, nodes)
    # weights are even in x, so mirrored nodes give bit-identical weights
    gw = _eigenvector_weights(k, nodes)
    log_w_gw = np.log(gw) + 0.5 * nodes**2 + _LOG_SQRT_2PI
    if k <= 20 and not np.allclose(log_w, log_w_gw, rtol=0.0, atol=1e-10):
        raise RuntimeError(f"Gauss-Hermite weight cross-check failed for k={k}")
    nodes.setflags(write=False)
    log_w.setflags(write=False)
    weights = np.exp(log_w)
    weights.setflags(write=False)
    return UnivariateRule(k=k, nodes=nodes, weights=weights, log_weights=log_w)


def univariate_rule(k):
    """Return the ``k``-point Gauss-Hermite rule, ``1 <= k <= 50``.

    Examples
    --------
    >>> univariate_rule(2).nodes
    array([-1.,  1.])
    """
    if not isinstance(k, (int, np.integer)) or isinstance(k, bool) or not 1 <= k <= MAX_ORDER:
        raise InvalidOrderError(f"quadrature order must be an integer in [1, {MAX_ORDER}], got {k!r}")
    return _univariate_rule_cached(int(k))


@dataclass(frozen=True)
class ProductRule:
    """Tensor-product Gauss-Hermite rule on ``R^p`` with ``k^p`` points.

    ``index[i]`` holds the univariate node indices of ``points[i]``. Points are
    enumerated with the last coordinate varying fastest, so point ``i`` and
    point ``k^p - 1 - i`` are mirror images.
    """

    k: int
    p: int
    univariate: UnivariateRule = field(repr=False)
    index: np.ndarray = field(repr=False)
    points: np.ndarray = field(repr=False)
    log_weights: np.ndarray = field(repr=False)

    @property
    def size(self):
        return self.points.shape[0]

    @property
    def weights(self):
        return np.exp(self.log_weights)

    @property
    def max_norm(self):
        """Largest Euclidean norm over the quadrature points."""
        return float(np.max(np.linalg.norm(self.points, axis=1)))

    def weight_of(self, z):
        """Product weight of the grid point ``z`` (``KeyError`` if ``z`` is not a node)."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        out = 1.0
        for zd in z:
            hit = np.flatnonzero(self.univariate.nodes == zd)
            if hit.size == 0:
                raise KeyError(f"{zd!r} is not a quadrature node")
            out *= self.univariate.weights[hit[0]]
        return out

    def to_json(self):
        return json.dumps(
            {
                "k": self.k,
                "p": self.p,
                "nodes": [float(x) for x in self.univariate.nodes],
                "weights": [float(w) for w in self.univariate.weights],
            }
        )

    @classmethod
    def from_json(cls, text, point_cap=DEFAULT_POINT_CAP):
        data = json.loads(text)
        return product_rule(int(data["k"]), int(data["p"]), point_cap=point_cap)


def product_rule(k, p, point_cap=DEFAULT_POINT_CAP):
    """Product-rule Gauss-Hermite grid in ``p`` dimensions."""
    if p < 1:
        raise ValueError("dimension must be positive")
    rule = univariate_rule(k)
    if k**p > point_cap:
        raise DimensionalBlowupError(k, p, point_cap)
    index = np.array(list(itertools.product(range(k), repeat=p)), dtype=np.intp).reshape(k**p, p)
    points = rule.nodes[index]
    log_w = rule.log_weights[index].sum(axis=1)
    for arr in (index, points, log_w):
        arr.setflags(write=False)
    return ProductRule(k=k, p=p, univariate=rule, index=index, points=points, log_weights=log_w)


def gaussian_moment(a):
    """``E[Z^a]`` for ``Z ~ N(0, 1)``: zero for odd ``a``, ``(a-1)!!`` otherwise."""
    if a % 2:
        return 0.0
    out = 1.0
    for j in range(a - 1, 0, -2):
        out *= j
    return out


def _multi_indices(p, max_order):
    for total in range(max_order + 1):
        for alpha in itertools.product(range(total + 1), repeat=p):
            if sum(alpha) == total:
                yield alpha


@dataclass
class ExactnessCheck:
    alpha: tuple
    value: float
    exact: float
    passed: bool


def verify_pkp(rule, rtol=1e-8, atol=1e-10):
    """Check exact integration of every monomial of total order ``<= 2k - 1``.

    Returns one :class:`ExactnessCheck` per monomial. Zero targets are checked
    with ``atol``; non-zero targets with ``rtol``. Monomials with an odd
    exponent are summed over reflected point pairs so they cancel exactly.
    """
    if rtol <= 0 or atol <= 0:
        raise ValueError("tolerances must be positive")
    log_phi = -0.5 * np.sum(rule.points**2, axis=1) - rule.p * _LOG_SQRT_2PI
    base = np.exp(log_phi + rule.log_weights)
    magnitude = np.abs(rule.points)
    sign = np.sign(rule.points)
    strides = rule.k ** np.arange(rule.p - 1, -1, -1)
    report = []
    for alpha in _multi_indices(rule.p, 2 * rule.k - 1):
        a = np.array(alpha)
        # |z|^a * sign(z)^a so reflected monomials are exact negatives
        vals = base * np.prod(magnitude**a * sign ** (a % 2), axis=1)
        odd = np.flatnonzero(a % 2)
        if odd.size:
            # pair each point with its reflection in one odd coordinate
            reflected = rule.index.copy()
            reflected[:, odd[0]] = rule.k - 1 - reflected[:, odd[0]]
            vals = 0.5 * (vals + vals[reflected @ strides])
        value = float(np.sum(vals))
        exact = float(np.prod([gaussian_moment(a) for a in alpha]))
        if exact == 0.0:
            ok = abs(value) <= atol
        else:
            ok = abs(value - exact) <= rtol * abs(exact)
        report.append(ExactnessCheck(alpha=alpha, value=value, exact=exact, passed=ok))
    return report
