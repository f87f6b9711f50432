import json
import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.integrate import quad

from aghq.adapt import (
    LOG_2PI,
    find_mode,
    fit,
    inverse_curvature_cholesky,
    laplace_log_norm_const,
    log_norm_const,
    relative_error,
)
from aghq.errors import CurvatureError, NodeEvaluationError, OptimizationError
from aghq.models import GaussianModel, conjugate_instance, poisson_log_rate_target
from aghq.optimize import OptimizerOptions
from aghq.quadrature import product_rule
from aghq.target import LogTarget

from conftest import random_spd


def gaussian_target(mu, prec, normalized=False, start=None):
    mu = np.asarray(mu, dtype=float)
    p = mu.size
    const = 0.5 * np.linalg.slogdet(prec)[1] - 0.5 * p * LOG_2PI if normalized else 0.0
    return LogTarget(
        dim=p,
        logdensity=lambda x: -0.5 * float((x - mu) @ prec @ (x - mu)) + const,
        start=np.zeros(p) if start is None else start,
        gradient=lambda x: -prec @ (x - mu),
        hessian=lambda x: -prec,
    )


def test_mode_of_quadratic():
    m = find_mode(gaussian_target([1.0, 2.0], np.eye(2)))
    assert np.allclose(m.mode, [1.0, 2.0], atol=1e-8)
    assert np.allclose(m.neg_hessian, np.eye(2))
    assert np.allclose(m.chol, np.eye(2))


def test_mode_conjugate_transformed():
    inst = conjugate_instance([5] * 10)
    m = find_mode(poisson_log_rate_target(inst))
    assert m.mode[0] == pytest.approx(math.log(51 / 11), abs=1e-9)


def test_mode_with_finite_differences_only():
    t = LogTarget(dim=2, logdensity=lambda x: -((x[0] - 1) ** 2) - 2 * (x[1] + 0.5) ** 2 - 0.5 * x[0] * x[1], start=[0, 0])
    m = find_mode(t)
    assert np.max(np.abs(t.grad(m.mode))) <= 1e-8 * max(1.0, abs(m.logdensity))
    assert np.allclose(m.neg_hessian, [[2.0, 0.5], [0.5, 4.0]], atol=1e-5)


def test_quartic_is_a_curvature_error():
    t = LogTarget(dim=1, logdensity=lambda x: -0.25 * x[0] ** 4, start=[1.0])
    with pytest.raises(CurvatureError):
        find_mode(t)
    t0 = LogTarget(dim=1, logdensity=lambda x: -0.25 * x[0] ** 4, start=[0.0])
    with pytest.raises(CurvatureError):
        find_mode(t0)


def test_indefinite_curvature():
    t = LogTarget(dim=1, logdensity=lambda x: 0.5 * x[0] ** 2, start=[0.0])
    with pytest.raises(CurvatureError, match="reparameteriz"):
        find_mode(t)


def test_unbounded_target_fails_to_converge():
    t = LogTarget(dim=1, logdensity=lambda x: x[0], start=[0.0])
    with pytest.raises(OptimizationError) as info:
        find_mode(t, OptimizerOptions(max_iter=20))
    assert info.value.trace


def test_inverse_curvature_cholesky_properties():
    rng = np.random.default_rng(0)
    for p in (1, 2, 3, 5):
        h = random_spd(rng, p)
        chol = inverse_curvature_cholesky(h)
        assert np.allclose(np.triu(chol, 1), 0.0)
        assert np.all(np.diag(chol) > 0)
        assert np.allclose(chol @ chol.T, np.linalg.inv(h), rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("k", [1, 2, 3, 5, 8])
@pytest.mark.parametrize("p", [1, 2, 3])
def test_normalized_gaussian_gives_zero(k, p):
    rng = np.random.default_rng(10 * k + p)
    t = gaussian_target(rng.normal(size=p), random_spd(rng, p), normalized=True)
    m = find_mode(t)
    assert abs(log_norm_const(t, product_rule(k, p), m.mode, m.chol)) <= 1e-12


def test_unnormalized_standard_gaussian():
    t = gaussian_target([0.0], np.eye(1))
    m = find_mode(t)
    assert log_norm_const(t, product_rule(3, 1), m.mode, m.chol) == pytest.approx(0.5 * LOG_2PI, abs=1e-14)


def test_node_evaluation_error():
    t = LogTarget(dim=1, logdensity=lambda x: -0.5 * x[0] ** 2 if x[0] > -1.5 else -math.inf, start=[0.0])
    m = find_mode(t)
    with pytest.raises(NodeEvaluationError) as info:
        log_norm_const(t, product_rule(3, 1), m.mode, m.chol)
    assert info.value.nodes == [[-math.sqrt(3)]]


def test_dimension_mismatch():
    t = gaussian_target([0.0, 0.0], np.eye(2))
    m = find_mode(t)
    with pytest.raises(ValueError):
        log_norm_const(t, product_rule(3, 1), m.mode, m.chol)


def test_conjugate_k7_n10():
    inst = conjugate_instance([4, 6, 5, 3, 7, 5, 6, 4, 5, 5])
    assert inst.sum_y == 50
    exact = math.lgamma(51) - 51 * math.log(11) - sum(math.lgamma(y + 1) for y in inst.data)
    assert inst.log_z_exact == pytest.approx(exact, abs=1e-12)
    ap = fit(poisson_log_rate_target(inst), 7)
    assert relative_error(inst.log_z_exact, ap.log_norm_const) <= 1e-3


def test_k1_is_laplace():
    inst = conjugate_instance([2, 0, 3, 1])
    t = poisson_log_rate_target(inst)
    ap = fit(t, 1)
    expected = laplace_log_norm_const(t(ap.mode), ap.chol)
    assert ap.log_norm_const == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(t(ap.mode) + 0.5 * LOG_2PI + math.log(ap.chol[0, 0]), abs=1e-13)


def test_gaussian_k1_equals_k11():
    rng = np.random.default_rng(4)
    t = gaussian_target(rng.normal(size=2), random_spd(rng, 2))
    assert fit(t, 1).log_norm_const == pytest.approx(fit(t, 11).log_norm_const, abs=1e-12)


def test_independent_product_factorizes():
    a = conjugate_instance([1, 4, 2, 6, 3])
    b = conjugate_instance([0, 0, 2])
    ta, tb = poisson_log_rate_target(a), poisson_log_rate_target(b)
    joint = LogTarget(
        dim=2,
        logdensity=lambda x: ta(x[:1]) + tb(x[1:]),
        start=[0.0, 0.0],
        gradient=lambda x: np.concatenate([ta.grad(x[:1]), tb.grad(x[1:])]),
        hessian=lambda x: np.diag([ta.hess(x[:1])[0, 0], tb.hess(x[1:])[0, 0]]),
    )
    # tight mode tolerance so the comparison is not limited by where BFGS stops
    opts = OptimizerOptions(tol=1e-12)
    for k in (1, 3, 5):
        assert fit(joint, k, opts).log_norm_const == pytest.approx(
            fit(ta, k, opts).log_norm_const + fit(tb, k, opts).log_norm_const, abs=1e-10
        )


def test_relative_error_examples():
    assert relative_error(1.3, 1.3) == 0.0
    assert relative_error(math.log(2), 0.0) == pytest.approx(1.0, rel=1e-15)
    assert relative_error(0.0, 1e-9) == pytest.approx(1e-9, rel=1e-8)


@pytest.mark.parametrize("seed", range(8))
def test_gaussian_exactness(seed):
    rng = np.random.default_rng(seed)
    p = 1 + seed % 3
    g = GaussianModel(mean=rng.normal(scale=3, size=p), cov=np.linalg.inv(random_spd(rng, p)))
    for k in (1, 2, 4, 7):
        ap = fit(g.target(), k)
        assert relative_error(g.log_z_exact, ap.log_norm_const) <= 1e-10


def test_fit_invariants(conjugate100):
    t = poisson_log_rate_target(conjugate100)
    ap = fit(t, 5)
    assert np.max(np.abs(t.grad(ap.mode))) <= 1e-8 * max(1.0, abs(t(ap.mode)))
    assert np.all(np.diag(ap.chol) > 0)
    assert math.isfinite(ap.log_norm_const)
    assert float(np.sum(np.exp(ap.log_node_weights))) == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(ap.nodes_theta, ap.mode + ap.rule.points @ ap.chol.T)
    assert np.array_equal(ap.log_integrand, [t(x) for x in ap.nodes_theta])


def test_affine_equivariance():
    inst = conjugate_instance([3, 5, 1, 4, 2, 6])
    base = poisson_log_rate_target(inst)
    for c in (-2.0, 0.7, 5.0):
        shifted = LogTarget(dim=1, logdensity=lambda x, c=c: base(x - c), start=base.start + c)
        a, b = fit(base, 5), fit(shifted, 5)
        assert b.mode[0] == pytest.approx(a.mode[0] + c, abs=1e-8)
        assert b.log_norm_const == pytest.approx(a.log_norm_const, abs=1e-10)


def test_node_order_invariance():
    rng = np.random.default_rng(5)
    t = LogTarget(
        dim=2,
        logdensity=lambda x: -0.5 * x[0] ** 2 - math.cosh(x[1]) + 0.3 * x[0] * x[1],
        start=[0.2, 0.1],
    )
    m = find_mode(t)
    rule = product_rule(5, 2)
    perm = rng.permutation(rule.size)
    shuffled = replace(rule, index=rule.index[perm], points=rule.points[perm], log_weights=rule.log_weights[perm])
    assert log_norm_const(t, shuffled, m.mode, m.chol) == pytest.approx(
        log_norm_const(t, rule, m.mode, m.chol), abs=1e-12
    )


def test_tv_error_equals_relative_error():
    inst = conjugate_instance([3, 7, 2, 5, 4, 6, 5, 3, 4, 6])
    t = poisson_log_rate_target(inst)
    ap = fit(t, 3)
    e_rel = relative_error(inst.log_z_exact, ap.log_norm_const)
    assert e_rel > 1e-6

    def diff(th):
        lt = t([th])
        return math.exp(lt - ap.log_norm_const) - math.exp(lt - inst.log_z_exact)

    lo, hi = ap.mode[0] - 40 * ap.chol[0, 0], ap.mode[0] + 40 * ap.chol[0, 0]
    pos, _ = quad(lambda th: max(diff(th), 0.0), lo, hi, points=[ap.mode[0]], epsabs=1e-13, limit=200)
    neg, _ = quad(lambda th: max(-diff(th), 0.0), lo, hi, points=[ap.mode[0]], epsabs=1e-13, limit=200)
    assert max(pos, neg) == pytest.approx(e_rel, abs=1e-6)


def test_monotone_improvement_in_k():
    rng = np.random.default_rng(11)
    for n in range(10, 101, 10):
        e3, e7 = [], []
        for _ in range(15):
            inst = conjugate_instance(rng.poisson(5.0, size=n))
            t = poisson_log_rate_target(inst)
            m = find_mode(t)
            e3.append(relative_error(inst.log_z_exact, fit(t, 3, mode=m).log_norm_const))
            e7.append(relative_error(inst.log_z_exact, fit(t, 7, mode=m).log_norm_const))
        assert np.median(e7) <= np.median(e3)


def test_json(conjugate100):
    ap = fit(poisson_log_rate_target(conjugate100), 3)
    data = json.loads(ap.to_json())
    assert set(data) == {"k", "p", "mode", "negHessian", "cholFactor", "logNormConst"}
    assert data["logNormConst"] == ap.log_norm_const
