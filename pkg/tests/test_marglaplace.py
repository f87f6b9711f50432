import math

import numpy as np
import pytest
from scipy import stats

from aghq.adapt import fit
from aghq.errors import ComponentError
from aghq.marglaplace import (
    JointTarget,
    MixtureApproximation,
    fit_marginal_laplace,
    laplace_profile,
    sample_mixture,
)
from aghq.models import RandomInterceptModel

LOG_2PI = math.log(2 * math.pi)


@pytest.fixture
def ri_model():
    rng = np.random.default_rng(42)
    groups = np.repeat(np.arange(6), [3, 5, 2, 4, 6, 1])
    w = rng.normal(1.0, 1.0, size=6)
    y = w[groups] + rng.normal(size=groups.size)
    return RandomInterceptModel(groups=groups, y=y, sigma=1.0, tau=1.0, prior_sd=10.0)


def conditional_log_marginal(model, mu):
    """log p(y | mu) + log p(mu), integrating W by hand."""
    n, m = model.y.size, model.n_groups
    z = np.zeros((n, m))
    z[np.arange(n), model.groups] = 1.0
    cov = model.tau**2 * z @ z.T + model.sigma**2 * np.eye(n)
    return stats.multivariate_normal(mean=np.full(n, mu), cov=cov).logpdf(model.y) + stats.norm(
        0.0, model.prior_sd
    ).logpdf(mu)


def test_m1_example():
    jt = JointTarget(
        dim_w=1, dim_theta=1, logjoint=lambda w, th: -0.5 * w[0] ** 2 + th[0], start_w=[0.3], start_theta=[0.0]
    )
    for theta in (-1.0, 0.0, 2.5):
        prof = laplace_profile(jt, [theta])
        assert prof.log_la == pytest.approx(theta + 0.5 * LOG_2PI, abs=1e-10)
        assert prof.w_hat[0] == pytest.approx(0.0, abs=1e-8)


def test_laplace_exact_for_gaussian_inner(ri_model):
    jt = ri_model.joint_target()
    for mu in (-1.0, 0.5, 2.0):
        prof = laplace_profile(jt, [mu])
        assert prof.log_la == pytest.approx(conditional_log_marginal(ri_model, mu), abs=1e-10)


def test_laplace_without_derivatives(ri_model):
    jt = ri_model.joint_target()
    bare = JointTarget(jt.dim_w, jt.dim_theta, jt.logjoint, jt.start_w, jt.start_theta)
    prof = laplace_profile(bare, [0.7])
    assert prof.log_la == pytest.approx(conditional_log_marginal(ri_model, 0.7), abs=1e-6)


def test_random_intercept_fit(ri_model):
    ap, mix = fit_marginal_laplace(ri_model.joint_target(), 5)
    assert ap.log_norm_const == pytest.approx(ri_model.exact_log_marginal(), abs=1e-8)
    mean_w, cov_w = ri_model.exact_posterior_w()
    assert np.max(np.abs(mix.mean() - mean_w)) <= 1e-8
    assert np.allclose(mix.covariance(), cov_w, atol=1e-8)
    assert mix.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(mix.weights > 0)
    assert mix.size == 5
    mu, var = ri_model.exact_posterior_mu()
    assert float(mix.weights @ mix.theta_nodes[:, 0]) == pytest.approx(mu, abs=1e-8)


def test_single_component(ri_model):
    ap, mix = fit_marginal_laplace(ri_model.joint_target(), 1)
    assert mix.size == 1
    assert mix.weights[0] == pytest.approx(1.0, abs=1e-15)
    assert np.allclose(mix.theta_nodes[0], ap.mode)


def test_weights_reintegrate(ri_model):
    ap, mix = fit_marginal_laplace(ri_model.joint_target(), 3)
    lw = ap.log_integrand + ap.rule.log_weights + float(np.sum(np.log(np.diag(ap.chol)))) - ap.log_norm_const
    assert float(np.sum(np.exp(lw))) == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(mix.log_weights, lw, atol=1e-12)


def test_sampling_deterministic(ri_model):
    _, mix = fit_marginal_laplace(ri_model.joint_target(), 3)
    a, b = mix.sample(200, seed=9), sample_mixture(mix, 200, seed=9)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, mix.sample(200, seed=10))


def test_degenerate_weights():
    mix = MixtureApproximation(
        theta_nodes=np.zeros((2, 1)),
        means=np.array([[0.0], [100.0]]),
        precision_chols=np.array([[[1.0]], [[1.0]]]),
        log_weights=np.array([0.0, -np.inf]),
    )
    draws = mix.sample(1000, seed=1)
    assert np.all(np.abs(draws) < 10)


def test_single_component_mean():
    chol = np.linalg.cholesky(np.array([[4.0, 1.0], [1.0, 2.0]]))
    mix = MixtureApproximation(
        theta_nodes=np.zeros((1, 1)), means=np.array([[1.0, -1.0]]), precision_chols=chol[None], log_weights=np.zeros(1)
    )
    n = 40000
    draws = mix.sample(n, seed=3)
    cov = np.linalg.inv(chol @ chol.T)
    se = np.sqrt(np.diag(cov) / n)
    assert np.all(np.abs(draws.mean(axis=0) - [1.0, -1.0]) <= 4 * se)
    assert np.allclose(np.cov(draws.T), cov, rtol=0.05)


def test_sample_mean_matches_posterior(ri_model):
    _, mix = fit_marginal_laplace(ri_model.joint_target(), 5)
    mean_w, cov_w = ri_model.exact_posterior_w()
    n = 50000
    draws = mix.sample(n, seed=2024)
    se = np.sqrt(np.diag(cov_w) / n)
    assert np.all(np.abs(draws.mean(axis=0) - mean_w) <= 4 * se)


def test_sample_count():
    mix = MixtureApproximation(np.zeros((1, 1)), np.zeros((1, 1)), np.ones((1, 1, 1)), np.zeros(1))
    with pytest.raises(ValueError):
        mix.sample(0)


def test_agrees_with_direct_quadrature():
    model = RandomInterceptModel(groups=[0, 0, 0], y=[0.4, 1.3, 0.9], prior_sd=3.0)
    ap, _ = fit_marginal_laplace(model.joint_target(), 7)
    direct = fit(model.full_target(), 7)
    assert ap.log_norm_const == pytest.approx(direct.log_norm_const, abs=1e-4)


def test_component_error_names_node():
    jt = JointTarget(
        dim_w=1,
        dim_theta=1,
        logjoint=lambda w, th: 0.5 * w[0] ** 2 - th[0] ** 2,
        start_w=[0.1],
        start_theta=[0.0],
        gradient_w=lambda w, th: np.array([w[0]]),
        hessian_w=lambda w, th: np.array([[1.0]]),
    )
    with pytest.raises(ComponentError) as info:
        laplace_profile(jt, [0.25])
    assert np.allclose(info.value.theta, [0.25])
