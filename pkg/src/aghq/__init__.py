"""Adaptive Gauss-Hermite quadrature for Bayesian inference."""

from .adapt import AdaptedPosterior, find_mode, fit, log_norm_const, relative_error
from .marglaplace import JointTarget, MixtureApproximation, fit_marginal_laplace, laplace_profile, sample_mixture
from .quadrature import ProductRule, UnivariateRule, hermite_eval, product_rule, univariate_rule, verify_pkp
from .summaries import (
    cdf_and_quantiles,
    interpolate_log_marginal,
    ks_distance,
    marginal_at_nodes,
    marginal_summary,
    moment,
    reorder_for_marginal,
)
from .target import (
    LogTarget,
    Transform,
    double_log_interval_transform,
    fd_gradient,
    fd_hessian,
    identity_transform,
    log_transform,
    wrap_transformed,
)

__version__ = "0.1.0"
