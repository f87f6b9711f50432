"""
Normalizing constants and summaries for a conjugate Poisson model
================================================================

Counts ``Y_i ~ Poisson(lambda)`` with an ``Exponential(1)`` prior give a
``Gamma(1 + sum Y, n + 1)`` posterior, so every quantity computed here has
an exact answer to compare against.
"""

import math

import numpy as np
from scipy import stats

from aghq import fit, relative_error
from aghq.models import conjugate_instance, poisson_log_rate_target
from aghq.summaries import ks_distance, marginal_summary, moment

rng = np.random.default_rng(2022)
inst = conjugate_instance(rng.poisson(5.0, size=100))
print(f"n = {inst.n}, sum y = {inst.sum_y}, exact log Z = {inst.log_z_exact:.10f}")

# fit on theta = log(lambda); the Jacobian keeps the normalizing constant
# unchanged and the mode stays interior even when every count is zero
target = poisson_log_rate_target(inst)

# k = 1 is the Laplace approximation; the error rate in n improves once
# every three nodes, so k = 3 matches k = 1 here while 5 and 7 pull ahead
for k in (1, 3, 5, 7):
    ap = fit(target, k)
    print(f"k={k}: log Z = {ap.log_norm_const:.10f}, relative error {relative_error(inst.log_z_exact, ap.log_norm_const):.2e}")

ap = fit(target, 7)

# posterior mean of lambda from the same nodes and weights
posterior = stats.gamma(a=inst.shape, scale=1 / inst.rate)
print("E[lambda | y]:", moment(ap, lambda x: math.exp(x[0])), "exact", posterior.mean())

# marginal density, CDF on a fine grid, and quantiles that land on grid points
ms, q = marginal_summary(ap, 0, alphas=(0.025, 0.5, 0.975))
for a, theta in q.items():
    print(f"  q({a}) = {math.exp(theta):.5f}   exact {posterior.ppf(a):.5f}")
print("KS distance to the exact CDF:", ks_distance(ms.cdf_at, lambda t: posterior.cdf(np.exp(t)), ms.grid))
