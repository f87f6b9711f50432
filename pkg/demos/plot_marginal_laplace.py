"""
Marginal Laplace for a random-intercept model
=============================================

Group effects ``W`` are integrated out with a Laplace approximation at each
quadrature node for the overall mean ``mu``. The nodes and weights then
define a Gaussian mixture for ``W`` that can be sampled directly. The model
is Gaussian, so the exact posterior is available for comparison.
"""

import numpy as np

from aghq.marglaplace import fit_marginal_laplace
from aghq.models import RandomInterceptModel

rng = np.random.default_rng(55)
groups = np.repeat(np.arange(8), rng.integers(2, 7, size=8))
effects = rng.normal(2.0, 1.0, size=8)
y = effects[groups] + rng.normal(size=groups.size)
model = RandomInterceptModel(groups=groups, y=y, sigma=1.0, tau=1.0, prior_sd=10.0)

ap, mix = fit_marginal_laplace(model.joint_target(), k=5)
print("log marginal likelihood:", ap.log_norm_const, "exact", model.exact_log_marginal())

# one mixture component per node of mu
print("components:", mix.size, "weights:", np.round(mix.weights, 4))

exact_mean, exact_cov = model.exact_posterior_w()
print("max |E[W|y] error|:", np.max(np.abs(mix.mean() - exact_mean)))

# exact draws: pick a component, then a Gaussian draw from it
draws = mix.sample(20000, seed=1)
se = np.sqrt(np.diag(exact_cov) / len(draws))
print("sample mean error in standard errors:", np.round((draws.mean(axis=0) - exact_mean) / se, 2))
