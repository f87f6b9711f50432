"""
Gauss-Hermite rules and their exactness
=======================================

Build the univariate and product rules, look at their nodes and weights,
and check that polynomials up to total order ``2k - 1`` integrate exactly
against the standard Gaussian.
"""

import math

import numpy as np

from aghq import product_rule, univariate_rule, verify_pkp

# the k = 3 rule has nodes 0 and +-sqrt(3); the weights act on phi * f, so
# sum(w * phi(x) * f(x)) approximates E[f(Z)] and the k = 1 weight is sqrt(2 pi)
rule = univariate_rule(3)
print("nodes  ", rule.nodes)
print("weights", rule.weights)
print("k=1 weight", univariate_rule(1).weights[0], "sqrt(2 pi) =", math.sqrt(2 * math.pi))

# E[X^4] = 3 for a standard Gaussian, integrated exactly with three nodes
print("E[X^4] ~", rule.integrate(lambda x: x**4))

# a p = 2 product rule has k^2 points; the last coordinate varies fastest
rule2 = product_rule(3, 2)
print(rule2.size, "points, first three:\n", rule2.points[:3])

# every monomial of total order <= 2k - 1 passes
report = verify_pkp(product_rule(5, 2))
print(len(report), "monomials checked,", sum(not c.passed for c in report), "failures")

# order 2k is the first one the rule gets wrong: E[X^6] = 15 but k = 3 gives 9
print("E[X^6] with k=3:", rule.integrate(lambda x: x**6))

# larger rules stay symmetric and well scaled
big = univariate_rule(40)
print("k=40 max node", big.nodes.max(), "symmetry error", np.max(np.abs(big.nodes + big.nodes[::-1])))
