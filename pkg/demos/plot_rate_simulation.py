"""
Convergence rates in the sample size
====================================

With ``k`` nodes per dimension the relative error of the normalizing
constant shrinks like ``n ** -floor((k + 2) / 3)``. This script simulates
conjugate Poisson data sets over a range of ``n`` and fits the slope of
the median log error against ``log n``.
"""

from aghq.simulation import median_log_errors, rate_exponent, rate_slope, simulate_rates

# 50 replicates per n keeps this under a few seconds; the acceptance suite uses 100
result = simulate_rates(lam=5.0, n_max=100, reps=50, ks=(3, 5, 7), seed=20221, n_values=range(10, 101))

for k in result.ks:
    slope, intercept = rate_slope(result, k, n_range=(10, 100))
    flat, _ = rate_slope(result, k, n_range=(10, 100), detrended=True)
    print(f"k={k}: slope {slope:+.3f} (theory {-rate_exponent(k)}), de-trended slope {flat:+.3f}")

# the de-trended medians should show no pattern in n
med = median_log_errors(result, 7, detrended=True)
for n in (10, 40, 70, 100):
    print(f"  n={n:3d}: median de-trended log error {med[n][0]:.3f}")

# rows go to CSV with 17 significant digits, so reruns compare byte for byte
print(result.to_csv().splitlines()[:3])
