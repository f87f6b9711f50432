"""Convergence-rate simulation on the conjugate Poisson model.

For each sample size ``n`` and replicate ``l`` a dataset is drawn from
``Poisson(lambda)``, the normalizing constant is approximated with ``k``
points per dimension, and the relative error against the exact value is
recorded together with the de-trended value
``log E_rel + floor((k + 2) / 3) log n``.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .adapt import find_mode, fit, relative_error
from .errors import EstimationError, NumericalError
from .models import conjugate_instance, poisson_log_rate_target

CSV_HEADER = ("n", "rep", "k", "log_rel_error", "detrended")


def rate_exponent(k):
    """``floor((k + 2) / 3)``, the power of ``n`` in the error bound."""
    return (k + 2) // 3


def substream(seed, n, rep):
    """Independent counter-based generator for replicate ``rep`` at size ``n``."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(n, rep))
    return np.random.Generator(np.random.Philox(ss))


def poisson_sampler(lam, count, stream):
    """``count`` iid Poisson(``lam``) draws from the generator ``stream``.

    Delegates to NumPy, which uses inversion for small rates and PTRS
    rejection for large ones.
    """
    if not lam > 0:
        raise ValueError("Poisson rate must be positive")
    return stream.poisson(lam, size=count)


@dataclass(frozen=True)
class SimulationRow:
    n: int
    rep: int
    k: int
    log_rel_error: float

    @property
    def detrended(self):
        return self.log_rel_error + rate_exponent(self.k) * math.log(self.n)


@dataclass
class SimulationResult:
    rows: list
    seed: int
    lam: float
    reps: int
    n_max: int
    ks: tuple = field(default_factory=tuple)

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in self.rows:
            writer.writerow([r.n, r.rep, r.k, _fmt(r.log_rel_error), _fmt(r.detrended)])
        return buf.getvalue()

    def by_k(self, k):
        return [r for r in self.rows if r.k == k]


def _fmt(x):
    return format(x, ".17g")


def _replicate(args):
    lam, seed, n, rep, ks = args
    y = poisson_sampler(lam, n, substream(seed, n, rep))
    inst = conjugate_instance(y)
    target = poisson_log_rate_target(inst)
    try:
        mode = find_mode(target)
    except NumericalError:
        return [SimulationRow(n, rep, k, math.nan) for k in ks]
    rows = []
    for k in ks:
        try:
            ap = fit(target, k, mode=mode)
            err = relative_error(inst.log_z_exact, ap.log_norm_const)
            log_err = math.log(err) if err > 0 else -math.inf
        except NumericalError:
            log_err = math.nan
        rows.append(SimulationRow(n, rep, k, log_err))
    return rows


def simulate_rates(lam, n_max, reps, ks, seed, n_values=None, threads=1):
    """Relative errors over ``n = 1..n_max`` (or ``n_values``) and ``reps`` replicates.

    Each ``(n, rep)`` pair draws its data from its own seeded substream, so
    the output does not depend on ``threads``. Failed fits are recorded as
    NaN rather than raised.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if n_max < 2 or reps < 1:
        raise ValueError("need n_max >= 2 and reps >= 1")
    ks = tuple(int(k) for k in ks)
    ns = range(1, n_max + 1) if n_values is None else sorted(set(int(n) for n in n_values))
    tasks = [(lam, seed, n, rep, ks) for n in ns for rep in range(reps)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(_replicate, tasks, chunksize=max(1, len(tasks) // (8 * threads))))
    else:
        chunks = [_replicate(t) for t in tasks]
    rows = sorted((r for chunk in chunks for r in chunk), key=lambda r: (r.n, r.rep, r.k))
    return SimulationResult(rows=rows, seed=seed, lam=lam, reps=reps, n_max=n_max, ks=ks)


def median_log_errors(result, k, n_range=None, detrended=False):
    """Median over replicates of the (de-trended) log relative error, per ``n``."""
    groups = {}
    for r in result.rows:
        if r.k != k or (n_range is not None and not n_range[0] <= r.n <= n_range[1]):
            continue
        val = r.detrended if detrended else r.log_rel_error
        if math.isfinite(val):
            groups.setdefault(r.n, []).append(val)
    return {n: (float(np.median(v)), len(v)) for n, v in sorted(groups.items())}


def default_window(k):
    """Sample sizes used for slope fits.

    Small ``n`` is dropped, and for ``k >= 11`` large ``n`` too, where the
    relative error reaches rounding level.
    """
    return (10, 60) if k >= 11 else (10, 100)


def rate_slope(result, k, n_range=None, detrended=False, min_ns=5, min_reps=10):
    """OLS fit of median log relative error against ``log n``.

    Returns ``(slope, intercept)``. For ``k`` points the expected slope is
    ``-floor((k + 2) / 3)``, or zero with ``detrended=True``. ``n_range``
    defaults to :func:`default_window`.
    """
    med = median_log_errors(result, k, default_window(k) if n_range is None else n_range, detrended)
    usable = {n: m for n, (m, count) in med.items() if count >= min_reps}
    if len(usable) < min_ns:
        raise EstimationError(
            f"need at least {min_ns} sample sizes with {min_reps}+ finite replicates, got {len(usable)}"
        )
    x = np.log(np.array(list(usable), dtype=float))
    y = np.array(list(usable.values()))
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept)
