"""Distribution-fitting and goodness-of-fit helpers for the Monte Carlo harness."""

from __future__ import annotations

import math

import numpy as np
from scipy import special, stats

__all__ = ["gamma_fit", "ks_statistic", "chi2_gof"]


def gamma_fit(samples) -> tuple[float, float, int]:
    """Maximum-likelihood gamma fit; returns (shape, scale, n_excluded).

    Non-positive samples are excluded (their count is returned); constant
    samples raise.  Newton iteration on log(k) - psi(k) = log(mean) -
    mean(log x), started from the standard closed-form approximation.
    """
    x = np.asarray(samples, dtype=float)
    pos = x[x > 0]
    n_excluded = len(x) - len(pos)
    if len(pos) < 2:
        raise ValueError("need at least two positive samples")
    if np.ptp(pos) == 0:
        raise ValueError("degenerate (constant) sample")
    s = math.log(pos.mean()) - float(np.mean(np.log(pos)))
    k = (3 - s + math.sqrt((s - 3) ** 2 + 24 * s)) / (12 * s)
    for _ in range(100):
        f = math.log(k) - special.digamma(k) - s
        fp = 1 / k - special.polygamma(1, k)
        step = f / fp
        k_new = k - step
        if k_new <= 0:
            k_new = k / 2
        if abs(k_new - k) < 1e-10 * k:
            k = k_new
            break
        k = k_new
    return float(k), float(pos.mean() / k), n_excluded


def ks_statistic(samples, cdf) -> tuple[float, float]:
    """One-sample Kolmogorov-Smirnov sup-distance and asymptotic p-value."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = len(x)
    if n == 0:
        raise ValueError("empty sample")
    F = np.asarray(cdf(x), dtype=float)
    hi = np.arange(1, n + 1) / n
    lo = np.arange(0, n) / n
    d = float(max(np.max(hi - F), np.max(F - lo)))
    p = float(special.kolmogorov(math.sqrt(n) * d))
    return d, p


def chi2_gof(observed, expected_probs, n_total: int | None = None,
             min_expected: float = 5.0) -> tuple[float, float, int]:
    """Chi-squared goodness of fit with small-expected-count pooling.

    ``observed`` are bin counts, ``expected_probs`` the model probabilities
    of the same bins (any remaining mass is pooled into a rest bucket).
    Returns (statistic, p-value, degrees of freedom).
    """
    obs = np.asarray(observed, dtype=float)
    probs = np.asarray(expected_probs, dtype=float)
    n = float(obs.sum()) if n_total is None else float(n_total)
    rest_p = max(0.0, 1.0 - probs.sum())
    rest_o = n - obs.sum()
    exp = probs * n
    keep = exp >= min_expected
    stat = float(np.sum((obs[keep] - exp[keep]) ** 2 / exp[keep]))
    pool_o = obs[~keep].sum() + rest_o
    pool_e = exp[~keep].sum() + rest_p * n
    cells = int(keep.sum())
    if pool_e > 0:
        stat += (pool_o - pool_e) ** 2 / pool_e
        cells += 1
    df = cells - 1
    return stat, float(stats.chi2.sf(stat, df)), df
