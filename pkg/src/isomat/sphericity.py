"""Sphericity test statistics, anisotropy measures and the symmetry classifier.

Under a spherical mean and isotropic Gaussian error the rescaled central
moments have parameter-free limits: tau_2 -> chi^2_5, tau_3 -> Uniform[-1,1]
and tau_1 is Gaussian.  FA, RA and VR based statistics reduce to the same
limits away from a zero mean diffusivity; at zero mean diffusivity the joint
limit involves an extra chi^2_1 factor and requires Monte Carlo calibration.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import stats

from .asymptotics import Regime3D
from .symmat import IsotropicModel, central_moments

__all__ = [
    "TauStats",
    "SymmetryVerdict",
    "tau_statistics",
    "fa",
    "ra",
    "vr",
    "sphericity_pvalues",
    "vr_conditional_limit_sample",
    "vr_conditional_quantile",
    "regime1_joint_sample",
    "default_thresholds",
    "symmetry_classify",
    "two_sample_combine",
    "two_sample_stat",
]


@dataclass
class TauStats:
    """Rescaled sphericity statistics of one eigenvalue triple.

    tau3 is None when kappa_2 = 0 (undefined skewness direction); tau6 is
    +inf when VR = 0.  ``a`` is the scaling value (e.g. mu, or mu_bar times
    the number of acquisitions).
    """

    tau1: float
    tau2: float
    tau3: float | None
    tau4: float
    tau5: float
    tau6: float
    a: float
    kappa: np.ndarray = field(repr=False)


def _kappa3(gamma) -> np.ndarray:
    return central_moments(np.asarray(gamma, dtype=float), 3)


def fa(gamma) -> float:
    """Fractional anisotropy sqrt(3 k2 / (2 (k1^2 + k2)))."""
    k = _kappa3(gamma)
    denom = 2 * (k[0] ** 2 + k[1])
    if denom <= 0:
        raise ValueError("FA undefined: Tr(D^2) = 0")
    return math.sqrt(3 * k[1] / denom)


def ra(gamma) -> float:
    """Relative anisotropy sqrt(k2) / |k1|."""
    k = _kappa3(gamma)
    if k[0] == 0:
        raise ValueError("RA undefined: zero mean eigenvalue")
    return math.sqrt(k[1]) / abs(k[0])


def vr(gamma) -> float:
    """Volume ratio g1 g2 g3 / k1^3 (27 det(D) / Tr(D)^3)."""
    k = _kappa3(gamma)
    if k[0] == 0:
        raise ValueError("VR undefined: zero mean eigenvalue")
    prod = k[2] + k[0] ** 3 - 1.5 * k[0] * k[1]
    return prod / k[0] ** 3


def tau_statistics(gamma, a: float, kappa1_ref: float = 0.0) -> TauStats:
    """Compute tau_1..tau_6 from an eigenvalue triple at scaling a."""
    if not a > 0:
        raise ValueError("scaling a must be > 0")
    gamma = np.asarray(gamma, dtype=float)
    k = _kappa3(gamma)
    k1, k2, k3 = float(k[0]), float(k[1]), float(k[2])
    sqrt_a = math.sqrt(a)
    tau1 = sqrt_a * (k1 - kappa1_ref)
    tau2 = 6 * a * k2
    if k2 > 0:
        tau3 = math.sqrt(2) * k3 * k2**-1.5
        # |tau3| <= 1 by the support bound |k3| <= k2^{3/2}/sqrt(2); clip round-off
        tau3 = float(np.clip(tau3, -1.0, 1.0))
        fa_val = math.sqrt(3 * k2 / (2 * (k1**2 + k2)))
    else:
        tau3 = None
        fa_val = 0.0
    tau4 = 2 * sqrt_a * abs(k1) * fa_val
    prod = k3 + k1**3 - 1.5 * k1 * k2
    vr_val = prod / k1**3 if k1 != 0 else math.nan
    tau5 = 4 * a * k1**2 * (1 - vr_val) if k1 != 0 else math.nan
    if k1 == 0:
        tau6 = math.nan
    elif vr_val == 0:
        tau6 = math.inf
    else:
        tau6 = -4 * a * k1**2 * math.log(abs(vr_val))
    return TauStats(tau1=tau1, tau2=tau2, tau3=tau3, tau4=tau4, tau5=tau5,
                    tau6=tau6, a=a, kappa=k)


def sphericity_pvalues(tau: TauStats, lam: float = 0.0) -> dict[str, float | None]:
    """p-values of the sphericity tests.

    tau1: two-sided against N(0, 1/(6 + 9 lam)); tau2, tau5: upper tail of
    chi^2_5; tau3: two-sided uniform rule -- the hypothesis is accepted at
    level alpha when |tau3| lies in ((1-alpha)/2, (1+alpha)/2), giving
    p = 1 - |2 |tau3| - 1|.  Absent tau3 yields a None entry.
    """
    sd = 1.0 / math.sqrt(6 + 9 * lam)
    out: dict[str, float | None] = {
        "tau1": 2 * stats.norm.sf(abs(tau.tau1) / sd),
        "tau2": float(stats.chi2.sf(tau.tau2, df=5)),
        "tau5": float(stats.chi2.sf(tau.tau5, df=5)) if math.isfinite(tau.tau5) else None,
    }
    out["tau3"] = None if tau.tau3 is None else 1.0 - abs(2 * abs(tau.tau3) - 1.0)
    return out


def vr_conditional_limit_sample(
    t: float, rng: np.random.Generator, size: int | None = None
):
    """Draw from the conditional VR limit given a * kappa_1^2 = t (zero-mean regime).

    1 + (chi2_5 / (3 t))^{3/2} U / 4 - chi2_5 / (4 t), U ~ Uniform[-1, 1].
    """
    if not t > 0:
        raise ValueError("t must be > 0")
    n = 1 if size is None else size
    c5 = rng.chisquare(5, size=n)
    u = rng.uniform(-1.0, 1.0, size=n)
    out = 1.0 + (c5 / (3 * t)) ** 1.5 * u / 4 - c5 / (4 * t)
    return float(out[0]) if size is None else out


def regime1_joint_sample(
    lam: float, rng: np.random.Generator, size: int | None = None
):
    """Joint draw of the zero-mean limit vector (FA, RA, 1-VR, tau1^2, tau2, tau3).

    Built from independent chi^2_1, chi^2_5 and U ~ Uniform[-1, 1].
    """
    if not lam > -2 / 3:
        raise ValueError("requires lam > -2/3")
    n = 1 if size is None else size
    c1 = rng.chisquare(1, size=n)
    c5 = rng.chisquare(5, size=n)
    u = rng.uniform(-1.0, 1.0, size=n)
    fa_lim = np.sqrt(3 * c5 / (2 * c5 + c1 * 12 / (9 * lam + 6)))
    ra_lim = np.sqrt((3 * lam + 2) / 2 * c5 / c1)
    one_minus_vr = (9 * lam + 6) / 4 * c5 / c1 - ((3 * lam + 2) * c5 / c1) ** 1.5 * u / 4
    tau1_sq = c1 / (9 * lam + 6)
    out = np.stack([fa_lim, ra_lim, one_minus_vr, tau1_sq, c5, u], axis=-1)
    return out[0] if size is None else out


def default_thresholds(a: float) -> tuple[float, float]:
    """Admissible classifier schedule: p = 1 - 1/sqrt(a), c = chi2_5 quantile at p.

    Satisfies c -> inf and c / a -> 0 as a -> inf.
    """
    if not a > 1:
        raise ValueError("a must be > 1 for the default schedule")
    p_n = 1 - 1 / math.sqrt(a)
    c_n = float(stats.chi2.ppf(p_n, df=5))
    return c_n, p_n


@dataclass
class SymmetryVerdict:
    """Outcome of the symmetry classifier: regime and adjusted eigenvalues."""

    regime: Regime3D
    estimate: np.ndarray
    c_n: float
    p_n: float


def symmetry_classify(
    gamma, a: float, c_n: float | None = None, p_n: float | None = None
) -> SymmetryVerdict:
    """Superefficient eigenvalue estimator via sequential symmetry tests.

    1. kappa_2 < c/(6a): isotropic, all eigenvalues set to kappa_1;
    2. (g1 - g2)^2 a < -2 log(1 - p): oblate, top pair merged;
    3. (g2 - g3)^2 a < -2 log(1 - p): prolate, bottom pair merged;
    4. otherwise asymmetric, estimate unchanged.
    """
    gamma = np.asarray(gamma, dtype=float)
    if len(gamma) != 3:
        raise ValueError("classifier is defined for m = 3")
    if c_n is None or p_n is None:
        c_def, p_def = default_thresholds(a)
        c_n = c_def if c_n is None else c_n
        p_n = p_def if p_n is None else p_n
    if not (a > 0 and c_n > 0 and 0 < p_n < 1):
        raise ValueError("need a, c_n > 0 and p_n in (0, 1)")
    k = _kappa3(gamma)
    gap_crit = -2 * math.log1p(-p_n)
    if k[1] < c_n / (6 * a):
        est = np.full(3, k[0])
        regime = Regime3D.ISOTROPIC
    elif (gamma[0] - gamma[1]) ** 2 * a < gap_crit:
        top = 0.5 * (gamma[0] + gamma[1])
        est = np.array([top, top, gamma[2]])
        regime = Regime3D.OBLATE
    elif (gamma[1] - gamma[2]) ** 2 * a < gap_crit:
        bot = 0.5 * (gamma[1] + gamma[2])
        est = np.array([gamma[0], bot, bot])
        regime = Regime3D.PROLATE
    else:
        est = gamma.copy()
        regime = Regime3D.ASYMMETRIC
    return SymmetryVerdict(regime=regime, estimate=est, c_n=c_n, p_n=p_n)


def two_sample_combine(
    mu1: float, lam1: float, mu2: float, lam2: float, m: int
) -> tuple[float, float]:
    """Parameters of the difference of two independent isotropic Gaussians."""
    IsotropicModel(m, mu1, lam1)
    IsotropicModel(m, mu2, lam2)
    mu = mu1 * mu2 / (mu1 + mu2)
    alpha = lam1 * mu2 / (2 * mu1 + m * lam1) + lam2 * mu1 / (2 * mu2 + m * lam2)
    denom = mu1 + mu2 - m * alpha
    if denom <= 0:
        raise ValueError("invalid combination: mu' + mu'' - m alpha <= 0")
    lam = 2 * alpha * mu / denom
    return mu, lam


def two_sample_stat(D_diff: np.ndarray, mu: float, lam: float) -> float:
    """Equality-of-means statistic 2 m mu k2(D) + (2 m mu + lam m^2) k1(D)^2.

    Asymptotically chi^2 with m(m+1)/2 degrees of freedom under the null.
    """
    D = np.asarray(D_diff, dtype=float)
    m = D.shape[0]
    gamma = np.linalg.eigvalsh(D)[::-1]
    k = central_moments(gamma, 2)
    return 2 * m * mu * float(k[1]) + (2 * m * mu + lam * m * m) * float(k[0]) ** 2


# ---------------------------------------------------------------------------
# persisted calibration table for the conditional VR test


def _data_dir() -> Path:
    env = os.environ.get("ISOMAT_DATA_DIR")
    if env:
        return Path(env)
    return Path(__file__).parent / "data"


@lru_cache(maxsize=1)
def _vr_table() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Load the persisted conditional-VR quantile table (t, level, value)."""
    path = _data_dir() / "vr_conditional_quantiles.csv"
    ts, levels, values = [], [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            ts.append(float(row["t"]))
            levels.append(float(row["quantile_level"]))
            values.append(float(row["value"]))
    return np.array(ts), np.array(levels), np.array(values)


def vr_conditional_quantile(t: float, level: float) -> float:
    """Quantile of the conditional VR limit at a kappa_1^2 = t.

    Interpolated (linearly in log t and in level) from the bundled Monte
    Carlo table.
    """
    ts, levels, values = _vr_table()
    t_grid = np.unique(ts)
    l_grid = np.unique(levels)
    if not (l_grid[0] <= level <= l_grid[-1]):
        raise ValueError(f"quantile level {level} outside table range")
    tc = float(np.clip(t, t_grid[0], t_grid[-1]))
    V = values.reshape(len(t_grid), len(l_grid))
    # locate bracketing t rows, interpolate each in level then blend in log t
    i = int(np.searchsorted(t_grid, tc, side="right") - 1)
    i = min(max(i, 0), len(t_grid) - 2)
    v_lo = np.interp(level, l_grid, V[i])
    v_hi = np.interp(level, l_grid, V[i + 1])
    w = (math.log(tc) - math.log(t_grid[i])) / (
        math.log(t_grid[i + 1]) - math.log(t_grid[i])
    )
    return float((1 - w) * v_lo + w * v_hi)
