"""Exact eigenvalue and eigenvector densities of the isotropic Gaussian family.

Densities are computed in log space internally; the linear-scale functions
are thin wrappers.  The coupling between the eigenvalues of the matrix and
of its mean is carried by the orthogonal-group spherical integral

    I_m(gbar, gamma) = int exp(Tr(O G O^T Gbar)) H_m(dO)
                     = int exp(sum_ij O_ij^2 gbar_i gamma_j) H_m(dO),

evaluated either on an Euler-angle grid (m = 3) or by Haar Monte Carlo.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special
from scipy.stats import norm

from .symmat import IsotropicModel, haar_orthogonal

__all__ = [
    "HcizConfig",
    "OrderedSpectrum",
    "vandermonde",
    "normalizing_Z",
    "log_normalizing_Z",
    "eigdensity_zero_mean",
    "log_eigdensity_zero_mean",
    "hciz",
    "log_hciz",
    "hciz_haar_mc",
    "eigdensity_general",
    "log_eigdensity_general",
    "eigvec_conditional_logdensity",
    "ad_cdf_centered",
    "ad_density_centered",
    "ad_cdf",
    "ad_rd_joint_density",
]


@dataclass
class HcizConfig:
    """Evaluation settings for the spherical integral.

    ``euler_quadrature`` (m = 3 only) uses Gauss-Legendre in cos(theta) and
    uniform (trapezoidal, spectrally accurate for periodic integrands) grids
    in the other two Euler angles.  ``haar_mc`` averages over Haar draws and
    works in any dimension.
    """

    method: str = "euler_quadrature"
    nodes_per_angle: int = 48
    mc_samples: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("euler_quadrature", "haar_mc"):
            raise ValueError(f"unknown HCIZ method {self.method!r}")
        if self.nodes_per_angle < 8:
            raise ValueError("nodes_per_angle must be >= 8")
        if self.mc_samples < 1000:
            raise ValueError("mc_samples must be >= 1000")


@dataclass
class OrderedSpectrum:
    """Pair of ordered spectra: gamma strictly descending, gbar weakly so."""

    gamma: np.ndarray
    gbar: np.ndarray

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=float)
        self.gbar = np.asarray(self.gbar, dtype=float)
        if self.gamma.shape != self.gbar.shape:
            raise ValueError("gamma and gbar must have equal length")
        if not np.all(np.diff(self.gamma) < 0):
            raise ValueError("gamma must be strictly descending")
        if not np.all(np.diff(self.gbar) <= 0):
            raise ValueError("gbar must be weakly descending")


def vandermonde(gamma) -> float:
    """prod_{i<j} (gamma_i - gamma_j)."""
    gamma = np.asarray(gamma, dtype=float)
    diffs = gamma[:, None] - gamma[None, :]
    return float(np.prod(diffs[np.triu_indices(len(gamma), 1)]))


def log_normalizing_Z(m: int, mu: float, lam: float) -> float:
    """log Z_m(mu, lam) of the ordered-eigenvalue density."""
    log_z10 = m * (m - 1) / 4 * math.log(2) - sum(
        math.lgamma(l / 2) for l in range(1, m + 1)
    )
    return log_z10 + m * (m + 1) / 4 * math.log(mu) + 0.5 * math.log1p(lam * m / (2 * mu))


def normalizing_Z(m: int, mu: float, lam: float) -> float:
    """Z_m(mu, lam) = Z_m(1, 0) mu^{m(m+1)/4} sqrt(1 + lam m / (2 mu))."""
    return math.exp(log_normalizing_Z(m, mu, lam))


def log_eigdensity_zero_mean(gamma, model: IsotropicModel) -> float:
    """Log joint density of the ordered eigenvalues when the mean is zero."""
    gamma = np.asarray(gamma, dtype=float)
    if len(gamma) != model.m:
        raise ValueError("gamma length must equal model.m")
    if not np.all(np.diff(gamma) < 0):
        raise ValueError("gamma must be strictly descending")
    mu, lam = model.mu, model.lam
    s2 = float(np.sum(gamma**2))
    cross = float(np.sum(gamma[:, None] * gamma[None, :])[()]) - s2  # 2 sum_{i<j}
    v = vandermonde(gamma)
    return (
        log_normalizing_Z(model.m, mu, lam)
        + math.log(v)
        - (mu + lam / 2) * s2
        - lam * cross / 2
    )


def eigdensity_zero_mean(gamma, model: IsotropicModel) -> float:
    gamma = np.asarray(gamma, dtype=float)
    if np.any(np.diff(gamma) == 0):
        return 0.0
    return math.exp(log_eigdensity_zero_mean(gamma, model))


@lru_cache(maxsize=8)
def _euler_nodes(n_nodes: int):
    c_nodes, c_w = np.polynomial.legendre.leggauss(n_nodes)
    ang = 2 * np.pi * np.arange(n_nodes) / n_nodes
    return c_nodes, c_w, np.cos(ang), np.sin(ang)


def _log_hciz_euler(gbar, gamma, n_nodes: int) -> float:
    """Euler-angle quadrature of the m = 3 spherical integral in log space.

    Gauss-Legendre in cos(theta) (the sin(theta) Haar factor becomes flat),
    uniform grids in the two periodic angles, processed one theta slice at a
    time so memory stays O(n^2).
    """
    ct_nodes, ct_w, cp, sp = _euler_nodes(n_nodes)
    cf, sf = cp[:, None], sp[:, None]  # phi axis
    cpp, spp = cp[None, :], sp[None, :]  # psi axis
    b1, b2, b3 = gbar
    slice_lse = np.empty(n_nodes)
    for k, (ct, w) in enumerate(zip(ct_nodes, ct_w)):
        st = math.sqrt(max(0.0, 1 - ct * ct))
        o11 = (cf * cpp - sf * ct * spp) ** 2
        o12 = (cf * spp + sf * ct * cpp) ** 2
        o13 = (sf * st) ** 2
        o21 = (sf * cpp + cf * ct * spp) ** 2
        o22 = (sf * spp - cf * ct * cpp) ** 2
        o23 = (cf * st) ** 2
        o31 = (st * spp) ** 2
        o32 = (st * cpp) ** 2
        expo = (
            b1 * (o11 * gamma[0] + o12 * gamma[1] + o13 * gamma[2])
            + b2 * (o21 * gamma[0] + o22 * gamma[1] + o23 * gamma[2])
            + b3 * (o31 * gamma[0] + o32 * gamma[1] + (ct * ct) * gamma[2])
        )
        slice_lse[k] = special.logsumexp(expo) + math.log(w / 2) - 2 * math.log(n_nodes)
    return float(special.logsumexp(slice_lse))


def hciz_haar_mc(
    gbar, gamma, n_samples: int, rng: np.random.Generator
) -> tuple[float, float]:
    """Haar Monte Carlo estimate of the spherical integral: (value, std error)."""
    gbar = np.asarray(gbar, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    m = len(gamma)
    vals = np.empty(n_samples)
    chunk = 20_000
    for start in range(0, n_samples, chunk):
        k = min(chunk, n_samples - start)
        O = haar_orthogonal(m, rng, size=k)
        vals[start : start + k] = np.exp(np.einsum("kij,i,j->k", O**2, gbar, gamma))
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_samples))


def log_hciz(gbar, gamma, cfg: HcizConfig | None = None) -> float:
    """log I_m(gbar, gamma)."""
    cfg = cfg or HcizConfig()
    gbar = np.asarray(gbar, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if gbar.shape != gamma.shape:
        raise ValueError("gbar and gamma must have equal length")
    m = len(gamma)
    # spherical gbar collapses exactly: I_m = exp(gbar . gamma)
    if np.ptp(gbar) == 0.0:
        return float(gbar[0] * gamma.sum())
    if cfg.method == "euler_quadrature":
        if m != 3:
            raise ValueError("euler_quadrature is only available for m = 3")
        return _log_hciz_euler(gbar, gamma, cfg.nodes_per_angle)
    rng = np.random.default_rng(cfg.seed)
    val, _ = hciz_haar_mc(gbar, gamma, cfg.mc_samples, rng)
    return math.log(val)


def hciz(gbar, gamma, cfg: HcizConfig | None = None) -> float:
    """Spherical integral I_m(gbar, gamma) = int exp(Tr(O G O^T Gbar)) H_m(dO)."""
    return math.exp(log_hciz(gbar, gamma, cfg))


def log_hciz_batch(gbar, gammas, n_nodes: int = 32, chunk: int = 2000) -> np.ndarray:
    """log I_3(gbar, gamma) for many gamma rows at a fixed gbar (m = 3).

    The Euler-grid exponent is linear in gamma, so one (nodes, 3) weight
    table serves the whole batch via a matrix product.  Used by the Monte
    Carlo normalization and goodness-of-fit checks.
    """
    gbar = np.asarray(gbar, dtype=float)
    gammas = np.atleast_2d(np.asarray(gammas, dtype=float))
    if np.ptp(gbar) == 0.0:
        return gammas @ (gbar[0] * np.ones(3))
    ct_nodes, ct_w, cp, sp = _euler_nodes(n_nodes)
    W = np.empty((n_nodes, n_nodes, n_nodes, 3))
    cf, sf = cp[:, None], sp[:, None]
    cpp, spp = cp[None, :], sp[None, :]
    for k, ct in enumerate(ct_nodes):
        st = math.sqrt(max(0.0, 1 - ct * ct))
        W[k, ..., 0] = (gbar[0] * (cf * cpp - sf * ct * spp) ** 2
                        + gbar[1] * (sf * cpp + cf * ct * spp) ** 2
                        + gbar[2] * (st * spp) ** 2)
        W[k, ..., 1] = (gbar[0] * (cf * spp + sf * ct * cpp) ** 2
                        + gbar[1] * (sf * spp - cf * ct * cpp) ** 2
                        + gbar[2] * (st * cpp) ** 2)
        W[k, ..., 2] = (gbar[0] * (sf * st) ** 2 + gbar[1] * (cf * st) ** 2
                        + gbar[2] * ct * ct)
    W = W.reshape(-1, 3)
    logw = np.repeat(np.log(ct_w / 2) - 2 * math.log(n_nodes), n_nodes * n_nodes)
    out = np.empty(len(gammas))
    for lo in range(0, len(gammas), chunk):
        expo = W @ gammas[lo : lo + chunk].T + logw[:, None]
        out[lo : lo + chunk] = special.logsumexp(expo, axis=0)
    return out


def log_eigdensity_general(
    spec: OrderedSpectrum, model: IsotropicModel, cfg: HcizConfig | None = None
) -> float:
    """Log joint density of the ordered eigenvalues for a general mean spectrum."""
    gamma, gbar = spec.gamma, spec.gbar
    if len(gamma) != model.m:
        raise ValueError("spectrum length must equal model.m")
    mu, lam = model.mu, model.lam
    diff = gamma - gbar
    quad = mu * float(np.sum(diff**2)) + lam / 2 * float(np.sum(diff)) ** 2
    return (
        log_normalizing_Z(model.m, mu, lam)
        + math.log(vandermonde(gamma))
        - quad
        - 2 * mu * float(gamma @ gbar)
        + log_hciz(2 * mu * gbar, gamma, cfg)
    )


def eigdensity_general(
    spec: OrderedSpectrum, model: IsotropicModel, cfg: HcizConfig | None = None
) -> float:
    return math.exp(log_eigdensity_general(spec, model, cfg))


def eigvec_conditional_logdensity(
    R: np.ndarray,
    spec: OrderedSpectrum,
    mu: float,
    cfg: HcizConfig | None = None,
    orth_tol: float = 1e-8,
) -> float:
    """Log conditional density of R = Obar^T O given the eigenvalues.

    The reference measure is the Haar probability measure on the coset
    Obar^T O(m)+ (hence the 2^m factor).
    """
    R = np.asarray(R, dtype=float)
    m = len(spec.gamma)
    if np.linalg.norm(R.T @ R - np.eye(m)) > orth_tol:
        raise ValueError("R is not orthogonal within tolerance")
    expo = 2 * mu * float(np.einsum("ij,i,j->", R**2, spec.gbar, spec.gamma))
    return m * math.log(2) - log_hciz(2 * mu * spec.gbar, spec.gamma, cfg) + expo


def ad_cdf_centered(t, mu: float):
    """CDF of the largest eigenvalue minus the barycenter, spherical mean, m = 3.

    P(gamma_1 - (gamma_1+gamma_2+gamma_3)/3 <= t); exact at any mu for a
    spherical mean.
    """
    t = np.asarray(t, dtype=float)
    out = (
        norm.cdf(t * np.sqrt(3 * mu))
        + norm.cdf(t * np.sqrt(12 * mu))
        - 1
        - 3 * t * np.sqrt(3 * mu / (2 * np.pi)) * np.exp(-1.5 * mu * t**2)
    )
    out = np.where(t < 0, 0.0, np.clip(out, 0.0, 1.0))
    return out if out.ndim else float(out)


def ad_density_centered(t, mu: float):
    """Density of gamma_1 minus the barycenter (derivative of the centered CDF)."""
    t = np.asarray(t, dtype=float)
    out = (
        mu**1.5
        * math.sqrt(6 / math.pi)
        * (4.5 * t**2 + np.expm1(-4.5 * mu * t**2) / mu)
        * np.exp(-1.5 * mu * t**2)
    )
    out = np.where(t < 0, 0.0, out)
    return out if out.ndim else float(out)


@lru_cache(maxsize=4)
def _hermite_nodes(n: int):
    return np.polynomial.hermite.hermgauss(n)


def ad_cdf(t, mu: float, lam: float = 0.0, gbar: float = 0.0, n_nodes: int = 200):
    """CDF of gamma_1 for a spherical mean gbar * I, m = 3.

    Convolution of the centered CDF with the Gaussian barycenter
    N(gbar, 1/(6 mu + 9 lam)), by Gauss-Hermite quadrature.
    """
    t = np.asarray(t, dtype=float)
    sigma = 1.0 / math.sqrt(6 * mu + 9 * lam)
    z, w = _hermite_nodes(n_nodes)
    x = math.sqrt(2) * sigma * z  # barycenter deviations
    vals = ad_cdf_centered(t[..., None] - gbar - x, mu)
    out = (vals * w).sum(axis=-1) / math.sqrt(math.pi)
    out = np.clip(out, 0.0, 1.0)
    return out if out.ndim else float(out)


def ad_rd_joint_density(
    gamma1, rd, mu: float, lam: float = 0.0, gbar: float = 0.0
):
    """Joint density of (largest eigenvalue, mean of the two smallest), m = 3.

    Spherical mean gbar * I.  Zero when gamma1 <= rd.
    """
    gamma1 = np.asarray(gamma1, dtype=float)
    rd = np.asarray(rd, dtype=float)
    d = gamma1 - rd
    x = gamma1 - gbar
    y = rd - gbar
    pref = 4 * mu**1.5 * math.sqrt(2 * mu + 3 * lam) / math.pi
    body = d**2 + np.expm1(-2 * mu * d**2) / (2 * mu)
    expo = np.exp(-(mu + lam / 2) * x**2 - (2 * mu + 2 * lam) * y**2 - 2 * lam * x * y)
    out = np.where(d > 0, pref * body * expo, 0.0)
    return out if out.ndim else float(out)
