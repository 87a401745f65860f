"""Small-noise limit laws for eigenvalues and eigenvectors.

When the mean matrix has repeated eigenvalues the sample eigenvalues form
clusters, one per mean eigenspace: the cluster barycenters are jointly
Gaussian while the within-cluster spreads follow the law of GOE eigenvalues
conditioned on a zero barycenter, independent of the interaction parameter.
For m = 3 this yields four regimes (asymmetric / prolate / oblate /
isotropic).  The module also provides the second-order approximation of the
spherical integral under eigenvalue multiplicities.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm, logm

from .eigen_laws import HcizConfig, log_hciz, log_normalizing_Z

__all__ = [
    "ClusterStructure",
    "Regime3D",
    "cluster",
    "regime_classify",
    "barycenter_covariance",
    "barycenter_logdensity",
    "within_cluster_logdensity",
    "regime_logdensity",
    "eigvec_fluct_variance",
    "hciz_asymptotic",
    "hciz_rescaled",
    "skew_fluctuation",
    "so3_log",
]


@dataclass(frozen=True)
class ClusterStructure:
    """Grouping of a weakly descending spectrum into tied blocks."""

    boundaries: tuple[int, ...]  # ell_0 = 0 < ell_1 < ... < ell_k = m
    sizes: tuple[int, ...]
    representatives: tuple[float, ...]

    @property
    def k(self) -> int:
        return len(self.sizes)

    @property
    def m(self) -> int:
        return self.boundaries[-1]


def default_cluster_tol(gbar) -> float:
    return 1e-9 * max(1.0, float(np.max(np.abs(gbar))))


def cluster(gbar, cluster_tol: float | None = None) -> ClusterStructure:
    """Group consecutive entries of a weakly descending vector when gap <= tol."""
    gbar = np.asarray(gbar, dtype=float)
    if np.any(np.diff(gbar) > 0):
        raise ValueError("gbar must be weakly descending")
    tol = default_cluster_tol(gbar) if cluster_tol is None else cluster_tol
    bounds = [0]
    for i in range(1, len(gbar)):
        if gbar[i - 1] - gbar[i] > tol:
            bounds.append(i)
    bounds.append(len(gbar))
    sizes = tuple(bounds[i + 1] - bounds[i] for i in range(len(bounds) - 1))
    reps = tuple(float(gbar[b]) for b in bounds[:-1])
    return ClusterStructure(boundaries=tuple(bounds), sizes=sizes, representatives=reps)


class Regime3D(enum.Enum):
    """Symmetry class of a 3-D mean spectrum."""

    ASYMMETRIC = "asymmetric"
    PROLATE = "prolate"
    OBLATE = "oblate"
    ISOTROPIC = "isotropic"


_REGIME_BY_SIZES = {
    (1, 1, 1): Regime3D.ASYMMETRIC,
    (1, 2): Regime3D.PROLATE,
    (2, 1): Regime3D.OBLATE,
    (3,): Regime3D.ISOTROPIC,
}


def regime_classify(gbar, cluster_tol: float | None = None) -> Regime3D:
    gbar = np.asarray(gbar, dtype=float)
    if len(gbar) != 3:
        raise ValueError("regime classification is defined for m = 3")
    return _REGIME_BY_SIZES[cluster(gbar, cluster_tol).sizes]


def barycenter_covariance(sizes, lam: float) -> np.ndarray:
    """Covariance of the rescaled cluster barycenters.

    E[Xt_i Xt_j] = (delta_ij / m_i - lam / (2 + lam m)) / 2 with m = sum m_i.
    """
    sizes = np.asarray(sizes, dtype=float)
    m = sizes.sum()
    if not lam * m > -2:
        raise ValueError("requires lam * m > -2")
    C = np.diag(1.0 / sizes) - lam / (2 + lam * m)
    return C / 2


def barycenter_logdensity(xi_tilde, sizes, lam: float) -> float:
    """Log density of the rescaled cluster barycenters (jointly Gaussian)."""
    xi = np.asarray(xi_tilde, dtype=float)
    sizes = np.asarray(sizes, dtype=float)
    if xi.shape != sizes.shape:
        raise ValueError("xi_tilde and sizes must have equal length")
    m = sizes.sum()
    if not lam * m > -2:
        raise ValueError("requires lam * m > -2")
    s = float(sizes @ xi)
    return (
        0.5 * math.log1p(lam * m / 2)
        + 0.5 * float(np.sum(np.log(sizes / math.pi)))
        - float(sizes @ xi**2)
        - lam / 2 * s * s
    )


def within_cluster_logdensity(zeta_free, m_i: int) -> float:
    """Log density of the within-cluster spreads in the drop-last chart.

    The spreads (zeta_1 > ... > zeta_{m_i}) live on the zero-sum hyperplane;
    the chart keeps the first m_i - 1 coordinates and sets the last to minus
    their sum.  This is the law of the eigenvalues of a GOE with precision
    A_{m_i}(1, 0) conditioned on a zero barycenter.  Coordinates violating
    the ordering give -inf.
    """
    if m_i < 2:
        raise ValueError("m_i must be >= 2")
    zf = np.atleast_1d(np.asarray(zeta_free, dtype=float))
    if zf.shape != (m_i - 1,):
        raise ValueError(f"expected {m_i - 1} free coordinates, got {zf.shape}")
    zeta = np.append(zf, -zf.sum())
    if not np.all(np.diff(zeta) < 0):
        return -math.inf
    diffs = zeta[:, None] - zeta[None, :]
    logv = float(np.sum(np.log(diffs[np.triu_indices(m_i, 1)])))
    return (
        log_normalizing_Z(m_i, 1.0, 0.0)
        + 0.5 * math.log(math.pi * m_i)
        - float(np.sum(zeta**2))
        + logv
    )


def eigvec_fluct_variance(gbar_i: float, gbar_j: float) -> float:
    """Limit variance of the rescaled skew coordinate coupling eigenspaces i, j."""
    if not gbar_i > gbar_j:
        raise ValueError(
            "requires gbar_i > gbar_j; tied eigenvalues have a Haar block, not a Gaussian limit"
        )
    return 1.0 / (4 * (gbar_i - gbar_j) ** 2)


def _log_gauss2(x, y, P: np.ndarray) -> float:
    """Log of the normalized bivariate Gaussian with precision P at (x, y)."""
    q = P[0, 0] * x * x + 2 * P[0, 1] * x * y + P[1, 1] * y * y
    return 0.5 * math.log(np.linalg.det(P)) - math.log(2 * math.pi) - 0.5 * q


def regime_logdensity(gamma, gbar, mu: float, lam: float = 0.0) -> float:
    """Log of the m = 3 small-noise eigenvalue density in the regime of gbar.

    A genuine density on the ordered cone gamma_1 > gamma_2 > gamma_3 (chart
    factors included):

    - asymmetric: trivariate Gaussian around gbar;
    - prolate / oblate: bivariate Gaussian in (extreme eigenvalue, pair
      barycenter) times the normalized sqrt-exponential gap law;
    - isotropic: Gaussian barycenter times the conditional cluster density.
    """
    gamma = np.asarray(gamma, dtype=float)
    gbar = np.asarray(gbar, dtype=float)
    if gamma.shape != (3,) or gbar.shape != (3,):
        raise ValueError("m = 3 only")
    if not np.all(np.diff(gamma) < 0):
        raise ValueError("gamma must be strictly descending")
    regime = regime_classify(gbar)

    if regime is Regime3D.ASYMMETRIC:
        d = gamma - gbar
        return (
            math.log(mu) + 0.5 * math.log(2 * mu + 3 * lam)
            - 1.5 * math.log(math.pi) - 0.5 * math.log(2)
            - mu * float(np.sum(d**2)) - lam / 2 * float(np.sum(d)) ** 2
        )

    # normalized gap law: zeta ~ 4 mu zeta exp(-2 mu zeta^2) on zeta > 0
    def log_gap(zeta: float) -> float:
        if zeta <= 0:
            return -math.inf
        return math.log(4 * mu * zeta) - 2 * mu * zeta * zeta

    P = np.array([[2 * mu + lam, 2 * lam], [2 * lam, 4 * (mu + lam)]])

    if regime is Regime3D.PROLATE:
        pair = 0.5 * (gamma[1] + gamma[2])
        zeta = 0.5 * (gamma[1] - gamma[2])
        # d(g2) d(g3) = 2 d(pair) d(zeta)
        return (
            _log_gauss2(gamma[0] - gbar[0], pair - gbar[1], P)
            + log_gap(zeta) - math.log(2)
        )
    if regime is Regime3D.OBLATE:
        pair = 0.5 * (gamma[0] + gamma[1])
        zeta = 0.5 * (gamma[0] - gamma[1])
        return (
            _log_gauss2(gamma[2] - gbar[2], pair - gbar[0], P)
            + log_gap(zeta) - math.log(2)
        )

    # isotropic: barycenter Gaussian x conditional cluster law, both exact
    bary = gamma.mean()
    var_b = 1.0 / (6 * mu + 9 * lam)
    log_bary = -0.5 * math.log(2 * math.pi * var_b) - (bary - gbar[0]) ** 2 / (2 * var_b)
    z1, z3 = gamma[0] - bary, gamma[2] - bary
    log_cond = (
        2.5 * math.log(2 * mu) + 0.5 * math.log(3 / math.pi)
        + math.log(gamma[0] - gamma[2])
        + math.log(2 * z1 + z3)  # = gamma_1 - gamma_2, positive on the cone
        + math.log(-z1 - 2 * z3)  # = gamma_2 - gamma_3
        - 2 * mu * (z1 * z1 + z3 * z3 + z1 * z3)
    )
    # d(g1) d(g2) d(g3) -> (bary, g1, g3) chart carries a factor 1/3
    return log_bary + log_cond - math.log(3)


def _gamma_half_logprod(n: int) -> float:
    return sum(math.lgamma(l / 2) for l in range(1, n + 1))


def hciz_asymptotic(gamma, gbar, cluster_tol: float | None = None) -> float:
    """Limit of I_m(n gamma, gbar) exp(-n gamma.gbar) n^{(m^2 - sum m_i^2)/4}.

    gamma must be strictly descending; gbar may have ties, whose
    multiplicities m_i define the rate exponent and the cross-cluster
    product.  The value does not depend on n.
    """
    gamma = np.asarray(gamma, dtype=float)
    gbar = np.asarray(gbar, dtype=float)
    if not np.all(np.diff(gamma) < 0):
        raise ValueError("gamma must be strictly descending")
    cs = cluster(gbar, cluster_tol)
    m = cs.m
    log_const = _gamma_half_logprod(m) - sum(_gamma_half_logprod(mi) for mi in cs.sizes)
    for i in range(cs.k - 1):
        for j in range(cs.boundaries[i], cs.boundaries[i + 1]):
            for h in range(cs.boundaries[i + 1], m):
                log_const -= 0.5 * math.log(
                    (gamma[j] - gamma[h]) * (gbar[j] - gbar[h])
                )
    return math.exp(log_const)


def hciz_rescaled(
    gamma, gbar, n: float, cfg: HcizConfig | None = None,
    cluster_tol: float | None = None,
) -> float:
    """Finite-n left-hand side I_m(n gamma, gbar) exp(-n gamma.gbar) n^{p}."""
    gamma = np.asarray(gamma, dtype=float)
    gbar = np.asarray(gbar, dtype=float)
    cs = cluster(gbar, cluster_tol)
    p = (cs.m**2 - sum(mi**2 for mi in cs.sizes)) / 4
    log_lhs = (
        log_hciz(n * gamma, gbar, cfg)
        - n * float(gamma @ gbar)
        + p * math.log(n)
    )
    return math.exp(log_lhs)


def skew_fluctuation(
    R: np.ndarray, sizes, max_iters: int = 50, tol: float = 1e-12
) -> tuple[np.ndarray, np.ndarray]:
    """Factor R = R_check * exp(S_hat) per the eigenspace block structure.

    R_check is block diagonal orthogonal (blocks of the given sizes) and
    S_hat is skew-symmetric with zero diagonal blocks.  R_check starts from
    the polar factors of the diagonal blocks of R (absorbing reflections)
    and is refined by a fixed-point iteration on the matrix logarithm.
    """
    R = np.asarray(R, dtype=float)
    sizes = list(sizes)
    m = R.shape[0]
    starts = np.cumsum([0] + sizes)
    blocks = [slice(starts[i], starts[i + 1]) for i in range(len(sizes))]

    Rc = np.zeros_like(R)
    for b in blocks:
        U, _, Vt = np.linalg.svd(R[b, b])
        Rc[b, b] = U @ Vt
    for _ in range(max_iters):
        Q = Rc.T @ R
        S = logm(Q)
        if np.abs(S.imag).max() > 1e-8:
            raise ValueError("rotation too far from the identity for a real logarithm")
        S = np.real(S)
        S = 0.5 * (S - S.T)
        Sd = np.zeros_like(S)
        for b in blocks:
            Sd[b, b] = S[b, b]
        if np.abs(Sd).max() < tol:
            S_hat = S - Sd
            return Rc, S_hat
        Rc = Rc @ expm(Sd)
    S_hat = S - Sd
    return Rc, S_hat


def so3_log(R: np.ndarray) -> np.ndarray:
    """Skew logs of 3x3 rotation matrices, batched over the leading axis.

    Valid away from angle pi; intended for rotations near the identity as
    produced by small-noise eigenvector fluctuations.
    """
    R = np.asarray(R, dtype=float)
    single = R.ndim == 2
    if single:
        R = R[None]
    tr = np.trace(R, axis1=-2, axis2=-1)
    theta = np.arccos(np.clip((tr - 1) / 2, -1.0, 1.0))
    fac = np.where(theta > 1e-12, theta / (2 * np.sin(np.where(theta > 1e-12, theta, 1.0))), 0.5)
    S = fac[:, None, None] * (R - np.transpose(R, (0, 2, 1)))
    return S[0] if single else S
