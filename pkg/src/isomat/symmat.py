"""Symmetric random matrices with isotropic Gaussian noise.

A symmetric matrix is stored as a plain ``(m, m)`` numpy array.  The
half-vectorization :func:`vec` lists the diagonal entries first and then the
upper off-diagonal entries row by row, so for ``m = 3``::

    vec(D) = (D11, D22, D33, D12, D13, D23)

The isotropic family is parameterized by a precision parameter ``mu > 0`` and
an interaction parameter ``lam`` with ``lam * m > -2 * mu``.  Its density is

    p(D) = C_m(mu, lam) * exp(-mu * Tr((D - Dbar)^2)
                              - lam/2 * Tr(D - Dbar)^2)

which makes the off-diagonal entries i.i.d. N(0, 1/(4 mu)) and the diagonal
an exchangeable Gaussian vector, independent of the off-diagonals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "IsotropicModel",
    "SpectralDecomp",
    "vec",
    "unvec",
    "vec_pairs",
    "log_norm_const",
    "precision_matrix",
    "covariance_matrix",
    "log_density",
    "sample",
    "sample_goe",
    "haar_orthogonal",
    "spectral_decompose",
    "reconstruct",
    "eigvals_descending",
    "central_moments",
    "central_moments_trace",
]


@dataclass(frozen=True)
class IsotropicModel:
    """Parameters (m, mu, lam) of the isotropic Gaussian matrix law."""

    m: int
    mu: float
    lam: float = 0.0

    def __post_init__(self):
        if self.m < 2:
            raise ValueError(f"dimension m must be >= 2, got {self.m}")
        if not self.mu > 0:
            raise ValueError(f"precision mu must be > 0, got {self.mu}")
        if not self.lam * self.m > -2 * self.mu:
            raise ValueError(
                f"constraint lam*m > -2*mu violated: lam={self.lam}, mu={self.mu}, m={self.m}"
            )

    @property
    def dim(self) -> int:
        """Length of vec(D), i.e. m(m+1)/2."""
        return self.m * (self.m + 1) // 2


def vec_pairs(m: int) -> list[tuple[int, int]]:
    """Index pairs (i, j), i <= j, in vec order: diagonal first, then row-major."""
    return [(i, i) for i in range(m)] + [
        (i, j) for i in range(m) for j in range(i + 1, m)
    ]


def vec(D: np.ndarray) -> np.ndarray:
    """Half-vectorize a symmetric matrix (diagonal entries first)."""
    D = np.asarray(D, dtype=float)
    m = D.shape[-1]
    i, j = zip(*vec_pairs(m))
    return D[..., list(i), list(j)]


def unvec(v: np.ndarray, m: int | None = None) -> np.ndarray:
    """Inverse of :func:`vec`."""
    v = np.asarray(v, dtype=float)
    if m is None:
        m = int(round((math.isqrt(8 * v.shape[-1] + 1) - 1) / 2))
    D = np.zeros(v.shape[:-1] + (m, m))
    for k, (i, j) in enumerate(vec_pairs(m)):
        D[..., i, j] = v[..., k]
        D[..., j, i] = v[..., k]
    return D


def log_norm_const(model: IsotropicModel) -> float:
    """log C_m(mu, lam) of the matrix density."""
    m, mu, lam = model.m, model.mu, model.lam
    return (
        (m - 1) * m / 4 * math.log(2)
        - (m + 1) * m / 4 * math.log(math.pi)
        + (m + 1) * m / 4 * math.log(mu)
        + 0.5 * math.log1p(lam * m / (2 * mu))
    )


def precision_matrix(model: IsotropicModel) -> np.ndarray:
    """Precision of vec(D): (lam + 2 mu delta_ij) on the diagonal block, 4 mu on shears."""
    m, mu, lam = model.m, model.mu, model.lam
    p = model.dim
    A = np.zeros((p, p))
    A[:m, :m] = lam
    A[:m, :m] += 2 * mu * np.eye(m)
    A[m:, m:] = 4 * mu * np.eye(p - m)
    return A


def covariance_matrix(model: IsotropicModel) -> np.ndarray:
    """Covariance of vec(D), the inverse of :func:`precision_matrix` in closed form."""
    m, mu, lam = model.m, model.mu, model.lam
    p = model.dim
    S = np.zeros((p, p))
    r = lam / (2 * mu + lam * m)
    S[:m, :m] = -r / (2 * mu)
    S[:m, :m] += np.eye(m) / (2 * mu)
    S[m:, m:] = np.eye(p - m) / (4 * mu)
    return S


def log_density(D: np.ndarray, mean: np.ndarray, model: IsotropicModel) -> float:
    """Log density of the isotropic Gaussian matrix law at D."""
    X = np.asarray(D, dtype=float) - np.asarray(mean, dtype=float)
    if X.shape != (model.m, model.m):
        raise ValueError(f"shape mismatch: expected ({model.m},{model.m}), got {X.shape}")
    tr_sq = np.sum(X * X)  # Tr(X^2) for symmetric X
    tr = np.trace(X)
    return log_norm_const(model) - model.mu * tr_sq - 0.5 * model.lam * tr * tr


def _diag_chol(model: IsotropicModel) -> np.ndarray:
    """Cholesky-like factor of the diagonal-block covariance.

    Falls back to an eigendecomposition square root near the boundary
    lam*m -> -2*mu where the block loses definiteness to round-off.
    """
    m, mu, lam = model.m, model.mu, model.lam
    r = lam / (2 * mu + lam * m)
    Sd = np.full((m, m), -r / (2 * mu))
    Sd[np.diag_indices(m)] += 1 / (2 * mu)
    try:
        return np.linalg.cholesky(Sd)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(Sd)
        return V * np.sqrt(np.clip(w, 0.0, None))


def sample(
    mean: np.ndarray | float,
    model: IsotropicModel,
    rng: np.random.Generator,
    size: int | None = None,
) -> np.ndarray:
    """Draw from the isotropic law.  Returns (m, m) or (size, m, m)."""
    m = model.m
    n = 1 if size is None else size
    mean = np.broadcast_to(np.asarray(mean, dtype=float), (m, m))
    L = _diag_chol(model)
    diag = rng.standard_normal((n, m)) @ L.T
    n_off = m * (m - 1) // 2
    off = rng.standard_normal((n, n_off)) / math.sqrt(4 * model.mu)
    D = np.zeros((n, m, m))
    iu = np.triu_indices(m, 1)
    D[:, iu[0], iu[1]] = off
    D = D + np.transpose(D, (0, 2, 1))
    D[:, np.arange(m), np.arange(m)] = diag
    D += mean
    return D[0] if size is None else D


def sample_goe(m: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Standard GOE draw: zero mean, mu = 1/2, lam = 0 (diag var 1, off-diag 1/2)."""
    return sample(0.0, IsotropicModel(m, 0.5, 0.0), rng, size=size)


def haar_orthogonal(m: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Haar-distributed matrix on O(m) via QR with sign correction."""
    n = 1 if size is None else size
    z = rng.standard_normal((n, m, m))
    q, r = np.linalg.qr(z)
    d = np.sign(np.diagonal(r, axis1=1, axis2=2))
    d[d == 0] = 1.0
    q = q * d[:, None, :]
    return q[0] if size is None else q


@dataclass
class SpectralDecomp:
    """Canonical spectral decomposition D = O diag(gamma) O^T.

    Eigenvalues are sorted descending and each eigenvector column has its
    first above-tolerance coordinate positive, selecting the representative
    in O(m)+.  ``degenerate`` flags a repeated eigenvalue (min gap < 1e-12);
    the decomposition is still returned but the canonical O is not unique.
    """

    gamma: np.ndarray
    O: np.ndarray
    degenerate: bool = False


def canonicalize_columns(O: np.ndarray, sign_tol: float = 1e-10) -> np.ndarray:
    """Flip column signs so the first coordinate with |x| > sign_tol is positive."""
    O = np.array(O, dtype=float)
    for j in range(O.shape[1]):
        col = O[:, j]
        nz = np.flatnonzero(np.abs(col) > sign_tol)
        k = nz[0] if nz.size else int(np.argmax(np.abs(col)))
        if col[k] < 0:
            O[:, j] = -col
    return O


def spectral_decompose(D: np.ndarray, sign_tol: float = 1e-10) -> SpectralDecomp:
    """Eigendecompose a symmetric matrix with the canonical order/sign convention."""
    D = np.asarray(D, dtype=float)
    w, V = np.linalg.eigh(D)
    gamma = w[::-1].copy()
    O = canonicalize_columns(V[:, ::-1], sign_tol=sign_tol)
    degenerate = bool(np.min(-np.diff(gamma)) < 1e-12) if len(gamma) > 1 else False
    return SpectralDecomp(gamma=gamma, O=O, degenerate=degenerate)


def reconstruct(decomp: SpectralDecomp) -> np.ndarray:
    """Rebuild D from a spectral decomposition."""
    return (decomp.O * decomp.gamma) @ decomp.O.T


def eigvals_descending(D: np.ndarray) -> np.ndarray:
    """Descending eigenvalues; batched over leading axes."""
    return np.linalg.eigvalsh(D)[..., ::-1]


def central_moments(gamma: np.ndarray, r_max: int) -> np.ndarray:
    """Eigenvalue central moments (kappa_1, ..., kappa_{r_max}).

    kappa_1 is the mean eigenvalue; kappa_r = mean((gamma_i - kappa_1)^r)
    for r >= 2.  Works on batched input over the leading axes.
    """
    if r_max < 1:
        raise ValueError("r_max must be >= 1")
    gamma = np.asarray(gamma, dtype=float)
    k1 = gamma.mean(axis=-1)
    centered = gamma - k1[..., None]
    out = [k1]
    for r in range(2, r_max + 1):
        out.append((centered**r).mean(axis=-1))
    return np.stack(out, axis=-1)


def central_moments_trace(D: np.ndarray, r_max: int) -> np.ndarray:
    """Same moments from matrix traces, without eigendecomposition.

    kappa_r(D) = sum_q binom(r, q) (-1)^q m^{-q-1} Tr(D^{r-q}) Tr(D)^q.
    """
    if r_max < 1:
        raise ValueError("r_max must be >= 1")
    D = np.asarray(D, dtype=float)
    m = D.shape[-1]
    powers = [np.eye(m), D]
    for _ in range(2, r_max + 1):
        powers.append(powers[-1] @ D)
    tr = [float(np.trace(P)) for P in powers]
    out = [tr[1] / m]
    for r in range(2, r_max + 1):
        acc = 0.0
        for q in range(r + 1):
            acc += math.comb(r, q) * (-1) ** q * m ** (-q - 1) * tr[r - q] * tr[1] ** q
        out.append(acc)
    return np.array(out)
