"""Rician observation model for DTI and maximum-likelihood tensor fitting.

Observations are noisy magnitudes Y with density

    p(Y) = Y/eta^2 exp(-(Y^2 + S^2)/(2 eta^2)) I0(Y S / eta^2),

signal S = rho exp(-g D g^T).  Fitting maximizes the likelihood over
(D, rho) by EM on the latent phase: the E-step weight is the Bessel ratio
c = I1(Y S/eta^2)/I0(Y S/eta^2) and the M-step is a damped Gauss-Newton
pass on the exponential signal model with targets c * Y.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special

from .design import GradientScheme, _quartic_vec
from .symmat import unvec, vec

__all__ = [
    "RicianDataset",
    "TensorFit",
    "FitOptions",
    "signal",
    "rician_logpdf",
    "bessel_ratio",
    "sample_rician",
    "simulate_dataset",
    "loglin_init",
    "loglik",
    "loglik_and_score",
    "mle_fit",
    "observed_information",
    "save_dataset",
    "load_dataset",
]


@dataclass
class RicianDataset:
    """Per-acquisition magnitudes with the gradients that produced them."""

    g: np.ndarray  # (M, 3), rows sqrt(b) * u; zero rows are b0 acquisitions
    Y: np.ndarray  # (M,) observed magnitudes, >= 0
    eta2: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.g = np.atleast_2d(np.asarray(self.g, dtype=float))
        self.Y = np.asarray(self.Y, dtype=float)
        if len(self.Y) != len(self.g):
            raise ValueError("g and Y must have the same number of rows")
        if np.any(self.Y < 0):
            raise ValueError("magnitudes must be >= 0")
        if not self.eta2 > 0:
            raise ValueError("eta2 must be > 0")

    def __len__(self) -> int:
        return len(self.Y)


def signal(g: np.ndarray, D: np.ndarray, rho: float) -> np.ndarray:
    """Tensor-model signal rho * exp(-g D g^T); batched over gradient rows."""
    if not rho > 0:
        raise ValueError("rho must be > 0")
    g = np.atleast_2d(np.asarray(g, dtype=float))
    D = np.asarray(D, dtype=float)
    s = rho * np.exp(-np.einsum("ki,ij,kj->k", g, D, g))
    return s if len(s) > 1 else float(s[0])


def rician_logpdf(Y, S, eta2: float):
    """Log density of the Rician law; Y = 0 gives -inf."""
    Y = np.asarray(Y, dtype=float)
    S = np.asarray(S, dtype=float)
    x = Y * S / eta2
    # log I0 via the exponentially scaled Bessel function, safe for large x
    log_i0 = np.log(special.ive(0, x)) + x
    with np.errstate(divide="ignore"):
        out = np.log(Y / eta2) - (Y**2 + S**2) / (2 * eta2) + log_i0
    return out if out.ndim else float(out)


def bessel_ratio(x):
    """I1(x) / I0(x), computed from exponentially scaled Bessel functions."""
    return special.ive(1, x) / special.ive(0, x)


def sample_rician(S, eta: float, rng: np.random.Generator):
    """Exact Rician draw sqrt((S + eta Z1)^2 + (eta Z2)^2)."""
    S = np.asarray(S, dtype=float)
    z = rng.standard_normal((2,) + S.shape)
    out = np.hypot(S + eta * z[0], eta * z[1])
    return out if out.ndim else float(out)


def simulate_dataset(
    scheme: GradientScheme, D: np.ndarray, rho: float, eta2: float,
    rng: np.random.Generator, seed=None,
) -> RicianDataset:
    """One noisy magnitude per acquisition of the scheme (b0 rows have S = rho)."""
    g = scheme.gradients()
    S = rho * np.exp(-np.einsum("ki,ij,kj->k", g, np.asarray(D, float), g))
    Y = sample_rician(S, math.sqrt(eta2), rng)
    meta = {"rho": float(rho), "Dbar": np.asarray(D, float).tolist(), "scheme": scheme.name}
    if seed is not None:
        meta["seed"] = seed
    return RicianDataset(g=g, Y=np.atleast_1d(Y), eta2=float(eta2), meta=meta)


def loglin_init(dataset: RicianDataset, floor_factor: float = 3.0):
    """Log-linear least squares of log Y on (1, -q(g)); exact on noiseless data.

    Rows with Y below floor_factor * eta are dropped (log of noise-dominated
    magnitudes is biased).  Raises on a rank-deficient design.
    """
    eta = math.sqrt(dataset.eta2)
    keep = dataset.Y > floor_factor * eta
    if keep.sum() < 7:
        raise ValueError("fewer than 7 usable acquisitions for log-linear init")
    X = np.column_stack([np.ones(int(keep.sum())), -_quartic_vec(dataset.g[keep])])
    if np.linalg.matrix_rank(X) < 7:
        raise ValueError("gradient design does not identify the tensor (rank deficient)")
    coef, *_ = np.linalg.lstsq(X, np.log(dataset.Y[keep]), rcond=None)
    rho0 = math.exp(coef[0])
    D0 = unvec(coef[1:], m=3)
    return D0, rho0


def loglik(dataset: RicianDataset, D: np.ndarray, rho: float) -> float:
    S = signal(dataset.g, D, rho)
    return float(np.sum(rician_logpdf(dataset.Y, S, dataset.eta2)))


def loglik_and_score(dataset: RicianDataset, D: np.ndarray, rho: float):
    """Total log likelihood and its gradient in (vec D, rho).

    dL/dS_k = -S_k/eta^2 + (Y_k/eta^2) I1/I0(Y_k S_k / eta^2), then the
    chain rule through S = rho exp(-q . vecD).
    """
    g = dataset.g
    q = _quartic_vec(g)
    S = np.asarray(signal(g, D, rho))
    eta2 = dataset.eta2
    ll = float(np.sum(rician_logpdf(dataset.Y, S, eta2)))
    dS = -S / eta2 + dataset.Y / eta2 * bessel_ratio(dataset.Y * S / eta2)
    grad_vecD = -(q.T * S) @ dS
    grad_rho = float(dS @ S) / rho
    return ll, np.append(grad_vecD, grad_rho)


@dataclass
class FitOptions:
    max_outer: int = 500
    rel_tol: float = 1e-10
    estimate_eta2: bool = False  # off by default: eta^2 is treated as known
    fixed_rho: float | None = None  # pin rho (estimation-error studies use truth)
    project_psd: bool = False
    lm_init: float = 1e-3
    lm_factor: float = 10.0
    max_inner: int = 25


@dataclass
class TensorFit:
    D_hat: np.ndarray
    rho_hat: float
    loglik: float
    iterations: int
    converged: bool
    eta2: float
    loglik_path: np.ndarray = field(repr=False, default=None)


def _m_step(theta, q, targets, eta2, opts: FitOptions):
    """Damped Gauss-Newton pass minimizing sum (S - target)^2 / (2 eta2).

    theta = (vec D, log rho); S = exp(log rho - q . vecD).  With a pinned
    rho only the tensor coordinates move.
    """
    lam = opts.lm_init
    n_par = 6 if opts.fixed_rho is not None else 7

    def model(th):
        return np.exp(th[6] - q @ th[:6])

    S = model(theta)
    obj = float(np.sum((S - targets) ** 2)) / (2 * eta2)
    for _ in range(opts.max_inner):
        # Jacobian of S in theta: dS/dvecD = -q * S, dS/dlogrho = S
        Jac = np.column_stack([-q * S[:, None], S])[:, :n_par]
        r = S - targets
        A = Jac.T @ Jac
        b = Jac.T @ r
        step_ok = False
        for _ in range(40):
            try:
                delta = np.linalg.solve(A + lam * np.diag(np.diag(A)), -b)
            except np.linalg.LinAlgError:
                lam *= opts.lm_factor
                continue
            new_theta = theta.copy()
            new_theta[:n_par] += delta
            S_new = model(new_theta)
            new_obj = float(np.sum((S_new - targets) ** 2)) / (2 * eta2)
            if new_obj <= obj:
                theta, S, obj = new_theta, S_new, new_obj
                lam = max(lam / opts.lm_factor, 1e-12)
                step_ok = True
                break
            lam *= opts.lm_factor
        if not step_ok or np.linalg.norm(delta) < 1e-14 * (1 + np.linalg.norm(theta)):
            break
    return theta


def mle_fit(dataset: RicianDataset, opts: FitOptions | None = None) -> TensorFit:
    """Maximum-likelihood tensor fit by EM with log-linear initialization.

    The outer log likelihood is nondecreasing across EM iterations; a
    non-convergence within ``max_outer`` iterations is flagged, never
    silent.
    """
    opts = opts or FitOptions()
    eta2 = dataset.eta2
    try:
        D0, rho0 = loglin_init(dataset)
    except ValueError:
        # noise floor too aggressive; retry with all positive rows
        D0, rho0 = loglin_init(dataset, floor_factor=0.0)
    if opts.fixed_rho is not None:
        rho0 = opts.fixed_rho
    q = _quartic_vec(dataset.g)
    theta = np.append(vec(D0), math.log(max(rho0, 1e-12)))
    Y = dataset.Y
    ll = loglik(dataset, unvec(theta[:6], 3), math.exp(theta[6]))
    path = [ll]
    converged = False
    for it in range(1, opts.max_outer + 1):
        S = np.exp(theta[6] - q @ theta[:6])
        c = bessel_ratio(Y * S / eta2)
        theta_old = theta
        theta = _m_step(theta, q, c * Y, eta2, opts)
        if opts.estimate_eta2:
            # closed-form update given the E-step weights
            eta2 = float(np.mean(Y**2 - 2 * c * Y * S + S**2) / 2)
        new_ll = loglik(RicianDataset(dataset.g, Y, eta2, dataset.meta),
                        unvec(theta[:6], 3), math.exp(theta[6]))
        path.append(new_ll)
        if new_ll < ll - 1e-9 * (1 + abs(ll)):
            raise RuntimeError("EM log likelihood decreased; numerical failure")
        step = np.abs(theta - theta_old).max()
        if (abs(new_ll - ll) <= opts.rel_tol * (1 + abs(ll))
                or step <= 1e-13 * (1 + np.abs(theta_old).max())):
            ll = new_ll
            converged = True
            break
        ll = new_ll
    D_hat = unvec(theta[:6], 3)
    if opts.project_psd:
        w, V = np.linalg.eigh(D_hat)
        D_hat = (V * np.clip(w, 0.0, None)) @ V.T
    return TensorFit(D_hat=D_hat, rho_hat=math.exp(theta[6]), loglik=ll,
                     iterations=it, converged=converged, eta2=eta2,
                     loglik_path=np.array(path))


def observed_information(dataset: RicianDataset, D: np.ndarray, rho: float) -> np.ndarray:
    """Observed information for the tensor block (negative loglik Hessian).

    Per acquisition: (S^2/eta^2) (2 + (Y^2/eta^2)((I1/I0)^2 - 1)) q q^T;
    zero-gradient rows contribute nothing.
    """
    g = dataset.g
    q = _quartic_vec(g)
    S = np.asarray(signal(g, D, rho))
    eta2 = dataset.eta2
    ratio = bessel_ratio(dataset.Y * S / eta2)
    coef = S**2 / eta2 * (2 + dataset.Y**2 / eta2 * (ratio**2 - 1))
    J = (q.T * coef) @ q
    return 0.5 * (J + J.T)  # discard matmul round-off asymmetry


def save_dataset(dataset: RicianDataset, path) -> None:
    """Write `b,ux,uy,uz,Y` rows plus a JSON sidecar with (eta2, meta)."""
    path = Path(path)
    b = np.sum(dataset.g**2, axis=1)
    with open(path, "w", newline="") as fh:
        fh.write("b,ux,uy,uz,Y\n")
        for gi, bi, yi in zip(dataset.g, b, dataset.Y):
            if bi > 0:
                u = gi / math.sqrt(bi)
            else:
                u = np.zeros(3)
            fh.write(f"{bi:.17g},{u[0]:.17g},{u[1]:.17g},{u[2]:.17g},{yi:.17g}\n")
    sidecar = {"eta2": dataset.eta2, **dataset.meta}
    with open(path.with_suffix(path.suffix + ".json"), "w") as fh:
        json.dump(sidecar, fh, indent=1)


def load_dataset(path) -> RicianDataset:
    path = Path(path)
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    b, u, Y = rows[:, 0], rows[:, 1:4], rows[:, 4]
    g = np.sqrt(b)[:, None] * u
    with open(path.with_suffix(path.suffix + ".json")) as fh:
        sidecar = json.load(fh)
    eta2 = sidecar.pop("eta2")
    return RicianDataset(g=g, Y=Y, eta2=eta2, meta=sidecar)
