"""Gradient-scheme design: spherical t-designs and the Rician Fisher information.

A spherical t-design is a finite point set on the unit sphere whose equal
weight average reproduces uniform integrals of every polynomial of degree
<= t.  Multi-shell DTI schemes built from designs of order >= 4 make the
Fisher information of the tensor parameter isotropic whenever the true
tensor is, which is what calibrates the sphericity tests.

The Fisher information of one acquisition with gradient g and signal
S = rho exp(-g D g^T) is w(S/eta) q q^T with q = ((2 - delta_ij) g_i g_j)
in vec order, where w is the Rician information weight.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import integrate, interpolate, special

from .symmat import IsotropicModel, precision_matrix

__all__ = [
    "SphericalDesign",
    "GradientScheme",
    "FisherInfo",
    "DesignReport",
    "sphere_moment",
    "verify_t_design",
    "halve_antipodal",
    "min_cross_geodesic",
    "optimize_shell_rotations",
    "weight_w",
    "fisher_information",
    "isotropy_check",
    "builtin_schemes",
    "load_design_csv",
    "save_design_csv",
    "data_dir",
]


def data_dir() -> Path:
    """Bundled data directory, overridable via ISOMAT_DATA_DIR."""
    env = os.environ.get("ISOMAT_DATA_DIR")
    if env:
        return Path(env)
    return Path(__file__).parent / "data"


@dataclass
class SphericalDesign:
    """A set of unit vectors with a claimed quadrature strength.

    ``order`` is the claimed t (None when the set is not a design, e.g. a
    scanner table); ``antipodal`` marks closure under u -> -u; halved
    antipodal designs keep their parent's order but only even degrees.
    """

    points: np.ndarray
    order: int | None = None
    antipodal: bool = False
    even_only: bool = False
    name: str = ""

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        norms = np.linalg.norm(self.points, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-10):
            raise ValueError(f"design {self.name!r}: points must be unit vectors")

    def __len__(self) -> int:
        return len(self.points)

    def rotated(self, R: np.ndarray) -> "SphericalDesign":
        return SphericalDesign(self.points @ np.asarray(R).T, order=self.order,
                               antipodal=self.antipodal, even_only=self.even_only,
                               name=self.name)


@dataclass
class GradientScheme:
    """Multi-shell acquisition plan: (b-value, design) shells plus b=0 rows."""

    shells: list[tuple[float, SphericalDesign]]
    n_b0: int = 0
    name: str = ""

    def __post_init__(self):
        for b, _ in self.shells:
            if not (np.isfinite(b) and b >= 0):
                raise ValueError(f"invalid b-value {b}")

    @property
    def n_acquisitions(self) -> int:
        return self.n_b0 + sum(len(d) for _, d in self.shells)

    def gradients(self) -> np.ndarray:
        """(M, 3) gradient vectors sqrt(b) * u; b=0 acquisitions come first as zeros."""
        rows = [np.zeros((self.n_b0, 3))]
        rows += [math.sqrt(b) * d.points for b, d in self.shells]
        return np.vstack(rows)


def _double_factorial(n: int) -> int:
    return math.prod(range(n, 0, -2)) if n > 0 else 1


def sphere_moment(a: int, b: int, c: int) -> float:
    """Uniform-sphere moment of u1^a u2^b u3^c; zero when any exponent is odd."""
    if min(a, b, c) < 0:
        raise ValueError("exponents must be nonnegative")
    if a % 2 or b % 2 or c % 2:
        return 0.0
    num = _double_factorial(a - 1) * _double_factorial(b - 1) * _double_factorial(c - 1)
    return num / _double_factorial(a + b + c + 1)


@dataclass
class DesignReport:
    passed: bool
    max_violation: float
    worst_monomial: tuple[int, int, int]
    t: int
    even_only: bool


def verify_t_design(
    design: SphericalDesign | np.ndarray,
    t: int,
    tol: float = 1e-6,
    even_only: bool = False,
) -> DesignReport:
    """Check all monomial moments of total degree <= t against sphere values."""
    pts = design.points if isinstance(design, SphericalDesign) else np.atleast_2d(design)
    worst = 0.0
    worst_mono = (0, 0, 0)
    for r in range(1, t + 1):
        if even_only and r % 2:
            continue
        for a in range(r + 1):
            for b in range(r - a + 1):
                c = r - a - b
                emp = float(np.mean(pts[:, 0] ** a * pts[:, 1] ** b * pts[:, 2] ** c))
                err = abs(emp - sphere_moment(a, b, c))
                if err > worst:
                    worst, worst_mono = err, (a, b, c)
    return DesignReport(passed=worst <= tol, max_violation=worst,
                        worst_monomial=worst_mono, t=t, even_only=even_only)


def halve_antipodal(design: SphericalDesign, pair_tol: float = 1e-8) -> SphericalDesign:
    """Keep one point per antipodal pair (northern hemisphere representative).

    The result satisfies the moment identities for even degrees up to the
    parent's order.  Raises if any point lacks an antipode.
    """
    pts = design.points
    used = np.zeros(len(pts), dtype=bool)
    keep = []
    for i in range(len(pts)):
        if used[i]:
            continue
        d = np.linalg.norm(pts + pts[i], axis=1)
        d[used] = np.inf
        d[i] = np.inf
        j = int(np.argmin(d))
        if d[j] > pair_tol:
            raise ValueError(f"point {i} of {design.name!r} has no antipodal partner")
        used[i] = used[j] = True
        u = pts[i]
        if u[2] > pair_tol or (abs(u[2]) <= pair_tol and (u[1] > pair_tol or (
                abs(u[1]) <= pair_tol and u[0] > 0))):
            keep.append(u)
        else:
            keep.append(-u)
    return SphericalDesign(np.array(keep), order=design.order, antipodal=False,
                           even_only=True, name=design.name + "/half")


# ---------------------------------------------------------------------------
# shell rotation optimization


def min_cross_geodesic(point_sets: list[np.ndarray]) -> float:
    """Minimum over cross-shell pairs of arccos|<u, v>| (antipodal identified)."""
    best = math.pi / 2
    for i in range(len(point_sets)):
        for j in range(i + 1, len(point_sets)):
            dots = np.abs(point_sets[i] @ point_sets[j].T)
            best = min(best, float(np.arccos(np.clip(dots.max(), -1.0, 1.0))))
    return best


def _euler_rotation(angles: np.ndarray) -> np.ndarray:
    a, b, c = angles
    ca, sa = math.cos(a), math.sin(a)
    cb, sb = math.cos(b), math.sin(b)
    cc, sc = math.cos(c), math.sin(c)
    Rz1 = np.array([[ca, -sa, 0], [sa, ca, 0], [0, 0, 1]])
    Ry = np.array([[cb, 0, sb], [0, 1, 0], [-sb, 0, cb]])
    Rz2 = np.array([[cc, -sc, 0], [sc, cc, 0], [0, 0, 1]])
    return Rz1 @ Ry @ Rz2


def optimize_shell_rotations(
    designs: list[SphericalDesign],
    max_iters: int = 20,
    rng: np.random.Generator | None = None,
    grid: int = 12,
    refinements: int = 4,
) -> list[np.ndarray]:
    """Greedy coordinate ascent on per-shell rotations.

    Objective: minimum cross-shell geodesic distance between gradients,
    antipodal directions identified.  One shell is re-optimized at a time
    over a shrinking Euler-angle grid; accepted steps never decrease the
    objective, and the loop stops at a fixed point or after max_iters.
    """
    if len(designs) < 2:
        raise ValueError("need at least two shells")
    rots = [np.eye(3) for _ in designs]

    def objective(rlist):
        return min_cross_geodesic([d.points @ r.T for d, r in zip(designs, rlist)])

    current = objective(rots)
    centers = [np.zeros(3) for _ in designs]
    for _ in range(max_iters):
        improved = False
        for k in range(len(designs)):
            best_angles, best_val = None, current
            width = math.pi
            center = centers[k].copy()
            for _ in range(refinements):
                offs = np.linspace(-width, width, grid, endpoint=False)
                for da in offs:
                    for db in offs:
                        for dc in offs:
                            ang = center + (da, db, dc)
                            trial = list(rots)
                            trial[k] = _euler_rotation(ang)
                            val = objective(trial)
                            if val > best_val:
                                best_val, best_angles = val, ang
                if best_angles is not None:
                    center = best_angles
                width /= grid / 2
            if best_angles is not None and best_val > current:
                rots[k] = _euler_rotation(best_angles)
                centers[k] = best_angles
                current = best_val
                improved = True
        if not improved:
            break
    return rots


# ---------------------------------------------------------------------------
# Rician information weight


def _w_integrand_ratio(x):
    # I1(x)^2 / I0(x) * exp(-x), stable for all x >= 0
    return special.ive(1, x) ** 2 / special.ive(0, x)


def _w_quad(z: float) -> float:
    """Direct quadrature of w(z); accurate to ~1e-9 absolute over z <= 60."""
    if z == 0.0:
        return 0.0
    if z < 1.0:
        # small z: integrate in x, the Gaussian factor caps x at ~30 z < 30
        f = lambda x: x**3 * np.exp(-x * x / (2 * z * z) + x) * _w_integrand_ratio(x)
        val, _ = integrate.quad(f, 0.0, 30.0 * z, limit=200)
        return float(np.exp(-z * z / 2) / (z * z) * val - z**4)
    # substitute x = z^2 s; the exponent peaks at s = 1 with width 1/z
    f = lambda s: s**3 * _w_integrand_ratio(z * z * s) * np.exp(-z * z * (1 - s) ** 2 / 2)
    lo = max(0.0, 1.0 - 12.0 / z)
    hi = 1.0 + 12.0 / z
    val, _ = integrate.quad(f, lo, hi, limit=200, points=[1.0])
    if lo > 0.0:
        val += integrate.quad(f, 0.0, lo, limit=100)[0]
    return float(z**6 * val - z**4)


_W_CACHE_RANGE = (1e-3, 50.0)


@lru_cache(maxsize=1)
def _w_interpolator():
    # interpolate the bounded residual w(z) - z^2 + 1/2 (-> 1/2 at 0, -> 0 at
    # infinity); the quadratic part is restored exactly, keeping the absolute
    # cache error below 1e-6 across the whole range.  The residual has a flat
    # interior extremum where a shape-preserving cubic would lose accuracy,
    # so a plain C2 spline is used and w >= 0 enforced on reconstruction.
    lo, hi = _W_CACHE_RANGE
    zs = np.geomspace(lo, hi, 800)
    resid = np.array([_w_quad(z) for z in zs]) - zs**2 + 0.5
    return interpolate.CubicSpline(zs, resid, extrapolate=False)


def weight_w(z, cached: bool = True):
    """Rician Fisher-information weight w(z) of the signal-to-noise ratio.

    w(z) = (e^{-z^2/2}/z^2) int_0^inf x^3 e^{-x^2/(2 z^2)} I1(x)^2/I0(x) dx - z^4,
    with w(0) = 0 as the z -> 0 limit.  Nonnegative; ~z^4 near zero and
    ~z^2 - 1/2 for large z.  By default values come from a cached monotone
    cubic interpolant on a log grid (error < 1e-6), with exact quadrature
    outside its range.
    """
    scalar = np.isscalar(z)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if np.any(z < 0):
        raise ValueError("z must be >= 0")
    out = np.empty_like(z)
    if cached:
        interp = _w_interpolator()
        lo, hi = _W_CACHE_RANGE
        inside = (z >= lo) & (z <= hi)
        out[inside] = np.clip(interp(z[inside]) + z[inside] ** 2 - 0.5, 0.0, None)
        for i in np.flatnonzero(~inside):
            out[i] = _w_quad(float(z[i]))
    else:
        for i in range(len(z)):
            out[i] = _w_quad(float(z[i]))
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# Fisher information


def _quartic_vec(g: np.ndarray) -> np.ndarray:
    """q(g) = ((2 - delta_ij) g_i g_j) in vec order: outer(q, q) is the quartic block."""
    g = np.atleast_2d(g)
    return np.column_stack([
        g[:, 0] ** 2, g[:, 1] ** 2, g[:, 2] ** 2,
        2 * g[:, 0] * g[:, 1], 2 * g[:, 0] * g[:, 2], 2 * g[:, 1] * g[:, 2],
    ])


def a11_matrix() -> np.ndarray:
    """The isotropic precision pattern A(1, 1) for m = 3."""
    return precision_matrix(IsotropicModel(3, 1.0, 1.0))


@dataclass
class FisherInfo:
    """Fisher information of one scheme at a tensor value.

    ``J`` is scaled by the number of acquisitions, ``J_total = M * J`` is the
    raw sum.  ``mu_bar`` (from the total information) is set when the matrix
    has the isotropic A(1,1) structure within ``residual`` relative error.
    """

    J: np.ndarray
    J_total: np.ndarray
    M: int
    is_isotropic: bool
    mu_bar: float | None
    residual: float


def fisher_information(
    scheme: GradientScheme, D: np.ndarray, rho: float, eta: float,
    iso_rel_tol: float = 1e-3,
) -> FisherInfo:
    """Rician Fisher information of the tensor parameter for a whole scheme.

    Zero-b acquisitions carry information about rho only and contribute a
    zero block here (rho and eta are treated as fixed).
    """
    if not (rho > 0 and eta > 0):
        raise ValueError("rho and eta must be > 0")
    D = np.asarray(D, dtype=float)
    g = scheme.gradients()
    q = _quartic_vec(g)
    S = rho * np.exp(-np.einsum("ki,ij,kj->k", g, D, g))
    wv = weight_w(S / eta)
    nz = np.linalg.norm(g, axis=1) > 0
    J_total = (q[nz].T * wv[nz]) @ q[nz]
    J_total = 0.5 * (J_total + J_total.T)
    M = scheme.n_acquisitions
    iso, mu_bar, res = isotropy_check(J_total, rel_tol=iso_rel_tol)
    return FisherInfo(J=J_total / M, J_total=J_total, M=M,
                      is_isotropic=iso, mu_bar=mu_bar if iso else None, residual=res)


def isotropy_check(J: np.ndarray, rel_tol: float = 1e-3):
    """Least-squares fit of J ~ mu_bar A(1,1); isotropic iff the residual is small.

    Returns (is_isotropic, mu_bar, relative_residual); mu_bar is the fit
    value regardless of the verdict.
    """
    J = np.asarray(J, dtype=float)
    A = a11_matrix()
    mu_bar = float(np.tensordot(J, A) / np.tensordot(A, A))
    nj = np.linalg.norm(J)
    res = float(np.linalg.norm(J - mu_bar * A) / nj) if nj > 0 else math.inf
    return res <= rel_tol, mu_bar, res


# ---------------------------------------------------------------------------
# bundled designs and schemes


def load_design_csv(path, order: int | None = None, antipodal: bool = False,
                    even_only: bool = False, normalize: bool = False) -> SphericalDesign:
    """Read a `b,ux,uy,uz` table as a point set (the b column is ignored)."""
    path = Path(path)
    pts = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            pts.append([float(row["ux"]), float(row["uy"]), float(row["uz"])])
    pts = np.array(pts)
    if normalize:
        pts = pts / np.linalg.norm(pts, axis=1, keepdims=True)
    return SphericalDesign(pts, order=order, antipodal=antipodal,
                           even_only=even_only, name=path.stem)


def save_design_csv(path, points: np.ndarray, b: float = 1.0) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["b", "ux", "uy", "uz"])
        for u in np.atleast_2d(points):
            wr.writerow([f"{b:.17g}"] + [f"{x:.17g}" for x in u])


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


@lru_cache(maxsize=1)
def _design_checksums() -> dict:
    with open(data_dir() / "designs" / "checksums.json") as fh:
        return json.load(fh)


def _load_bundled(name: str, **kwargs) -> SphericalDesign:
    path = data_dir() / "designs" / f"{name}.csv"
    if not path.exists():
        raise FileNotFoundError(f"bundled design file missing: {path}")
    expected = _design_checksums().get(f"{name}.csv")
    if expected is not None and _sha256(path) != expected:
        raise ValueError(f"bundled design file corrupt (checksum mismatch): {path}")
    return load_design_csv(path, **kwargs)


#: b-value sets of the multi-shell schemes (s/mm^2)
_B_SEVEN = [560.0, 778.0, 996.0, 1276.0, 1556.0, 1898.0, 2240.0]
_B_FOUR = [560.0, 996.0, 1556.0, 2240.0]
_B_FIFTEEN = [62.0, 249.0, 560.0, 996.0, 1556.0, 2240.0, 3049.0, 3982.0,
              5040.0, 6222.0, 7529.0, 8960.0, 10516.0, 12196.0, 14000.0]


def builtin_schemes() -> dict[str, GradientScheme]:
    """The five bundled acquisition schemes.

    1. 14-gradient order-4 design at b = 996, one b0 (15 acquisitions);
    2. halved icosahedron (6 gradients) on 7 shells, one b0 (43);
    3. halved dodecahedron (10 gradients) on 7 shells, one b0 (71);
    4. antipodal designs of orders 5/7/9/11 (sizes 12/32/48/70) on 4 shells,
       mutually rotated for gradient spread, one b0 (163);
    5. 32-gradient scanner table times 3 repetitions on 15 shells, three b0
       (1443).
    """
    w14 = _load_bundled("womersley14", order=4)
    icosa6 = _load_bundled("icosa6", order=5, even_only=True)
    dodeca10 = _load_bundled("dodeca10", order=5, even_only=True)
    d4_shells = [
        (b, _load_bundled(name, order=order, antipodal=True))
        for b, name, order in zip(
            _B_FOUR,
            ["tdesign5_12", "tdesign7_32", "tdesign9_48", "tdesign11_70"],
            [5, 7, 9, 11],
        )
    ]
    scanner = _load_bundled("scanner32", order=None)
    scanner3 = SphericalDesign(np.tile(scanner.points, (3, 1)), order=None,
                               name="scanner32x3")
    return {
        "design1": GradientScheme([(996.0, w14)], n_b0=1, name="design1"),
        "design2": GradientScheme([(b, icosa6) for b in _B_SEVEN], n_b0=1, name="design2"),
        "design3": GradientScheme([(b, dodeca10) for b in _B_SEVEN], n_b0=1, name="design3"),
        "design4": GradientScheme(d4_shells, n_b0=1, name="design4"),
        "design5": GradientScheme([(b, scanner3) for b in _B_FIFTEEN], n_b0=3,
                                  name="design5"),
    }
