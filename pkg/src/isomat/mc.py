"""Monte Carlo experiment runner.

Replications are independent work items seeded per replication index, so the
output is byte-identical for any worker count: workers only partition the
index range and rows are merged back in index order.  Each run writes
``replications.csv``, ``summary.json`` and ``fig_*.svg`` files into the
output directory and removes partial outputs on failure.
"""

from __future__ import annotations

import json
import math
import multiprocessing
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import stats as sps

from . import plots
from .design import GradientScheme, builtin_schemes, fisher_information
from .rician import FitOptions, mle_fit, simulate_dataset
from .sphericity import tau_statistics
from .stats import gamma_fit, ks_statistic
from .symmat import (
    IsotropicModel,
    central_moments,
    eigvals_descending,
    sample,
    spectral_decompose,
)

__all__ = ["McConfig", "run_mc", "load_config"]

_EXPERIMENTS = ("gaussian", "rician", "power")


@dataclass
class McConfig:
    """Configuration of one Monte Carlo study."""

    experiment: str = "gaussian"
    n_reps: int = 10_000
    seed: int = 0
    workers: int = 1
    outdir: str = "mc_out"
    design: str = "design1"  # rician: bundled scheme name or gradient CSV path
    b_value: float = 1000.0  # shell b-value when design is a bare point table
    mu: float = 0.5
    lam: float = 0.0
    gbar: tuple = (0.0, 0.0, 0.0)  # gaussian: mean spectrum (diagonal mean)
    rho: float = 110.046
    eta2: float = 64.056
    gbar_scalar: float = 6.622e-4  # rician: spherical ground-truth diffusivity
    n_eigvec: int = 200  # gaussian: replications that also record eigenvectors
    fa_grid: tuple = tuple(np.round(np.linspace(0.01, 0.15, 15), 4))  # power study
    alpha: float = 0.05
    chunk: int = 256

    def __post_init__(self):
        if self.experiment not in _EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.n_reps < 100:
            raise ValueError("n_reps must be >= 100")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


def load_config(path, overrides: dict | None = None) -> McConfig:
    """Parse a flat `key = value` config file (TOML-style scalars and lists)."""
    text = Path(path).read_text()
    kv: dict = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"bad config line: {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        kv[key] = _parse_value(value)
    if overrides:
        kv.update(overrides)
    return McConfig(**kv)


def _parse_value(value: str):
    value = value.strip().strip("\"'")
    if "," in value:
        return tuple(_parse_value(v) for v in value.split(","))
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    return value


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


# ---------------------------------------------------------------------------
# per-chunk workers (top level for picklability)


def _gaussian_chunk(args):
    start, stop, cfg = args
    model = IsotropicModel(3, cfg["mu"], cfg["lam"])
    mean = np.diag(cfg["gbar"])
    kbar = float(np.mean(cfg["gbar"]))
    a = cfg["mu"]
    rows, vec_rows = [], []
    for idx in range(start, stop):
        rng = np.random.default_rng([cfg["seed"], idx])
        D = sample(mean, model, rng)
        gamma = eigvals_descending(D)
        i, j = [(0, 1), (0, 2), (1, 2)][rng.integers(3)]
        pair = [gamma[i], gamma[j]]
        if rng.random() < 0.5:
            pair.reverse()
        t = tau_statistics(gamma, a=a, kappa1_ref=kbar)
        k = t.kappa
        fa_v = math.sqrt(3 * k[1] / (2 * (k[0] ** 2 + k[1]))) if k[0] ** 2 + k[1] > 0 else math.nan
        ra_v = math.sqrt(k[1]) / abs(k[0]) if k[0] != 0 else math.nan
        vr_v = (k[2] + k[0] ** 3 - 1.5 * k[0] * k[1]) / k[0] ** 3 if k[0] != 0 else math.nan
        rows.append((
            idx, gamma[0], gamma[1], gamma[2], pair[0], pair[1],
            t.tau1, t.tau2, math.nan if t.tau3 is None else t.tau3,
            t.tau4, t.tau5, t.tau6, fa_v, ra_v, vr_v,
        ))
        if idx < cfg["n_eigvec"]:
            O = spectral_decompose(D).O
            for col in range(3):
                vec_rows.append((idx, col + 1, O[0, col], O[1, col], O[2, col]))
    return start, rows, vec_rows


def _rician_chunk(args):
    start, stop, cfg = args
    scheme = _scheme_from_cfg(cfg)
    Dbar = cfg["gbar_scalar"] * np.eye(3)
    kbar = cfg["gbar_scalar"]
    a = cfg["a"]
    # rho and eta2 are fixed at truth: the study measures the estimation
    # error of the tensor alone, whose covariance the Fisher matrix inverts
    opts = FitOptions(fixed_rho=cfg["rho"])
    rows = []
    for idx in range(start, stop):
        rng = np.random.default_rng([cfg["seed"], idx])
        ds = simulate_dataset(scheme, Dbar, cfg["rho"], cfg["eta2"], rng)
        fit = mle_fit(ds, opts)
        gamma = eigvals_descending(fit.D_hat)
        t = tau_statistics(gamma, a=a, kappa1_ref=kbar)
        k = t.kappa
        fa_v = math.sqrt(3 * k[1] / (2 * (k[0] ** 2 + k[1]))) if k[0] ** 2 + k[1] > 0 else math.nan
        ra_v = math.sqrt(k[1]) / abs(k[0]) if k[0] != 0 else math.nan
        vr_v = (k[2] + k[0] ** 3 - 1.5 * k[0] * k[1]) / k[0] ** 3 if k[0] != 0 else math.nan
        d = fit.D_hat
        rows.append((
            idx, d[0, 0], d[1, 1], d[2, 2], d[0, 1], d[0, 2], d[1, 2],
            fit.rho_hat, gamma[0], gamma[1], gamma[2],
            t.tau1, t.tau2, math.nan if t.tau3 is None else t.tau3,
            t.tau4, t.tau5, t.tau6, fa_v, ra_v, vr_v,
            fit.loglik, fit.iterations, fit.converged,
        ))
    return start, rows, []


def _power_chunk(args):
    start, stop, cfg = args
    model = IsotropicModel(3, cfg["mu"], cfg["lam"])
    k1 = 15.0
    crit = float(sps.chi2.ppf(1 - cfg["alpha"], df=5))
    rows = []
    fa_grid = cfg["fa_grid"]
    for idx in range(start, stop):
        rng = np.random.default_rng([cfg["seed"], idx])
        rejs = []
        for fa_alt in fa_grid:
            k2 = 2 * fa_alt**2 * k1**2 / (3 - 2 * fa_alt**2)
            dgap = math.sqrt(4.5 * k2)
            mean = np.diag([k1 + 2 * dgap / 3, k1 - dgap / 3, k1 - dgap / 3])
            D = sample(mean, model, rng)
            gamma = eigvals_descending(D)
            tau2 = 6 * cfg["mu"] * float(central_moments(gamma, 2)[1])
            rejs.append(int(tau2 > crit))
        rows.append((idx, *rejs))
    return start, rows, []


def _scheme_from_cfg(cfg) -> GradientScheme:
    name = cfg["design"]
    schemes = builtin_schemes()
    if name in schemes:
        return schemes[name]
    from .design import load_design_csv

    d = load_design_csv(name, normalize=True)
    return GradientScheme([(cfg["b_value"], d)], n_b0=1, name=str(name))


_CHUNK_FN = {
    "gaussian": _gaussian_chunk,
    "rician": _rician_chunk,
    "power": _power_chunk,
}

_HEADERS = {
    "gaussian": ("rep,gamma1,gamma2,gamma3,pair_x,pair_y,tau1,tau2,tau3,"
                 "tau4,tau5,tau6,fa,ra,vr"),
    "rician": ("rep,d11,d22,d33,d12,d13,d23,rho_hat,gamma1,gamma2,gamma3,"
               "tau1,tau2,tau3,tau4,tau5,tau6,fa,ra,vr,loglik,iterations,converged"),
}


def run_mc(cfg: McConfig) -> dict:
    """Run one study; returns a dict of output paths."""
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    created: list[Path] = []
    try:
        return _run_mc_inner(cfg, outdir, created)
    except Exception:
        for p in created:
            p.unlink(missing_ok=True)
        raise


def _map_chunks(cfg: McConfig, cfg_dict: dict):
    fn = _CHUNK_FN[cfg.experiment]
    tasks = [
        (lo, min(lo + cfg.chunk, cfg.n_reps), cfg_dict)
        for lo in range(0, cfg.n_reps, cfg.chunk)
    ]
    if cfg.workers == 1:
        yield from map(fn, tasks)
    else:
        with multiprocessing.Pool(cfg.workers) as pool:
            yield from pool.imap(fn, tasks)


def _run_mc_inner(cfg: McConfig, outdir: Path, created: list[Path]) -> dict:
    cfg_dict = asdict(cfg)
    if cfg.experiment == "rician":
        from .design import isotropy_check

        scheme = _scheme_from_cfg(cfg_dict)
        info = fisher_information(scheme, cfg.gbar_scalar * np.eye(3),
                                  cfg.rho, math.sqrt(cfg.eta2))
        _, mu_bar, residual = isotropy_check(info.J_total)
        cfg_dict["a"] = mu_bar

    paths = {"replications": outdir / "replications.csv"}
    created.append(paths["replications"])
    if cfg.experiment == "power":
        header = "rep," + ",".join(f"rej_fa{fa:g}" for fa in cfg.fa_grid)
    else:
        header = _HEADERS[cfg.experiment]
    all_rows = []
    vec_rows = []
    with open(paths["replications"], "w", newline="") as fh:
        fh.write(header + "\n")
        for _, rows, vecs in _map_chunks(cfg, cfg_dict):
            for row in rows:
                fh.write(",".join(_fmt(x) for x in row) + "\n")
            all_rows.extend(rows)
            vec_rows.extend(vecs)

    data = np.array([[float(x) for x in row] for row in all_rows])
    summary: dict = {"config": {k: (list(v) if isinstance(v, tuple) else v)
                                for k, v in asdict(cfg).items()},
                     "n_reps": cfg.n_reps}

    if cfg.experiment == "gaussian":
        _summarize_gaussian(cfg, data, vec_rows, outdir, created, summary, paths)
    elif cfg.experiment == "rician":
        summary["mu_bar"] = mu_bar
        summary["fisher_isotropy_residual"] = residual
        _summarize_rician(cfg, data, outdir, created, summary, paths)
    else:
        _summarize_power(cfg, data, summary)

    paths["summary"] = outdir / "summary.json"
    created.append(paths["summary"])
    with open(paths["summary"], "w") as fh:
        json.dump(summary, fh, indent=1, default=float)
    return {k: str(v) for k, v in paths.items()}


def _tau_summaries(tau2, tau3, tau5, summary: dict) -> None:
    ok2 = np.isfinite(tau2) & (tau2 > 0)
    shape2, scale2, _ = gamma_fit(tau2[ok2])
    summary["tau2_gamma"] = {"shape": shape2, "scale": scale2}
    ok5 = np.isfinite(tau5) & (tau5 > 0)
    if ok5.sum() > 100:
        shape5, scale5, _ = gamma_fit(tau5[ok5])
        summary["tau5_gamma"] = {"shape": shape5, "scale": scale5,
                                 "n_excluded": int(len(tau5) - ok5.sum())}
    d2, p2 = ks_statistic(tau2[ok2], lambda x: sps.chi2.cdf(x, df=5))
    summary["tau2_ks_chi2_5"] = {"stat": d2, "p": p2}
    ok3 = np.isfinite(tau3)
    d3, p3 = ks_statistic(np.abs(tau3[ok3]), lambda x: np.clip(x, 0, 1))
    summary["abs_tau3_ks_uniform"] = {"stat": d3, "p": p3}
    # density trend of tau3 across [-1, 1] (reported, no acceptance threshold)
    counts, edges = np.histogram(tau3[ok3], bins=20, range=(-1, 1), density=True)
    mids = 0.5 * (edges[:-1] + edges[1:])
    slope = float(np.polyfit(mids, counts, 1)[0])
    summary["tau3_hist_trend_slope"] = slope


def _summarize_gaussian(cfg, data, vec_rows, outdir, created, summary, paths):
    gamma = data[:, 1:4]
    pair = data[:, 4:6]
    tau1, tau2, tau3, tau5 = data[:, 6], data[:, 7], data[:, 8], data[:, 10]
    _tau_summaries(tau2, tau3, tau5, summary)
    sd1 = math.sqrt(cfg.mu / (6 * cfg.mu + 9 * cfg.lam))
    d1, p1 = ks_statistic(tau1, lambda x: sps.norm.cdf(x, scale=sd1))
    summary["tau1_ks_normal"] = {"stat": d1, "p": p1, "sd": sd1}
    gap = np.abs(pair[:, 0] - pair[:, 1])
    summary["pair_gap_below_0.05"] = float(np.mean(gap < 0.05))

    paths["fig_eigscatter"] = outdir / "fig_eigscatter.svg"
    created.append(paths["fig_eigscatter"])
    cap = min(len(pair), 10_000)
    plots.eig_pair_scatter(paths["fig_eigscatter"], pair[:cap],
                           title="randomized eigenvalue pairs")

    # barycenter of the bottom cluster when the mean has one, else the full trace
    from .asymptotics import cluster

    cs = cluster(np.asarray(cfg.gbar, float))
    if cs.sizes[-1] >= 2:
        lo = cs.boundaries[-2]
        bary = gamma[:, lo:].mean(axis=1)
        label = "cluster barycenter"
    else:
        bary = gamma.mean(axis=1)
        label = "eigenvalue barycenter"
    xs = np.linspace(bary.min(), bary.max(), 300)
    pdf = sps.norm.pdf(xs, loc=bary.mean(), scale=bary.std())
    paths["fig_barycenter"] = outdir / "fig_barycenter.svg"
    created.append(paths["fig_barycenter"])
    plots.hist_with_curves(paths["fig_barycenter"], bary,
                           [(xs, pdf, "Gaussian fit")], xlabel=label)

    paths["fig_tau"] = outdir / "fig_tau.svg"
    created.append(paths["fig_tau"])
    g2 = summary["tau2_gamma"]
    gamma_pdf2 = lambda x: sps.gamma.pdf(x, a=g2["shape"], scale=g2["scale"])
    gamma_pdf5 = None
    if "tau5_gamma" in summary:
        g5 = summary["tau5_gamma"]
        gamma_pdf5 = lambda x: sps.gamma.pdf(x, a=g5["shape"], scale=g5["scale"])
    plots.tau_panels(paths["fig_tau"], tau2, tau3, tau5,
                     lambda x: sps.chi2.pdf(x, df=5), gamma_pdf2, gamma_pdf5)

    if vec_rows:
        coords = np.array(vec_rows, dtype=float)
        paths["eigvec_coords"] = outdir / "eigvec_coords.csv"
        created.append(paths["eigvec_coords"])
        with open(paths["eigvec_coords"], "w", newline="") as fh:
            fh.write("rep,vec,x,y,z\n")
            for row in vec_rows:
                fh.write(",".join(_fmt(x) for x in row) + "\n")
        paths["fig_eigvectors"] = outdir / "fig_eigvectors.svg"
        created.append(paths["fig_eigvectors"])
        plots.eigvec_orthographic(paths["fig_eigvectors"], coords)


def _summarize_rician(cfg, data, outdir, created, summary, paths):
    vecd = data[:, 1:7]
    tau2, tau3, tau5 = data[:, 12], data[:, 13], data[:, 15]
    _tau_summaries(tau2, tau3, tau5, summary)
    summary["vecD_mean"] = vecd.mean(axis=0).tolist()
    summary["vecD_cov"] = np.cov(vecd.T).tolist()
    summary["n_converged"] = int(data[:, 22].sum())

    paths["fig_tau"] = outdir / "fig_tau.svg"
    created.append(paths["fig_tau"])
    g2 = summary["tau2_gamma"]
    gamma_pdf2 = lambda x: sps.gamma.pdf(x, a=g2["shape"], scale=g2["scale"])
    gamma_pdf5 = None
    if "tau5_gamma" in summary:
        g5 = summary["tau5_gamma"]
        gamma_pdf5 = lambda x: sps.gamma.pdf(x, a=g5["shape"], scale=g5["scale"])
    plots.tau_panels(paths["fig_tau"], tau2, tau3, tau5,
                     lambda x: sps.chi2.pdf(x, df=5), gamma_pdf2, gamma_pdf5)


def _summarize_power(cfg, data, summary):
    rates = data[:, 1:].mean(axis=0)
    summary["rejection_rates"] = {
        f"{fa:g}": float(r) for fa, r in zip(cfg.fa_grid, rates)
    }
    summary["alpha"] = cfg.alpha
