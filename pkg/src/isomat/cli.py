"""Command-line interface.

Subcommands are thin adapters over the library: sample / density / test /
design / simulate / fit / mc.  Exit codes: 0 success, 1 numeric failure,
2 bad arguments.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .design import (
    GradientScheme,
    builtin_schemes,
    fisher_information,
    isotropy_check,
    load_design_csv,
    min_cross_geodesic,
    optimize_shell_rotations,
    save_design_csv,
    verify_t_design,
)
from .eigen_laws import (
    HcizConfig,
    OrderedSpectrum,
    ad_cdf,
    ad_rd_joint_density,
    eigdensity_general,
    eigdensity_zero_mean,
    hciz,
)
from .mc import McConfig, load_config, run_mc
from .rician import load_dataset, mle_fit, save_dataset, simulate_dataset
from .sphericity import (
    sphericity_pvalues,
    symmetry_classify,
    tau_statistics,
    two_sample_combine,
    two_sample_stat,
)
from .symmat import IsotropicModel, sample, sample_goe, unvec, vec

def _floats(text: str) -> np.ndarray:
    return np.array([float(x) for x in text.split(",")])


def _cmd_sample(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.goe:
        draws = sample_goe(args.m, rng, size=args.n)
    else:
        model = IsotropicModel(args.m, args.mu, args.lam)
        mean = np.diag(_floats(args.mean_diag)) if args.mean_diag else np.zeros((args.m, args.m))
        draws = sample(mean, model, rng, size=args.n)
    out = sys.stdout if args.out is None else open(args.out, "w")
    header = ",".join(f"v{i}" for i in range(args.m * (args.m + 1) // 2))
    print(header, file=out)
    for D in np.atleast_3d(draws):
        print(",".join(f"{x:.17g}" for x in vec(D)), file=out)
    if args.out is not None:
        out.close()
    return 0


def _cmd_density(args) -> int:
    if args.kind == "eig0":
        model = IsotropicModel(3, args.mu, args.lam)
        val = eigdensity_zero_mean(_floats(args.gamma), model)
    elif args.kind == "eig":
        model = IsotropicModel(3, args.mu, args.lam)
        spec = OrderedSpectrum(_floats(args.gamma), _floats(args.gbar))
        val = eigdensity_general(spec, model, HcizConfig())
    elif args.kind == "hciz":
        val = hciz(_floats(args.gbar), _floats(args.gamma),
                   HcizConfig(method=args.method))
    elif args.kind == "ad-cdf":
        val = ad_cdf(args.t, args.mu, args.lam, args.gbar0)
    elif args.kind == "ad-rd":
        val = ad_rd_joint_density(args.gamma1, args.rd, args.mu, args.lam, args.gbar0)
    else:  # pragma: no cover - argparse restricts choices
        raise ValueError(args.kind)
    print(f"{val:.12g}")
    return 0


def _cmd_test(args) -> int:
    if args.mode == "tau":
        t = tau_statistics(_floats(args.gamma), a=args.a, kappa1_ref=args.kappa1_ref)
        pv = sphericity_pvalues(t, lam=args.lam)
        out = {
            "tau1": t.tau1, "tau2": t.tau2, "tau3": t.tau3,
            "tau4": t.tau4, "tau5": t.tau5, "tau6": t.tau6,
            "p_values": pv,
        }
        print(json.dumps(out, indent=1, default=float))
    elif args.mode == "classify":
        v = symmetry_classify(_floats(args.gamma), a=args.a, c_n=args.cn, p_n=args.pn)
        print(json.dumps({
            "regime": v.regime.value,
            "estimate": v.estimate.tolist(),
            "c_n": v.c_n, "p_n": v.p_n,
        }, indent=1))
    else:  # two-sample
        mu, lam = two_sample_combine(args.mu1, args.lam1, args.mu2, args.lam2, args.m)
        out = {"mu": mu, "lam": lam}
        if args.dvec:
            D = unvec(_floats(args.dvec), args.m)
            out["statistic"] = two_sample_stat(D, mu, lam)
            out["df"] = args.m * (args.m + 1) // 2
        print(json.dumps(out, indent=1))
    return 0


def _load_points(args) -> list:
    if args.scheme:
        sch = builtin_schemes()[args.scheme]
        return [d for _, d in sch.shells]
    if not args.file:
        raise ValueError("provide --scheme or at least one --file")
    return [load_design_csv(f, normalize=args.normalize) for f in args.file]


def _cmd_design(args) -> int:
    if args.mode == "verify":
        designs = _load_points(args)
        ok = True
        for d in designs:
            rep = verify_t_design(d, t=args.t, tol=args.tol, even_only=args.even_only)
            status = "pass" if rep.passed else "FAIL"
            print(f"{d.name}: n={len(d)} t={args.t} max_violation={rep.max_violation:.3g} {status}")
            ok &= rep.passed
        return 0 if ok else 1
    if args.mode == "optimize":
        designs = _load_points(args)
        rng = np.random.default_rng(args.seed)
        before = min_cross_geodesic([d.points for d in designs])
        rots = optimize_shell_rotations(designs, max_iters=args.iters, rng=rng)
        after = min_cross_geodesic([d.points @ r.T for d, r in zip(designs, rots)])
        print(f"min cross-shell geodesic: {before:.6f} -> {after:.6f} rad")
        if args.outdir:
            outdir = Path(args.outdir)
            outdir.mkdir(parents=True, exist_ok=True)
            for d, r in zip(designs, rots):
                save_design_csv(outdir / f"{d.name}_rotated.csv", d.points @ r.T)
            print(f"wrote rotated tables to {outdir}")
        return 0
    # fisher
    if args.scheme:
        scheme = builtin_schemes()[args.scheme]
    else:
        d = load_design_csv(args.file[0], normalize=args.normalize)
        scheme = GradientScheme([(args.b_value, d)], n_b0=1, name=d.name)
    Dbar = args.spherical * np.eye(3) if args.dbar_diag is None else np.diag(_floats(args.dbar_diag))
    info = fisher_information(scheme, Dbar, args.rho, math.sqrt(args.eta2))
    _, mu_bar, residual = isotropy_check(info.J_total)
    print(json.dumps({
        "scheme": scheme.name,
        "acquisitions": scheme.n_acquisitions,
        "isotropic": info.is_isotropic,
        "mu_bar": mu_bar,
        "anisotropy_residual": residual,
        "J_total": info.J_total.tolist(),
    }, indent=1))
    return 0


def _cmd_simulate(args) -> int:
    scheme = builtin_schemes()[args.scheme]
    D = args.spherical * np.eye(3) if args.dbar_diag is None else np.diag(_floats(args.dbar_diag))
    rng = np.random.default_rng(args.seed)
    ds = simulate_dataset(scheme, D, args.rho, args.eta2, rng, seed=args.seed)
    save_dataset(ds, args.out)
    print(f"wrote {len(ds)} acquisitions to {args.out}")
    return 0


def _cmd_fit(args) -> int:
    ds = load_dataset(args.data)
    fit = mle_fit(ds)
    print(json.dumps({
        "D_hat": fit.D_hat.tolist(),
        "rho_hat": fit.rho_hat,
        "loglik": fit.loglik,
        "iterations": fit.iterations,
        "converged": fit.converged,
    }, indent=1))
    return 0 if fit.converged else 1


def _cmd_mc(args) -> int:
    from .mc import _parse_value

    overrides = {}
    for kv in args.set or []:
        key, value = kv.split("=", 1)
        overrides[key.strip()] = _parse_value(value)
    if args.config:
        cfg = load_config(args.config, overrides)
    else:
        cfg = McConfig(**overrides)
    paths = run_mc(cfg)
    print(json.dumps(paths, indent=1))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="isomat", description=__doc__)
    p.add_argument("--version", action="version", version=f"isomat {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("sample", help="draw symmetric random matrices")
    ps.add_argument("--m", type=int, default=3)
    ps.add_argument("--mu", type=float, default=0.5)
    ps.add_argument("--lam", type=float, default=0.0)
    ps.add_argument("--mean-diag", default=None, help="comma list of mean eigenvalues")
    ps.add_argument("--goe", action="store_true")
    ps.add_argument("-n", type=int, default=1)
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--out", default=None)
    ps.set_defaults(fn=_cmd_sample)

    pd = sub.add_parser("density", help="evaluate eigenvalue laws")
    pd.add_argument("--kind", choices=["eig0", "eig", "hciz", "ad-cdf", "ad-rd"],
                    required=True)
    pd.add_argument("--gamma", default=None)
    pd.add_argument("--gbar", default=None)
    pd.add_argument("--mu", type=float, default=1.0)
    pd.add_argument("--lam", type=float, default=0.0)
    pd.add_argument("--t", type=float, default=0.0)
    pd.add_argument("--gbar0", type=float, default=0.0)
    pd.add_argument("--gamma1", type=float, default=0.0)
    pd.add_argument("--rd", type=float, default=0.0)
    pd.add_argument("--method", choices=["euler_quadrature", "haar_mc"],
                    default="euler_quadrature")
    pd.set_defaults(fn=_cmd_density)

    pt = sub.add_parser("test", help="sphericity and symmetry tests")
    tsub = pt.add_subparsers(dest="mode", required=True)
    t1 = tsub.add_parser("tau")
    t1.add_argument("--gamma", required=True)
    t1.add_argument("--a", type=float, required=True)
    t1.add_argument("--kappa1-ref", type=float, default=0.0)
    t1.add_argument("--lam", type=float, default=0.0)
    t2 = tsub.add_parser("classify")
    t2.add_argument("--gamma", required=True)
    t2.add_argument("--a", type=float, required=True)
    t2.add_argument("--cn", type=float, default=None)
    t2.add_argument("--pn", type=float, default=None)
    t3 = tsub.add_parser("two-sample")
    t3.add_argument("--mu1", type=float, required=True)
    t3.add_argument("--lam1", type=float, default=0.0)
    t3.add_argument("--mu2", type=float, required=True)
    t3.add_argument("--lam2", type=float, default=0.0)
    t3.add_argument("--m", type=int, default=3)
    t3.add_argument("--dvec", default=None, help="vec of the difference matrix")
    for t in (t1, t2, t3):
        t.set_defaults(fn=_cmd_test)

    pg = sub.add_parser("design", help="verify / optimize / fisher")
    dsub = pg.add_subparsers(dest="mode", required=True)
    d1 = dsub.add_parser("verify")
    d1.add_argument("--file", nargs="*", default=[])
    d1.add_argument("--scheme", default=None)
    d1.add_argument("--t", type=int, required=True)
    d1.add_argument("--tol", type=float, default=1e-6)
    d1.add_argument("--even-only", action="store_true")
    d1.add_argument("--normalize", action="store_true")
    d2 = dsub.add_parser("optimize")
    d2.add_argument("--file", nargs="*", default=[])
    d2.add_argument("--scheme", default=None)
    d2.add_argument("--iters", type=int, default=20)
    d2.add_argument("--seed", type=int, default=0)
    d2.add_argument("--outdir", default=None)
    d2.add_argument("--normalize", action="store_true")
    d3 = dsub.add_parser("fisher")
    d3.add_argument("--scheme", default=None)
    d3.add_argument("--file", nargs="*", default=[])
    d3.add_argument("--b-value", type=float, default=1000.0)
    d3.add_argument("--spherical", type=float, default=6.622e-4)
    d3.add_argument("--dbar-diag", default=None)
    d3.add_argument("--rho", type=float, required=True)
    d3.add_argument("--eta2", type=float, required=True)
    d3.add_argument("--normalize", action="store_true")
    for d in (d1, d2, d3):
        d.set_defaults(fn=_cmd_design)

    pm = sub.add_parser("simulate", help="simulate one Rician dataset")
    pm.add_argument("--scheme", required=True)
    pm.add_argument("--spherical", type=float, default=6.622e-4)
    pm.add_argument("--dbar-diag", default=None)
    pm.add_argument("--rho", type=float, default=110.046)
    pm.add_argument("--eta2", type=float, default=64.056)
    pm.add_argument("--seed", type=int, default=0)
    pm.add_argument("--out", required=True)
    pm.set_defaults(fn=_cmd_simulate)

    pf = sub.add_parser("fit", help="maximum-likelihood tensor fit")
    pf.add_argument("--data", required=True)
    pf.set_defaults(fn=_cmd_fit)

    pc = sub.add_parser("mc", help="run a Monte Carlo study")
    pc.add_argument("--config", default=None)
    pc.add_argument("--set", nargs="*", metavar="KEY=VALUE")
    pc.set_defaults(fn=_cmd_mc)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, RuntimeError, FileNotFoundError, KeyError,
            np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
