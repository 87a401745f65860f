import json
from pathlib import Path

import numpy as np
import pytest

from isomat.cli import main
from isomat.mc import McConfig, load_config, run_mc


class TestConfig:
    def test_flat_file_parsing(self, tmp_path):
        cfg_file = tmp_path / "study.toml"
        cfg_file.write_text(
            "# gaussian study at desk scale\n"
            "experiment = gaussian\n"
            "n_reps = 500\n"
            "seed = 42\n"
            "mu = 0.5\n"
            "lam = 0.0\n"
            "gbar = 15, 3, 3\n"
            'outdir = "out"\n'
        )
        cfg = load_config(cfg_file)
        assert cfg.experiment == "gaussian"
        assert cfg.n_reps == 500
        assert cfg.gbar == (15, 3, 3)
        assert cfg.outdir == "out"

    def test_overrides(self, tmp_path):
        cfg_file = tmp_path / "study.toml"
        cfg_file.write_text("experiment = gaussian\nn_reps = 500\n")
        cfg = load_config(cfg_file, {"n_reps": 800})
        assert cfg.n_reps == 800

    def test_validation(self):
        with pytest.raises(ValueError):
            McConfig(experiment="nope")
        with pytest.raises(ValueError):
            McConfig(n_reps=50)


class TestRunMcGaussian:
    def test_outputs_and_summary(self, tmp_path):
        cfg = McConfig(experiment="gaussian", n_reps=400, seed=3, workers=1,
                       outdir=str(tmp_path / "g"), mu=0.5, lam=0.0,
                       gbar=(15.0, 3.0, 3.0), n_eigvec=50)
        paths = run_mc(cfg)
        rows = Path(paths["replications"]).read_text().splitlines()
        assert len(rows) == 401  # header + rows
        summary = json.loads(Path(paths["summary"]).read_text())
        assert "tau2_gamma" in summary and "tau3_hist_trend_slope" in summary
        for key in ("fig_eigscatter", "fig_barycenter", "fig_tau", "fig_eigvectors"):
            assert Path(paths[key]).exists()
        coords = Path(paths["eigvec_coords"]).read_text().splitlines()
        assert len(coords) == 1 + 50 * 3

    def test_worker_count_determinism(self, tmp_path):
        outs = []
        for workers in (1, 2):
            cfg = McConfig(experiment="gaussian", n_reps=300, seed=7,
                           workers=workers, outdir=str(tmp_path / f"w{workers}"),
                           mu=0.5, lam=0.0, gbar=(0.0, 0.0, 0.0), n_eigvec=0,
                           chunk=64)
            paths = run_mc(cfg)
            outs.append(Path(paths["replications"]).read_bytes())
        assert outs[0] == outs[1]

    def test_cleanup_on_failure(self, tmp_path, monkeypatch):
        import isomat.mc as mc_mod

        cfg = McConfig(experiment="gaussian", n_reps=200, seed=1,
                       outdir=str(tmp_path / "fail"), gbar=(0.0, 0.0, 0.0))

        def boom(*args, **kwargs):
            raise RuntimeError("disk full")

        monkeypatch.setattr(mc_mod, "_summarize_gaussian", boom)
        with pytest.raises(RuntimeError):
            run_mc(cfg)
        assert not (tmp_path / "fail" / "replications.csv").exists()


class TestRunMcPower:
    def test_rejection_rates_nondecreasing(self, tmp_path):
        cfg = McConfig(experiment="power", n_reps=10_000, seed=5,
                       outdir=str(tmp_path / "p"), mu=2.0, lam=2.0,
                       fa_grid=(0.01, 0.04, 0.07, 0.10, 0.125, 0.15),
                       workers=2)
        paths = run_mc(cfg)
        summary = json.loads(Path(paths["summary"]).read_text())
        rates = np.array(list(summary["rejection_rates"].values()))
        assert np.all(np.diff(rates) >= 0)
        assert rates[0] < 0.2  # near the null, close to the nominal level
        assert rates[-1] > 0.9


class TestRunMcRepulsion:
    def test_gap_probability_bound(self, tmp_path):
        # spherical mean at GOE scale: randomized pairs avoid the diagonal
        cfg = McConfig(experiment="gaussian", n_reps=10_000, seed=21, workers=2,
                       outdir=str(tmp_path / "rep"), mu=0.5, lam=0.0,
                       gbar=(15.0, 15.0, 15.0), n_eigvec=0)
        paths = run_mc(cfg)
        summary = json.loads(Path(paths["summary"]).read_text())
        assert summary["pair_gap_below_0.05"] < 0.005


class TestRunMcRician:
    def test_small_study(self, tmp_path):
        cfg = McConfig(experiment="rician", n_reps=150, seed=11, workers=1,
                       outdir=str(tmp_path / "r"), design="design1")
        paths = run_mc(cfg)
        summary = json.loads(Path(paths["summary"]).read_text())
        assert summary["mu_bar"] == pytest.approx(4.63e7, rel=0.01)
        assert summary["n_converged"] == 150
        cov = np.array(summary["vecD_cov"])
        assert cov.shape == (6, 6)


class TestCli:
    def test_sample_goe(self, capsys):
        assert main(["sample", "--goe", "--m", "3", "-n", "5", "--seed", "1"]) == 0
        out = capsys.readouterr().out.splitlines()
        assert len(out) == 6

    def test_density_eig0(self, capsys):
        assert main(["density", "--kind", "eig0", "--gamma", "3,2,1",
                     "--mu", "1", "--lam", "0"]) == 0
        val = float(capsys.readouterr().out)
        assert val > 0

    def test_density_hciz_spherical(self, capsys):
        assert main(["density", "--kind", "hciz", "--gamma", "2,1,0",
                     "--gbar", "1,1,1"]) == 0
        val = float(capsys.readouterr().out)
        assert val == pytest.approx(np.exp(3.0), rel=1e-9)

    def test_tau_spherical(self, capsys):
        assert main(["test", "tau", "--gamma", "1,1,1", "--a", "100"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["tau2"] == 0.0
        assert out["tau3"] is None

    def test_classify(self, capsys):
        assert main(["test", "classify", "--gamma", "10,5.0005,5.0",
                     "--a", "10000", "--pn", "0.99"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["regime"] == "prolate"

    def test_two_sample(self, capsys):
        assert main(["test", "two-sample", "--mu1", "1", "--lam1", "1",
                     "--mu2", "2", "--lam2", "0"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["mu"] == pytest.approx(2 / 3)
        assert out["lam"] == pytest.approx(8 / 27)

    def test_design_verify_scheme(self, capsys):
        assert main(["design", "verify", "--scheme", "design1", "--t", "4",
                     "--tol", "1e-4"]) == 0

    def test_design_verify_file(self, capsys):
        from isomat.design import data_dir

        path = str(data_dir() / "designs" / "womersley14.csv")
        assert main(["design", "verify", "--file", path, "--t", "4",
                     "--tol", "1e-4"]) == 0
        assert "pass" in capsys.readouterr().out

    def test_design_optimize(self, tmp_path, capsys):
        from isomat.design import data_dir

        d = data_dir() / "designs"
        rc = main(["design", "optimize", "--file", str(d / "icosa6.csv"),
                   str(d / "dodeca10.csv"), "--iters", "1",
                   "--outdir", str(tmp_path / "rot")])
        assert rc == 0
        assert (tmp_path / "rot" / "icosa6_rotated.csv").exists()
        out = capsys.readouterr().out
        assert "->" in out

    def test_design_optimize_needs_input(self, capsys):
        assert main(["design", "optimize", "--iters", "1"]) == 1

    def test_design_fisher(self, capsys):
        rc = main(["design", "fisher", "--scheme", "design1",
                   "--spherical", "6.622e-4", "--rho", "110.046",
                   "--eta2", "64.056"])
        assert rc == 0
        out = json.loads(capsys.readouterr().out)
        assert out["isotropic"] is True
        assert out["mu_bar"] == pytest.approx(4.63e7, rel=0.01)

    def test_simulate_fit_roundtrip(self, tmp_path, capsys):
        data = tmp_path / "ds.csv"
        assert main(["simulate", "--scheme", "design1", "--seed", "3",
                     "--out", str(data)]) == 0
        capsys.readouterr()
        assert main(["fit", "--data", str(data)]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["converged"] is True
        D = np.array(out["D_hat"])
        assert np.abs(D - 6.622e-4 * np.eye(3)).max() < 5e-4

    def test_mc_subcommand(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.toml"
        cfg.write_text(
            "experiment = gaussian\nn_reps = 150\nseed = 2\n"
            "gbar = 0.0, 0.0, 0.0\nn_eigvec = 0\n"
            f"outdir = {tmp_path / 'out'}\n"
        )
        assert main(["mc", "--config", str(cfg)]) == 0

    def test_bad_args_exit_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["density"])  # missing required --kind
        assert exc.value.code == 2

    def test_numeric_failure_exit_1(self, capsys):
        assert main(["fit", "--data", "/nonexistent/ds.csv"]) == 1
        assert "error" in capsys.readouterr().err

    def test_invalid_model_exit_1(self, capsys):
        assert main(["sample", "--mu", "-1"]) == 1
