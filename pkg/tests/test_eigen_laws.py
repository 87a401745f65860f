import math

import numpy as np
import pytest
from scipy import integrate
from scipy.stats import norm

from isomat.eigen_laws import (
    HcizConfig,
    OrderedSpectrum,
    ad_cdf,
    ad_cdf_centered,
    ad_density_centered,
    ad_rd_joint_density,
    eigdensity_general,
    eigdensity_zero_mean,
    eigvec_conditional_logdensity,
    hciz,
    hciz_haar_mc,
    log_eigdensity_general,
    log_eigdensity_zero_mean,
    log_hciz,
    log_hciz_batch,
    normalizing_Z,
    vandermonde,
)
from isomat.eigen_laws import _log_hciz_euler
from isomat.symmat import IsotropicModel, eigvals_descending, haar_orthogonal, sample


def test_vandermonde_values():
    assert vandermonde([3.0, 2.0, 1.0]) == pytest.approx(2.0)
    assert vandermonde([5.0, 1.0]) == pytest.approx(4.0)
    assert vandermonde([2.0, 2.0, 1.0]) == 0.0


class TestNormalizingZ:
    def test_m3_closed_form(self):
        for mu, lam in [(1.0, 0.0), (2.0, 0.5), (0.5, 1.0)]:
            assert normalizing_Z(3, mu, lam) == pytest.approx(
                4 / math.pi * mu**2.5 * math.sqrt(2 * mu + 3 * lam), rel=1e-12
            )

    def test_m3_base_value(self):
        assert normalizing_Z(3, 1.0, 0.0) == pytest.approx(4 * math.sqrt(2) / math.pi)

    def test_mc_normalization(self):
        # importance sampling with a sorted-iid-normal proposal on the cone
        rng = np.random.default_rng(4)
        model = IsotropicModel(3, 0.5, 0.0)
        sd = 1.6
        n = 400_000
        z = np.sort(rng.standard_normal((n, 3)) * sd, axis=1)[:, ::-1]
        log_q = (
            norm.logpdf(z / sd).sum(axis=1) - 3 * math.log(sd) + math.log(math.factorial(3))
        )
        v = np.prod(z[:, [0, 0, 1]] - z[:, [1, 2, 2]], axis=1)
        log_p = (
            math.log(normalizing_Z(3, model.mu, model.lam))
            + np.log(v)
            - (model.mu + model.lam / 2) * (z**2).sum(axis=1)
        )
        w = np.exp(log_p - log_q)
        est = w.mean()
        se = w.std(ddof=1) / math.sqrt(n)
        assert est == pytest.approx(1.0, abs=max(0.005, 3 * se))


class TestZeroMeanDensity:
    def test_repeated_eigenvalue_is_zero(self):
        assert eigdensity_zero_mean([2.0, 2.0, 1.0], IsotropicModel(3, 1.0, 0.0)) == 0.0

    def test_requires_descending(self):
        with pytest.raises(ValueError):
            log_eigdensity_zero_mean([1.0, 2.0, 3.0], IsotropicModel(3, 1.0, 0.0))

    def test_sign_symmetry_lambda_zero(self):
        model = IsotropicModel(3, 0.7, 0.0)
        g = np.array([2.0, 0.3, -1.1])
        assert log_eigdensity_zero_mean(g, model) == pytest.approx(
            log_eigdensity_zero_mean(-g[::-1], model), abs=1e-12
        )

    def test_goe_histogram_gof(self):
        # 3-D binned chi^2 against the closed-form density (box coordinates)
        from isomat.stats import chi2_gof

        rng = np.random.default_rng(9)
        model = IsotropicModel(3, 0.5, 0.0)
        n = 40_000
        from isomat.symmat import sample_goe

        g = eigvals_descending(sample_goe(3, rng, size=n))
        bary = g.mean(axis=1)
        gap1 = g[:, 0] - g[:, 1]
        gap2 = g[:, 1] - g[:, 2]
        eb = np.linspace(-1.6, 1.6, 5)
        eg = np.array([0.0, 0.6, 1.2, 2.0, 3.2])
        counts, _ = np.histogramdd(
            np.column_stack([bary, gap1, gap2]), bins=(eb, eg, eg)
        )
        # expected probabilities by midpoint quadrature on a subgrid per cell
        sub = 8
        probs = np.zeros_like(counts)
        for i in range(len(eb) - 1):
            bs = np.linspace(eb[i], eb[i + 1], sub + 1)[:-1] + (eb[i + 1] - eb[i]) / (2 * sub)
            for j in range(len(eg) - 1):
                g1s = np.linspace(eg[j], eg[j + 1], sub + 1)[:-1] + (eg[j + 1] - eg[j]) / (2 * sub)
                for k in range(len(eg) - 1):
                    g2s = np.linspace(eg[k], eg[k + 1], sub + 1)[:-1] + (eg[k + 1] - eg[k]) / (2 * sub)
                    B, G1, G2 = np.meshgrid(bs, g1s, g2s, indexing="ij")
                    ga = np.stack([B + (2 * G1 + G2) / 3, B + (-G1 + G2) / 3,
                                   B - (G1 + 2 * G2) / 3], axis=-1).reshape(-1, 3)
                    vals = np.array(
                        [math.exp(log_eigdensity_zero_mean(row, model)) for row in ga]
                    )
                    vol = (eb[i + 1] - eb[i]) * (eg[j + 1] - eg[j]) * (eg[k + 1] - eg[k])
                    # (barycenter, gap, gap) is a volume-preserving chart
                    probs[i, j, k] = vals.mean() * vol
        stat, p, df = chi2_gof(counts.ravel(), probs.ravel(), n_total=n)
        assert p > 0.01, f"chi2 GOF failed: stat={stat:.1f} df={df} p={p:.4f}"


class TestHciz:
    def test_zero_gbar(self):
        assert hciz(np.zeros(3), [2.0, 1.0, -0.5]) == pytest.approx(1.0)

    def test_spherical_exact(self):
        g = np.array([2.0, 1.0, -0.5])
        assert hciz(0.7 * np.ones(3), g) == pytest.approx(math.exp(0.7 * g.sum()))

    def test_euler_quadrature_hits_spherical_value(self):
        g = np.array([2.0, 1.0, -0.5])
        lv = _log_hciz_euler(0.7 * np.ones(3), g, 48)
        assert lv == pytest.approx(0.7 * g.sum(), abs=1e-10)

    def test_euler_vs_haar_mc(self):
        rng = np.random.default_rng(17)
        for _ in range(10):
            gbar = np.sort(rng.uniform(-3, 3, 3))[::-1]
            gam = np.sort(rng.uniform(-3, 3, 3))[::-1]
            q = hciz(gbar, gam, HcizConfig(nodes_per_angle=48))
            m, se = hciz_haar_mc(gbar, gam, 40_000, rng)
            assert abs(q - m) < 3 * se

    def test_symmetry_in_argument_swap(self):
        cfg = HcizConfig(nodes_per_angle=48)
        gbar = np.array([1.5, 0.2, -0.7])
        gam = np.array([2.2, 1.0, 0.1])
        a = log_hciz(gbar, gam, cfg)
        b = log_hciz(gam, gbar, cfg)
        assert a == pytest.approx(b, abs=1e-8)

    def test_simultaneous_permutation_symmetry(self):
        cfg = HcizConfig(nodes_per_angle=48)
        gbar = np.array([1.5, 0.2, -0.7])
        gam = np.array([2.2, 1.0, 0.1])
        perm = [2, 0, 1]
        a = log_hciz(gbar, gam, cfg)
        b = log_hciz(gbar[perm], gam[perm], cfg)
        assert a == pytest.approx(b, abs=1e-8)

    def test_jensen_lower_bound(self):
        # I >= exp(E_Haar[exponent]) = exp(sum(gbar) sum(gamma) / m)
        gbar = np.array([1.5, 0.2, -0.7])
        gam = np.array([2.2, 1.0, 0.1])
        lv = log_hciz(gbar, gam, HcizConfig(nodes_per_angle=48))
        assert lv >= gbar.sum() * gam.sum() / 3 - 1e-12

    def test_euler_requires_m3(self):
        with pytest.raises(ValueError):
            log_hciz(np.array([1.0, 0.0]), np.array([1.0, 0.0]),
                     HcizConfig(method="euler_quadrature"))

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(3)
        gbar = np.array([2.0, 0.5, -1.0])
        gams = np.sort(rng.uniform(-2, 2, (20, 3)), axis=1)[:, ::-1]
        batch = log_hciz_batch(gbar, gams, n_nodes=32)
        single = [_log_hciz_euler(gbar, g, 32) for g in gams]
        assert np.abs(batch - single).max() < 1e-12


class TestGeneralDensity:
    def test_spherical_mean_collapses_to_shifted_zero_mean(self):
        model = IsotropicModel(3, 1.2, 0.8)
        c = 0.9
        gam = np.array([2.0, 0.5, -1.0])
        spec = OrderedSpectrum(gam, c * np.ones(3))
        assert log_eigdensity_general(spec, model) == pytest.approx(
            log_eigdensity_zero_mean(gam - c, model), abs=1e-10
        )

    def test_mc_normalization(self):
        rng = np.random.default_rng(14)
        model = IsotropicModel(3, 2.0, 0.0)
        gbar = np.array([2.0, 1.0, 0.0])
        n = 15_000
        sd = 0.8
        z = np.sort(rng.standard_normal((n, 3)) * sd + gbar, axis=1)[:, ::-1]
        log_q = (
            norm.logpdf((z - gbar) / sd).sum(axis=1)
            - 3 * math.log(sd)
        )
        # proposal on the cone: sorting the shifted normal is not iid-symmetric,
        # so weight by the sum over permutations of the proposal density
        from itertools import permutations

        dens = np.zeros(n)
        for perm in permutations(range(3)):
            dens += np.exp(norm.logpdf((z[:, perm] - gbar) / sd).sum(axis=1))
        log_q = np.log(dens) - 3 * math.log(sd)
        diff = z - gbar
        quad = model.mu * (diff**2).sum(axis=1)
        v = np.prod(z[:, [0, 0, 1]] - z[:, [1, 2, 2]], axis=1)
        log_p = (
            math.log(normalizing_Z(3, model.mu, model.lam))
            + np.log(v)
            - quad
            - 2 * model.mu * z @ gbar
            + log_hciz_batch(2 * model.mu * gbar, z, n_nodes=24)
        )
        w = np.exp(log_p - log_q)
        est = w.mean()
        se = w.std(ddof=1) / math.sqrt(n)
        assert est == pytest.approx(1.0, abs=max(0.01, 3 * se))

    def test_matches_sampler_histogram(self):
        from isomat.stats import chi2_gof

        rng = np.random.default_rng(15)
        model = IsotropicModel(3, 2.0, 0.0)
        gbar = np.array([2.0, 1.0, 0.0])
        n = 30_000
        g = eigvals_descending(sample(np.diag(gbar), model, rng, size=n))
        edges = [np.quantile(g[:, i], np.linspace(0.02, 0.98, 4)) for i in range(3)]
        counts, _ = np.histogramdd(g, bins=edges)
        sub = 6
        probs = np.zeros_like(counts)
        for i in range(3):
            for j in range(3):
                for k in range(3):
                    xs = [np.linspace(edges[d][a], edges[d][a + 1], sub + 1)[:-1]
                          + np.diff(edges[d])[a] / (2 * sub)
                          for d, a in zip(range(3), (i, j, k))]
                    G1, G2, G3 = np.meshgrid(*xs, indexing="ij")
                    ga = np.stack([G1, G2, G3], axis=-1).reshape(-1, 3)
                    ok = (ga[:, 0] > ga[:, 1]) & (ga[:, 1] > ga[:, 2])
                    vol = np.prod([np.diff(edges[d])[a] for d, a in zip(range(3), (i, j, k))])
                    vals = np.zeros(len(ga))
                    if ok.any():
                        diff = ga[ok] - gbar
                        quad = model.mu * (diff**2).sum(axis=1)
                        v = np.prod(ga[ok][:, [0, 0, 1]] - ga[ok][:, [1, 2, 2]], axis=1)
                        vals[ok] = np.exp(
                            math.log(normalizing_Z(3, model.mu, model.lam))
                            + np.log(v) - quad - 2 * model.mu * ga[ok] @ gbar
                            + log_hciz_batch(2 * model.mu * gbar, ga[ok], n_nodes=24)
                        )
                    probs[i, j, k] = vals.mean() * vol
        stat, p, df = chi2_gof(counts.ravel(), probs.ravel(), n_total=n)
        assert p > 0.01, f"chi2 GOF failed: stat={stat:.1f} df={df} p={p:.4f}"

    def test_single_point_value_matches_api(self):
        model = IsotropicModel(3, 2.0, 0.3)
        spec = OrderedSpectrum(np.array([2.5, 1.0, -0.2]), np.array([2.0, 1.0, 0.0]))
        v = eigdensity_general(spec, model, HcizConfig(nodes_per_angle=48))
        assert v > 0


class TestEigvecConditional:
    def test_spherical_constant_in_R(self):
        rng = np.random.default_rng(5)
        spec = OrderedSpectrum(np.array([2.0, 1.0, 0.0]), np.ones(3))
        vals = [
            eigvec_conditional_logdensity(haar_orthogonal(3, rng), spec, mu=1.3)
            for _ in range(10)
        ]
        assert np.ptp(vals) < 1e-10

    def test_identity_maximizes(self):
        rng = np.random.default_rng(6)
        spec = OrderedSpectrum(np.array([2.0, 1.0, 0.0]), np.array([3.0, 1.5, 0.5]))
        at_id = eigvec_conditional_logdensity(np.eye(3), spec, mu=1.0)
        for _ in range(50):
            R = haar_orthogonal(3, rng)
            assert eigvec_conditional_logdensity(R, spec, mu=1.0) <= at_id + 1e-12

    def test_haar_average_recovers_hciz(self):
        rng = np.random.default_rng(7)
        mu = 0.8
        spec = OrderedSpectrum(np.array([1.5, 0.5, -0.5]), np.array([2.0, 1.0, 0.0]))
        O = haar_orthogonal(3, rng, size=60_000)
        expo = 2 * mu * np.einsum("kij,i,j->k", O**2, spec.gbar, spec.gamma)
        est = np.exp(expo).mean()
        se = np.exp(expo).std(ddof=1) / math.sqrt(len(expo))
        target = hciz(2 * mu * spec.gbar, spec.gamma, HcizConfig(nodes_per_angle=48))
        assert abs(est - target) < 3 * se

    def test_block_subgroup_invariance_with_ties(self):
        # gbar with a tied pair: conjugating by a block rotation leaves the
        # log density unchanged
        rng = np.random.default_rng(8)
        spec = OrderedSpectrum(np.array([2.0, 1.0, 0.0]), np.array([3.0, 1.0, 1.0]))
        R = haar_orthogonal(3, rng)
        th = 0.7
        block = np.eye(3)
        block[1:, 1:] = [[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]]
        a = eigvec_conditional_logdensity(R, spec, mu=1.1)
        b = eigvec_conditional_logdensity(block @ R, spec, mu=1.1)
        assert a == pytest.approx(b, abs=1e-10)

    def test_rejects_non_orthogonal(self):
        spec = OrderedSpectrum(np.array([2.0, 1.0, 0.0]), np.ones(3))
        with pytest.raises(ValueError):
            eigvec_conditional_logdensity(np.eye(3) * 1.01, spec, mu=1.0)


class TestAdFormulas:
    def test_centered_cdf_anchors(self):
        assert ad_cdf_centered(0.0, mu=2.0) == 0.0
        assert ad_cdf_centered(50.0, mu=2.0) == pytest.approx(1.0, abs=1e-12)
        assert ad_cdf_centered(-1.0, mu=2.0) == 0.0

    def test_centered_cdf_monotone(self):
        ts = np.linspace(0, 3, 200)
        vals = ad_cdf_centered(ts, mu=2.0)
        assert np.all(np.diff(vals) >= -1e-12)

    def test_centered_density_is_derivative(self):
        mu = 1.7
        ts = np.linspace(0.05, 2.0, 30)
        h = 1e-6
        num = (ad_cdf_centered(ts + h, mu) - ad_cdf_centered(ts - h, mu)) / (2 * h)
        assert np.allclose(ad_density_centered(ts, mu), num, rtol=1e-5, atol=1e-7)

    def test_centered_density_normalizes(self):
        val, _ = integrate.quad(lambda t: ad_density_centered(t, 2.0), 0, 10)
        assert val == pytest.approx(1.0, abs=1e-9)

    def test_convolved_cdf_structure(self):
        # lam enters only through the barycenter variance
        mu = 2.0
        ts = np.linspace(-1, 1.5, 7)
        direct = ad_cdf(ts, mu, 0.0)
        oracle = np.array([
            integrate.quad(
                lambda x, t=t: ad_cdf_centered(t - x, mu)
                * norm.pdf(x, scale=1 / math.sqrt(6 * mu)),
                -np.inf, np.inf,
            )[0]
            for t in ts
        ])
        assert np.allclose(direct, oracle, atol=1e-8)

    def test_convolved_cdf_limits_and_monotone(self):
        vals = ad_cdf(np.linspace(-3, 3, 100), 2.0, 1.0)
        assert np.all(np.diff(vals) >= -1e-12)
        assert ad_cdf(-30.0, 2.0, 1.0) == pytest.approx(0.0, abs=1e-12)
        assert ad_cdf(30.0, 2.0, 1.0) == pytest.approx(1.0, abs=1e-12)

    def test_convolved_cdf_against_sampler(self):
        mu, lam, n = 2.0, 1.0, 100_000
        rng = np.random.default_rng(23)
        g1 = eigvals_descending(
            sample(5.0 * np.eye(3), IsotropicModel(3, mu, lam), rng, size=n)
        )[:, 0]
        x = np.sort(g1 - 5.0)
        emp = np.arange(1, n + 1) / n
        sup = np.abs(ad_cdf(x, mu, lam) - emp).max()
        assert sup < 0.01


class TestAdRdJoint:
    def test_zero_when_unordered(self):
        assert ad_rd_joint_density(1.0, 2.0, mu=2.0) == 0.0

    def test_normalizes(self):
        mu, gbar = 2.0, 1.0
        val, _ = integrate.dblquad(
            lambda rd, g1: ad_rd_joint_density(g1, rd, mu, 0.0, gbar),
            gbar - 4, gbar + 4, lambda g1: gbar - 4, lambda g1: g1,
        )
        assert val == pytest.approx(1.0, abs=0.01)

    def test_marginal_matches_ad_density(self):
        mu, lam, gbar = 2.0, 0.0, 1.0
        for g1 in [0.8, 1.0, 1.3, 1.8]:
            marg, _ = integrate.quad(
                lambda rd: ad_rd_joint_density(g1, rd, mu, lam, gbar), g1 - 5, g1
            )
            h = 1e-5
            dens = (ad_cdf(g1 + h, mu, lam, gbar) - ad_cdf(g1 - h, mu, lam, gbar)) / (2 * h)
            assert marg == pytest.approx(dens, rel=0.01)
