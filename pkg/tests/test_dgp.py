"""
Tests for the dgp module: covariance settings, loading schemes, simulation and config documents
"""

import unittest

import numpy as np

from src.basis_algebra import build_fourier_basis
from src.dgp import (
    NoiseSpec,
    build_model_config,
    make_covariance,
    make_loadings,
    model_config_for_setting,
    model_config_from_dict,
    model_config_to_dict,
    sample_haar_orthogonal,
    simulate_null_panel,
    simulate_panel,
)
from src.errors import ConfigError, DimensionError
from src.operator_calculus import build_omega
from src.rank_analyzer import build_rank_report, trace_ce_omega
from src.spectral_engine import w_matrix
from src.utils import make_rng


class TestCovarianceSettings(unittest.TestCase):
    """Test cases for make_covariance"""

    def test_delocalized_flat(self):
        """Flat eigenvalues 1/q"""
        cov = make_covariance('delocalized_flat', 20)
        np.testing.assert_allclose(cov.c, np.full(20, 0.05))
        self.assertAlmostEqual(cov.hs_norm ** 2, 0.05)

    def test_localized_geometric(self):
        """Geometric eigenvalues renormalized to sum to one"""
        cov = make_covariance('localized_geometric', 20)
        self.assertAlmostEqual(cov.c.sum(), 1.0)
        np.testing.assert_allclose(cov.c[1:] / cov.c[:-1], 0.5)

    def test_localized_rank2(self):
        """Two eigenvalues of one half"""
        cov = make_covariance('localized_rank2', 5)
        np.testing.assert_allclose(cov.c, [0.5, 0.5, 0.0, 0.0, 0.0])
        self.assertAlmostEqual(cov.hs_norm ** 2, 0.5)

    def test_custom(self):
        """Custom eigenvalues are normalized and validated"""
        cov = make_covariance('custom', 3, c=[2.0, 1.0, 1.0])
        np.testing.assert_allclose(cov.c, [0.5, 0.25, 0.25])
        with self.assertRaises(ConfigError):
            make_covariance('custom', 3)
        with self.assertRaises(ConfigError):
            make_covariance('custom', 3, c=[1.0, -1.0, 1.0])
        with self.assertRaises(ConfigError):
            make_covariance('custom', 3, c=[0.0, 0.0, 0.0])
        with self.assertRaises(ConfigError):
            make_covariance('spiky', 3)


class TestLoadings(unittest.TestCase):
    """Test cases for the loading schemes and Haar sampling"""

    def test_haar_orthogonal(self):
        """Haar draws are orthogonal"""
        Q = sample_haar_orthogonal(6, 1)
        np.testing.assert_allclose(Q.T @ Q, np.eye(6), atol=1e-12)

    def test_haar_symmetric_entries(self):
        """Mean of the first entry over 10^4 draws is zero within 4 standard errors"""
        rng = make_rng(5, 0, 'loadings')
        draws = np.array([sample_haar_orthogonal(3, rng)[0, 0] for _ in range(10000)])
        standard_error = draws.std() / np.sqrt(draws.size)
        self.assertLess(abs(draws.mean()), 4 * standard_error)

    def test_low_eff_rank_spectrum(self):
        """A_n' A_n has eigenvalues p 2^-k for every n"""
        spec = make_loadings('low_eff_rank', p=10, K=4, q=3, seed=2)
        expected = 10 * 2.0 ** -np.arange(1, 5)
        for n in range(3):
            eigenvalues = np.sort(np.linalg.eigvalsh(spec.A[n].T @ spec.A[n]))[::-1]
            np.testing.assert_allclose(eigenvalues, expected, rtol=1e-10)

    def test_low_eff_rank_ratio(self):
        """At K = 2 the squared trace-to-HS ratio of B_n is 1.8"""
        spec = make_loadings('low_eff_rank', p=30, K=2, q=1, seed=4)
        eigenvalues = np.linalg.eigvalsh(spec.A[0].T @ spec.A[0])
        self.assertAlmostEqual(eigenvalues.sum() ** 2 / np.sum(eigenvalues ** 2), 1.8, places=10)

    def test_low_eff_rank_needs_k_below_p(self):
        """K > p is rejected"""
        with self.assertRaises(ConfigError):
            make_loadings('low_eff_rank', p=3, K=4, q=2, seed=0)

    def test_full_rank(self):
        """Gaussian loadings with p=100, K=50 have rank 50"""
        spec = make_loadings('full_rank', p=100, K=50, q=2, seed=0)
        for n in range(2):
            self.assertEqual(np.linalg.matrix_rank(spec.A[n], tol=1e-10 * np.linalg.norm(spec.A[n], 2)), 50)

    def test_reduced_rank(self):
        """Reduced-rank loadings have the requested rank"""
        spec = make_loadings('reduced_rank', p=20, K=10, q=2, seed=0, rank=3)
        self.assertEqual(spec.rank, 3)
        for n in range(2):
            self.assertEqual(np.linalg.matrix_rank(spec.A[n]), 3)

    def test_loadings_reproducible(self):
        """Same seed, same loadings"""
        a = make_loadings('full_rank', p=5, K=3, q=2, seed=9).A
        b = make_loadings('full_rank', p=5, K=3, q=2, seed=9).A
        np.testing.assert_array_equal(a, b)

    def test_custom_loadings(self):
        """Custom arrays are checked against (q, p, K)"""
        with self.assertRaises(ConfigError):
            make_loadings('custom', p=2, K=2, q=2, seed=0)
        with self.assertRaises(ConfigError):
            make_loadings('custom', p=2, K=2, q=2, seed=0, A=np.ones((2, 2, 3)))


class TestSimulation(unittest.TestCase):
    """Test cases for simulate_panel and simulate_null_panel"""

    def setUp(self):
        """Set up a small Setting 1 model"""
        self.cfg = model_config_for_setting(1, K=3, T=20, p=6, q=4, seed=11)

    def test_shapes(self):
        """Panel, factors, innovations and noise have the model dimensions"""
        result = simulate_panel(self.cfg, 0)
        self.assertEqual(result['panel'].coeffs.shape, (6, 20, 4))
        self.assertEqual(result['factors'].shape, (3, 20, 4))
        self.assertEqual(result['noise'].shape, (6, 20, 4))
        np.testing.assert_allclose(result['factors'], np.cumsum(result['innovations'], axis=1))
        self.assertEqual(result['panel'].provenance['replicate'], 0)

    def test_panel_is_loading_times_factors_plus_noise(self):
        """X_it = sum_k Psi_ik F_kt + zeta_it coefficientwise"""
        result = simulate_panel(self.cfg, 2)
        A, F = self.cfg.loadings.A, result['factors']
        i, t = 4, 13
        expected = np.array([A[n, i] @ F[:, t, n] for n in range(4)]) + result['noise'][i, t]
        np.testing.assert_allclose(result['panel'].coeffs[i, t], expected, atol=1e-12)

    def test_reproducible_replicates(self):
        """Same replicate repeats exactly, other replicates differ"""
        a = simulate_panel(self.cfg, 3)['panel'].coeffs
        b = simulate_panel(self.cfg, 3)['panel'].coeffs
        c = simulate_panel(self.cfg, 4)['panel'].coeffs
        np.testing.assert_array_equal(a, b)
        self.assertFalse(np.allclose(a, c))

    def test_scalar_random_walk(self):
        """K=p=q=1, a=1, no noise: increments have mean 0 and variance c_1"""
        cfg = build_model_config(10001, 1, 1, 1, 'custom', 'custom', seed=3, c=[1.0],
                                 A=np.ones((1, 1, 1)), noise_variances=[0.0])
        increments = np.diff(simulate_panel(cfg, 0)['panel'].coeffs[0, :, 0])
        self.assertLess(abs(increments.mean()), 4 * np.sqrt(1.0 / increments.size))
        self.assertLess(abs(increments.var() - 1.0), 0.06)

    def test_bilinear_form_moment(self):
        """E[v' W v] = <C_eps Omega> for a fixed unit vector over 500 replicates, within 3 standard errors"""
        cfg = model_config_for_setting(3, K=2, T=32, p=8, q=4, seed=21)
        Om = build_omega(cfg.loadings)
        target = trace_ce_omega(cfg.cov, Om)
        v = make_rng(99, 0, 'null').standard_normal(32)
        v /= np.linalg.norm(v)

        samples = np.array([
            v @ w_matrix(simulate_panel(cfg, r)['innovations'], Om) @ v for r in range(500)
        ])
        standard_error = samples.std(ddof=1) / np.sqrt(samples.size)
        self.assertLess(abs(samples.mean() - target), 3 * standard_error)

    def test_null_panel(self):
        """Null panels are i.i.d. and reproducible"""
        ctx = build_fourier_basis(3, 13)
        a = simulate_null_panel(5, 7, ctx, seed=1)
        b = simulate_null_panel(5, 7, ctx, seed=1)
        np.testing.assert_array_equal(a.coeffs, b.coeffs)
        self.assertEqual(a.coeffs.shape, (5, 7, 3))
        self.assertEqual(a.provenance['source'], 'null')


class TestModelConfig(unittest.TestCase):
    """Test cases for ModelConfig construction and JSON documents"""

    def test_noise_spec(self):
        """Default noise variances 2^-n times the scale"""
        noise = NoiseSpec.default(3, scale=4.0)
        np.testing.assert_allclose(noise.effective_variances, [2.0, 1.0, 0.5])
        with self.assertRaises(ConfigError):
            NoiseSpec(np.array([1.0, -1.0]))

    def test_settings(self):
        """Settings map to their covariance and loading scheme"""
        cfg = model_config_for_setting(6, K=2, T=10, p=5, q=3)
        self.assertEqual((cfg.cov.setting, cfg.loadings.scheme, cfg.setting), ('localized_rank2', 'low_eff_rank', 6))
        with self.assertRaises(ConfigError):
            model_config_for_setting(7)

    def test_validation(self):
        """T < 2 and inconsistent loadings are rejected"""
        with self.assertRaises(ConfigError):
            model_config_for_setting(1, K=2, T=1, p=3, q=2)
        cfg = model_config_for_setting(1, K=2, T=5, p=3, q=2)
        other = make_loadings('full_rank', p=4, K=2, q=2, seed=0, ctx=cfg.context)
        with self.assertRaises(DimensionError):
            type(cfg)(cfg.T, cfg.p, cfg.q, cfg.K, cfg.cov, other, cfg.noise)

    def test_round_trip(self):
        """to_dict then from_dict rebuilds the same model"""
        cfg = build_model_config(12, 4, 3, 2, 'custom', 'reduced_rank', seed=5, c=[3.0, 2.0, 1.0],
                                 rank=2, noise_scale=0.5)
        rebuilt = model_config_from_dict(model_config_to_dict(cfg))
        np.testing.assert_array_equal(rebuilt.loadings.A, cfg.loadings.A)
        np.testing.assert_allclose(rebuilt.cov.c, cfg.cov.c)
        np.testing.assert_allclose(rebuilt.noise.effective_variances, cfg.noise.effective_variances)
        self.assertEqual((rebuilt.T, rebuilt.p, rebuilt.q, rebuilt.K, rebuilt.seed), (12, 4, 3, 2, 5))

    def test_setting_shorthand(self):
        """A document may name a setting instead of spelling out blocks"""
        cfg = model_config_from_dict({'setting': 2, 'T': 10, 'p': 6, 'q': 3, 'K': 2, 'seed': 1})
        self.assertEqual((cfg.cov.setting, cfg.loadings.scheme), ('delocalized_flat', 'low_eff_rank'))
        self.assertEqual(model_config_from_dict({'setting': 2, 'T': 10, 'p': 6, 'q': 3, 'K': 2}, seed=8).seed, 8)

    def test_explicit_blocks_override_setting(self):
        """A setting number only survives when the explicit blocks are that setting's pair"""
        base = {'T': 10, 'p': 6, 'q': 3, 'K': 2}
        matching = dict(base, setting=5, covariance={'setting': 'localized_rank2'}, loadings={'scheme': 'full_rank'})
        self.assertEqual(model_config_from_dict(matching).setting, 5)

        overridden = dict(base, setting=1, covariance={'setting': 'localized_rank2'}, loadings={'scheme': 'full_rank'})
        with self.assertLogs('src.dgp', level='WARNING'):
            cfg = model_config_from_dict(overridden)
        self.assertIsNone(cfg.setting)
        self.assertIsNone(build_rank_report(cfg, 'structured').order_tag)

        named = model_config_for_setting(4, K=2, T=10, p=6, q=3)
        self.assertEqual(model_config_from_dict(model_config_to_dict(named)).setting, 4)

    def test_document_errors(self):
        """Missing fields, unknown settings and versions are configuration errors"""
        with self.assertRaises(ConfigError):
            model_config_from_dict({'setting': 1, 'T': 10, 'p': 6, 'q': 3})
        with self.assertRaises(ConfigError):
            model_config_from_dict({'setting': 9, 'T': 10, 'p': 6, 'q': 3, 'K': 2})
        with self.assertRaises(ConfigError):
            model_config_from_dict({'schema_version': 2, 'setting': 1, 'T': 10, 'p': 6, 'q': 3, 'K': 2})
        with self.assertRaises(ConfigError):
            model_config_from_dict({'T': 10, 'p': 6, 'q': 3, 'K': 2, 'covariance': {'setting': 'delocalized_flat'}})


if __name__ == '__main__':
    unittest.main()
