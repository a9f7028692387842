"""
Tests for the spurious_diagnostics module: limit vectors, alignments, limit laws,
eigenvector autocorrelations and spectral reports
"""

import json
import unittest

import numpy as np

from src.errors import ConfigError, DimensionError, NumericError
from src.spectral_engine import eigendecompose, gram_matrix
from src.basis_algebra import FunctionalPanel, build_fourier_basis
from src.spurious_diagnostics import (
    alignment,
    build_report,
    eigenvector_acf,
    report_from_dict,
    report_to_dict,
    split_index,
    spurious_vector,
    theory_eigenvalue,
    theory_share,
)


class TestSpuriousLimits(unittest.TestCase):
    """Test cases for d_k, the limit laws and alignment"""

    def test_spurious_vector(self):
        """d_k is unit norm and nearly orthogonal to d_j"""
        T = 50
        D = np.column_stack([spurious_vector(k, T) for k in range(1, 10)])
        gram = D.T @ D
        np.testing.assert_allclose(np.diag(gram), 1.0, atol=1e-12)
        self.assertLessEqual(np.abs(gram - np.diag(np.diag(gram))).max(), 2.0 / T + 1e-12)
        self.assertAlmostEqual(spurious_vector(1, T)[-1], -np.sqrt(2.0 / T))

    def test_spurious_vector_range(self):
        """Only 1 <= k < T is defined"""
        with self.assertRaises(DimensionError):
            spurious_vector(0, 10)
        with self.assertRaises(DimensionError):
            spurious_vector(10, 10)

    def test_alignment(self):
        """d_k aligns perfectly with itself and not with d_j"""
        T = 100
        self.assertAlmostEqual(alignment(spurious_vector(2, T), 2), 1.0)
        self.assertAlmostEqual(alignment(-spurious_vector(2, T), 2), 1.0)
        self.assertLess(alignment(spurious_vector(4, T), 2), 1e-10)
        with self.assertRaises(DimensionError):
            alignment(2 * spurious_vector(2, T), 2)

    def test_alignment_null_distribution(self):
        """Random unit vectors at T=200 align weakly with d_1"""
        rng = np.random.default_rng(8)
        draws = []
        for _ in range(4000):
            u = rng.standard_normal(200)
            draws.append(alignment(u / np.linalg.norm(u), 1))
        draws = np.array(draws)
        self.assertAlmostEqual(draws.mean(), np.sqrt(2.0 / (np.pi * 200)), delta=0.01)
        self.assertGreaterEqual(np.mean(draws < 0.2), 0.99)

    def test_theory_share(self):
        """Shares 6/(k pi)^2 sum to one over all k"""
        self.assertAlmostEqual(theory_share(1), 6.0 / np.pi ** 2)
        self.assertAlmostEqual(sum(theory_share(k) for k in range(1, 20001)), 1.0, places=4)
        with self.assertRaises(DimensionError):
            theory_share(0)

    def test_theory_eigenvalue(self):
        """T^2/(k^2 pi^2 p) <C_eps Omega>"""
        self.assertAlmostEqual(theory_eigenvalue(2, 200, 100, 3.0), 200 ** 2 / (4 * np.pi ** 2 * 100) * 3.0)
        with self.assertRaises(NumericError):
            theory_eigenvalue(1, 200, 100, 0.0)


class TestAutocorrelation(unittest.TestCase):
    """Test cases for eigenvector_acf and split_index"""

    def test_cosine_is_persistent(self):
        """d_1 at T=200 has lag-1 autocorrelation above 0.95"""
        self.assertGreater(eigenvector_acf(spurious_vector(1, 200), 5)[0], 0.95)

    def test_white_noise_is_not(self):
        """White noise has lag-1 autocorrelation inside the 2/sqrt(T) band"""
        u = np.random.default_rng(3).standard_normal(400)
        values = eigenvector_acf(u, 10)
        self.assertEqual(values.shape, (10,))
        self.assertLess(abs(values[0]), 0.2)

    def test_acf_errors(self):
        """Constant vectors and lags out of range are rejected"""
        with self.assertRaises(NumericError):
            eigenvector_acf(np.ones(20), 3)
        with self.assertRaises(DimensionError):
            eigenvector_acf(np.arange(5.0), 5)

    def test_split_index(self):
        """Split counts the leading run above the cutoff"""
        self.assertEqual(split_index([0.9, 0.8, 0.3, 0.7]), 2)
        self.assertEqual(split_index([0.1, 0.9]), 0)
        self.assertEqual(split_index([0.9, 0.9], cutoff=0.95), 0)
        self.assertEqual(split_index([0.6, 0.7, 0.8]), 3)


class TestSpectralReport(unittest.TestCase):
    """Test cases for build_report and its JSON form"""

    def setUp(self):
        """Set up an eigendecomposition of a random-walk panel"""
        rng = np.random.default_rng(12)
        ctx = build_fourier_basis(2, 9)
        walks = np.cumsum(rng.standard_normal((30, 60, 2)), axis=1)
        self.panel = FunctionalPanel(walks, ctx)
        self.eig = eigendecompose(gram_matrix(self.panel), 5)

    def test_report_fields(self):
        """Shares sum to one and lists have consistent lengths"""
        report = build_report(self.eig, 30, trace_CeOm=2.0, max_lag=10, config_hash='abc')
        self.assertAlmostEqual(sum(report.variance_shares), 1.0)
        self.assertEqual(len(report.alignments), 5)
        self.assertEqual(len(report.acf), 5)
        self.assertEqual(len(report.acf[0]), 10)
        self.assertEqual(len(report.theory_eigenvalues), 5)
        self.assertAlmostEqual(report.white_noise_band, 2.0 / np.sqrt(60))
        self.assertEqual(report.persistent, [row[0] >= 0.5 for row in report.acf])
        self.assertEqual(report.split, split_index(report.acf_lag1))
        self.assertFalse(report.degenerate)
        self.assertTrue(report.persistent[0])

    def test_scale_invariance(self):
        """Rescaling every curve by c leaves shapes and shares alone and scales eigenvalues by c^2"""
        base = build_report(self.eig, 30, max_lag=10)
        for c in [0.01, 3.0, -2.5]:
            scaled = build_report(eigendecompose(gram_matrix(self.panel.scaled(c)), 5), 30, max_lag=10)
            np.testing.assert_allclose(scaled.alignments, base.alignments, atol=1e-9)
            np.testing.assert_allclose(scaled.variance_shares, base.variance_shares, atol=1e-9)
            np.testing.assert_allclose(scaled.eigenvalues, c ** 2 * np.asarray(base.eigenvalues),
                                       rtol=1e-9, atol=1e-9 * c ** 2 * base.eigenvalues[0])
            np.testing.assert_allclose(scaled.acf_lag1, base.acf_lag1, atol=1e-9)
            self.assertEqual(scaled.split, base.split)

    def test_degenerate_spectrum(self):
        """A zero Gram matrix gives zero shares and no autocorrelations"""
        T = 6
        eig = {'values': np.zeros(T), 'vectors': np.eye(T)[:, :3]}
        report = build_report(eig, 4)
        self.assertTrue(report.degenerate)
        self.assertEqual(report.variance_shares, [0.0] * T)
        self.assertEqual(report.acf, [])
        self.assertIsNone(report.split)
        self.assertIsNone(report.theory_eigenvalues)

    def test_constant_eigenvector(self):
        """A constant eigenvector gets a zero autocorrelation row"""
        T = 6
        vectors = np.column_stack([np.full(T, 1.0 / np.sqrt(T)), spurious_vector(1, T)])
        eig = {'values': np.array([2.0, 1.0, 0.0, 0.0, 0.0, 0.0]), 'vectors': vectors}
        with self.assertLogs('src.spurious_diagnostics', level='WARNING'):
            report = build_report(eig, 4, max_lag=3)
        self.assertEqual(report.acf[0], [0.0, 0.0, 0.0])
        self.assertEqual(report.split, 0)

    def test_json_round_trip(self):
        """Report survives JSON serialization"""
        report = build_report(self.eig, 30, trace_CeOm=2.0, max_lag=10, config_hash='abc')
        rebuilt = report_from_dict(json.loads(json.dumps(report_to_dict(report))))
        self.assertEqual(rebuilt, report)

    def test_schema_version(self):
        """Unknown report versions are rejected"""
        doc = report_to_dict(build_report(self.eig, 30))
        doc['schema_version'] = 99
        with self.assertRaises(ConfigError):
            report_from_dict(doc)


if __name__ == '__main__':
    unittest.main()
