"""
Tests for the data_pipeline module: CSV ingestion, tail pooling and log smoothing
"""

import os
import shutil
import tempfile
import unittest

import numpy as np

from src.basis_algebra import build_fourier_basis
from src.data_pipeline import (
    RawPanel,
    aggregate_tail,
    load_panel_csv,
    log_smooth,
    order_labels,
    raw_panel_to_frame,
)
from src.errors import (
    ContextMismatchError,
    CsvParseError,
    DataError,
    DuplicateKeyError,
    InconsistentDimensionsError,
)
from src.utils import export_frame_to_csv


class TestCsvIngestion(unittest.TestCase):
    """Test cases for load_panel_csv"""

    def setUp(self):
        """Set up a scratch directory"""
        self.tmp_dir = tempfile.mkdtemp()

    def tearDown(self):
        """Clean up the scratch directory"""
        shutil.rmtree(self.tmp_dir, ignore_errors=True)

    def write(self, name, text):
        path = os.path.join(self.tmp_dir, name)
        with open(path, 'w', encoding='utf-8') as f:
            f.write(text)
        return path

    def long_text(self):
        rows = ['series,time,grid,value']
        for s in ['b', 'a']:
            for t in ['2001', '2000']:
                for g in ['10', '0', '5']:
                    rows.append(f"{s},{t},{g},{int(t) - 1999}.{g}")
        return '\n'.join(rows) + '\n'

    def test_long_schema(self):
        """Cells land in place; time and grid are sorted numerically"""
        panel = load_panel_csv(self.write('long.csv', self.long_text()), 'long')
        self.assertEqual(panel.shape, (2, 2, 3))
        self.assertEqual(panel.series_ids, ['b', 'a'])
        self.assertEqual(panel.times, ['2000', '2001'])
        self.assertEqual(panel.grid_labels, ['0', '5', '10'])
        self.assertAlmostEqual(panel.values[1, 0, 2], 1.10)
        self.assertAlmostEqual(panel.values[0, 1, 1], 2.5)
        self.assertFalse(panel.mask.any())
        self.assertIsNone(panel.weights)
        self.assertEqual(panel.provenance['schema'], 'long')

    def test_long_schema_weights_and_missing(self):
        """Weights are read; NA cells are masked"""
        text = (
            'series,time,grid,value,weight\n'
            'a,1,0,0.5,10\n'
            'a,1,1,NA,20\n'
            'a,2,0,0.4,10\n'
            'a,2,1,0.3,30\n'
        )
        panel = load_panel_csv(self.write('weights.csv', text), 'long')
        self.assertTrue(panel.mask[0, 0, 1])
        self.assertEqual(int(panel.mask.sum()), 1)
        self.assertEqual(panel.weights[0, 1, 1], 30.0)

    def test_wide_schema(self):
        """Wide rows are curves; grid columns are reordered numerically"""
        text = 'series,time,10,0,5\nx,1,3,1,2\nx,2,6,4,5\n'
        panel = load_panel_csv(self.write('wide.csv', text), 'wide')
        self.assertEqual(panel.grid_labels, ['0', '5', '10'])
        np.testing.assert_array_equal(panel.values[0], [[1, 2, 3], [4, 5, 6]])

    def test_duplicate_cell(self):
        """A repeated (series, time, grid) key names its line"""
        text = 'series,time,grid,value\na,1,0,1.0\na,1,1,1.0\na,1,0,2.0\n'
        with self.assertRaises(DuplicateKeyError) as context:
            load_panel_csv(self.write('dup.csv', text), 'long')
        self.assertIn('line 4', str(context.exception))

    def test_non_numeric_value(self):
        """Non-numeric values raise a parse error with the line number"""
        text = 'series,time,grid,value\na,1,0,1.0\na,1,1,abc\n'
        with self.assertRaises(CsvParseError) as context:
            load_panel_csv(self.write('bad.csv', text), 'long')
        self.assertEqual(context.exception.line, 3)

    def test_malformed_row(self):
        """Rows with extra fields raise a parse error with the line number"""
        text = 'series,time,grid,value\na,1,0,1.0\na,1,1,1.0,9\n'
        with self.assertRaises(CsvParseError) as context:
            load_panel_csv(self.write('malformed.csv', text), 'long')
        self.assertEqual(context.exception.line, 3)

        truncated = 'series,time,grid,value\na,1,0,0.1\na,1,1,0.2\na,1\n'
        with self.assertRaises(CsvParseError) as context:
            load_panel_csv(self.write('truncated.csv', truncated), 'long')
        self.assertEqual(context.exception.line, 4)

        short_wide = 'series,time,0,1\na,1,1,2\na,2,3\n'
        with self.assertRaises(CsvParseError) as context:
            load_panel_csv(self.write('short_wide.csv', short_wide), 'wide')
        self.assertEqual(context.exception.line, 3)

    def test_empty_keys(self):
        """Rows with an empty series, time or grid field are rejected"""
        text = 'series,time,grid,value\na,1,0,0.1\na,1, ,0.2\n'
        with self.assertRaises(CsvParseError) as context:
            load_panel_csv(self.write('empty_grid.csv', text), 'long')
        self.assertEqual(context.exception.line, 3)

        wide = 'series,time,0,1\na,1,1,2\n,2,3,4\n'
        with self.assertRaises(CsvParseError) as context:
            load_panel_csv(self.write('empty_series.csv', wide), 'wide')
        self.assertEqual(context.exception.line, 3)

    def test_missing_columns(self):
        """Long files need series, time, grid and value"""
        with self.assertRaises(CsvParseError):
            load_panel_csv(self.write('cols.csv', 'series,time,value\na,1,1.0\n'), 'long')

    def test_incomplete_panels(self):
        """Missing curves and missing wide rows are dimension errors"""
        text = 'series,time,grid,value\na,1,0,1.0\na,2,0,NA\n'
        with self.assertRaises(InconsistentDimensionsError):
            load_panel_csv(self.write('empty_curve.csv', text), 'long')

        wide = 'series,time,0,1\na,1,1,2\nb,2,3,4\n'
        with self.assertRaises(InconsistentDimensionsError):
            load_panel_csv(self.write('holes.csv', wide), 'wide')

    def test_missing_file_and_schema(self):
        """Unknown files and schemas are data errors"""
        with self.assertRaises(DataError):
            load_panel_csv(os.path.join(self.tmp_dir, 'nope.csv'))
        with self.assertRaises(DataError):
            load_panel_csv(self.write('long.csv', self.long_text()), 'tall')

    def test_frame_round_trip(self):
        """A panel written in either layout loads back unchanged"""
        panel = load_panel_csv(self.write('long.csv', self.long_text()), 'long')
        for schema in ['long', 'wide']:
            path = export_frame_to_csv(raw_panel_to_frame(panel, schema), os.path.join(self.tmp_dir, f"rt_{schema}.csv"))
            loaded = load_panel_csv(path, schema)
            np.testing.assert_allclose(loaded.values, panel.values)
            self.assertEqual(loaded.grid_labels, panel.grid_labels)

    def test_order_labels(self):
        """Numeric labels (with a trailing +) sort numerically, others keep their order"""
        self.assertEqual(order_labels(['10', '2', '110+', '2']), ['2', '10', '110+'])
        self.assertEqual(order_labels(['UK', 'FR', 'UK']), ['UK', 'FR'])


class TestTailAndSmoothing(unittest.TestCase):
    """Test cases for aggregate_tail and log_smooth"""

    def setUp(self):
        """Set up a 1 x 1 x 4 panel on ages 0..3"""
        values = np.array([[[1.0, 2.0, 3.0, 5.0]]])
        self.panel = RawPanel(['a'], ['2000'], ['0', '1', '2', '3'], values, np.zeros_like(values, dtype=bool))

    def test_tail_mean(self):
        """Without weights the tail is the mean of the pooled values"""
        pooled = aggregate_tail(self.panel, '2')
        self.assertEqual(pooled.grid_labels, ['0', '1', '2+'])
        np.testing.assert_allclose(pooled.values[0, 0], [1.0, 2.0, 4.0])
        self.assertEqual(pooled.provenance['tail_aggregation']['pooled_labels'], ['2', '3'])

    def test_tail_weighted(self):
        """With weights the tail is the weighted mean"""
        weights = np.array([[[1.0, 1.0, 3.0, 1.0]]])
        panel = RawPanel(['a'], ['2000'], ['0', '1', '2', '3'], self.panel.values, self.panel.mask, weights)
        pooled = aggregate_tail(panel, '2')
        self.assertAlmostEqual(pooled.values[0, 0, 2], (3.0 * 3.0 + 5.0) / 4.0)
        self.assertEqual(pooled.weights[0, 0, 2], 4.0)

    def test_tail_identity_and_errors(self):
        """Cutoff at the last label changes nothing; unknown labels are rejected"""
        self.assertIs(aggregate_tail(self.panel, '3'), self.panel)
        with self.assertRaises(DataError):
            aggregate_tail(self.panel, '7')

    def test_log_smooth_recovers_coefficients(self):
        """exp of a band-limited curve smooths back to its coefficients"""
        ctx = build_fourier_basis(3, 13)
        coeffs = np.array([0.5, -0.2, 0.1])
        values = np.exp(ctx.eval_matrix @ coeffs)[None, None, :]
        labels = [str(j) for j in range(13)]
        panel = RawPanel(['a'], ['1'], labels, values, np.zeros_like(values, dtype=bool))

        smoothed = log_smooth(panel, ctx)
        np.testing.assert_allclose(smoothed.coeffs[0, 0], coeffs, atol=1e-10)
        self.assertEqual(smoothed.provenance['interpolated_cells'], [])
        self.assertEqual(smoothed.provenance['transform'], 'log')

    def test_log_smooth_interpolates(self):
        """Nonpositive and missing cells are interpolated and listed"""
        ctx = build_fourier_basis(1, 5)
        values = np.array([[[1.0, 0.0, 4.0, np.nan, 4.0]]])
        mask = np.isnan(values)
        panel = RawPanel(['a'], ['1'], ['0', '1', '2', '3', '4'], values, mask)

        with self.assertLogs('src.data_pipeline', level='WARNING'):
            smoothed = log_smooth(panel, ctx)
        cells = smoothed.provenance['interpolated_cells']
        self.assertEqual([cell['grid'] for cell in cells], ['1', '3'])
        self.assertEqual([cell['nonpositive'] for cell in cells], [True, False])
        self.assertTrue(np.all(np.isfinite(smoothed.coeffs)))

    def test_log_smooth_errors(self):
        """Grid mismatch and curves without positive values are rejected"""
        with self.assertRaises(ContextMismatchError):
            log_smooth(self.panel, build_fourier_basis(1, 5))

        values = np.array([[[0.0, -1.0, 0.0, 0.0, 0.0]]])
        panel = RawPanel(['a'], ['1'], ['0', '1', '2', '3', '4'], values, np.zeros_like(values, dtype=bool))
        with self.assertRaises(DataError):
            log_smooth(panel, build_fourier_basis(1, 5))


if __name__ == '__main__':
    unittest.main()
