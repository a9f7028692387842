"""
Ingestion of discretized functional panels (mortality-style rates on an age
grid) and their reduction to basis coefficients.
"""

import csv
import logging
import os
import re
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from src.basis_algebra import BasisContext, FunctionalPanel, project_samples
from src.errors import (
    ContextMismatchError,
    CsvParseError,
    DataError,
    DuplicateKeyError,
    InconsistentDimensionsError,
)

logger = logging.getLogger(__name__)

LONG_COLUMNS = ['series', 'time', 'grid', 'value']
KEY_COLUMNS = ['series', 'time']
MISSING_TOKENS = {'', 'na', 'nan', 'null'}


@dataclass
class RawPanel:
    """p x T x m panel of gridded values with a missing-cell mask"""

    series_ids: List[str]
    times: List[str]
    grid_labels: List[str]
    values: np.ndarray
    mask: np.ndarray
    weights: Optional[np.ndarray] = None
    provenance: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        shape = (len(self.series_ids), len(self.times), len(self.grid_labels))
        if self.values.shape != shape or self.mask.shape != shape:
            raise InconsistentDimensionsError(
                f"Values {self.values.shape} and mask {self.mask.shape} do not match labels {shape}"
            )
        if self.weights is not None and self.weights.shape != shape:
            raise InconsistentDimensionsError(f"Weights {self.weights.shape} do not match labels {shape}")
        present = self.values[~self.mask]
        if np.any(~np.isfinite(present)):
            raise DataError("Present values must be finite")

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.values.shape


def _label_key(label: str) -> Optional[float]:
    """Numeric value of a label such as '1990', '45' or '110+'"""
    try:
        return float(label.strip().rstrip('+'))
    except ValueError:
        return None


def order_labels(labels: List[str]) -> List[str]:
    """
    Unique labels, numerically sorted when every label is numeric
    (a trailing '+' is allowed), otherwise in first-appearance order
    """
    unique = list(dict.fromkeys(labels))
    keys = [_label_key(label) for label in unique]
    if all(key is not None for key in keys):
        return [label for _, label in sorted(zip(keys, unique), key=lambda pair: pair[0])]
    return unique


def _parse_value(text: str, line: int, column: str) -> float:
    if text.strip().lower() in MISSING_TOKENS:
        return np.nan
    try:
        return float(text)
    except ValueError:
        raise CsvParseError(f"column '{column}' holds non-numeric value {text!r}", line=line)


def _read_frame(path: str) -> pd.DataFrame:
    if not os.path.exists(path):
        raise DataError(f"Data file not found: {path}")

    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding='utf-8')
    except pd.errors.ParserError as e:
        match = re.search(r'line (\d+)', str(e))
        raise CsvParseError(f"malformed row ({e})", line=int(match.group(1)) if match else None)
    except (pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise CsvParseError(f"unreadable CSV: {e}")

    frame.columns = [str(column).strip() for column in frame.columns]
    _reject_short_rows(path, len(frame.columns))
    return frame.fillna('')


def _reject_short_rows(path: str, width: int) -> None:
    """Rows with fewer fields than the header are truncated records"""
    with open(path, newline='', encoding='utf-8') as f:
        reader = csv.reader(f)
        next(reader, None)
        for fields in reader:
            if fields and len(fields) < width:
                raise CsvParseError(f"row has {len(fields)} fields, header has {width}", line=reader.line_num)


def _reject_empty_keys(frame: pd.DataFrame, columns: List[str]) -> None:
    for row_number, row in enumerate(frame[columns].itertuples(index=False)):
        empty = [column for column, text in zip(columns, row) if not str(text).strip()]
        if empty:
            raise CsvParseError(f"empty key field(s) {empty}", line=row_number + 2)


def load_panel_csv(path: str, schema: str = 'long') -> RawPanel:
    """
    Load a functional panel from CSV

    Long schema: series,time,grid,value[,weight], one row per cell.
    Wide schema: series,time,<grid label 1>,...,<grid label m>, one row per curve.

    Args:
        path: CSV file (UTF-8 with header row)
        schema: 'long' or 'wide'

    Returns:
        RawPanel with missing cells masked
    """
    frame = _read_frame(path)

    if schema == 'long':
        panel = _load_long(frame)
    elif schema == 'wide':
        panel = _load_wide(frame)
    else:
        raise DataError(f"Unknown CSV schema '{schema}'; expected 'long' or 'wide'")

    panel.provenance['source'] = os.path.abspath(path)
    panel.provenance['schema'] = schema
    p, T, m = panel.shape
    logger.info(f"Loaded {path}: p={p}, T={T}, m={m}, missing cells={int(panel.mask.sum())}")

    return panel


def _load_long(frame: pd.DataFrame) -> RawPanel:
    missing_columns = [column for column in LONG_COLUMNS if column not in frame.columns]
    if missing_columns:
        raise CsvParseError(f"long schema needs columns {LONG_COLUMNS}, missing {missing_columns}", line=1)
    has_weight = 'weight' in frame.columns
    _reject_empty_keys(frame, ['series', 'time', 'grid'])

    series_ids = order_labels(frame['series'].str.strip().tolist())
    times = order_labels(frame['time'].str.strip().tolist())
    grid_labels = order_labels(frame['grid'].str.strip().tolist())
    s_index = {label: i for i, label in enumerate(series_ids)}
    t_index = {label: i for i, label in enumerate(times)}
    g_index = {label: i for i, label in enumerate(grid_labels)}

    shape = (len(series_ids), len(times), len(grid_labels))
    values = np.full(shape, np.nan)
    weights = np.full(shape, np.nan) if has_weight else None
    seen: Dict[Tuple[int, int, int], int] = {}

    for row_number, row in enumerate(frame.itertuples(index=False)):
        line = row_number + 2
        record = row._asdict()
        key = (s_index[record['series'].strip()], t_index[record['time'].strip()], g_index[record['grid'].strip()])
        if key in seen:
            raise DuplicateKeyError(
                f"line {line}: duplicate cell (series={record['series']}, time={record['time']}, "
                f"grid={record['grid']}) first seen on line {seen[key]}"
            )
        seen[key] = line
        values[key] = _parse_value(record['value'], line, 'value')
        if has_weight:
            weights[key] = _parse_value(record['weight'], line, 'weight')

    mask = np.isnan(values)
    _reject_missing_curves(mask, series_ids, times)

    return RawPanel(series_ids, times, grid_labels, values, mask, weights)


def _load_wide(frame: pd.DataFrame) -> RawPanel:
    if list(frame.columns[:2]) != KEY_COLUMNS or frame.shape[1] < 3:
        raise CsvParseError("wide schema needs columns series,time followed by grid labels", line=1)

    grid_labels = list(frame.columns[2:])
    if len(set(grid_labels)) != len(grid_labels):
        raise DuplicateKeyError("line 1: duplicate grid labels in header")
    _reject_empty_keys(frame, KEY_COLUMNS)
    series_ids = order_labels(frame['series'].str.strip().tolist())
    times = order_labels(frame['time'].str.strip().tolist())
    s_index = {label: i for i, label in enumerate(series_ids)}
    t_index = {label: i for i, label in enumerate(times)}

    values = np.full((len(series_ids), len(times), len(grid_labels)), np.nan)
    filled = np.zeros((len(series_ids), len(times)), dtype=bool)
    seen: Dict[Tuple[int, int], int] = {}

    for row_number, row in enumerate(frame.itertuples(index=False)):
        line = row_number + 2
        cells = list(row)
        key = (s_index[cells[0].strip()], t_index[cells[1].strip()])
        if key in seen:
            raise DuplicateKeyError(
                f"line {line}: duplicate curve (series={cells[0]}, time={cells[1]}) first seen on line {seen[key]}"
            )
        seen[key] = line
        values[key] = [_parse_value(text, line, label) for text, label in zip(cells[2:], grid_labels)]
        filled[key] = True

    if not filled.all():
        i, t = np.argwhere(~filled)[0]
        raise InconsistentDimensionsError(
            f"No row for series={series_ids[i]}, time={times[t]}; every (series, time) pair needs a curve"
        )

    mask = np.isnan(values)
    _reject_missing_curves(mask, series_ids, times)

    # Re-order grid columns numerically when possible
    order = [grid_labels.index(label) for label in order_labels(grid_labels)]
    return RawPanel(series_ids, times, [grid_labels[j] for j in order], values[:, :, order], mask[:, :, order])


def _reject_missing_curves(mask: np.ndarray, series_ids: List[str], times: List[str]) -> None:
    empty = mask.all(axis=2)
    if empty.any():
        i, t = np.argwhere(empty)[0]
        raise InconsistentDimensionsError(
            f"Curve for series={series_ids[i]}, time={times[t]} has no observed values"
        )


def aggregate_tail(panel: RawPanel, cutoff_label: str) -> RawPanel:
    """
    Pool all grid points at or above a cutoff into one terminal point

    Exposure-weighted mean of the rates when weights are present, arithmetic
    mean of the present values otherwise.

    Args:
        panel: Raw panel
        cutoff_label: Grid label where the tail starts (e.g. '100')

    Returns:
        RawPanel with m reduced to index(cutoff) + 1
    """
    labels = [str(label) for label in panel.grid_labels]
    cutoff = str(cutoff_label).strip()
    if cutoff not in labels:
        matches = [j for j, label in enumerate(labels) if _label_key(label) is not None
                   and _label_key(cutoff) is not None and _label_key(label) == _label_key(cutoff)]
        if not matches:
            raise DataError(f"Tail cutoff '{cutoff_label}' is not a grid label")
        j = matches[0]
    else:
        j = labels.index(cutoff)

    if j == len(labels) - 1:
        return panel

    tail_values = panel.values[:, :, j:]
    tail_present = ~panel.mask[:, :, j:]

    if panel.weights is not None:
        tail_weights = np.where(tail_present, np.nan_to_num(panel.weights[:, :, j:]), 0.0)
        total = tail_weights.sum(axis=2)
        weighted = np.where(tail_present, tail_values, 0.0) * tail_weights
        with np.errstate(invalid='ignore', divide='ignore'):
            pooled = np.where(total > 0, weighted.sum(axis=2) / total, np.nan)
        pooled_weight = total
    else:
        counts = tail_present.sum(axis=2)
        sums = np.where(tail_present, tail_values, 0.0).sum(axis=2)
        with np.errstate(invalid='ignore', divide='ignore'):
            pooled = np.where(counts > 0, sums / counts, np.nan)
        pooled_weight = None

    values = np.concatenate([panel.values[:, :, :j], pooled[:, :, None]], axis=2)
    mask = np.isnan(values)
    weights = None
    if panel.weights is not None:
        weights = np.concatenate([panel.weights[:, :, :j], pooled_weight[:, :, None]], axis=2)

    terminal = labels[j] if labels[j].endswith('+') else f"{labels[j]}+"
    provenance = dict(panel.provenance)
    provenance['tail_aggregation'] = {
        'cutoff': labels[j],
        'pooled_labels': labels[j:],
        'method': 'weighted' if panel.weights is not None else 'mean'
    }
    logger.info(f"Pooled {len(labels) - j} grid points from '{labels[j]}' into '{terminal}'")

    return RawPanel(
        list(panel.series_ids), list(panel.times), labels[:j] + [terminal], values, mask, weights, provenance
    )


def _interpolate_curve(curve: np.ndarray, missing: np.ndarray) -> np.ndarray:
    """Linear interpolation along the grid, constant beyond the observed range"""
    positions = np.arange(curve.shape[0])
    filled = curve.copy()
    filled[missing] = np.interp(positions[missing], positions[~missing], curve[~missing])
    return filled


def log_smooth(panel: RawPanel, ctx: BasisContext) -> FunctionalPanel:
    """
    Log-transform each curve and project it onto the basis

    Nonpositive present values are treated as missing; missing cells are
    filled by linear interpolation along the grid and listed in the
    provenance. Grid labels map to the context grid in order.

    Args:
        panel: Raw panel with m equal to ctx.m
        ctx: Basis context

    Returns:
        FunctionalPanel of log-curve coefficients
    """
    p, T, m = panel.shape
    if m != ctx.m:
        raise ContextMismatchError(f"Panel has {m} grid points but the basis context has {ctx.m}")

    values = panel.values.copy()
    missing = panel.mask | ~(np.nan_to_num(values, nan=-1.0) > 0)
    interpolated = []

    for i, t in np.argwhere(missing.any(axis=2)):
        cells = missing[i, t]
        if cells.all():
            raise DataError(
                f"Curve series={panel.series_ids[i]}, time={panel.times[t]} has no positive values to interpolate from"
            )
        values[i, t] = _interpolate_curve(values[i, t], cells)
        for j in np.flatnonzero(cells):
            interpolated.append({
                'series': panel.series_ids[i],
                'time': panel.times[t],
                'grid': panel.grid_labels[j],
                'nonpositive': bool(not panel.mask[i, t, j])
            })

    if interpolated:
        logger.warning(f"Interpolated {len(interpolated)} missing or nonpositive cells")

    coeffs = project_samples(np.log(values), ctx)

    provenance = dict(panel.provenance)
    provenance['interpolated_cells'] = interpolated
    provenance['grid_labels'] = list(panel.grid_labels)
    provenance['transform'] = 'log'

    return FunctionalPanel(coeffs, ctx, list(panel.series_ids), list(panel.times), provenance)


def raw_panel_to_frame(panel: RawPanel, schema: str = 'long') -> pd.DataFrame:
    """
    Flatten a RawPanel into the long or wide CSV layout

    Args:
        panel: Raw panel
        schema: 'long' or 'wide'

    Returns:
        DataFrame ready for export_frame_to_csv
    """
    p, T, m = panel.shape
    values = np.where(panel.mask, np.nan, panel.values)

    if schema == 'wide':
        rows = []
        for i in range(p):
            for t in range(T):
                row = {'series': panel.series_ids[i], 'time': panel.times[t]}
                row.update({label: values[i, t, j] for j, label in enumerate(panel.grid_labels)})
                rows.append(row)
        return pd.DataFrame(rows, columns=KEY_COLUMNS + list(panel.grid_labels))

    if schema != 'long':
        raise DataError(f"Unknown CSV schema '{schema}'; expected 'long' or 'wide'")

    index = pd.MultiIndex.from_product(
        [panel.series_ids, panel.times, panel.grid_labels], names=['series', 'time', 'grid']
    )
    frame = pd.DataFrame({'value': values.ravel()}, index=index).reset_index()
    if panel.weights is not None:
        frame['weight'] = panel.weights.ravel()

    return frame
