"""
Monte Carlo replicate execution, per-replicate records and replicate summaries.
"""

import glob
import logging
import os
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.stats import mannwhitneyu

from src.dgp import ModelConfig, simulate_panel
from src.spectral_engine import DEFAULT_K_MAX, eigendecompose, gram_matrix
from src.spurious_diagnostics import (
    DEFAULT_MAX_LAG,
    PERSISTENCE_CUTOFF,
    SpectralReport,
    build_report,
    report_from_dict,
    report_to_dict,
)
from src.utils import read_json, write_json

logger = logging.getLogger(__name__)


def simulate_replicate(cfg: ModelConfig, replicate: int, k_max: int = DEFAULT_K_MAX,
                       trace_CeOm: Optional[float] = None, max_lag: int = DEFAULT_MAX_LAG,
                       cutoff: float = PERSISTENCE_CUTOFF, config_hash: Optional[str] = None) -> SpectralReport:
    """
    Simulate one replicate and diagnose its Gram spectrum

    Args:
        cfg: Model configuration
        replicate: Replicate index
        k_max: Number of eigenvectors to analyze
        trace_CeOm: <C_eps Omega> of the model, for the eigenvalue law
        max_lag: Largest ACF lag
        cutoff: Persistence threshold
        config_hash: Hash recorded in the report

    Returns:
        SpectralReport
    """
    panel = simulate_panel(cfg, replicate)['panel']
    eig = eigendecompose(gram_matrix(panel), min(k_max, cfg.T))

    return build_report(eig, cfg.p, trace_CeOm, min(max_lag, cfg.T - 1), cutoff, config_hash)


def run_replicates(cfg: ModelConfig, replicates: int, k_max: int = DEFAULT_K_MAX, threads: int = 1,
                   trace_CeOm: Optional[float] = None, max_lag: int = DEFAULT_MAX_LAG,
                   cutoff: float = PERSISTENCE_CUTOFF, config_hash: Optional[str] = None) -> List[SpectralReport]:
    """
    Run replicates 0..replicates-1, in a thread pool when threads > 1

    Results come back in replicate order whatever the pool size.

    Args:
        cfg: Model configuration
        replicates: Number of replicates
        k_max: Number of eigenvectors to analyze
        threads: Worker threads
        trace_CeOm: <C_eps Omega> of the model
        max_lag: Largest ACF lag
        cutoff: Persistence threshold
        config_hash: Hash recorded in each report

    Returns:
        List of SpectralReports
    """
    logger.info(f"Running {replicates} replicates (T={cfg.T}, p={cfg.p}, q={cfg.q}, K={cfg.K}) on {threads} thread(s)")

    if threads > 1:
        return Parallel(n_jobs=threads, prefer='threads')(
            delayed(simulate_replicate)(cfg, r, k_max, trace_CeOm, max_lag, cutoff, config_hash)
            for r in range(replicates)
        )

    return [simulate_replicate(cfg, r, k_max, trace_CeOm, max_lag, cutoff, config_hash) for r in range(replicates)]


def record_report(report: SpectralReport, replicate: int, out_dir: str) -> str:
    """
    Save one replicate report as JSON

    Args:
        report: Replicate report
        replicate: Replicate index
        out_dir: Output directory

    Returns:
        Path of the written file
    """
    data = report_to_dict(report)
    data['replicate'] = replicate

    return write_json(data, os.path.join(out_dir, 'replicates', f"report_{replicate:04d}.json"))


def load_reports(out_dir: str) -> List[SpectralReport]:
    """Read back every replicate report under out_dir, in replicate order"""
    paths = sorted(glob.glob(os.path.join(out_dir, 'replicates', 'report_*.json')))
    return [report_from_dict(read_json(path)) for path in paths]


def _quantiles(rows: List[List[float]], prefix: str) -> Dict[str, List[float]]:
    width = min((len(row) for row in rows), default=0)
    if width == 0:
        return {f"{prefix}_median": [], f"{prefix}_q25": [], f"{prefix}_q75": []}

    frame = pd.DataFrame([row[:width] for row in rows])
    return {
        f"{prefix}_median": frame.median().tolist(),
        f"{prefix}_q25": frame.quantile(0.25).tolist(),
        f"{prefix}_q75": frame.quantile(0.75).tolist()
    }


def summarize_replicates(reports: List[SpectralReport]) -> Dict[str, Any]:
    """
    Medians and interquartile ranges across replicates

    Args:
        reports: Replicate reports of one configuration

    Returns:
        Dictionary of per-k summaries plus the replicate-mean leading eigenvalue
    """
    if not reports:
        return {'replicates': 0}

    k_max = reports[0].k_max
    summary = {
        'replicates': len(reports),
        'T': reports[0].T,
        'p': reports[0].p,
        'k_max': k_max,
        'config_hash': reports[0].config_hash,
        'theory_shares': list(reports[0].theory_shares),
        'theory_eigenvalues': reports[0].theory_eigenvalues,
        'degenerate_replicates': sum(1 for report in reports if report.degenerate)
    }

    summary.update(_quantiles([report.alignments for report in reports], 'alignment'))
    summary.update(_quantiles([report.variance_shares[:k_max] for report in reports], 'share'))
    summary.update(_quantiles([report.eigenvalues[:k_max] for report in reports], 'eigenvalue'))
    summary.update(_quantiles([report.acf_lag1 for report in reports if report.acf], 'acf_lag1'))

    summary['mean_eigenvalue_1'] = float(np.mean([report.eigenvalues[0] for report in reports]))

    # Split locations of the persistence probe
    splits = [report.split for report in reports if report.split is not None]
    summary['split_counts'] = {str(s): splits.count(s) for s in sorted(set(splits))}

    return summary


def summary_frame(summary: Dict[str, Any]) -> pd.DataFrame:
    """Per-k table of a replicate summary"""
    k_max = summary.get('k_max', 0)
    frame = pd.DataFrame({'k': list(range(1, k_max + 1))})

    for column in ['alignment', 'share', 'eigenvalue', 'acf_lag1']:
        for stat in ['median', 'q25', 'q75']:
            values = summary.get(f"{column}_{stat}", [])
            frame[f"{column}_{stat}"] = list(values) + [np.nan] * (k_max - len(values))
    frame['theory_share'] = summary.get('theory_shares', [np.nan] * k_max)

    return frame


def alignment_separation(sample: List[SpectralReport], reference: List[SpectralReport], k: int) -> float:
    """
    One-sided Mann-Whitney p-value that sample alignments at index k sit below the reference's

    Args:
        sample: Reports under test
        reference: Reports of the reference (spurious) configuration
        k: Eigenvector index (1-based)

    Returns:
        p-value
    """
    x = [report.alignments[k - 1] for report in sample]
    y = [report.alignments[k - 1] for report in reference]

    return float(mannwhitneyu(x, y, alternative='less').pvalue)
