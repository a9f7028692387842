"""
Figure output: every plot is written as a standalone SVG together with a CSV
of the plotted points.
"""

import logging
import os
from typing import Dict, List, Optional, Sequence

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from src.spurious_diagnostics import spurious_vector  # noqa: E402
from src.utils import export_frame_to_csv  # noqa: E402

logger = logging.getLogger(__name__)


def _save(fig, frame: pd.DataFrame, out_dir: str, stem: str) -> Dict[str, str]:
    os.makedirs(out_dir, exist_ok=True)
    svg_path = os.path.join(out_dir, f"{stem}.svg")
    fig.savefig(svg_path, format='svg', bbox_inches='tight')
    plt.close(fig)
    csv_path = export_frame_to_csv(frame, os.path.join(out_dir, f"{stem}.csv"))
    logger.info(f"Wrote {svg_path} and {csv_path}")

    return {'svg': svg_path, 'csv': csv_path}


def plot_eigenvectors(vectors: np.ndarray, out_dir: str, k_show: int = 5,
                      title: str = 'Leading eigenvectors', stem: str = 'eigenvectors') -> Dict[str, str]:
    """
    Overlay the leading sample eigenvectors on their spurious limits d_k

    Args:
        vectors: T x k matrix of sign-fixed eigenvectors
        out_dir: Output directory
        k_show: Number of eigenvectors to draw
        title: Figure title
        stem: File name stem

    Returns:
        Paths of the SVG and CSV files
    """
    T, k_max = vectors.shape
    k_show = min(k_show, k_max, T - 1)
    t = np.arange(1, T + 1)
    frame = pd.DataFrame({'t': t})

    fig, axes = plt.subplots(k_show, 1, figsize=(7, 1.8 * k_show), sharex=True, squeeze=False)
    for k in range(1, k_show + 1):
        d = spurious_vector(k, T)
        d = d / np.linalg.norm(d)
        frame[f"u_{k}"] = vectors[:, k - 1]
        frame[f"d_{k}"] = d

        ax = axes[k - 1, 0]
        ax.plot(t, vectors[:, k - 1], color='tab:blue', linewidth=1.2, label=f"u_{k}")
        ax.plot(t, d, color='tab:red', linestyle='--', linewidth=1.0, label=f"d_{k}")
        ax.set_ylabel(f"k={k}")
        ax.legend(loc='upper right', fontsize='small')

    axes[-1, 0].set_xlabel('t')
    axes[0, 0].set_title(title)

    return _save(fig, frame, out_dir, stem)


def plot_scree(shares: Sequence[float], theory_shares: Sequence[float], out_dir: str,
               lower: Optional[Sequence[float]] = None, upper: Optional[Sequence[float]] = None,
               stem: str = 'scree') -> Dict[str, str]:
    """
    Variance shares against the 6/(k pi)^2 law

    Args:
        shares: Observed (or median) shares for k = 1..k_max
        theory_shares: Limit shares for the same k
        out_dir: Output directory
        lower: Optional lower quantiles of the shares
        upper: Optional upper quantiles of the shares
        stem: File name stem

    Returns:
        Paths of the SVG and CSV files
    """
    k = np.arange(1, len(theory_shares) + 1)
    shares = list(shares)[:len(k)]
    frame = pd.DataFrame({'k': k, 'share': shares, 'theory_share': list(theory_shares)})

    fig, ax = plt.subplots(figsize=(6, 4))
    if lower is not None and upper is not None:
        frame['share_q25'] = list(lower)[:len(k)]
        frame['share_q75'] = list(upper)[:len(k)]
        ax.fill_between(k, frame['share_q25'], frame['share_q75'], color='tab:blue', alpha=0.2)
    ax.plot(k, shares, marker='o', color='tab:blue', label='observed')
    ax.plot(k, theory_shares, marker='x', linestyle='--', color='tab:red', label='6/(k pi)^2')
    ax.set_xlabel('k')
    ax.set_ylabel('variance share')
    ax.legend()

    return _save(fig, frame, out_dir, stem)


def plot_acf(acf_rows: List[List[float]], band: float, out_dir: str, stem: str = 'acf') -> Dict[str, str]:
    """
    Autocorrelation functions of the leading eigenvectors with the white-noise band

    Args:
        acf_rows: Per-eigenvector autocorrelations at lags 1..L
        band: Half-width 2/sqrt(T) of the white-noise band
        out_dir: Output directory
        stem: File name stem

    Returns:
        Paths of the SVG and CSV files
    """
    lags = np.arange(1, len(acf_rows[0]) + 1) if acf_rows else np.arange(1, 2)
    frame = pd.DataFrame({'lag': lags})

    fig, ax = plt.subplots(figsize=(7, 4))
    for k, row in enumerate(acf_rows, start=1):
        frame[f"acf_{k}"] = row
        ax.plot(lags, row, marker='.', linewidth=1.0, label=f"u_{k}")
    ax.axhline(band, color='grey', linestyle=':')
    ax.axhline(-band, color='grey', linestyle=':')
    ax.set_xlabel('lag')
    ax.set_ylabel('autocorrelation')
    ax.legend(ncol=2, fontsize='small')

    return _save(fig, frame, out_dir, stem)


def plot_eigenvector_sweep(vectors: Dict[str, np.ndarray], out_dir: str, k_show: int = 3,
                           title: str = 'Leading eigenvectors by model',
                           stem: str = 'eigenvectors_sweep') -> Dict[str, str]:
    """
    Leading eigenvectors of several models drawn on shared axes with d_k

    Args:
        vectors: Model label -> T x k matrix of sign-fixed eigenvectors (same T for all)
        out_dir: Output directory
        k_show: Number of eigenvectors to draw
        title: Figure title
        stem: File name stem

    Returns:
        Paths of the SVG and CSV files
    """
    T = next(iter(vectors.values())).shape[0]
    k_show = min([k_show, T - 1] + [V.shape[1] for V in vectors.values()])
    t = np.arange(1, T + 1)
    frame = pd.DataFrame({'t': t})

    fig, axes = plt.subplots(k_show, 1, figsize=(7, 1.8 * k_show), sharex=True, squeeze=False)
    for k in range(1, k_show + 1):
        ax = axes[k - 1, 0]
        for label, V in vectors.items():
            frame[f"u_{k}[{label}]"] = V[:, k - 1]
            ax.plot(t, V[:, k - 1], linewidth=1.0, label=label)
        d = spurious_vector(k, T)
        frame[f"d_{k}"] = d
        ax.plot(t, d, color='black', linestyle='--', linewidth=1.0, label=f"d_{k}")
        ax.set_ylabel(f"k={k}")

    axes[0, 0].legend(loc='upper right', fontsize='small', ncol=len(vectors) + 1)
    axes[-1, 0].set_xlabel('t')
    axes[0, 0].set_title(title)

    return _save(fig, frame, out_dir, stem)


def plot_scree_sweep(shares: Dict[str, Sequence[float]], theory_shares: Sequence[float], out_dir: str,
                     stem: str = 'scree_sweep') -> Dict[str, str]:
    """Median variance shares of several models against the 6/(k pi)^2 law"""
    k = np.arange(1, len(theory_shares) + 1)
    frame = pd.DataFrame({'k': k, 'theory_share': list(theory_shares)})

    fig, ax = plt.subplots(figsize=(6, 4))
    for label, values in shares.items():
        values = list(values)[:len(k)]
        frame[f"share[{label}]"] = values
        ax.plot(k, values, marker='o', label=label)
    ax.plot(k, theory_shares, marker='x', linestyle='--', color='black', label='6/(k pi)^2')
    ax.set_xlabel('k')
    ax.set_ylabel('variance share')
    ax.legend()

    return _save(fig, frame, out_dir, stem)
