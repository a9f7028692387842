"""
Spurious-limit objects and the comparisons of sample eigenstructure against them.

Under integrated factors the leading eigenvectors of the Gram matrix approach
the cosines d_k, the eigenvalues follow T^2/(k^2 pi^2 p) <C_eps Omega> and the
variance shares follow 6/(k pi)^2, whatever the factor structure.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
from statsmodels.tsa.stattools import acf

from src.errors import ConfigError, DimensionError, NumericError
from src.utils import SCHEMA_VERSION

logger = logging.getLogger(__name__)

UNIT_NORM_TOL = 1e-8
DEFAULT_MAX_LAG = 20
PERSISTENCE_CUTOFF = 0.5
DEGENERATE_TOL = 1e-12


@dataclass
class SpectralReport:
    """Eigenstructure of one panel compared against the spurious limits"""

    T: int
    p: int
    k_max: int
    eigenvalues: List[float]
    variance_shares: List[float]
    alignments: List[float]
    theory_shares: List[float]
    theory_eigenvalues: Optional[List[float]] = None
    acf: List[List[float]] = field(default_factory=list)
    persistent: List[bool] = field(default_factory=list)
    split: Optional[int] = None
    white_noise_band: float = 0.0
    degenerate: bool = False
    config_hash: Optional[str] = None

    @property
    def acf_lag1(self) -> List[float]:
        return [values[0] for values in self.acf]


def spurious_vector(k: int, T: int) -> np.ndarray:
    """
    Limit d_k of the k-th sample eigenvector

    d_kt = sqrt(2/T) cos(pi k t / T), t = 1..T

    Args:
        k: Index, 1 <= k < T
        T: Time length

    Returns:
        Length-T vector
    """
    if not 1 <= k < T:
        raise DimensionError(f"Spurious limit index must satisfy 1 <= k < T, got k={k}, T={T}")

    t = np.arange(1, T + 1)
    return np.sqrt(2.0 / T) * np.cos(np.pi * k * t / T)


def alignment(u: np.ndarray, k: int) -> float:
    """
    |<u, d_k / ||d_k||>| for a unit vector u

    Args:
        u: Unit-norm vector of length T
        k: Limit index

    Returns:
        Alignment in [0, 1]
    """
    u = np.asarray(u, dtype=float)
    norm = np.linalg.norm(u)
    if abs(norm - 1.0) > UNIT_NORM_TOL:
        raise DimensionError(f"Alignment needs a unit vector, got norm {norm:.10f}")

    d = spurious_vector(k, u.shape[0])
    return float(min(1.0, abs(np.dot(u, d)) / np.linalg.norm(d)))


def theory_eigenvalue(k: int, T: int, p: int, trace_CeOm: float) -> float:
    """
    Limit law of the k-th eigenvalue, T^2 / (k^2 pi^2 p) <C_eps Omega>

    Args:
        k: Eigenvalue index
        T: Time length
        p: Panel width
        trace_CeOm: The trace <C_eps Omega>

    Returns:
        Predicted eigenvalue
    """
    if trace_CeOm <= 0:
        raise NumericError(f"Eigenvalue law needs a positive trace, got {trace_CeOm}")
    if k < 1 or T <= 0 or p <= 0:
        raise DimensionError(f"Eigenvalue law needs k >= 1 and positive T, p; got k={k}, T={T}, p={p}")

    return float(T ** 2 / (k ** 2 * np.pi ** 2 * p) * trace_CeOm)


def theory_share(k: int) -> float:
    """Limit variance share 6 / (k pi)^2"""
    if k < 1:
        raise DimensionError(f"Share index must be at least 1, got {k}")
    return float(6.0 / (k * np.pi) ** 2)


def eigenvector_acf(u: np.ndarray, max_lag: int = DEFAULT_MAX_LAG) -> np.ndarray:
    """
    Sample autocorrelations of an eigenvector read as a time series

    Args:
        u: Length-T vector
        max_lag: Largest lag, below T

    Returns:
        Autocorrelations at lags 1..max_lag
    """
    u = np.asarray(u, dtype=float)
    if not 1 <= max_lag < u.shape[0]:
        raise DimensionError(f"max_lag must lie in [1, {u.shape[0] - 1}], got {max_lag}")
    if np.ptp(u) == 0:
        raise NumericError("Autocorrelation of a constant vector is undefined")

    return acf(u, nlags=max_lag, fft=False)[1:]


def split_index(acf_lag1: List[float], cutoff: float = PERSISTENCE_CUTOFF) -> int:
    """
    Number of leading eigenvectors whose lag-1 autocorrelation is at least cutoff

    Args:
        acf_lag1: Lag-1 autocorrelations in eigenvalue order
        cutoff: Persistence threshold

    Returns:
        Split position
    """
    split = 0
    for value in acf_lag1:
        if value < cutoff:
            break
        split += 1

    return split


def build_report(eig: Dict[str, Any], p: int, trace_CeOm: Optional[float] = None,
                 max_lag: int = DEFAULT_MAX_LAG, cutoff: float = PERSISTENCE_CUTOFF,
                 config_hash: Optional[str] = None) -> SpectralReport:
    """
    Populate a SpectralReport from an eigendecomposition

    Args:
        eig: Output of spectral_engine.eigendecompose
        p: Panel width
        trace_CeOm: <C_eps Omega> when the model is known (enables theory eigenvalues)
        max_lag: Largest ACF lag
        cutoff: Persistence threshold for split_index
        config_hash: Hash of the configuration that produced the panel

    Returns:
        SpectralReport
    """
    values = np.asarray(eig['values'], dtype=float)
    vectors = np.asarray(eig['vectors'], dtype=float)
    T = values.shape[0]
    k_max = vectors.shape[1]
    if vectors.shape[0] != T:
        raise DimensionError(f"{vectors.shape[0]}-dimensional eigenvectors for {T} eigenvalues")

    clipped = np.clip(values, 0.0, None)
    total = clipped.sum()
    degenerate = bool(total <= DEGENERATE_TOL * max(1.0, abs(values).max()))

    if degenerate:
        logger.warning("Degenerate spectrum: Gram matrix is numerically zero")
        shares = np.zeros(T)
    else:
        shares = clipped / total

    alignments = [alignment(vectors[:, k - 1], k) for k in range(1, min(k_max, T - 1) + 1)]

    acf_rows = []
    if not degenerate:
        lag = min(max_lag, T - 1)
        for k in range(k_max):
            try:
                acf_rows.append(eigenvector_acf(vectors[:, k], lag).tolist())
            except NumericError:
                logger.warning(f"Eigenvector {k + 1} is constant; recording zero autocorrelation")
                acf_rows.append([0.0] * lag)
    persistent = [row[0] >= cutoff for row in acf_rows]

    theory_eigenvalues = None
    if trace_CeOm is not None and trace_CeOm > 0:
        theory_eigenvalues = [theory_eigenvalue(k, T, p, trace_CeOm) for k in range(1, k_max + 1)]

    return SpectralReport(
        T=T,
        p=p,
        k_max=k_max,
        eigenvalues=values.tolist(),
        variance_shares=shares.tolist(),
        alignments=alignments,
        theory_shares=[theory_share(k) for k in range(1, k_max + 1)],
        theory_eigenvalues=theory_eigenvalues,
        acf=acf_rows,
        persistent=persistent,
        split=split_index([row[0] for row in acf_rows], cutoff) if acf_rows else None,
        white_noise_band=float(2.0 / np.sqrt(T)),
        degenerate=degenerate,
        config_hash=config_hash
    )


def report_to_dict(report: SpectralReport) -> Dict[str, Any]:
    """JSON-ready form of a SpectralReport"""
    return {
        'schema_version': SCHEMA_VERSION,
        'config_hash': report.config_hash,
        'T': report.T,
        'p': report.p,
        'k_max': report.k_max,
        'eigenvalues': list(report.eigenvalues),
        'variance_shares': list(report.variance_shares),
        'alignments': list(report.alignments),
        'theory_shares': list(report.theory_shares),
        'theory_eigenvalues': None if report.theory_eigenvalues is None else list(report.theory_eigenvalues),
        'acf': [list(row) for row in report.acf],
        'persistent': [bool(flag) for flag in report.persistent],
        'split': report.split,
        'white_noise_band': report.white_noise_band,
        'degenerate': report.degenerate
    }


def report_from_dict(doc: Dict[str, Any]) -> SpectralReport:
    """Rebuild a SpectralReport written by report_to_dict"""
    if doc.get('schema_version', SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ConfigError(f"Unsupported report schema_version {doc.get('schema_version')}")

    return SpectralReport(
        T=int(doc['T']),
        p=int(doc['p']),
        k_max=int(doc['k_max']),
        eigenvalues=list(doc['eigenvalues']),
        variance_shares=list(doc['variance_shares']),
        alignments=list(doc['alignments']),
        theory_shares=list(doc['theory_shares']),
        theory_eigenvalues=doc.get('theory_eigenvalues'),
        acf=[list(row) for row in doc.get('acf', [])],
        persistent=list(doc.get('persistent', [])),
        split=doc.get('split'),
        white_noise_band=float(doc.get('white_noise_band', 0.0)),
        degenerate=bool(doc.get('degenerate', False)),
        config_hash=doc.get('config_hash')
    )
