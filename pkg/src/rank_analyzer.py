"""
Effective rank of C_eps^{1/2} Omega C_eps^{1/2} and the ledger around it:
separable bounds, localization regime, divergence conditions, the noise-size
condition and the l1/l2 eigenvalue sandwich.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.stats import linregress

from src.dgp import DEFAULT_REDUCED_RANK, ModelConfig, NoiseSpec, build_model_config
from src.errors import ConfigError, NumericError
from src.operator_calculus import (
    CovarianceSpec,
    KernelOperator,
    OperatorMatrix,
    build_omega,
    hs_norm,
    op_norm,
    sandwich,
    sqrt_covariance,
    trace,
)
from src.utils import SCHEMA_VERSION

logger = logging.getLogger(__name__)

RANK_TOL = 1e-10
DELOCALIZED_BELOW = 0.1
LOCALIZED_ABOVE = 0.25
MIN_DIVERGENCE_SLOPE = 0.1
NOISE_RATIO_CUTOFF = 0.1

# Order of the effective rank in each simulation setting
setting_orders = {
    1: 'sqrt(qK)',
    2: 'sqrt(q)',
    3: 'sqrt(K)',
    4: '~1',
    5: 'sqrt(K)',
    6: '~1'
}


@dataclass
class EffectiveRankReport:
    """Effective rank ledger of one model configuration"""

    R: float
    R_hs: float
    trace_C: float
    hs_C: float
    op_C: float
    hs_Ceps: float
    per_n: List[Dict[str, Any]]
    upper_bound: float
    lower_bound: float
    regime: str
    cond_a: bool
    cond_b: bool
    order_tag: Optional[str] = None
    trace_CeOm: float = 0.0
    noise: Dict[str, Any] = field(default_factory=dict)
    divergence: Dict[str, Any] = field(default_factory=dict)
    setting: Optional[int] = None
    covariance: str = 'custom'
    scheme: str = 'custom'
    q: int = 0
    K: int = 0
    p: int = 0
    config_hash: Optional[str] = None

    @property
    def hs_Ceps_sq(self) -> float:
        return self.hs_Ceps ** 2


def _sandwiched(cov: CovarianceSpec, Om: OperatorMatrix) -> OperatorMatrix:
    root = sqrt_covariance(cov)
    return sandwich(root, Om, root)


def effective_rank(cov: CovarianceSpec, Om: OperatorMatrix, norm: str = 'op') -> float:
    """
    Effective rank <C> / ||C|| of C = C_eps^{1/2} Omega C_eps^{1/2}

    Args:
        cov: Innovation covariance
        Om: Self-adjoint nonnegative operator matrix
        norm: 'op' for the operator norm, 'hs' for the Hilbert-Schmidt norm

    Returns:
        Effective rank (at least 1)
    """
    C = _sandwiched(cov, Om)
    if norm == 'op':
        denominator = op_norm(C)
    elif norm == 'hs':
        denominator = hs_norm(C)
    else:
        raise ConfigError(f"Unknown norm '{norm}'; expected 'op' or 'hs'")

    if denominator <= 0:
        raise NumericError("Effective rank of the zero operator is undefined")

    return trace(C) / denominator


def trace_ce_omega(cov: CovarianceSpec, Om: OperatorMatrix) -> float:
    """<C_eps Omega> = sum_k tr(C_eps Omega_kk)"""
    return trace(sandwich(cov.as_operator(), Om, KernelOperator.identity(cov.context)))


def per_direction_stats(loadings) -> List[Dict[str, Any]]:
    """
    Spectral ledger of B_n = A_n A_n' for every basis direction

    The nonzero eigenvalues of B_n are those of A_n' A_n, which is the
    smaller matrix whenever K <= p.

    Args:
        loadings: LoadingSpec (or a (q, p, K) array)

    Returns:
        List of dictionaries with n, trace_Bn, hs_Bn, op_Bn, rank_Bn, alpha_Bn, ratio_Bn
    """
    A = loadings.A if hasattr(loadings, 'A') else np.asarray(loadings, dtype=float)
    ledger = []

    for n in range(A.shape[0]):
        small = A[n].T @ A[n] if A.shape[2] <= A.shape[1] else A[n] @ A[n].T
        eigenvalues = np.clip(np.linalg.eigvalsh(small), 0.0, None)
        top = eigenvalues.max(initial=0.0)
        nonzero = eigenvalues[eigenvalues > RANK_TOL * top] if top > 0 else eigenvalues[:0]

        trace_Bn = float(eigenvalues.sum())
        hs_Bn = float(np.sqrt(np.sum(eigenvalues ** 2)))
        ledger.append({
            'n': n + 1,
            'trace_Bn': trace_Bn,
            'hs_Bn': hs_Bn,
            'op_Bn': float(top),
            'rank_Bn': int(nonzero.size),
            'alpha_Bn': float(nonzero.min() / top) if nonzero.size else 0.0,
            'ratio_Bn': trace_Bn / hs_Bn if hs_Bn > 0 else 0.0
        })

    return ledger


def divergence_statistic(cov: CovarianceSpec, per_n: List[Dict[str, Any]]) -> float:
    """max_n c_n <B_n> / ||B_n||_2"""
    return float(max(c * row['ratio_Bn'] for c, row in zip(cov.c, per_n)))


def rank_bounds(cov: CovarianceSpec, per_n: List[Dict[str, Any]]) -> Dict[str, float]:
    """
    Separable bounds on the effective rank of the structured model

    upper = ||C_eps||_2^{-1} sup_n <B_n>/||B_n||_2
    lower = ||C_eps||_2^{-1} (1 + sup_n c_n <B_n>/||B_n||_2)

    Args:
        cov: Innovation covariance
        per_n: Output of per_direction_stats

    Returns:
        Dictionary with upper, lower and the sup statistics they are built from
    """
    if not per_n:
        raise ConfigError("Bounds need a non-empty per-direction ledger")
    if len(per_n) != cov.c.shape[0]:
        raise ConfigError(f"Ledger has {len(per_n)} directions for q={cov.c.shape[0]}")

    hs_Ceps = cov.hs_norm
    if hs_Ceps <= 0:
        raise NumericError("Bounds are undefined for a zero covariance")

    sup_ratio = float(max(row['ratio_Bn'] for row in per_n))
    sup_weighted = divergence_statistic(cov, per_n)

    return {
        'upper': sup_ratio / hs_Ceps,
        'lower': (1.0 + sup_weighted) / hs_Ceps,
        'sup_ratio': sup_ratio,
        'sup_weighted_ratio': sup_weighted,
        'hs_Ceps': hs_Ceps
    }


def classify_regime(cov: CovarianceSpec, threshold: float = DELOCALIZED_BELOW,
                    localized_above: float = LOCALIZED_ABOVE) -> str:
    """
    Localization regime of C_eps from ||C_eps||_2^2

    Args:
        cov: Innovation covariance
        threshold: Squared HS norm below which C_eps is delocalized
        localized_above: Squared HS norm above which C_eps is localized

    Returns:
        'delocalized', 'localized' or 'borderline'
    """
    hs_sq = cov.hs_norm ** 2
    if hs_sq < threshold:
        return 'delocalized'
    if hs_sq > localized_above:
        return 'localized'
    return 'borderline'


def divergence_slope(sizes: Sequence[float], values: Sequence[float]) -> float:
    """
    Log-log slope of values against sizes

    Args:
        sizes: Grid of problem sizes
        values: Statistic measured at each size

    Returns:
        Least-squares slope of log(values) on log(sizes)
    """
    sizes = np.asarray(sizes, dtype=float)
    values = np.asarray(values, dtype=float)
    if sizes.shape != values.shape or sizes.size < 2:
        raise ConfigError("Slope needs at least two (size, value) pairs")
    if np.any(sizes <= 0) or np.any(values <= 0):
        raise NumericError("Log-log slope needs positive sizes and values")
    if np.unique(sizes).size < 2:
        raise ConfigError("Slope needs at least two distinct sizes")

    return float(linregress(np.log(sizes), np.log(values)).slope)


def divergence_conditions(cov: CovarianceSpec, per_n: List[Dict[str, Any]],
                        grid_sizes: Optional[Sequence[float]] = None,
                        grid_values: Optional[Sequence[float]] = None,
                        min_slope: float = MIN_DIVERGENCE_SLOPE) -> Dict[str, Any]:
    """
    Sufficient conditions for a diverging effective rank

    cond_a holds when C_eps is delocalized. cond_b holds when
    max_n c_n <B_n>/||B_n||_2, measured over a user-supplied grid, grows with a
    log-log slope above min_slope. Without a grid cond_b is False.

    Args:
        cov: Innovation covariance
        per_n: Ledger of the configuration itself
        grid_sizes: Sizes of the grid (e.g. K values)
        grid_values: The statistic at each grid size
        min_slope: Slope above which the statistic counts as diverging

    Returns:
        Dictionary with cond_a, cond_b, regime, statistic and slope
    """
    regime = classify_regime(cov)
    slope = None
    if grid_sizes is not None and grid_values is not None:
        slope = divergence_slope(grid_sizes, grid_values)

    return {
        'cond_a': regime == 'delocalized',
        'cond_b': bool(slope is not None and slope > min_slope),
        'regime': regime,
        'statistic': divergence_statistic(cov, per_n),
        'slope': slope
    }


def noise_condition(noise: NoiseSpec, cov: CovarianceSpec, Om: OperatorMatrix, T: int, p: int,
                    cutoff: float = NOISE_RATIO_CUTOFF) -> Dict[str, Any]:
    """
    Compare the stationary noise size with the integrated signal size

    Args:
        noise: Noise specification
        cov: Innovation covariance
        Om: Omega operator matrix
        T: Time length
        p: Panel width
        cutoff: Largest lhs/rhs ratio counted as negligible

    Returns:
        Dictionary with lhs = p sum var_n, rhs = T <C_eps Omega>, ratio, satisfied
    """
    lhs = float(p * np.sum(noise.effective_variances))
    rhs = float(T * trace_ce_omega(cov, Om))

    if lhs == 0:
        ratio = 0.0
    elif rhs <= 0:
        ratio = float('inf')
    else:
        ratio = lhs / rhs

    return {
        'lhs': lhs,
        'rhs': rhs,
        'ratio': ratio,
        'satisfied': bool(ratio < cutoff)
    }


def structured_effective_rank(cov: CovarianceSpec, per_n: List[Dict[str, Any]]) -> Dict[str, float]:
    """
    Closed-form trace and norms of C for diagonal-block loadings

    The assembled C is similar to a block diagonal of c_n A_n' A_n, so
    <C> = sum c_n <B_n>, ||C|| = max c_n ||B_n|| and ||C||_2^2 = sum c_n^2 ||B_n||_2^2.

    Args:
        cov: Innovation covariance
        per_n: Output of per_direction_stats

    Returns:
        Dictionary with trace, op, hs, R and R_hs
    """
    c = cov.c
    trace_C = float(sum(cn * row['trace_Bn'] for cn, row in zip(c, per_n)))
    op_C = float(max(cn * row['op_Bn'] for cn, row in zip(c, per_n)))
    hs_C = float(np.sqrt(sum((cn * row['hs_Bn']) ** 2 for cn, row in zip(c, per_n))))
    if op_C <= 0:
        raise NumericError("Effective rank of the zero operator is undefined")

    return {
        'trace': trace_C,
        'op': op_C,
        'hs': hs_C,
        'R': trace_C / op_C,
        'R_hs': trace_C / hs_C
    }


def l1_l2_sandwich(values: Sequence[float], tol: float = RANK_TOL) -> Dict[str, Any]:
    """
    l1/l2 bounds for a nonnegative vector with r nonzero entries

    2 sqrt(alpha) / (1 + alpha) sqrt(r) <= ||x||_1 / ||x||_2 <= sqrt(r),
    alpha being the ratio of the smallest to the largest nonzero entry.

    Args:
        values: Nonnegative vector (e.g. eigenvalues of a PSD matrix)
        tol: Entries below tol * max count as zero

    Returns:
        Dictionary with ratio, lower, upper, rank, alpha and holds
    """
    x = np.asarray(values, dtype=float).ravel()
    top = x.max(initial=0.0)
    if top <= 0:
        return {'ratio': 0.0, 'lower': 0.0, 'upper': 0.0, 'rank': 0, 'alpha': 0.0, 'holds': True}

    nonzero = x[x > tol * top]
    r = nonzero.size
    alpha = float(nonzero.min() / top)
    ratio = float(nonzero.sum() / np.sqrt(np.sum(nonzero ** 2)))
    lower = 2.0 * np.sqrt(alpha) / (1.0 + alpha) * np.sqrt(r)
    upper = float(np.sqrt(r))
    slack = 1e-12 * upper

    return {
        'ratio': ratio,
        'lower': float(lower),
        'upper': upper,
        'rank': int(r),
        'alpha': alpha,
        'holds': bool(lower - slack <= ratio <= upper + slack)
    }


def predicted_order(setting: int, q: int, K: int) -> float:
    """Numeric value of the predicted order for a setting"""
    return {
        'sqrt(qK)': np.sqrt(q * K),
        'sqrt(q)': np.sqrt(q),
        'sqrt(K)': np.sqrt(K),
        '~1': 1.0
    }[setting_orders[setting]]


def divergence_grid(cfg: ModelConfig, axis: str, values: Sequence[int]) -> Dict[str, Any]:
    """
    Evaluate the divergence statistic while one dimension of cfg varies

    Args:
        cfg: Base configuration (its covariance setting and loading scheme are kept)
        axis: 'p', 'q' or 'K'
        values: Grid of values for that dimension

    Returns:
        Dictionary with axis, sizes, statistic values and slope
    """
    if axis not in ('p', 'q', 'K'):
        raise ConfigError(f"Divergence axis must be p, q or K, got '{axis}'")
    if cfg.cov.setting == 'custom' or cfg.loadings.scheme == 'custom':
        raise ConfigError("Divergence grids need a named covariance setting and loading scheme")

    statistics = []
    for value in values:
        dims = {'p': cfg.p, 'q': cfg.q, 'K': cfg.K}
        dims[axis] = int(value)
        variant = build_model_config(
            cfg.T, dims['p'], dims['q'], dims['K'], cfg.cov.setting, cfg.loadings.scheme,
            seed=cfg.seed, noise_scale=cfg.noise.scale, rank=cfg.loadings.rank or DEFAULT_REDUCED_RANK
        )
        statistics.append(divergence_statistic(variant.cov, per_direction_stats(variant.loadings)))

    return {
        'axis': axis,
        'sizes': [int(v) for v in values],
        'values': statistics,
        'slope': divergence_slope(values, statistics)
    }


def build_rank_report(cfg: ModelConfig, method: str = 'operator', divergence_axis: Optional[str] = None,
                      divergence_values: Optional[Sequence[int]] = None,
                      config_hash: Optional[str] = None) -> EffectiveRankReport:
    """
    Assemble the effective rank ledger of a model configuration

    Args:
        cfg: Model configuration
        method: 'operator' assembles C from Omega; 'structured' uses the closed form
        divergence_axis: Dimension varied for the cond_b check
        divergence_values: Grid for that dimension
        config_hash: Hash of the resolved configuration

    Returns:
        EffectiveRankReport
    """
    per_n = per_direction_stats(cfg.loadings)
    Om = build_omega(cfg.loadings)

    if method == 'operator':
        C = _sandwiched(cfg.cov, Om)
        trace_C, hs_C, op_C = trace(C), hs_norm(C), op_norm(C)
        if op_C <= 0:
            raise NumericError("Effective rank of the zero operator is undefined")
    elif method == 'structured':
        closed = structured_effective_rank(cfg.cov, per_n)
        trace_C, hs_C, op_C = closed['trace'], closed['hs'], closed['op']
    else:
        raise ConfigError(f"Unknown rank method '{method}'")

    bounds = rank_bounds(cfg.cov, per_n)

    divergence = {}
    if divergence_axis is not None and divergence_values:
        divergence = divergence_grid(cfg, divergence_axis, divergence_values)
    conditions = divergence_conditions(
        cfg.cov, per_n, divergence.get('sizes'), divergence.get('values')
    )

    R_hs = trace_C / hs_C
    logger.info(f"Effective rank for setting {cfg.setting}: R={trace_C / op_C:.3f}, R_hs={R_hs:.3f}")

    return EffectiveRankReport(
        R=trace_C / op_C,
        R_hs=R_hs,
        trace_C=trace_C,
        hs_C=hs_C,
        op_C=op_C,
        hs_Ceps=cfg.cov.hs_norm,
        per_n=per_n,
        upper_bound=bounds['upper'],
        lower_bound=bounds['lower'],
        regime=conditions['regime'],
        cond_a=conditions['cond_a'],
        cond_b=conditions['cond_b'],
        order_tag=setting_orders.get(cfg.setting) if cfg.setting is not None else None,
        trace_CeOm=trace_C,
        noise=noise_condition(cfg.noise, cfg.cov, Om, cfg.T, cfg.p),
        divergence=divergence,
        setting=cfg.setting,
        covariance=cfg.cov.setting,
        scheme=cfg.loadings.scheme,
        q=cfg.q,
        K=cfg.K,
        p=cfg.p,
        config_hash=config_hash
    )


def rank_report_to_dict(report: EffectiveRankReport) -> Dict[str, Any]:
    """JSON-ready form of an EffectiveRankReport"""
    return {
        'schema_version': SCHEMA_VERSION,
        'config_hash': report.config_hash,
        'setting': report.setting,
        'covariance': report.covariance,
        'scheme': report.scheme,
        'p': report.p,
        'q': report.q,
        'K': report.K,
        'R': report.R,
        'R_hs': report.R_hs,
        'trace_C': report.trace_C,
        'hs_C': report.hs_C,
        'op_C': report.op_C,
        'hs_Ceps': report.hs_Ceps,
        'hs_Ceps_sq': report.hs_Ceps_sq,
        'trace_CeOm': report.trace_CeOm,
        'per_n': report.per_n,
        'upper_bound': report.upper_bound,
        'lower_bound': report.lower_bound,
        'R_hs_over_lower': report.R_hs / report.lower_bound,
        'R_hs_over_upper': report.R_hs / report.upper_bound,
        'regime': report.regime,
        'cond_a': report.cond_a,
        'cond_b': report.cond_b,
        'order_tag': report.order_tag,
        'noise': report.noise,
        'divergence': report.divergence
    }


def rank_table(reports: List[EffectiveRankReport]) -> pd.DataFrame:
    """
    Rank table, one row per report

    Args:
        reports: Effective rank reports

    Returns:
        DataFrame
    """
    rows = []
    for report in reports:
        ratios_sq = [row['ratio_Bn'] ** 2 for row in report.per_n]
        rows.append({
            'setting': report.setting if report.setting is not None else '-',
            'covariance': report.covariance,
            'loadings': report.scheme,
            'q': report.q,
            'K': report.K,
            '||C_eps||_2^2': report.hs_Ceps_sq,
            'median ratio_Bn^2': float(np.median(ratios_sq)),
            'R': report.R,
            'R_hs': report.R_hs,
            'lower': report.lower_bound,
            'upper': report.upper_bound,
            'regime': report.regime,
            'cond_a': report.cond_a,
            'cond_b': report.cond_b,
            'order': report.order_tag or '-'
        })

    return pd.DataFrame(rows)


def format_rank_table(table: pd.DataFrame) -> str:
    """Render a rank table as fixed-width text"""
    return table.to_string(index=False, float_format=lambda value: f"{value:.4f}")
