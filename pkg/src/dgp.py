"""
Data-generating process for the functional factor model

X_it = sum_k Psi_ik F_kt + zeta_it, F_kt = sum_{s<=t} eps_ks

with eps_kt = sum_n Z^n_kt phi_n, Z^n_kt ~ N(0, c_n), loadings
Psi_ik = sum_n a_nik phi_n (x) phi_n and noise coefficients W^n_it ~ N(0, var_n).
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence, Union

import numpy as np

from src.basis_algebra import BasisContext, FunctionalPanel, build_fourier_basis
from src.errors import ConfigError, DimensionError
from src.operator_calculus import CovarianceSpec
from src.utils import SCHEMA_VERSION, make_rng

logger = logging.getLogger(__name__)

COVARIANCE_SETTINGS = ['delocalized_flat', 'localized_geometric', 'localized_rank2', 'custom']
LOADING_SCHEMES = ['full_rank', 'low_eff_rank', 'reduced_rank', 'custom']

# Simulation settings: (covariance setting, loading scheme)
SIMULATION_SETTINGS = {
    1: ('delocalized_flat', 'full_rank'),
    2: ('delocalized_flat', 'low_eff_rank'),
    3: ('localized_geometric', 'full_rank'),
    4: ('localized_geometric', 'low_eff_rank'),
    5: ('localized_rank2', 'full_rank'),
    6: ('localized_rank2', 'low_eff_rank')
}

DEFAULT_GRID_POINTS = 101
DEFAULT_REDUCED_RANK = 3


@dataclass
class LoadingSpec:
    """Loading matrices A_n (stacked as a (q, p, K) array) and how they were drawn"""

    scheme: str
    A: np.ndarray
    context: BasisContext
    seed: Optional[int] = None
    rank: Optional[int] = None

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        if self.A.ndim != 3 or self.A.shape[0] != self.context.q:
            raise DimensionError(f"Loadings must be stacked as (q={self.context.q}, p, K), got {self.A.shape}")
        if not np.all(np.isfinite(self.A)):
            raise ConfigError("Loading entries must be finite")
        if self.scheme not in LOADING_SCHEMES:
            raise ConfigError(f"Unknown loading scheme '{self.scheme}'")

    @property
    def p(self) -> int:
        return int(self.A.shape[1])

    @property
    def K(self) -> int:
        return int(self.A.shape[2])


@dataclass
class NoiseSpec:
    """Variances of the noise coefficients W^n_it, multiplied by scale"""

    variances: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        self.variances = np.asarray(self.variances, dtype=float)
        if np.any(self.variances < 0) or self.scale < 0:
            raise ConfigError("Noise variances and scale must be nonnegative")

    @property
    def effective_variances(self) -> np.ndarray:
        return self.variances * self.scale

    @classmethod
    def default(cls, q: int, scale: float = 1.0) -> 'NoiseSpec':
        return cls(2.0 ** -np.arange(1, q + 1), scale)


@dataclass
class ModelConfig:
    """Full description of one simulation design"""

    T: int
    p: int
    q: int
    K: int
    cov: CovarianceSpec
    loadings: LoadingSpec
    noise: NoiseSpec
    seed: int = 0
    setting: Optional[int] = None

    def __post_init__(self):
        if self.T < 2:
            raise ConfigError(f"Need T >= 2, got T={self.T}")
        if min(self.p, self.q, self.K) < 1:
            raise ConfigError(f"Counts must be positive, got p={self.p}, q={self.q}, K={self.K}")
        if self.loadings.A.shape != (self.q, self.p, self.K):
            raise DimensionError(
                f"Loadings shape {self.loadings.A.shape} does not match (q, p, K) = {(self.q, self.p, self.K)}"
            )
        if self.cov.c.shape != (self.q,) or self.noise.variances.shape != (self.q,):
            raise DimensionError("Covariance and noise need one entry per basis function")
        if not self.cov.context.same_as(self.loadings.context):
            raise DimensionError("Covariance and loadings live on different contexts")

    @property
    def context(self) -> BasisContext:
        return self.cov.context


def make_covariance(setting: str, q: int, c: Optional[Sequence[float]] = None,
                    ctx: Optional[BasisContext] = None) -> CovarianceSpec:
    """
    Eigenvalues c_n of the innovation covariance

    Args:
        setting: delocalized_flat, localized_geometric, localized_rank2 or custom
        q: Basis truncation
        c: Eigenvalues for the custom setting
        ctx: Basis context (a default Fourier context is built when omitted)

    Returns:
        CovarianceSpec with eigenvalues summing to one
    """
    if q < 1:
        raise ConfigError(f"Need q >= 1, got q={q}")
    if ctx is None:
        ctx = build_fourier_basis(q, max(DEFAULT_GRID_POINTS, 4 * q + 1))

    n = np.arange(1, q + 1)
    if setting == 'delocalized_flat':
        values = np.full(q, 1.0 / q)
    elif setting == 'localized_geometric':
        values = 2.0 ** -n
        values = values / values.sum()
    elif setting == 'localized_rank2':
        if q < 2:
            raise ConfigError("localized_rank2 needs q >= 2")
        values = np.where(n <= 2, 0.5, 0.0)
    elif setting == 'custom':
        if c is None:
            raise ConfigError("Custom covariance needs explicit eigenvalues")
        values = np.asarray(c, dtype=float)
        if values.shape != (q,):
            raise ConfigError(f"Custom covariance needs {q} eigenvalues, got {values.shape}")
        if np.any(values < 0):
            raise ConfigError("Custom covariance eigenvalues must be nonnegative")
        total = values.sum()
        if total <= 0:
            raise ConfigError("Custom covariance eigenvalues must have a positive sum")
        values = values / total
    else:
        raise ConfigError(f"Unknown covariance setting '{setting}'")

    return CovarianceSpec(values, ctx, setting)


def sample_haar_orthogonal(N: int, seed: Union[int, np.random.Generator]) -> np.ndarray:
    """
    Draw a Haar-distributed orthogonal matrix

    QR of a Gaussian matrix with the signs of diag(R) moved into Q.

    Args:
        N: Dimension
        seed: Integer seed or Generator

    Returns:
        N x N orthogonal matrix
    """
    if N < 1:
        raise ConfigError(f"Need N >= 1, got N={N}")
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(int(seed), 0, 'loadings')

    return _haar_columns(rng, N, N)


def _haar_columns(rng: np.random.Generator, N: int, k: int) -> np.ndarray:
    """First k columns of a Haar orthogonal N x N matrix"""
    Q, R = np.linalg.qr(rng.standard_normal((N, k)))
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs[None, :]


def make_loadings(scheme: str, p: int, K: int, q: int, seed: int,
                  ctx: Optional[BasisContext] = None, rank: int = DEFAULT_REDUCED_RANK,
                  A: Optional[np.ndarray] = None) -> LoadingSpec:
    """
    Draw the loading matrices A_n, n = 1..q

    full_rank: i.i.d. standard Gaussian entries.
    low_eff_rank: A_n = sqrt(p) U_p diag(2^{-1/2}, ..., 2^{-K/2}) U_K' with fresh
    Haar U_p (first K columns) and U_K for every n.
    reduced_rank: A_n = G_{p x r} G_{r x K} / sqrt(r) with Gaussian factors.

    Args:
        scheme: Loading scheme name
        p: Panel width
        K: Number of factors
        q: Basis truncation
        seed: Base seed, drawn on the loadings stream
        ctx: Basis context (default Fourier context when omitted)
        rank: Rank r of the reduced_rank scheme
        A: Explicit (q, p, K) array for the custom scheme

    Returns:
        LoadingSpec
    """
    if min(p, K, q) < 1:
        raise ConfigError(f"Counts must be positive, got p={p}, K={K}, q={q}")
    if ctx is None:
        ctx = build_fourier_basis(q, max(DEFAULT_GRID_POINTS, 4 * q + 1))

    rng = make_rng(seed, 0, 'loadings')

    if scheme == 'full_rank':
        loadings = rng.standard_normal((q, p, K))
    elif scheme == 'low_eff_rank':
        if K > p:
            raise ConfigError(f"low_eff_rank loadings need K <= p, got K={K}, p={p}")
        weights = 2.0 ** (-np.arange(1, K + 1) / 2.0)
        loadings = np.empty((q, p, K))
        for n in range(q):
            U_p = _haar_columns(rng, p, K)
            U_K = _haar_columns(rng, K, K)
            loadings[n] = np.sqrt(p) * (U_p * weights[None, :]) @ U_K.T
    elif scheme == 'reduced_rank':
        if rank < 1:
            raise ConfigError(f"reduced_rank loadings need rank >= 1, got {rank}")
        left = rng.standard_normal((q, p, rank))
        right = rng.standard_normal((q, rank, K))
        loadings = np.matmul(left, right) / np.sqrt(rank)
    elif scheme == 'custom':
        if A is None:
            raise ConfigError("Custom loadings need an explicit array")
        loadings = np.asarray(A, dtype=float)
        if loadings.shape != (q, p, K):
            raise ConfigError(f"Custom loadings must have shape {(q, p, K)}, got {loadings.shape}")
    else:
        raise ConfigError(f"Unknown loading scheme '{scheme}'")

    return LoadingSpec(scheme, loadings, ctx, seed, rank if scheme == 'reduced_rank' else None)


def simulate_panel(cfg: ModelConfig, replicate: int = 0) -> Dict[str, Any]:
    """
    Simulate one replicate of the model

    Args:
        cfg: Model configuration
        replicate: Replicate index selecting the random streams

    Returns:
        Dictionary with panel (FunctionalPanel), factors and innovations
        ((K, T, q) tensors) and noise ((p, T, q) tensor)
    """
    T, p, q, K = cfg.T, cfg.p, cfg.q, cfg.K

    # Innovations Z^n_kt ~ N(0, c_n) and their random walk
    innovations = make_rng(cfg.seed, replicate, 'innovations').standard_normal((K, T, q)) * np.sqrt(cfg.cov.c)
    factors = np.cumsum(innovations, axis=1)

    # Stationary noise
    noise_sd = np.sqrt(cfg.noise.effective_variances)
    noise = make_rng(cfg.seed, replicate, 'noise').standard_normal((p, T, q)) * noise_sd

    coeffs = np.einsum('nik,ktn->itn', cfg.loadings.A, factors, optimize=True) + noise

    panel = FunctionalPanel(
        coeffs,
        cfg.context,
        provenance={'source': 'simulation', 'seed': cfg.seed, 'replicate': replicate, 'setting': cfg.setting}
    )
    logger.debug(f"Simulated replicate {replicate}: p={p}, T={T}, q={q}, K={K}")

    return {
        'panel': panel,
        'factors': factors,
        'innovations': innovations,
        'noise': noise
    }


def simulate_null_panel(p: int, T: int, ctx: BasisContext, seed: int, replicate: int = 0) -> FunctionalPanel:
    """
    Stationary reference panel with i.i.d. standard Gaussian coefficients

    Args:
        p: Panel width
        T: Time length
        ctx: Basis context
        seed: Base seed, drawn on the null stream
        replicate: Replicate index

    Returns:
        FunctionalPanel
    """
    coeffs = make_rng(seed, replicate, 'null').standard_normal((p, T, ctx.q))
    return FunctionalPanel(coeffs, ctx, provenance={'source': 'null', 'seed': seed, 'replicate': replicate})


def build_model_config(T: int, p: int, q: int, K: int, covariance: str, scheme: str, seed: int = 0,
                       m: int = DEFAULT_GRID_POINTS, noise_scale: float = 1.0,
                       noise_variances: Optional[Sequence[float]] = None, c: Optional[Sequence[float]] = None,
                       rank: int = DEFAULT_REDUCED_RANK, A: Optional[np.ndarray] = None,
                       setting: Optional[int] = None) -> ModelConfig:
    """
    Assemble a ModelConfig from plain parameters

    Args:
        T, p, q, K: Dimensions
        covariance: Covariance setting name
        scheme: Loading scheme name
        seed: Base seed
        m: Grid points of the basis context
        noise_scale: Multiplier of the noise variances
        noise_variances: Explicit noise variances (default 2^-n)
        c: Custom covariance eigenvalues
        rank: Rank of reduced_rank loadings
        A: Custom loadings
        setting: Simulation setting number, when the design is one of them

    Returns:
        ModelConfig
    """
    ctx = build_fourier_basis(q, max(m, 4 * q + 1))
    cov = make_covariance(covariance, q, c, ctx)
    loadings = make_loadings(scheme, p, K, q, seed, ctx, rank, A)
    if noise_variances is None:
        noise = NoiseSpec.default(q, noise_scale)
    else:
        noise = NoiseSpec(np.asarray(noise_variances, dtype=float), noise_scale)

    return ModelConfig(T, p, q, K, cov, loadings, noise, int(seed), setting)


def model_config_for_setting(setting: int, K: int = 50, T: int = 200, p: int = 100, q: int = 20,
                             seed: int = 0, m: int = DEFAULT_GRID_POINTS, noise_scale: float = 1.0) -> ModelConfig:
    """
    ModelConfig for one of the six simulation settings

    Args:
        setting: Setting number 1..6
        K, T, p, q: Dimensions (defaults are the simulation study's)
        seed: Base seed
        m: Grid points
        noise_scale: Multiplier of the 2^-n noise variances

    Returns:
        ModelConfig
    """
    if setting not in SIMULATION_SETTINGS:
        raise ConfigError(f"Unknown setting {setting}; expected one of {sorted(SIMULATION_SETTINGS)}")

    covariance, scheme = SIMULATION_SETTINGS[setting]
    return build_model_config(T, p, q, K, covariance, scheme, seed, m, noise_scale, setting=setting)


def model_config_to_dict(cfg: ModelConfig) -> Dict[str, Any]:
    """
    JSON-ready description of a ModelConfig

    Random loadings are stored by scheme and seed; custom loadings and
    covariances are stored explicitly.
    """
    doc = {
        'schema_version': SCHEMA_VERSION,
        'T': cfg.T,
        'p': cfg.p,
        'q': cfg.q,
        'K': cfg.K,
        'm': cfg.context.m,
        'seed': cfg.seed,
        'setting': cfg.setting,
        'covariance': {'setting': cfg.cov.setting},
        'loadings': {'scheme': cfg.loadings.scheme},
        'noise': {'variances': cfg.noise.variances.tolist(), 'scale': cfg.noise.scale}
    }
    if cfg.cov.setting == 'custom':
        doc['covariance']['c'] = cfg.cov.c.tolist()
    if cfg.loadings.scheme == 'reduced_rank':
        doc['loadings']['rank'] = cfg.loadings.rank
    if cfg.loadings.scheme == 'custom':
        doc['loadings']['A'] = cfg.loadings.A.tolist()

    return doc


def model_config_from_dict(doc: Dict[str, Any], seed: Optional[int] = None) -> ModelConfig:
    """
    Build a ModelConfig from its JSON description

    A document may name a simulation setting ({"setting": 2, "K": 2, ...}) or
    spell out the covariance and loading blocks.

    Args:
        doc: Parsed JSON document
        seed: Seed overriding the document's

    Returns:
        ModelConfig
    """
    version = doc.get('schema_version', SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"Unsupported model schema_version {version}")

    try:
        T, p, q, K = int(doc['T']), int(doc['p']), int(doc['q']), int(doc['K'])
    except KeyError as e:
        raise ConfigError(f"Model config is missing field {e}")
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Model dimensions must be integers: {e}")

    seed = int(doc.get('seed', 0)) if seed is None else int(seed)
    m = int(doc.get('m', DEFAULT_GRID_POINTS))
    noise_doc = doc.get('noise') or {}
    setting = doc.get('setting')

    if setting is not None and 'covariance' not in doc and 'loadings' not in doc:
        if int(setting) not in SIMULATION_SETTINGS:
            raise ConfigError(f"Unknown setting {setting}")
        covariance, scheme = SIMULATION_SETTINGS[int(setting)]
        cov_doc, load_doc = {'setting': covariance}, {'scheme': scheme}
    else:
        cov_doc = doc.get('covariance') or {}
        load_doc = doc.get('loadings') or {}
        if 'setting' not in cov_doc or 'scheme' not in load_doc:
            raise ConfigError("Model config needs a setting number or covariance.setting and loadings.scheme")
        if setting is not None and SIMULATION_SETTINGS.get(int(setting)) != (cov_doc['setting'], load_doc['scheme']):
            logger.warning(
                f"Setting {setting} does not match covariance {cov_doc['setting']!r} with loadings "
                f"{load_doc['scheme']!r}; treating the model as a custom design"
            )
            setting = None

    custom_A = load_doc.get('A')
    return build_model_config(
        T, p, q, K,
        covariance=cov_doc['setting'],
        scheme=load_doc['scheme'],
        seed=seed,
        m=m,
        noise_scale=float(noise_doc.get('scale', 1.0)),
        noise_variances=noise_doc.get('variances'),
        c=cov_doc.get('c'),
        rank=int(load_doc.get('rank', DEFAULT_REDUCED_RANK)),
        A=np.asarray(custom_A, dtype=float) if custom_A is not None else None,
        setting=int(setting) if setting is not None else None
    )
