"""
Experiment configuration documents for the command-line runs.

A document is JSON with a schema_version, a mode and the fields that mode
needs, for example

    {"schema_version": 1, "mode": "simulate", "replicates": 50, "k_max": 8,
     "model": {"setting": 1, "T": 200, "p": 100, "q": 20, "K": 50}, "seed": 7}
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

from src.dgp import ModelConfig, model_config_from_dict
from src.errors import ConfigError
from src.utils import SCHEMA_VERSION, config_hash, read_json, resolve_seed

logger = logging.getLogger(__name__)

MODES = ['simulate', 'analyze', 'rank', 'ingest', 'probe']


@dataclass
class ExperimentConfig:
    """Resolved experiment description"""

    mode: str
    model: Optional[Dict[str, Any]] = None
    models: List[Dict[str, Any]] = field(default_factory=list)
    replicates: int = 1
    k_max: int = 8
    max_lag: int = 20
    persistence_cutoff: float = 0.5
    data: Optional[str] = None
    schema: str = 'long'
    q: int = 20
    m: Optional[int] = None
    tail_cutoff: Optional[str] = None
    out_dir: str = 'results'
    seed: int = 0
    threads: int = 1
    rank_method: str = 'operator'
    divergence: Optional[Dict[str, Any]] = None
    expected_split: Optional[int] = None
    schema_version: int = SCHEMA_VERSION

    @property
    def digest(self) -> str:
        """Hash of the fields that determine the results (thread count and output directory excluded)"""
        resolved = experiment_config_to_dict(self)
        resolved.pop('threads')
        resolved.pop('out_dir')
        return config_hash(resolved)


def validate_experiment_config(cfg: ExperimentConfig) -> None:
    """
    Check mode-required fields and value ranges

    Args:
        cfg: Configuration to check
    """
    if cfg.schema_version != SCHEMA_VERSION:
        raise ConfigError(f"Unsupported schema_version {cfg.schema_version}; expected {SCHEMA_VERSION}")
    if cfg.mode not in MODES:
        raise ConfigError(f"Unknown mode '{cfg.mode}'; expected one of {MODES}")
    if cfg.replicates < 1:
        raise ConfigError(f"replicates must be at least 1, got {cfg.replicates}")
    if cfg.k_max < 1:
        raise ConfigError(f"k_max must be at least 1, got {cfg.k_max}")
    if cfg.threads < 1:
        raise ConfigError(f"threads must be at least 1, got {cfg.threads}")
    if cfg.max_lag < 1:
        raise ConfigError(f"max_lag must be at least 1, got {cfg.max_lag}")

    if cfg.mode == 'probe' and cfg.model is None:
        raise ConfigError("Mode 'probe' needs a 'model' block")
    if cfg.mode in ('simulate', 'rank') and cfg.model is None and not cfg.models:
        raise ConfigError(f"Mode '{cfg.mode}' needs a 'model' block or a 'models' list")
    for doc in ([cfg.model] if cfg.model is not None else []) + list(cfg.models):
        if isinstance(doc, dict) and isinstance(doc.get('K'), list) and not doc['K']:
            raise ConfigError("A K sweep needs at least one value")
    if cfg.mode in ('analyze', 'ingest') and not cfg.data:
        raise ConfigError(f"Mode '{cfg.mode}' needs a 'data' path")
    if cfg.schema not in ('long', 'wide'):
        raise ConfigError(f"schema must be 'long' or 'wide', got '{cfg.schema}'")
    if cfg.rank_method not in ('operator', 'structured'):
        raise ConfigError(f"rank_method must be 'operator' or 'structured', got '{cfg.rank_method}'")
    if cfg.divergence is not None and ('axis' not in cfg.divergence or 'values' not in cfg.divergence):
        raise ConfigError("divergence block needs 'axis' and 'values'")


def experiment_config_from_dict(doc: Dict[str, Any]) -> ExperimentConfig:
    """
    Build and validate an ExperimentConfig, applying the SPFTS_SEED override

    Args:
        doc: Parsed JSON document

    Returns:
        ExperimentConfig
    """
    if not isinstance(doc, dict):
        raise ConfigError("Experiment config must be a JSON object")

    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(f"Unknown experiment config fields: {unknown}")
    if 'mode' not in doc:
        raise ConfigError("Experiment config needs a 'mode'")

    values = dict(doc)
    model = values.get('model') or {}
    values['seed'] = resolve_seed(values.get('seed', model.get('seed')))

    try:
        cfg = ExperimentConfig(**values)
    except TypeError as e:
        raise ConfigError(f"Invalid experiment config: {e}")

    validate_experiment_config(cfg)
    return cfg


def load_experiment_config(path: str) -> ExperimentConfig:
    """Read, resolve and validate an experiment config file"""
    cfg = experiment_config_from_dict(read_json(path))
    logger.info(f"Loaded {cfg.mode} config from {path} (hash {cfg.digest})")
    return cfg


def experiment_config_to_dict(cfg: ExperimentConfig) -> Dict[str, Any]:
    """Resolved configuration as a plain dictionary"""
    return asdict(cfg)


def build_models(cfg: ExperimentConfig) -> List[ModelConfig]:
    """
    Materialize the model configurations named by an experiment

    A block whose K is a list ({"K": [50, 10, 2]}) expands into one model per
    value. A model block with its own seed keeps it; the others use the
    experiment's resolved seed. SPFTS_SEED overrides both.

    Args:
        cfg: Experiment configuration

    Returns:
        List of ModelConfig
    """
    documents = []
    for doc in (list(cfg.models) if cfg.models else [cfg.model]):
        if doc is None:
            continue
        if isinstance(doc.get('K'), list):
            documents.extend(dict(doc, K=K) for K in doc['K'])
        else:
            documents.append(doc)

    return [
        model_config_from_dict(doc, seed=resolve_seed(doc['seed']) if 'seed' in doc else cfg.seed)
        for doc in documents
    ]
