import hashlib
import json
import logging
import os
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd

from src.errors import ConfigError

# Random streams drawn for each replicate
rng_streams = {
    'loadings': 0,
    'innovations': 1,
    'noise': 2,
    'null': 3
}

SCHEMA_VERSION = 1
SEED_ENV_VAR = 'SPFTS_SEED'
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def configure_logging(level: str = 'INFO') -> None:
    """
    Configure root logging for command-line runs

    Args:
        level: Logging level name (DEBUG, INFO, WARNING, ...)
    """
    logging.basicConfig(level=getattr(logging, level.upper(), logging.INFO), format=LOG_FORMAT)


def resolve_seed(config_seed: Optional[int]) -> int:
    """
    Determine the seed to use, honouring the SPFTS_SEED override

    Args:
        config_seed: Seed found in the configuration (may be None)

    Returns:
        Seed as a non-negative integer
    """
    override = os.environ.get(SEED_ENV_VAR)
    if override not in (None, ''):
        try:
            return int(override)
        except ValueError:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {override!r}")

    return int(config_seed) if config_seed is not None else 0


def make_rng(seed: int, replicate: int = 0, stream: str = 'innovations') -> np.random.Generator:
    """
    Build the counter-based generator for one (replicate, stream) pair

    Philox keyed through a SeedSequence whose spawn key is
    (replicate, stream index), so replicates are independent of each
    other and of the order in which they run.

    Args:
        seed: Base 64-bit seed
        replicate: Replicate index
        stream: Stream name (see rng_streams)

    Returns:
        numpy Generator
    """
    sequence = np.random.SeedSequence(int(seed), spawn_key=(int(replicate), rng_streams[stream]))
    return np.random.Generator(np.random.Philox(sequence))


def to_jsonable(obj: Any) -> Any:
    """
    Convert numpy containers and scalars to plain Python for json.dump

    Args:
        obj: Object to convert

    Returns:
        JSON-serializable object
    """
    if isinstance(obj, dict):
        return {str(key): to_jsonable(value) for key, value in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(value) for value in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def config_hash(config: Dict[str, Any]) -> str:
    """
    Hash a resolved configuration

    Args:
        config: Configuration dictionary

    Returns:
        First 16 hex characters of the sha256 of its canonical JSON
    """
    canonical = json.dumps(to_jsonable(config), sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()[:16]


def write_json(data: Dict[str, Any], path: str) -> str:
    """
    Save a dictionary as indented JSON, creating parent directories

    Args:
        data: Dictionary to save
        path: Destination file

    Returns:
        Path of the written file
    """
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)

    with open(path, 'w') as f:
        json.dump(to_jsonable(data), f, indent=4)

    return path


def read_json(path: str) -> Dict[str, Any]:
    """
    Load a JSON document

    Args:
        path: File to read

    Returns:
        Parsed document
    """
    try:
        with open(path, 'r') as f:
            return json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"Config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"Invalid JSON in {path}: {e}")


def export_frame_to_csv(frame: pd.DataFrame, path: str) -> str:
    """
    Export a DataFrame to CSV, creating parent directories

    Args:
        frame: Data to export
        path: Destination file

    Returns:
        Path of the written file
    """
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)

    frame.to_csv(path, index=False)

    return path
