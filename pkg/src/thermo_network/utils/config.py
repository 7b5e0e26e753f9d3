import copy
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional

import yaml
from dotenv import load_dotenv

logger = logging.getLogger(__name__)

CONFIG_ENV_VAR = "THERMO_NETWORK_CONFIG"
LOG_LEVEL_ENV_VAR = "THERMO_NETWORK_LOG_LEVEL"

DEFAULT_CONFIG: Dict[str, Any] = {
    'logging': {
        'level': 'INFO',
        'file': 'data/logs/thermo_network.log',
    },
    'integration': {
        'method': 'rk45',
        't_final': 10.0,
        'h0': 1e-3,
        'h_min': 1e-9,
        'h_max': 0.1,
        'abs_tol': 1e-9,
        'rel_tol': 1e-9,
        'sample_dt': 0.05,
    },
    'audit': {
        'first_law_tol': 1e-6,
        'second_law_tol': 1e-10,
        'entropy_tol': 1e-6,
        'mole_tol': 1e-8,
        'gauge_tol': 1e-9,
        'equilibrium_fraction': 1e-6,
        'cross_validation_tol': 1e-5,
        'cross_validation_h': 1e-3,
        'cross_validation_horizon': 1.0,
    },
    'ldav': {
        'newton_tol': 1e-10,
        'newton_max_iter': 50,
        'proj_tol': 1e-8,
    },
    'output': {
        'dir': 'data/output',
    },
}


def get_project_root() -> Path:
    """Get the project root directory."""
    return Path(__file__).resolve().parent.parent.parent.parent


def _merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(path: Optional[Path] = None) -> Dict[str, Any]:
    """Load configuration from YAML, layered over the built-in defaults.

    Lookup order: explicit ``path``, then ``$THERMO_NETWORK_CONFIG`` (``.env`` files are
    honoured), then ``config/config.yml`` under the project root. A missing default file
    just yields the defaults; a missing explicitly requested file is an error.
    """
    load_dotenv()
    explicit = path is not None or bool(os.environ.get(CONFIG_ENV_VAR))
    config_path = Path(path) if path is not None else Path(
        os.environ.get(CONFIG_ENV_VAR) or get_project_root() / 'config' / 'config.yml')

    file_config: Dict[str, Any] = {}
    if config_path.exists():
        with open(config_path) as f:
            file_config = yaml.safe_load(f) or {}
    elif explicit:
        raise FileNotFoundError(f"configuration file not found: {config_path}")
    else:
        logger.debug(f"No configuration file at {config_path}, using defaults")

    config = _merge(DEFAULT_CONFIG, file_config)
    level = os.environ.get(LOG_LEVEL_ENV_VAR)
    if level:
        config['logging']['level'] = level.upper()
    return config
