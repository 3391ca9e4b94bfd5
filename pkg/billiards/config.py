"""
Solver configuration and tolerance handling
"""

import logging
import os
import threading
from contextlib import contextmanager
from typing import Any, Dict, Iterator, Optional

from dotenv import load_dotenv

from .errors import ConfigError

load_dotenv()

logger = logging.getLogger(__name__)

# Solver configuration
SOLVER_CONFIG = {
    'grad_target': float(os.environ.get('BILLIARDS_GRAD_TARGET', '1e-12')),
    'grad_accept': float(os.environ.get('BILLIARDS_GRAD_ACCEPT', '1e-10')),
    'max_newton_steps': int(os.environ.get('BILLIARDS_MAX_NEWTON_STEPS', '200')),
    'gluing_tolerance': float(os.environ.get('BILLIARDS_GLUING_TOLERANCE', '1e-11')),
    'tangential_tolerance': float(os.environ.get('BILLIARDS_TANGENTIAL_TOLERANCE', '1e-12')),
    'c1_tolerance': float(os.environ.get('BILLIARDS_C1_TOLERANCE', '1e-10')),
    'tie_tolerance': float(os.environ.get('BILLIARDS_TIE_TOLERANCE', '1e-9')),
    'replay_tolerance': float(os.environ.get('BILLIARDS_REPLAY_TOLERANCE', '1e-8')),
    'defocusing_grid': int(os.environ.get('BILLIARDS_DEFOCUSING_GRID', '256')),
    'workers': int(os.environ.get('BILLIARDS_WORKERS', '4')),
}

# Lower bounds for user overrides
TOLERANCE_FLOORS = {
    'grad_target': 1e-15,
    'grad_accept': 1e-14,
    'max_newton_steps': 1,
    'gluing_tolerance': 1e-15,
    'tangential_tolerance': 1e-15,
    'c1_tolerance': 1e-15,
    'tie_tolerance': 1e-15,
    'replay_tolerance': 1e-13,
    'defocusing_grid': 8,
    'workers': 1,
}

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def get_log_level() -> int:
    """Get the log level from the environment, INFO by default"""
    name = os.environ.get('BILLIARDS_LOG_LEVEL', 'INFO').upper()
    return getattr(logging, name, logging.INFO)


def resolve_tolerances(overrides: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """Merge tolerance overrides into a copy of SOLVER_CONFIG.

    Unknown keys and values below the machine-precision floors are rejected.
    """
    resolved = dict(SOLVER_CONFIG)
    for key, value in (overrides or {}).items():
        if key not in TOLERANCE_FLOORS:
            raise ConfigError(f"Unknown tolerance key: {key}")
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"Tolerance {key} must be numeric, got {value!r}")
        if value < TOLERANCE_FLOORS[key]:
            raise ConfigError(
                f"Tolerance {key}={value} is below its floor {TOLERANCE_FLOORS[key]}"
            )
        resolved[key] = type(SOLVER_CONFIG[key])(value)
    if resolved['grad_target'] > resolved['grad_accept']:
        raise ConfigError("grad_target must not exceed grad_accept")
    return resolved


_OVERRIDE_LOCK = threading.Lock()


@contextmanager
def override_tolerances(overrides: Optional[Dict[str, Any]] = None) -> Iterator[Dict[str, Any]]:
    """Apply resolved overrides to SOLVER_CONFIG for the duration of one run."""
    resolved = resolve_tolerances(overrides)
    with _OVERRIDE_LOCK:
        saved = dict(SOLVER_CONFIG)
        SOLVER_CONFIG.update(resolved)
        try:
            yield resolved
        finally:
            SOLVER_CONFIG.clear()
            SOLVER_CONFIG.update(saved)
