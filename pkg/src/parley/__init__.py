"""Parley."""
from . import accessor, constants
from .__version__ import __version__ as __version__
from .config import load_matrix
from .core import aggregate_runs, run_matrix, run_sweep
from .engine import run_episode
from .parser import parse_turn
from .scenarios import identifiers, load_scenario
from .schema import deserialize_run, serialize_run, validate_run_record

__all__ = [
    "accessor",
    "aggregate_runs",
    "constants",
    "deserialize_run",
    "identifiers",
    "load_matrix",
    "load_scenario",
    "parse_turn",
    "run_episode",
    "run_matrix",
    "run_sweep",
    "serialize_run",
    "validate_run_record",
    "__version__",
]
