"""Joint estimation of irregular wave excitation, hull parameters and the
sea spectrum from vessel motion records."""

from .config import ScenarioConfig
from .errors import (ConditioningError, ConfigError, DataError, DivergenceError, DomainError, GapError,
                     SeaStateError)
from .estimators import run_filter
from .pcrlb import bound_for_scenario, run_bound
from .pipeline import trace_spectrum
from .simharness import generate_measurements, generate_truth, ingest_csv, export_csv, run_mc
from .spectrum import estimate_spectrum, sea_parameters

__version__ = "0.1.0"

__all__ = [
    "ScenarioConfig", "SeaStateError", "ConditioningError", "ConfigError", "DataError", "DivergenceError",
    "DomainError", "GapError", "run_filter", "run_bound", "bound_for_scenario", "trace_spectrum",
    "generate_truth", "generate_measurements", "ingest_csv", "export_csv", "run_mc", "estimate_spectrum",
    "sea_parameters",
]
