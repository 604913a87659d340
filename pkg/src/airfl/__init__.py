"""Federated learning over a fading MAC with analog gradient aggregation,
cyclic data redundancy, and energy-aware online worker scheduling."""

from .config import (
    ConfigError,
    ExperimentConfig,
    GammaPiece,
    ModelSpec,
    load_config,
    save_config,
    validate,
)
from .orchestrator import ExperimentResult, RoundRecord, run_experiment
from .oracle import BoundReport, WorkerTrace, check_bounds, drift_trace, genie_optimal

__all__ = [
    "BoundReport",
    "ConfigError",
    "ExperimentConfig",
    "ExperimentResult",
    "GammaPiece",
    "ModelSpec",
    "RoundRecord",
    "WorkerTrace",
    "check_bounds",
    "drift_trace",
    "genie_optimal",
    "load_config",
    "run_experiment",
    "save_config",
    "validate",
]
