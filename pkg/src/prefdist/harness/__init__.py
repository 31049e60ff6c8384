"""Experiment orchestration: configs, sweeps, reports and the CLI."""

from .config import ConfigError, ExperimentConfig, default_config, load_config
from .report import emit_report
from .runner import (
    CellFailure,
    SweepResult,
    TrialResult,
    run_sweep,
    run_trial,
    verify_theory_suite,
)

__all__ = [
    "CellFailure",
    "ConfigError",
    "ExperimentConfig",
    "SweepResult",
    "TrialResult",
    "default_config",
    "emit_report",
    "load_config",
    "run_sweep",
    "run_trial",
    "verify_theory_suite",
]
