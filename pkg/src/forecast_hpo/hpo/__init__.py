"""Hyperparameter tuning: search spaces, Hyperband, GP-based Bayesian
optimisation, random search and simulated parallel scheduling."""

from .bayesian import run_bayesian, run_random
from .gp import GpError, GpModel, expected_improvement, gp_fit, se_kernel
from .hyperband import Bracket, hyperband_schedule, run_hyperband, top_k
from .scheduler import Schedule, barrier_latency, schedule_trials
from .space import Dimension, HyperparameterConfig, SearchSpace, sample_configuration
from .trials import (
    TRIAL_LOG_COLUMNS,
    TrialOutcome,
    TrialResult,
    TunerSettings,
    TuningError,
    TuningResult,
    read_trial_log,
    write_trial_log,
)

RUNNERS = {"hyperband": run_hyperband, "bayesian": run_bayesian, "random": run_random}


def tune(space: SearchSpace, settings: TunerSettings, objective) -> TuningResult:
    return RUNNERS[settings.strategy](space, settings, objective)


__all__ = [
    "Bracket",
    "Dimension",
    "GpError",
    "GpModel",
    "HyperparameterConfig",
    "RUNNERS",
    "Schedule",
    "SearchSpace",
    "TRIAL_LOG_COLUMNS",
    "TrialOutcome",
    "TrialResult",
    "TunerSettings",
    "TuningError",
    "TuningResult",
    "barrier_latency",
    "expected_improvement",
    "gp_fit",
    "hyperband_schedule",
    "read_trial_log",
    "run_bayesian",
    "run_hyperband",
    "run_random",
    "sample_configuration",
    "schedule_trials",
    "se_kernel",
    "top_k",
    "tune",
    "write_trial_log",
]
