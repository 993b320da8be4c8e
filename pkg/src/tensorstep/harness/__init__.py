"""Configuration-driven experiment runner, sweeps, stability checks and checkpoints."""

from .config import ConfigError, ExperimentConfig, config_from_dict, load_config, load_schema
from .runner import COLUMNS, ExperimentFailure, build_problem, make_stepper, run_experiment
from .stability import (LinearStabilityReport, StabilityVerdict, inexact_linear_stepping,
                        stability_compare)
from .sweep import SweepAborted, SweepResult, convergence_sweep, fit_slope
from .tensor_io import TensorFormatError, load_tt, save_tt

__all__ = [
    "COLUMNS", "ConfigError", "ExperimentConfig", "ExperimentFailure", "LinearStabilityReport",
    "StabilityVerdict", "SweepAborted", "SweepResult", "TensorFormatError", "build_problem",
    "config_from_dict", "convergence_sweep", "fit_slope", "inexact_linear_stepping", "load_config",
    "load_schema", "load_tt", "make_stepper", "run_experiment", "save_tt", "stability_compare",
]
