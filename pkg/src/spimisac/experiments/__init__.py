"""Config-driven Monte Carlo experiments, CSV output and plots."""

from .config import (
    ConfigError,
    ExperimentConfig,
    SweepSpec,
    SystemConfig,
    config_from_dict,
    load_config,
    load_preset,
    preset_names,
)
from .runner import (
    METHODS,
    SweepResult,
    run_arraygain_demo,
    run_experiment,
    run_mismatch_sweep,
    simulate_trial,
)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "SweepSpec",
    "SystemConfig",
    "config_from_dict",
    "load_config",
    "load_preset",
    "preset_names",
    "METHODS",
    "SweepResult",
    "run_arraygain_demo",
    "run_experiment",
    "run_mismatch_sweep",
    "simulate_trial",
]
