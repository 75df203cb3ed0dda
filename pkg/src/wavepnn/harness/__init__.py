"""Configuration, checkpointing, orchestration and report emission."""

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, build_backend, config_hash, load_config, \
    load_system, resolve_config, save_system
from .report import report_dict, validate_report, write_artifacts
from .runner import diagnose, evaluate, gen_data, load_task, run, run_experiment

__all__ = [
    "CheckpointError", "ConfigError", "build_backend", "config_hash",
    "diagnose", "evaluate", "gen_data", "load_checkpoint", "load_config",
    "load_system", "load_task", "report_dict", "resolve_config", "run",
    "run_experiment", "save_checkpoint", "save_system", "validate_report",
    "write_artifacts",
]
