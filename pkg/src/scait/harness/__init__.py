"""Configuration, sweeps, metrics and plots."""

from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .metrics import compute_bpp, delay_model
from .sweep import (
    REPORT_FIELDS,
    Assets,
    SetupError,
    evaluate_point,
    load_assets,
    prepare_assets,
    read_report,
    run_sweep,
    summarize,
    write_report,
)

__all__ = [
    "REPORT_FIELDS", "Assets", "ConfigError", "ExperimentConfig", "SetupError", "compute_bpp", "delay_model",
    "evaluate_point", "load_assets", "load_config", "parse_config", "prepare_assets", "read_report",
    "run_sweep", "summarize", "write_report",
]
