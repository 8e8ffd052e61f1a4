"""Batch harness: configuration files, parameter sweeps, and the CLI."""

from .cli import cli_main, main
from .config import (
    RunSettings,
    apply_parameter,
    auto_dt,
    default_settings,
    load_config,
    parse_config_text,
    render_config,
)
from .sweeps import SweepResult, SweepSpec, run_potential_scan, run_sweep

__all__ = [
    "RunSettings",
    "apply_parameter",
    "auto_dt",
    "default_settings",
    "load_config",
    "parse_config_text",
    "render_config",
    "SweepResult",
    "SweepSpec",
    "run_potential_scan",
    "run_sweep",
    "cli_main",
    "main",
]
