"""Experiment harness: config files, runner, CSV output, figures and the CLI."""

from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .runner import COLUMNS, ResultRow, emit_csv, read_csv, run

__all__ = ["COLUMNS", "ConfigError", "ExperimentConfig", "ResultRow", "emit_csv", "load_config", "parse_config",
           "read_csv", "run"]
