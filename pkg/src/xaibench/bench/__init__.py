"""Experiment runner: config, pipeline, reports and CLI."""
from .config import ConfigError, ExperimentConfig, from_dict, load_config
from .report import LAYOUTS, emit_report
from .runner import RunManifest, StageError, run, validate_manifest

__all__ = ["ConfigError", "ExperimentConfig", "LAYOUTS", "RunManifest", "StageError", "emit_report",
           "from_dict", "load_config", "run", "validate_manifest"]
