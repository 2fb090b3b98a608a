"""Experiment harness: configs, presets, crystal cache, runner and CLI."""
from .config import ConfigError, ExperimentConfig
from .presets import PRESETS, get_preset, preset_names
from .runner import ExperimentRecord, run, verify

__all__ = ["ConfigError", "ExperimentConfig", "ExperimentRecord", "PRESETS", "get_preset", "preset_names",
           "run", "verify"]
