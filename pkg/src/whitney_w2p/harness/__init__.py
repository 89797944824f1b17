"""Experiment orchestration and the command line."""

from .config import (EXPERIMENTS, ESTIMATES, ConfigError, ExperimentConfig,  # noqa: F401
                     default_config, load_config, resolve_domain)
from .runner import RunDiff, RunManifest, SchemaMismatch, compare_runs, execute, run  # noqa: F401
