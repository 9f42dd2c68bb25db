"""Experiment orchestration: configs, datasets, the two-stage pipeline,
benchmark sweeps and the command line interface."""

from .config import ConfigError, ExperimentConfig, load_config
from .dataset import generate_dataset, load_dataset
from .pipeline import ResultRow, nmse_db, run_two_stage
from .bench import bench, rows_to_csv

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "ResultRow",
    "bench",
    "generate_dataset",
    "load_config",
    "load_dataset",
    "nmse_db",
    "rows_to_csv",
    "run_two_stage",
]
