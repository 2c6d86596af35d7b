"""Experiment configuration, sweeps, reports and the command line."""

from .config import ExperimentConfig, load_config
from .experiments import SweepRecord, run_bound_report, run_consistency_sweep, run_interpolation
