"""Experiment configuration, sweeps, reporting and the command line."""
from .config import ExperimentConfig, from_dict, load_config
from .experiment import ResultRow, degradation, read_rows, run_cee_sweep, run_power_sweep, run_sweep
from .report import aggregate, summarize

__all__ = ["ExperimentConfig", "from_dict", "load_config", "ResultRow", "degradation", "read_rows",
           "run_cee_sweep", "run_power_sweep", "run_sweep", "aggregate", "summarize"]
