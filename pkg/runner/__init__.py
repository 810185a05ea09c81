"""
Experiment runner for the Rovella map lab
Loads configs, dispatches experiments to their handlers and writes the
CSV data files and JSON summaries
"""

__version__ = "0.1.0"

from .config import EXPERIMENTS, ExperimentConfig, load_config
from .output import RunOutput
from .cli_runner import exit_status, run_experiment

__all__ = ['EXPERIMENTS', 'ExperimentConfig', 'load_config', 'RunOutput', 'exit_status', 'run_experiment']
