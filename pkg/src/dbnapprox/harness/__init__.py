"""Command-line experiments: config parsing, runners, CSV output and plot scripts."""
from .config import ExperimentConfig, load_config, parse_config
from .experiments import counterexample_demo, run_experiment
from .plot import emit_plot_script

__all__ = [
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "counterexample_demo",
    "run_experiment",
    "emit_plot_script",
]
