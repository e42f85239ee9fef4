"""Data loading, experiment grids, CSV/SVG output and the ``gac`` CLI."""
from .data import Dataset, gen_gaussian, load_cifar10, load_idx
from .experiments import EXPERIMENTS, ExperimentConfig, run_experiment
from .plotting import emit_plot

__all__ = [
    "Dataset",
    "gen_gaussian",
    "load_cifar10",
    "load_idx",
    "EXPERIMENTS",
    "ExperimentConfig",
    "run_experiment",
    "emit_plot",
]
