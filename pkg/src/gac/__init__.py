"""Gradient alignment complexity (GAC) of regression models.

The GAC of a model is one minus the mean squared cosine similarity between
its parameter gradients at pairs of inputs. It is 0 when all gradients are
parallel and 1 when they are mutually orthogonal.
"""
from .baselines import SmootherMatrices, enp, genp_rx, genp_v, param_norm
from .complexity import (
    ComplexityReport,
    EnsembleStats,
    TrainingTrace,
    ensemble_gac,
    ensemble_moments,
    gac_from_gradients,
    gac_from_jacobians,
    gac_from_kernel,
    matrix_entropy,
    total_gac,
)
from .exceptions import GACError
from .gp import GaussianProcess
from .kernels import KernelSpec, kernel_matrix, normalize
from .models import GradientBoostingRegressor, KernelRidge, MLPRegressor, RFFRegressor
from .smoothers import DecisionTreeSmoother, KNNSmoother, RandomForestSmoother

__version__ = "0.1.0"

__all__ = [
    "SmootherMatrices",
    "enp",
    "genp_rx",
    "genp_v",
    "param_norm",
    "GaussianProcess",
    "ComplexityReport",
    "EnsembleStats",
    "TrainingTrace",
    "ensemble_gac",
    "ensemble_moments",
    "gac_from_gradients",
    "gac_from_jacobians",
    "gac_from_kernel",
    "matrix_entropy",
    "total_gac",
    "GACError",
    "KernelSpec",
    "kernel_matrix",
    "normalize",
    "GradientBoostingRegressor",
    "KernelRidge",
    "MLPRegressor",
    "RFFRegressor",
    "DecisionTreeSmoother",
    "KNNSmoother",
    "RandomForestSmoother",
]
