"""Composite likelihood inference for the Smith max-stable process from threshold exceedances."""

__version__ = "0.1.0"

from .estimate import FitOptions, FitResult, fit, fit_two_step_lt, maximize_cl
from .kernels import BACKEND
from .model import SmithParams, extremal_coefficient
from .pairlik import composite_loglik, make_weights
from .simulate import Dataset, SimConfig, regular_grid, simulate_dataset, to_gumbel

__all__ = [
    "BACKEND",
    "Dataset",
    "FitOptions",
    "FitResult",
    "SimConfig",
    "SmithParams",
    "composite_loglik",
    "extremal_coefficient",
    "fit",
    "fit_two_step_lt",
    "make_weights",
    "maximize_cl",
    "regular_grid",
    "simulate_dataset",
    "to_gumbel",
]
