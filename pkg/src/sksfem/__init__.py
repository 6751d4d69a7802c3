"""Spline finite elements and implicit Euler-Maruyama for the stochastic Kuramoto-Sivashinsky equation."""
from ._backend import BACKEND
from .assembly import (
    PeriodicBandMatrix,
    SingularSystemError,
    assemble_bending,
    assemble_gradient,
    assemble_load,
    assemble_mass,
    convection_vector,
    l2_project,
    solve_linear,
)
from .config import ConfigError, RunConfig, load_config
from .noise import DiffusionModel, WienerPath, increments_at, make_model, sample_path
from .spline import SplineSpace, build_space, eval_basis, function_eval
from .stepper import NewtonDivergence, SchemeParams, Trajectory, run_path, step

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "PeriodicBandMatrix", "SingularSystemError", "assemble_bending",
    "assemble_gradient", "assemble_load", "assemble_mass", "convection_vector", "l2_project",
    "solve_linear", "ConfigError", "RunConfig", "load_config", "DiffusionModel", "WienerPath",
    "increments_at", "make_model", "sample_path", "SplineSpace", "build_space", "eval_basis",
    "function_eval", "NewtonDivergence", "SchemeParams", "Trajectory", "run_path", "step",
]
