"""Finite-difference laboratory for coefficient recovery in damped wave equations.

Forward leapfrog solver, reference families and per-point recovery
matrices, linearized source recovery, and weighted-estimate probes.
"""

from .errors import (CFLError, ConfigError, DeterminantError, EmptyEnsembleError, GeometryError,
                     HorizonError, LabError, TauOrderError)
from .geometry import Grid, build_grid, carleman_params, check_assumptions, convexity_weight
from .solver import CoefficientSet, WaveField, solve, solve_with_source

__all__ = [
    "CFLError", "ConfigError", "DeterminantError", "EmptyEnsembleError", "GeometryError", "HorizonError",
    "LabError", "TauOrderError", "Grid", "build_grid", "carleman_params", "check_assumptions",
    "convexity_weight", "CoefficientSet", "WaveField", "solve", "solve_with_source",
]

__version__ = "0.1.0"
