"""Two-phase free-boundary minimizers for exponential-growth energies.

Minimizes, over piecewise-linear fields with prescribed boundary values,

    J(u) = int Phi(|grad u|) - f(x, u) u + gamma(x, u) dx,

with Phi(s) = exp(s^2) - 1 or its truncations Phi_k, and measures the
resulting free boundaries.
"""
__version__ = "0.1.0"

from . import _kernels
from .errors import (DegenerateInput, DimensionMismatch, DomainError, ExpfbError,
                     LineSearchFailure, NFunctionOverflow, NonFiniteEnergy, OutOfDomain,
                     ParseError, ValidationError)
from .nfunction import INFINITE, EnergyLaw
from .grid import Domain, Mesh, build_mesh, interval, rectangle
from .options import SolverOptions
from .problem import Coefficient, ProblemSpec, load_config, save_config
from .energy import EnergyModel, continuum_energy, energy, energy_breakdown, energy_gradient
from .solver import SolveResult, minimize_stage, oracle_1d, solve

BACKEND = _kernels.BACKEND

__all__ = [
    "BACKEND", "INFINITE", "Coefficient", "DegenerateInput", "DimensionMismatch",
    "Domain", "DomainError", "EnergyLaw", "EnergyModel", "ExpfbError",
    "LineSearchFailure", "Mesh", "NFunctionOverflow", "NonFiniteEnergy", "OutOfDomain",
    "ParseError", "ProblemSpec", "SolveResult", "SolverOptions", "ValidationError",
    "build_mesh", "continuum_energy", "energy", "energy_breakdown", "energy_gradient",
    "interval", "load_config", "minimize_stage", "oracle_1d", "rectangle", "save_config",
    "solve",
]
