"""Discrete Littlewood-Paley analysis and pseudo-differential operators on the torus."""

from .errors import ContractError, ConvergenceError, DomainError
from .grid import GridFunction, GridSpec, lp_norm, transform
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ContractError",
    "ConvergenceError",
    "DomainError",
    "GridFunction",
    "GridSpec",
    "lp_norm",
    "transform",
]
