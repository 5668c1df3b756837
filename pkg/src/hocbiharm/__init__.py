"""Fourth-order compact finite differences for the biharmonic equation.

Δ²u = f is split into the coupled pair Δu = v, Δv = f on a uniform grid over
a box in 2D or 3D, with u and either ∂ₙu (first kind) or Δu (second kind)
prescribed on each side.
"""

from .boundary import BoundarySpec, FirstKind, ProblemSpec, SecondKind
from .errors import (
    CertificationError,
    ConfigurationError,
    DerivationError,
    DomainError,
    EstimationError,
    NonConvergenceError,
)
from .grid import Side, UniformGrid
from .harness import refine_study, solve_problem
from .problems import ManufacturedProblem, get_problem

__version__ = "0.1.0"

__all__ = [
    "BoundarySpec",
    "CertificationError",
    "ConfigurationError",
    "DerivationError",
    "DomainError",
    "EstimationError",
    "FirstKind",
    "ManufacturedProblem",
    "NonConvergenceError",
    "ProblemSpec",
    "SecondKind",
    "Side",
    "UniformGrid",
    "get_problem",
    "refine_study",
    "solve_problem",
]
