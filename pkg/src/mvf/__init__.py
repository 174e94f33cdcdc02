"""Mean-value formulas and dynamic-programming schemes for degenerate parabolic PDEs.

Modules are importable directly (``mvf.linalg``, ``mvf.solver`` ...); the
most used names are re-exported here.
"""

from . import catalog, controls, games, linalg, operators, quadrature, solver
from .errors import (
    Diverged,
    InvalidControl,
    InvalidInput,
    InvalidRhs,
    InvalidWindow,
    MvfError,
    NotPositiveDefinite,
    OutOfDomain,
    Unsupported,
)
from .games import GameSpec, simulate_control, simulate_two_player, simulate_walk
from .operators import OperatorSpec, consistency_check, evaluate, family_gap
from .solver import GridFunction, ProblemSpec, SolveReport, convergence_study, march, matched_spacing

__version__ = "0.1.0"

__all__ = [
    "catalog",
    "controls",
    "games",
    "linalg",
    "operators",
    "quadrature",
    "solver",
    "MvfError",
    "InvalidInput",
    "NotPositiveDefinite",
    "Unsupported",
    "InvalidRhs",
    "InvalidControl",
    "InvalidWindow",
    "OutOfDomain",
    "Diverged",
    "OperatorSpec",
    "evaluate",
    "consistency_check",
    "family_gap",
    "ProblemSpec",
    "GridFunction",
    "SolveReport",
    "march",
    "convergence_study",
    "matched_spacing",
    "GameSpec",
    "simulate_walk",
    "simulate_control",
    "simulate_two_player",
]
