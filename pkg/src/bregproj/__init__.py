"""Bregman-projection methods for affine and elementary convex feasibility:
greedy/cyclic/random/adaptive set controls, contraction-constant calculus,
sketched linear solvers, and multimarginal entropic optimal transport."""

from . import controls, geometry, legendre, oracles, ot, rates, sketch, solver
from .controls import ControlScheme
from .geometry import (DualSolveOptions, GeneralAffineSet, Halfspace,
                       Hyperplane, divergence, distance_to_set,
                       project_affine, project_halfspace, project_hyperplane)
from .ot import OtProblem, solve_ot
from .sketch import SketchFamily
from .solver import (FeasibilityProblem, IterationTrace, SolveOptions,
                     estimate_rate, fixed_target, solve)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "ControlScheme",
    "DualSolveOptions",
    "FeasibilityProblem",
    "GeneralAffineSet",
    "Halfspace",
    "Hyperplane",
    "IterationTrace",
    "OtProblem",
    "SketchFamily",
    "SolveOptions",
    "controls",
    "divergence",
    "distance_to_set",
    "estimate_rate",
    "fixed_target",
    "geometry",
    "legendre",
    "oracles",
    "ot",
    "project_affine",
    "project_halfspace",
    "project_hyperplane",
    "rates",
    "sketch",
    "solve",
    "solve_ot",
    "solver",
]
