"""
Optimisation sub-package — planning models, QP relaxations, branch and bound.
"""

from slas_engine.optim.bnb import BranchAndBound, SolveResult, SolverOptions, SolveStatus, solve
from slas_engine.optim.formulation import (
    FallbackRequired,
    ModelBuildError,
    build_model,
    extract_command,
    warm_start_from,
)
from slas_engine.optim.model import ModelBuilder, OptimizationModel
from slas_engine.optim.oracle import brute_force_optimum
from slas_engine.optim.qp import RelaxationSolver

__all__ = [
    "BranchAndBound",
    "FallbackRequired",
    "ModelBuildError",
    "ModelBuilder",
    "OptimizationModel",
    "RelaxationSolver",
    "SolveResult",
    "SolveStatus",
    "SolverOptions",
    "brute_force_optimum",
    "build_model",
    "extract_command",
    "solve",
    "warm_start_from",
]
