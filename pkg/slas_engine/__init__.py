"""
SLAS Engine — speed and lane advisory for multi-lane highways.

Modules:
    core        Road geometry, trajectory prediction, safe-distance margins
    optim       Planning-model construction and the mixed-binary QP solver
    sim         Closed-loop simulation, baseline policies, metrics, Monte Carlo
    data        Scenario ingestion and the shipped scenario files
    planner     Receding-horizon advisory step
    models      Pydantic models for roads, vehicles, parameters and commands
"""

__version__ = "0.1.0"

from slas_engine.models import (
    AdvisoryCommand,
    Formulation,
    PlannerParams,
    PolicyName,
    Scenario,
    WorldSnapshot,
)

__all__ = [
    "AdvisoryCommand",
    "Formulation",
    "PlannerParams",
    "PolicyName",
    "Scenario",
    "WorldSnapshot",
]
