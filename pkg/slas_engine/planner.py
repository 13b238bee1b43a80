"""
Receding-horizon speed and lane advisory.

Each tick: record speed histories, predict every visible vehicle, build the
planning model, seed the solver with the keep-lane witness and the shifted
previous plan, solve within the time budget and act on the first step.
Without an incumbent the planner falls back to keeping its lane and matching
the leader's speed, which is always feasible one tick later.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from slas_engine.core.prediction import TrajectoryPredictor
from slas_engine.models import AdvisoryCommand, PlannerParams, WorldSnapshot
from slas_engine.optim.bnb import BranchAndBound, SolveResult, SolverOptions, SolveStatus
from slas_engine.optim.formulation import (
    FallbackRequired,
    build_model,
    extract_command,
    keep_lane_witness,
    warm_start_from,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PlanDiagnostics:
    """Per-tick planner record appended to the episode log."""

    status: Optional[SolveStatus]
    objective: float
    first_incumbent_time: Optional[float]
    solve_time: float
    nodes: int
    lazy_cuts: int
    fallback: bool
    message: str = ""
    failed: bool = False  # the planner raised and the fallback was applied


@dataclass
class PlannerState:
    predictor: TrajectoryPredictor
    prev_solution: Optional[SolveResult] = None
    diagnostics: Optional[PlanDiagnostics] = None
    history: list[PlanDiagnostics] = field(default_factory=list)

    @classmethod
    def initial(cls, params: PlannerParams) -> PlannerState:
        return cls(
            predictor=TrajectoryPredictor(
                H_a=params.H_a,
                T_s=params.T_s,
                v_max=params.v_max,
                history_window=params.history_window,
            )
        )


def fallback_command(snapshot: WorldSnapshot, params: PlannerParams) -> AdvisoryCommand:
    """
    Keep the current lane and track the leader's speed within the acceleration limits.

    With no leader in range the current speed is held.
    """
    ego = snapshot.ego
    ahead = [veh for veh in snapshot.vehicles if veh.lane == ego.lane and veh.s >= ego.s]
    target_speed = min(ahead, key=lambda veh: veh.s).v if ahead else ego.v
    lo = max(0.0, ego.v + params.A_min * params.T_s)
    hi = min(params.v_max, ego.v + params.A_max * params.T_s)
    ref = min(max(target_speed, lo), max(hi, lo))
    return AdvisoryCommand(
        target_lane=ego.lane,
        ref_speed=min(ref, params.v_max),
        horizon_speeds=(),
        horizon_lanes=(),
        fallback=True,
    )


def plan_step(
    snapshot: WorldSnapshot,
    state: PlannerState,
    params: PlannerParams,
    trace_path: Optional[Path] = None,
) -> tuple[AdvisoryCommand, PlannerState]:
    """
    One receding-horizon tick. Never raises: any failure yields the fallback command.

    Example:
        >>> state = PlannerState.initial(params)
        >>> command, state = plan_step(snapshot, state, params)
    """
    started = time.perf_counter()
    observed = state.predictor.observe(snapshot)

    result: Optional[SolveResult] = None
    try:
        preds = state.predictor.predict_all(observed, params.H)
        model = build_model(observed, preds, params)
        hint = warm_start_from(state.prev_solution, params.H) if params.use_warm_start else None
        witness = keep_lane_witness(observed, preds, params)
        options = SolverOptions(
            time_limit=params.time_limit,
            node_limit=params.node_limit,
            workers=params.workers,
            trace_path=trace_path,
        )
        result = BranchAndBound(model, options).solve(hint, witness)
        command = extract_command(result, model)
    except FallbackRequired as exc:
        logger.warning("tick %d: %s", snapshot.k, exc)
        command = fallback_command(snapshot, params)
    except Exception as exc:
        logger.exception("tick %d: planner failed, applying fallback", snapshot.k)
        command = fallback_command(snapshot, params)
        state.diagnostics = PlanDiagnostics(
            status=SolveStatus.ERROR,
            objective=float("nan"),
            first_incumbent_time=None,
            solve_time=time.perf_counter() - started,
            nodes=0,
            lazy_cuts=0,
            fallback=True,
            message=str(exc),
            failed=True,
        )
        state.history.append(state.diagnostics)
        state.prev_solution = None
        return command, state

    state.prev_solution = None if command.fallback else result
    assert result is not None
    state.diagnostics = PlanDiagnostics(
        status=result.status,
        objective=result.objective if result.has_incumbent else float("nan"),
        first_incumbent_time=result.first_incumbent_time,
        solve_time=time.perf_counter() - started,
        nodes=result.nodes_explored,
        lazy_cuts=result.lazy_cuts_added,
        fallback=command.fallback,
        message=result.message,
    )
    state.history.append(state.diagnostics)
    logger.debug(
        "tick %d: %s -> lane %d at %.2f m/s",
        snapshot.k,
        result.summary,
        command.target_lane,
        command.ref_speed,
    )
    return command, state


class SlasPlanner:
    """Stateful wrapper around ``plan_step`` for one episode."""

    def __init__(self, params: PlannerParams, trace_path: Optional[Path] = None) -> None:
        self.params = params
        self.trace_path = trace_path
        self.state = PlannerState.initial(params)

    def reset(self) -> None:
        self.state = PlannerState.initial(self.params)

    def step(self, snapshot: WorldSnapshot) -> AdvisoryCommand:
        command, self.state = plan_step(snapshot, self.state, self.params, self.trace_path)
        return command

    @property
    def diagnostics(self) -> Optional[PlanDiagnostics]:
        return self.state.diagnostics
