"""Tests for the receding-horizon advisory planner."""

import numpy as np
import pytest

from slas_engine.core.prediction import TrajectoryPredictor
from slas_engine.data.scenario import load_scenario
from slas_engine.models import (
    EgoState,
    ObservedVehicle,
    PlannerParams,
    RoadModel,
    WorldSnapshot,
)
from slas_engine.optim.bnb import BranchAndBound, SolveResult, SolverOptions, SolveStatus
from slas_engine.optim.formulation import build_model, warm_start_from
from slas_engine.planner import PlannerState, SlasPlanner, fallback_command, plan_step
from slas_engine.sim.world import World


@pytest.fixture
def params() -> PlannerParams:
    return PlannerParams(H=6, time_limit=5.0)


class TestFallback:
    def test_tracks_the_leader_within_limits(self, params: PlannerParams) -> None:
        snap = _make_snapshot(vehicles=(ObservedVehicle(id=1, s=20.0, v=2.0, lane=1),))
        cmd = fallback_command(snap, params)
        assert cmd.fallback
        assert cmd.target_lane == 1
        assert cmd.ref_speed == pytest.approx(8.0)

    def test_leader_in_another_lane_is_ignored(self, params: PlannerParams) -> None:
        snap = _make_snapshot(vehicles=(ObservedVehicle(id=1, s=20.0, v=2.0, lane=0),))
        assert fallback_command(snap, params).ref_speed == pytest.approx(10.0)

    def test_holds_speed_on_a_free_road(self, params: PlannerParams) -> None:
        cmd = fallback_command(_make_snapshot(), params)
        assert cmd.ref_speed == pytest.approx(10.0)
        assert cmd.horizon_speeds == ()


class TestPlanStep:
    def test_empty_road(self, params: PlannerParams) -> None:
        command, state = plan_step(_make_snapshot(), PlannerState.initial(params), params)
        assert not command.fallback
        assert command.target_lane == 1
        assert command.ref_speed == pytest.approx(11.4, abs=1e-4)
        assert state.diagnostics is not None
        assert state.diagnostics.status is SolveStatus.OPTIMAL
        assert state.prev_solution is not None
        assert state.prev_solution.lanes[0] == 1

    def test_no_way_out_falls_back(self, params: PlannerParams) -> None:
        ego = EgoState(s=0.0, v=10.0, lane=0, lateral=0.0, target_history=(0, 0, 0))
        snap = WorldSnapshot(
            time=0.0,
            k=0,
            ego=ego,
            vehicles=(ObservedVehicle(id=1, s=1.0, v=0.0, lane=0),),
            road=RoadModel(lanes=1),
        )
        command, state = plan_step(snap, PlannerState.initial(params), params)
        assert command.fallback
        assert command.ref_speed == pytest.approx(8.0)
        assert state.diagnostics is not None
        assert state.diagnostics.fallback
        assert not state.diagnostics.failed
        assert state.prev_solution is None

    def test_internal_failure_never_raises(self, params: PlannerParams) -> None:
        ego = EgoState(s=0.0, v=10.0, lane=2, lateral=7.0, target_history=(2, 2, 2))
        snap = WorldSnapshot(time=0.0, k=0, ego=ego, road=RoadModel(lanes=2))
        command, state = plan_step(snap, PlannerState.initial(params), params)
        assert command.fallback
        assert command.target_lane == 2
        assert state.diagnostics is not None
        assert state.diagnostics.failed
        assert state.diagnostics.status is SolveStatus.ERROR


class TestSlasPlanner:
    def test_history_accumulates_and_resets(self, params: PlannerParams) -> None:
        planner = SlasPlanner(params)
        planner.step(_make_snapshot())
        planner.step(_make_snapshot(time=0.4, k=1, v=11.4))
        assert len(planner.state.history) == 2
        assert planner.diagnostics is not None
        planner.reset()
        assert planner.state.history == []
        assert planner.diagnostics is None

    def test_predictor_sees_speed_histories(self, params: PlannerParams) -> None:
        planner = SlasPlanner(params)
        leader = ObservedVehicle(id=1, s=45.0, v=10.0, lane=0)
        planner.step(_make_snapshot(vehicles=(leader,)))
        moved = leader.model_copy(update={"s": 49.0, "v": 10.5})
        planner.step(_make_snapshot(time=0.4, k=1, vehicles=(moved,)))
        assert len(planner.state.predictor.histories[1]) == 2



class TestWarmStartBenefit:
    @pytest.mark.slow
    def test_shifted_plan_speeds_up_the_first_incumbent(self) -> None:
        scenario = load_scenario("case_study")
        params = scenario.planner
        world = World.from_scenario(scenario)
        planner = SlasPlanner(params)
        predictor = TrajectoryPredictor(
            H_a=params.H_a,
            T_s=params.T_s,
            v_max=params.v_max,
            history_window=params.history_window,
        )
        options = SolverOptions(time_limit=params.time_limit)
        hinted: list[float] = []
        cold: list[float] = []
        while len(hinted) < 100 and not world.goal_reached:
            snapshot = world.snapshot()
            observed = predictor.observe(snapshot)
            hint = warm_start_from(planner.state.prev_solution, params.H)
            if hint is not None:
                model = build_model(observed, predictor.predict_all(observed, params.H), params)
                hinted.append(_first_incumbent(BranchAndBound(model, options).solve(hint)))
                cold.append(_first_incumbent(BranchAndBound(model, options).solve()))
            world.apply(planner.step(snapshot))
            for _ in range(scenario.ticks_per_plan):
                world.step()
        assert len(hinted) >= 50
        assert np.median(hinted) <= 0.5 * np.median(cold)

# ─── Helpers ──────────────────────────────────────────────────────────────────


def _make_snapshot(
    vehicles: tuple[ObservedVehicle, ...] = (), time: float = 0.0, k: int = 0, v: float = 10.0
) -> WorldSnapshot:
    ego = EgoState(s=0.0, v=v, lane=1, lateral=3.5, target_history=(1, 1, 1))
    return WorldSnapshot(time=time, k=k, ego=ego, vehicles=vehicles, road=RoadModel(lanes=3))


def _first_incumbent(result: SolveResult) -> float:
    """Time to the first incumbent, charged the whole budget when none was found."""
    if result.first_incumbent_time is None:
        return result.total_time
    return result.first_incumbent_time
