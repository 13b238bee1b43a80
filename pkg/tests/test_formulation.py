"""Tests for the planning model builders, warm starts and command extraction."""

import numpy as np
import pytest

from slas_engine.core.prediction import TrajectoryPredictor
from slas_engine.core.safety import DeviationState
from slas_engine.models import (
    EgoState,
    Formulation,
    ObservedVehicle,
    PlannerParams,
    RoadModel,
    WorldSnapshot,
)
from slas_engine.optim.bnb import SolveResult, SolveStatus
from slas_engine.optim.formulation import (
    FallbackRequired,
    ModelBuildError,
    build_binary_model,
    build_integer_model,
    build_model,
    extract_command,
    keep_lane_witness,
    lane_change_deviation,
    pair_margins,
    warm_start_from,
)
from slas_engine.optim.model import VarKind, VarRole


class TestBinaryModel:
    def test_lane_selectors_and_one_hot_rows(self) -> None:
        snap, preds, params = _make_instance()
        model = build_binary_model(snap, preds, params)
        lane_vars = [v for v in model.variables if v.role is VarRole.LANE]
        assert len(lane_vars) == 120
        assert all(v.kind is VarKind.BINARY for v in lane_vars)
        assert sum(r.name.startswith("onehot_") for r in model.rows) == 40
        assert model.lane_idx.shape == (3, 40)

    def test_adjacency_rows_are_lazy_by_default(self) -> None:
        snap, preds, params = _make_instance()
        model = build_binary_model(snap, preds, params)
        # the middle lane reaches every lane, so only the outer lanes need rows
        assert len(model.lazy_rows) == 2 * 39
        assert all(r.name.startswith("adj_") for r in model.lazy_rows)

    def test_eager_adjacency(self) -> None:
        snap, preds, params = _make_instance(lazy_lane_constraints=False)
        model = build_binary_model(snap, preds, params)
        assert model.lazy_rows == []
        assert sum(r.name.startswith("adj_") for r in model.eager_rows) == 2 * 39

    def test_two_lanes_need_no_adjacency_rows(self) -> None:
        snap, preds, params = _make_instance(lanes=2, H=6)
        model = build_binary_model(snap, preds, params)
        assert not any(r.name.startswith("adj_") for r in model.rows)

    def test_constant_plan_is_feasible_on_an_empty_road(self) -> None:
        snap, preds, params = _make_instance(H=8)
        model = build_binary_model(snap, preds, params)
        x = model.complete([10.0] * 8, [1] * 8)
        assert model.is_feasible(x)
        assert model.speed_plan(x) == pytest.approx((10.0,) * 8)
        assert model.lane_plan(x) == (1,) * 8

    def test_jump_of_two_lanes_violates_a_lazy_row(self) -> None:
        snap, preds, params = _make_instance(H=4)
        model = build_binary_model(snap, preds, params)
        x = model.complete([10.0] * 4, [1, 0, 2, 2])
        assert model.is_feasible(x, include_lazy=False)
        assert not model.is_feasible(x)

    def test_first_step_lanes_are_restricted(self) -> None:
        # ego physically in lane 1 with the previous target 2: lane 0 is out of reach
        ego = _make_ego(lane=1, history=(1, 1, 2))
        snap, preds, params = _make_instance(H=4, ego=ego)
        model = build_binary_model(snap, preds, params)
        assert model.upper[model.lane_idx[0, 0]] == 0.0
        assert model.upper[model.lane_idx[2, 0]] == 1.0

    def test_safety_pairs_are_held_then_gated(self) -> None:
        vehicle = ObservedVehicle(id=1, s=15.0, v=5.0, lane=1)
        snap, preds, params = _make_instance(H=6, vehicles=(vehicle,))
        model = build_binary_model(snap, preds, params)
        assert model.pairs
        assert any(p.step == 1 and p.gate is None for p in model.pairs)
        assert all(p.gate is not None for p in model.pairs if p.step >= params.N)
        assert {p.vehicle_id for p in model.pairs} == {1}

    def test_far_vehicle_creates_no_pairs(self) -> None:
        vehicle = ObservedVehicle(id=1, s=48.0, v=15.0, lane=0)
        snap, preds, params = _make_instance(H=3, vehicles=(vehicle,))
        model = build_binary_model(snap, preds, params)
        assert model.pairs == []

    def test_lp_dump(self) -> None:
        snap, preds, params = _make_instance(H=3)
        text = build_binary_model(snap, preds, params).to_lp_text()
        assert text.startswith("\\ formulation: binary")
        for section in ("Minimize", "Subject To", "Lazy Constraints", "Bounds", "Binaries", "End"):
            assert section in text


class TestIntegerModel:
    def test_variable_layout(self) -> None:
        snap, preds, params = _make_instance(formulation=Formulation.INTEGER)
        model = build_integer_model(snap, preds, params)
        roles = [v.role for v in model.variables]
        assert roles.count(VarRole.LANE) == 40
        assert roles.count(VarRole.FLOOR) == 40
        assert roles.count(VarRole.MEMBERSHIP) == 120
        assert model.lazy_rows == []
        assert "Generals" in model.to_lp_text()

    def test_completed_change_is_feasible(self) -> None:
        snap, preds, params = _make_instance(H=6, formulation=Formulation.INTEGER)
        model = build_integer_model(snap, preds, params)
        x = model.complete([10.0] * 6, [0] * 6)
        assert model.is_feasible(x)
        # physical lane follows the rounded mean of the last three targets
        assert [round(x[i]) for i in model.floor_idx] == [1, 0, 0, 0, 0, 0]

    def test_build_model_dispatches(self) -> None:
        snap, preds, params = _make_instance(H=3, formulation=Formulation.INTEGER)
        assert build_model(snap, preds, params).formulation is Formulation.INTEGER
        params = params.model_copy(update={"formulation": Formulation.BINARY})
        assert build_model(snap, preds, params).formulation is Formulation.BINARY


class TestInputChecks:
    def test_short_prediction_rejected(self) -> None:
        vehicle = ObservedVehicle(id=1, s=20.0, v=5.0, lane=1)
        snap, _, params = _make_instance(H=5, vehicles=(vehicle,))
        preds = TrajectoryPredictor().predict_all(snap, H=3)
        with pytest.raises(ModelBuildError, match="horizon"):
            build_binary_model(snap, preds, params)

    def test_ego_off_the_road(self) -> None:
        snap, preds, params = _make_instance(H=3, lanes=2, ego=_make_ego(lane=2))
        with pytest.raises(ModelBuildError, match="lane set"):
            build_binary_model(snap, preds, params)


class TestPairMargins:
    def test_deviation_widens_the_margins(self) -> None:
        vehicle = ObservedVehicle(id=1, s=20.0, v=5.0, lane=1)
        snap, preds, params = _make_instance(H=4, vehicles=(vehicle,))
        plain = pair_margins(snap, preds[1], 2, params, None)
        wide = pair_margins(snap, preds[1], 2, params, DeviationState(delta_k=1.75, prev_target=1))
        assert wide.front[0].slope > plain.front[0].slope
        assert wide.rear[0].slope > plain.rear[0].slope
        assert plain.front[1].intercept == pytest.approx(4.5 + 2.0)
        assert plain.s_hat == pytest.approx(20.0 + 2 * 0.4 * 5.0)


class TestLaneChangeDeviation:
    def test_settled_ego_has_none(self) -> None:
        snap, _, params = _make_instance(H=4)
        assert lane_change_deviation(snap, params) is None

    def test_change_in_flight(self) -> None:
        snap, _, params = _make_instance(H=4, ego=_make_ego(history=(1, 1, 2)))
        dev = lane_change_deviation(snap, params)
        assert dev == DeviationState(delta_k=1.75, prev_target=2)

    def test_recent_change_still_counts(self) -> None:
        snap, _, params = _make_instance(H=4, ego=_make_ego(history=(0, 1, 1)))
        dev = lane_change_deviation(snap, params)
        assert dev == DeviationState(delta_k=0.0, prev_target=1)

    def test_history_older_than_n_is_ignored(self) -> None:
        ego = _make_ego(history=(0, 1))
        snap, _, params = _make_instance(H=4, ego=ego, N=1)
        assert lane_change_deviation(snap, params) is None


class TestKeepLaneWitness:
    def test_follows_the_leader(self) -> None:
        leader = ObservedVehicle(id=1, s=30.0, v=8.0, lane=1)
        snap, preds, params = _make_instance(H=4, vehicles=(leader,))
        witness = keep_lane_witness(snap, preds, params)
        assert witness.lanes == (1, 1, 1, 1)
        assert witness.speeds == pytest.approx((8.0, 8.0, 8.0, 8.0))

    def test_other_lanes_and_followers_are_ignored(self) -> None:
        vehicles = (
            ObservedVehicle(id=1, s=30.0, v=5.0, lane=0),
            ObservedVehicle(id=2, s=-20.0, v=5.0, lane=1),
        )
        snap, preds, params = _make_instance(H=4, vehicles=vehicles)
        witness = keep_lane_witness(snap, preds, params)
        assert witness.speeds == pytest.approx((10.0, 10.0, 10.0, 10.0))

    def test_change_in_flight_keeps_the_physical_lane(self) -> None:
        snap, preds, params = _make_instance(H=3, ego=_make_ego(history=(1, 1, 2)))
        assert keep_lane_witness(snap, preds, params).lanes == (1, 1, 1)

    def test_witness_is_feasible_behind_a_slow_leader(self) -> None:
        leader = ObservedVehicle(id=1, s=40.0, v=8.0, lane=1)
        snap, preds, params = _make_instance(H=6, vehicles=(leader,))
        model = build_binary_model(snap, preds, params)
        witness = keep_lane_witness(snap, preds, params)
        assert model.is_feasible(model.complete(witness.speeds, witness.lanes))


class TestWarmStart:
    def test_shift_repeats_the_last_step(self) -> None:
        hint = warm_start_from(_make_result(speeds=(5, 6, 7, 8), lanes=(1, 1, 0, 0)), H=4)
        assert hint is not None
        assert hint.speeds == (6, 7, 8, 8)
        assert hint.lanes == (1, 0, 0, 0)

    def test_no_previous_plan(self) -> None:
        assert warm_start_from(None, H=4) is None
        assert warm_start_from(_make_result(), H=4) is None

    def test_padded_to_horizon(self) -> None:
        hint = warm_start_from(_make_result(speeds=(5.0, 6.0), lanes=(1, 2)), H=4)
        assert hint is not None
        assert len(hint) == 4
        assert hint.lanes == (2, 2, 2, 2)


class TestExtractCommand:
    def test_first_step_of_the_incumbent(self) -> None:
        snap, preds, params = _make_instance(H=4)
        model = build_binary_model(snap, preds, params)
        x = model.complete([11.4, 12.8, 14.2, 15.0], [0, 0, 0, 0])
        result = _make_result(status=SolveStatus.OPTIMAL, incumbent=x)
        cmd = extract_command(result, model)
        assert cmd.target_lane == 0
        assert cmd.ref_speed == pytest.approx(11.4)
        assert cmd.horizon_lanes == (0, 0, 0, 0)
        assert len(cmd.horizon_speeds) == 4
        assert not cmd.fallback

    @pytest.mark.parametrize("status", [SolveStatus.INFEASIBLE, SolveStatus.ERROR])
    def test_no_incumbent_needs_fallback(self, status: SolveStatus) -> None:
        snap, preds, params = _make_instance(H=4)
        model = build_binary_model(snap, preds, params)
        with pytest.raises(FallbackRequired):
            extract_command(_make_result(status=status), model)


# ─── Helpers ──────────────────────────────────────────────────────────────────


def _make_ego(lane: int = 1, history: tuple[int, ...] = (1, 1, 1), v: float = 10.0) -> EgoState:
    return EgoState(s=0.0, v=v, lane=lane, lateral=3.5 * lane, target_history=history)


def _make_instance(
    lanes: int = 3,
    H: int = 40,
    ego: EgoState | None = None,
    vehicles: tuple[ObservedVehicle, ...] = (),
    **planner: object,
):
    params = PlannerParams(H=H, **planner)
    snap = WorldSnapshot(
        time=0.0,
        k=0,
        ego=ego or _make_ego(),
        vehicles=vehicles,
        road=RoadModel(lanes=lanes),
    )
    predictor = TrajectoryPredictor(H_a=params.H_a, T_s=params.T_s, v_max=params.v_max)
    return snap, predictor.predict_all(snap, H), params


def _make_result(
    status: SolveStatus = SolveStatus.INFEASIBLE,
    incumbent: np.ndarray | None = None,
    speeds: tuple[float, ...] = (),
    lanes: tuple[int, ...] = (),
) -> SolveResult:
    return SolveResult(
        status=status,
        incumbent=incumbent,
        objective=0.0,
        first_incumbent_time=None,
        total_time=0.0,
        nodes_explored=0,
        lazy_cuts_added=0,
        speeds=speeds,
        lanes=lanes,
    )
