"""Tests for parameter and scenario model validation."""

import pytest
from pydantic import ValidationError

from slas_engine.models import (
    AdvisoryCommand,
    EgoSeed,
    PlannerParams,
    RoadModel,
    Scenario,
    SimParams,
    VehicleSeed,
)


class TestPlannerParams:
    def test_defaults(self) -> None:
        p = PlannerParams()
        assert (p.H, p.N, p.T_s) == (40, 3, 0.4)
        assert p.v_max == 15.0
        assert p.safety.N == 3

    def test_vehicle_top_speed_caps(self) -> None:
        assert PlannerParams(V_m=12.0).v_max == 12.0

    def test_acceleration_signs(self) -> None:
        with pytest.raises(ValidationError):
            PlannerParams(A_min=1.0)

    def test_epsilon_too_coarse(self) -> None:
        with pytest.raises(ValidationError, match="epsilon"):
            PlannerParams(epsilon=0.2)

    def test_safety_follows_horizon_timing(self) -> None:
        p = PlannerParams(N=2, T_s=0.5, epsilon=0.1)
        assert (p.safety.N, p.safety.T_s) == (2, 0.5)

    def test_big_m_covers_margins(self) -> None:
        p = PlannerParams()
        assert p.effective_big_M > 2 * p.R_v + p.max_margin()
        assert PlannerParams(big_M=500.0).effective_big_M == 500.0


class TestScenario:
    def test_valid(self) -> None:
        sc = _make_scenario([VehicleSeed(id=1, lane=1, s0_m=40.0, v_mps=5.0)])
        assert sc.ticks_per_plan == 8

    def test_negative_lane_width(self) -> None:
        with pytest.raises(ValidationError):
            RoadModel(lanes=3, lane_width_m=-3.5)

    def test_vehicles_too_close(self) -> None:
        traffic = [
            VehicleSeed(id=1, lane=1, s0_m=40.0, v_mps=5.0),
            VehicleSeed(id=2, lane=1, s0_m=41.0, v_mps=5.0),
        ]
        with pytest.raises(ValidationError, match="vehicle 1 and vehicle 2"):
            _make_scenario(traffic)

    def test_vehicle_on_ego(self) -> None:
        with pytest.raises(ValidationError, match="ego"):
            _make_scenario([VehicleSeed(id=1, lane=1, s0_m=12.0, v_mps=5.0)])

    def test_duplicate_ids(self) -> None:
        traffic = [
            VehicleSeed(id=1, lane=0, s0_m=40.0, v_mps=5.0),
            VehicleSeed(id=1, lane=2, s0_m=80.0, v_mps=5.0),
        ]
        with pytest.raises(ValidationError, match="unique"):
            _make_scenario(traffic)

    def test_lane_outside_road(self) -> None:
        with pytest.raises(ValidationError):
            _make_scenario([VehicleSeed(id=1, lane=3, s0_m=40.0, v_mps=5.0)])

    def test_dt_must_divide_period(self) -> None:
        with pytest.raises(ValidationError, match="divide"):
            _make_scenario([], sim=SimParams(dt_s=0.3))

    def test_planner_synced_to_road(self) -> None:
        road = RoadModel(lanes=3, speed_limit_mps=20.0, lane_width_m=3.0)
        sc = Scenario(road=road, ego=EgoSeed(s0_m=0.0, v0_mps=5.0, lane0=0))
        assert sc.planner.V_l == 20.0
        assert sc.planner.safety.lane_width == 3.0


class TestAdvisoryCommand:
    def test_rejects_nan_speed(self) -> None:
        with pytest.raises(ValidationError):
            AdvisoryCommand(target_lane=0, ref_speed=float("nan"))

    def test_rejects_negative_lane(self) -> None:
        with pytest.raises(ValidationError):
            AdvisoryCommand(target_lane=-1, ref_speed=5.0)


# ─── Helpers ──────────────────────────────────────────────────────────────────


def _make_scenario(traffic: list[VehicleSeed], sim: SimParams | None = None) -> Scenario:
    return Scenario(
        road=RoadModel(lanes=3),
        ego=EgoSeed(s0_m=10.0, v0_mps=5.0, lane0=1),
        traffic=traffic,
        sim=sim or SimParams(),
    )
