"""Tests for the MOBIL lane-change baseline."""

from slas_engine.models import (
    EgoState,
    IdmParams,
    MobilParams,
    ObservedVehicle,
    RoadModel,
    WorldSnapshot,
)
from slas_engine.sim.mobil import assess_lane, mobil_decision, neighbours


class TestNeighbours:
    def test_leader_and_follower(self) -> None:
        snap = _make_snapshot(
            _make_vehicle(1, 30.0, 1), _make_vehicle(2, 60.0, 1), _make_vehicle(3, -10.0, 1)
        )
        n = neighbours(snap, 1)
        assert n.leader is not None and n.leader.id == 1
        assert n.follower is not None and n.follower.id == 3

    def test_empty_lane(self) -> None:
        n = neighbours(_make_snapshot(), 0)
        assert n.leader is None and n.follower is None


class TestMobilDecision:
    def test_slow_leader_prefers_the_lower_free_lane(self) -> None:
        snap = _make_snapshot(_make_vehicle(1, 15.0, 1, v=2.0))
        assert mobil_decision(snap, MobilParams()) == 0

    def test_free_road_keeps_lane(self) -> None:
        assert mobil_decision(_make_snapshot(), MobilParams()) == 1

    def test_unsafe_gap_is_rejected(self) -> None:
        # slow leader ahead; lane 0 has a vehicle alongside, lane 2 a fast follower right behind
        snap = _make_snapshot(
            _make_vehicle(1, 15.0, 1, v=2.0),
            _make_vehicle(2, 2.0, 0),
            _make_vehicle(3, -6.0, 2, v=15.0),
        )
        assert mobil_decision(snap, MobilParams()) == 1

    def test_change_in_flight_keeps_the_target(self) -> None:
        ego = EgoState(s=0.0, v=10.0, lane=1, lateral=2.5, target_history=(1, 1, 0))
        snap = WorldSnapshot(time=0.0, k=0, ego=ego, road=RoadModel(lanes=3))
        assert mobil_decision(snap, MobilParams()) == 0

    def test_outer_lane_has_one_option(self) -> None:
        ego = EgoState(s=0.0, v=10.0, lane=0, lateral=0.0, target_history=(0, 0, 0))
        snap = WorldSnapshot(
            time=0.0,
            k=0,
            ego=ego,
            vehicles=(_make_vehicle(1, 15.0, 0, v=2.0),),
            road=RoadModel(lanes=3),
        )
        assert mobil_decision(snap, MobilParams()) == 1

    def test_assessment_reports_the_new_follower(self) -> None:
        snap = _make_snapshot(_make_vehicle(1, -8.0, 0, v=12.0))
        a = assess_lane(snap, 0, MobilParams(), IdmParams(), 15.0, 4.5)
        assert a.lane == 0
        assert a.follower_accel < 0.0


# ─── Helpers ──────────────────────────────────────────────────────────────────


def _make_vehicle(vid: int, s: float, lane: int, v: float = 10.0) -> ObservedVehicle:
    return ObservedVehicle(id=vid, s=s, v=v, lane=lane)


def _make_snapshot(*vehicles: ObservedVehicle) -> WorldSnapshot:
    ego = EgoState(s=0.0, v=10.0, lane=1, lateral=3.5, target_history=(1, 1, 1))
    return WorldSnapshot(time=0.0, k=0, ego=ego, vehicles=vehicles, road=RoadModel(lanes=3))
