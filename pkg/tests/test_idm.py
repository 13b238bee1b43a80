"""Tests for the Intelligent Driver Model helpers."""

import pytest

from slas_engine.models import IdmParams
from slas_engine.sim.idm import braking_clamp, desired_gap, idm_acceleration


class TestIdm:
    def test_free_road_at_desired_speed(self) -> None:
        assert idm_acceleration(10.0, 10.0) == pytest.approx(0.0)

    def test_free_road_from_rest(self) -> None:
        assert idm_acceleration(0.0, 15.0) == pytest.approx(IdmParams().a_max)

    def test_desired_gap_at_standstill_is_the_jam_distance(self) -> None:
        assert desired_gap(0.0, 0.0, IdmParams()) == pytest.approx(2.0)

    def test_desired_gap_grows_when_closing_in(self) -> None:
        p = IdmParams()
        assert desired_gap(10.0, 5.0, p) > desired_gap(10.0, 10.0, p)

    def test_close_leader_brakes(self) -> None:
        assert idm_acceleration(10.0, 15.0, gap=5.0, v_leader=5.0) < -3.0


class TestBrakingClamp:
    def test_holds_nominal_speed_with_room(self) -> None:
        p = IdmParams()
        assert braking_clamp(10.0, 10.0, 100.0, 10.0, 0.05, p) == pytest.approx(0.0)

    def test_recovers_towards_nominal(self) -> None:
        p = IdmParams()
        a = braking_clamp(8.0, 10.0, None, None, 0.05, p)
        assert a == pytest.approx(p.a_max)

    def test_brakes_inside_desired_gap(self) -> None:
        p = IdmParams()
        assert braking_clamp(10.0, 10.0, 3.0, 0.0, 0.05, p) < 0.0
