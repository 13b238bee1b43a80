"""Tests for episode metrics."""

import math

import numpy as np
import pandas as pd
import pytest

from slas_engine.sim.metrics import COMFORT_COLUMNS, goal_crossing_time, trajectory_metrics


def _make_samples(v: np.ndarray, dt: float = 0.05, lateral: float = 3.5) -> pd.DataFrame:
    t = np.arange(len(v)) * dt
    s = np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * dt)])
    return pd.DataFrame(
        {
            "time": t,
            "ego_s": s,
            "ego_v": v,
            "ego_lateral": np.full(len(v), lateral),
            "headway": np.full(len(v), 50.0),
            "closest_distance": np.linspace(50.0, 20.0, len(v)),
        }
    )


class TestGoalCrossing:
    def test_interpolates_between_samples(self) -> None:
        t = np.array([0.0, 1.0, 2.0])
        s = np.array([0.0, 10.0, 20.0])
        assert goal_crossing_time(t, s, 15.0) == pytest.approx(1.5)

    def test_never_reached(self) -> None:
        assert goal_crossing_time(np.array([0.0, 1.0]), np.array([0.0, 1.0]), 5.0) is None


class TestTrajectoryMetrics:
    def test_constant_speed(self) -> None:
        m = trajectory_metrics(_make_samples(np.full(801, 10.0)), 0.05, 350.0, -5.0, 3.5)
        assert m.travel_time == pytest.approx(35.0)
        assert m.mean_headway == pytest.approx(50.0)
        assert m.long_accel_mean == pytest.approx(0.0)
        assert m.lat_jerk_mean == pytest.approx(0.0)
        assert m.brake_mean == 0.0 and m.throttle_mean == 0.0
        assert m.valid

    def test_samples_past_the_goal_are_ignored(self) -> None:
        m = trajectory_metrics(_make_samples(np.full(801, 10.0)), 0.05, 350.0, -5.0, 3.5)
        # the closest distance keeps falling after the goal; only the first 701 rows count
        assert m.min_distance_to_closest == pytest.approx(50.0 - 30.0 * 700 / 800)

    def test_full_braking_is_normalised(self) -> None:
        v = np.maximum(10.0 - 5.0 * np.arange(41) * 0.05, 0.0)
        m = trajectory_metrics(_make_samples(v), 0.05, 350.0, -5.0, 3.5)
        assert m.travel_time is None
        assert not m.completed
        assert m.brake_mean == pytest.approx(1.0)
        assert m.long_accel_mean == pytest.approx(5.0)
        assert m.long_accel_std == pytest.approx(0.0, abs=1e-9)

    def test_collision_voids_the_travel_time(self) -> None:
        m = trajectory_metrics(
            _make_samples(np.full(801, 10.0)), 0.05, 350.0, -5.0, 3.5, collided=True
        )
        assert m.travel_time is None
        assert not m.valid
        assert math.isnan(m.comfort_row()["travel_time"])

    def test_comfort_row_columns(self) -> None:
        m = trajectory_metrics(_make_samples(np.full(801, 10.0)), 0.05, 350.0, -5.0, 3.5)
        assert tuple(m.comfort_row()) == COMFORT_COLUMNS
        assert "lateral_profile" not in m.to_dict()
        assert "travel=35.00s" in m.summary

    def test_empty_episode(self) -> None:
        with pytest.raises(ValueError, match="empty"):
            trajectory_metrics(_make_samples(np.full(3, 10.0)).iloc[:0], 0.05, 350.0, -5.0, 3.5)
