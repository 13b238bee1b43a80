"""
Episode metrics: travel time, headway, distance to the closest vehicle and
comfort statistics from finite differences of the sampled ego trajectory.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import TYPE_CHECKING, Optional

import numpy as np
import pandas as pd

if TYPE_CHECKING:
    from slas_engine.sim.episode import EpisodeLog

# Columns of the Monte Carlo comfort table, in order.
COMFORT_COLUMNS = (
    "travel_time",
    "brake",
    "throttle",
    "long_accel",
    "long_jerk",
    "lat_accel",
    "lat_jerk",
)


@dataclass(frozen=True)
class Metrics:
    """
    Summary of one episode.

    ``travel_time`` is None when the ego never reached the end of the road;
    such episodes (and collisions) are excluded from aggregate comparisons.
    Accelerations and jerks are reported as mean absolute value and standard
    deviation. ``brake`` / ``throttle`` are the mean normalised deceleration
    and acceleration (0 to 1 against A_min / A_max).
    """

    travel_time: Optional[float]
    completed: bool
    collided: bool
    mean_headway: float
    min_distance_to_closest: float
    mean_distance_to_closest: float
    long_accel_mean: float
    long_accel_std: float
    long_jerk_mean: float
    long_jerk_std: float
    lat_accel_mean: float
    lat_accel_std: float
    lat_jerk_mean: float
    lat_jerk_std: float
    brake_mean: float
    throttle_mean: float
    lateral_profile: tuple[float, ...] = ()

    @property
    def valid(self) -> bool:
        return self.completed and not self.collided

    def comfort_row(self) -> dict[str, float]:
        """One row of the Monte Carlo table (COMFORT_COLUMNS)."""
        return {
            "travel_time": math.nan if self.travel_time is None else self.travel_time,
            "brake": self.brake_mean,
            "throttle": self.throttle_mean,
            "long_accel": self.long_accel_mean,
            "long_jerk": self.long_jerk_mean,
            "lat_accel": self.lat_accel_mean,
            "lat_jerk": self.lat_jerk_mean,
        }

    def to_dict(self) -> dict[str, object]:
        out = asdict(self)
        out.pop("lateral_profile")
        out["valid"] = self.valid
        return out

    @property
    def summary(self) -> str:
        tt = "incomplete" if self.travel_time is None else f"{self.travel_time:.2f}s"
        flag = " COLLISION" if self.collided else ""
        return (
            f"travel={tt} headway={self.mean_headway:.1f}m "
            f"closest(min/mean)={self.min_distance_to_closest:.2f}/"
            f"{self.mean_distance_to_closest:.2f}m{flag}"
        )


def goal_crossing_time(time: np.ndarray, s: np.ndarray, length: float) -> Optional[float]:
    """Time the ego passes ``length``, linearly interpolated between samples."""
    idx = np.flatnonzero(s >= length)
    if idx.size == 0:
        return None
    i = int(idx[0])
    if i == 0:
        return float(time[0])
    s0, s1 = s[i - 1], s[i]
    frac = (length - s0) / (s1 - s0) if s1 > s0 else 1.0
    return float(time[i - 1] + frac * (time[i] - time[i - 1]))


def _stats(x: np.ndarray) -> tuple[float, float]:
    if x.size == 0:
        return 0.0, 0.0
    return float(np.mean(np.abs(x))), float(np.std(x))


def trajectory_metrics(
    samples: pd.DataFrame,
    dt: float,
    length: float,
    A_min: float,
    A_max: float,
    collided: bool = False,
) -> Metrics:
    """
    Metrics of a sampled trajectory.

    ``samples`` needs the columns ``time``, ``ego_s``, ``ego_v``, ``ego_lateral``,
    ``headway`` and ``closest_distance``; rows past the goal crossing are ignored.
    """
    if samples.empty:
        raise ValueError("cannot compute metrics of an empty episode")
    t = samples["time"].to_numpy(float)
    s = samples["ego_s"].to_numpy(float)
    travel = goal_crossing_time(t, s, length)
    cut = len(samples) if travel is None else int(np.flatnonzero(s >= length)[0]) + 1
    window = samples.iloc[:cut]

    v = window["ego_v"].to_numpy(float)
    lat = window["ego_lateral"].to_numpy(float)
    a = np.diff(v) / dt
    jerk = np.diff(a) / dt
    lat_v = np.diff(lat) / dt
    lat_a = np.diff(lat_v) / dt
    lat_j = np.diff(lat_a) / dt

    la_m, la_s = _stats(a)
    lj_m, lj_s = _stats(jerk)
    ya_m, ya_s = _stats(lat_a)
    yj_m, yj_s = _stats(lat_j)
    brake = float(np.mean(np.clip(-a / abs(A_min), 0.0, 1.0))) if a.size else 0.0
    throttle = float(np.mean(np.clip(a / A_max, 0.0, 1.0))) if a.size else 0.0

    closest = window["closest_distance"].to_numpy(float)
    return Metrics(
        travel_time=None if collided else travel,
        completed=travel is not None and not collided,
        collided=collided,
        mean_headway=float(window["headway"].mean()),
        min_distance_to_closest=float(closest.min()),
        mean_distance_to_closest=float(closest.mean()),
        long_accel_mean=la_m,
        long_accel_std=la_s,
        long_jerk_mean=lj_m,
        long_jerk_std=lj_s,
        lat_accel_mean=ya_m,
        lat_accel_std=ya_s,
        lat_jerk_mean=yj_m,
        lat_jerk_std=yj_s,
        brake_mean=brake,
        throttle_mean=throttle,
        lateral_profile=tuple(float(x) for x in lat),
    )


def compute_metrics(log: EpisodeLog) -> Metrics:
    """Metrics of a recorded episode."""
    return trajectory_metrics(
        log.samples,
        dt=log.dt,
        length=log.road_length,
        A_min=log.A_min,
        A_max=log.A_max,
        collided=log.collided,
    )
