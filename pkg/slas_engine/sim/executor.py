"""
Lateral lane-change executor.

The lateral position moves between lane centres at a constant rate, one lane
width per N planner periods. A new target issued mid-manoeuvre retargets the
ramp from wherever the vehicle currently is (a swerve).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from slas_engine.core.highway import lane_of_lateral, lateral_of_lane

logger = logging.getLogger(__name__)


class LaneChangeError(ValueError):
    """Target lane is not adjacent to the current target."""


class ManoeuvreEvent(str, Enum):
    START = "lane_change_start"
    FINISH = "lane_change_finish"
    ABORT = "lane_change_abort"


@dataclass
class LaneChangeExecutor:
    lane_width: float
    N: int
    T_s: float
    lateral: float
    target: int

    @classmethod
    def at_lane(cls, lane: int, lane_width: float, N: int, T_s: float) -> LaneChangeExecutor:
        return cls(lane_width, N, T_s, lateral_of_lane(lane, lane_width), lane)

    @property
    def rate(self) -> float:
        """Lateral speed while a manoeuvre is under way (m/s)."""
        return self.lane_width / (self.N * self.T_s)

    @property
    def target_lateral(self) -> float:
        return lateral_of_lane(self.target, self.lane_width)

    @property
    def in_progress(self) -> bool:
        return abs(self.lateral - self.target_lateral) > 1e-9

    @property
    def physical_lane(self) -> int:
        return lane_of_lateral(self.lateral, self.lane_width)

    def command(self, new_target: int) -> list[ManoeuvreEvent]:
        """Accept a target lane; returns the manoeuvre events it causes."""
        if abs(new_target - self.target) > 1:
            raise LaneChangeError(
                f"target lane {new_target} is not adjacent to the current target {self.target}"
            )
        if new_target == self.target:
            return []
        events = []
        if self.in_progress:
            logger.debug("retarget %d -> %d at lateral %.2f", self.target, new_target, self.lateral)
            events.append(ManoeuvreEvent.ABORT)
        self.target = new_target
        if self.in_progress:
            events.append(ManoeuvreEvent.START)
        return events

    def advance(self, dt: float) -> list[ManoeuvreEvent]:
        """Move ``dt`` seconds along the ramp."""
        if not self.in_progress:
            return []
        gap = self.target_lateral - self.lateral
        step = self.rate * dt
        if abs(gap) <= step + 1e-12:
            self.lateral = self.target_lateral
            return [ManoeuvreEvent.FINISH]
        self.lateral += step if gap > 0 else -step
        return []


def execute_lane_change(
    lateral: float,
    current_target: int,
    new_target: int,
    lane_width: float,
    N: int,
    T_s: float,
    dt: float,
) -> np.ndarray:
    """
    Lateral positions sampled every ``dt`` from now until the ramp towards
    ``new_target`` completes (the current position included).

    Example:
        >>> traj = execute_lane_change(3.5, 1, 0, 3.5, 3, 0.4, 0.05)
        >>> len(traj), traj[-1]
        (25, 0.0)
    """
    ex = LaneChangeExecutor(lane_width, N, T_s, lateral, current_target)
    ex.command(new_target)
    out = [ex.lateral]
    while ex.in_progress:
        ex.advance(dt)
        out.append(ex.lateral)
    return np.asarray(out)

