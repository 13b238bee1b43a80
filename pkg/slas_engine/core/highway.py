"""
Highway kinematics — lane sets, longitudinal integration, lane indicator, observation.

All positions are road-aligned: ``s`` along the road, lateral offset measured
from the centre of lane 0 (the leftmost lane).
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence

from slas_engine.models import EgoState, ObservedVehicle, RoadModel


def lane_set(road: RoadModel, k: int) -> frozenset[int]:
    """Usable lanes {0, ..., N_l(k)-1} at planner step k."""
    return frozenset(range(road.lane_count(k)))


def step_longitudinal(s: float, v_prev: float, v_next: float, dt: float) -> float:
    """Trapezoidal position update over one step of length ``dt``."""
    return s + 0.5 * (v_prev + v_next) * dt


def lane_indicator(history: Sequence[int]) -> int:
    """
    Physical lane implied by the last N target-lane commands.

    Round-half-up of the mean, evaluated in integers so that exact halves
    never depend on float rounding.

    Example:
        >>> lane_indicator([1, 1, 0])
        1
        >>> lane_indicator([1, 0, 0])
        0
    """
    n = len(history)
    if n == 0:
        raise ValueError("lane_indicator needs at least one target lane")
    return (2 * sum(history) + n) // (2 * n)


def observe(
    ego: EgoState, traffic: Iterable[ObservedVehicle], R_v: float
) -> tuple[ObservedVehicle, ...]:
    """Vehicles within the visibility range (inclusive), ordered by id."""
    seen = [veh for veh in traffic if abs(veh.s - ego.s) <= R_v]
    return tuple(sorted(seen, key=lambda veh: veh.id))


def lateral_of_lane(lane: int, lane_width: float) -> float:
    """Lateral offset of a lane centre."""
    return lane * lane_width


def lane_of_lateral(lateral: float, lane_width: float) -> int:
    """Lane whose boundaries contain ``lateral``; boundaries belong to the higher lane."""
    return int(math.floor(lateral / lane_width + 0.5))


def reachable_speeds(
    v0: float, j: int, T_s: float, A_min: float, A_max: float, v_max: float
) -> tuple[float, float]:
    """Interval of speeds the ego can hold after j planner steps."""
    lo = max(0.0, v0 + A_min * j * T_s)
    hi = min(v_max, v0 + A_max * j * T_s)
    if hi < lo:
        # only when v0 already exceeds v_max
        lo = hi
    return lo, hi


def reachable_displacements(
    v0: float, H: int, T_s: float, A_min: float, A_max: float, v_max: float
) -> list[tuple[float, float]]:
    """Displacement envelope for steps 0..H, starting at s=0."""
    envelope = [(0.0, 0.0)]
    s_lo = s_hi = 0.0
    prev_lo = prev_hi = v0
    for j in range(1, H + 1):
        v_lo, v_hi = reachable_speeds(v0, j, T_s, A_min, A_max, v_max)
        s_lo = step_longitudinal(s_lo, prev_lo, v_lo, T_s)
        s_hi = step_longitudinal(s_hi, prev_hi, v_hi, T_s)
        envelope.append((s_lo, s_hi))
        prev_lo, prev_hi = v_lo, v_hi
    return envelope


def occupied_lanes(ego: EgoState, j: int, N: int) -> frozenset[int]:
    """
    Lanes the ego may still physically overlap at planner step j (j >= 1)
    because of commands already issued.

    A lane change takes N steps, so commands older than j-N+1 steps no longer
    matter; the current physical lane always counts while any issued command
    is still in flight.
    """
    history = ego.target_history[-N:] if N > 0 else ()
    # history[-1] is step 0, history[-2] step -1, ...
    lanes = {history[-1 - back] for back in range(len(history)) if j - (-back) <= N - 1}
    if lanes:
        lanes.add(ego.lane)
    return frozenset(lanes)
