"""
MOBIL lane-change decision.

The ego changes to an adjacent lane when its own IDM acceleration gain,
plus a politeness-weighted change for the followers it affects, beats the
threshold, and the new follower would not have to brake harder than
``b_safe``. Only adjacent lanes are assessed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

from slas_engine.core.highway import lane_set, lateral_of_lane
from slas_engine.models import IdmParams, MobilParams, ObservedVehicle, WorldSnapshot
from slas_engine.sim.idm import idm_acceleration

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LaneNeighbours:
    leader: Optional[ObservedVehicle]
    follower: Optional[ObservedVehicle]


@dataclass(frozen=True)
class MobilAssessment:
    lane: int
    incentive: float
    follower_accel: float
    safe: bool


def neighbours(snapshot: WorldSnapshot, lane: int) -> LaneNeighbours:
    """Nearest vehicle ahead of and behind the ego in ``lane``."""
    s = snapshot.ego.s
    ahead = [veh for veh in snapshot.vehicles if veh.lane == lane and veh.s >= s]
    behind = [veh for veh in snapshot.vehicles if veh.lane == lane and veh.s < s]
    return LaneNeighbours(
        leader=min(ahead, key=lambda veh: veh.s, default=None),
        follower=max(behind, key=lambda veh: veh.s, default=None),
    )


def _accel(
    v: float,
    v_desired: float,
    s: float,
    leader_s: Optional[float],
    leader_v: Optional[float],
    length: float,
    idm: IdmParams,
) -> float:
    if leader_s is None or leader_v is None:
        return idm_acceleration(v, v_desired, p=idm)
    return idm_acceleration(v, v_desired, leader_s - s - length, leader_v, idm)


def assess_lane(
    snapshot: WorldSnapshot,
    lane: int,
    params: MobilParams,
    idm: IdmParams,
    v_desired: float,
    vehicle_length: float,
) -> MobilAssessment:
    """Incentive and safety of moving the ego from its current lane to ``lane``."""
    ego = snapshot.ego
    L = vehicle_length
    old = neighbours(snapshot, ego.lane)
    new = neighbours(snapshot, lane)

    def acc_of(
        veh: Optional[ObservedVehicle], leader_s: Optional[float], leader_v: Optional[float]
    ) -> float:
        if veh is None:
            return 0.0
        # followers are assumed content with their current speed
        return _accel(veh.v, max(veh.v, 0.1), veh.s, leader_s, leader_v, L, idm)

    def pos(veh: Optional[ObservedVehicle]) -> tuple[Optional[float], Optional[float]]:
        return (None, None) if veh is None else (veh.s, veh.v)

    ego_old = _accel(ego.v, v_desired, ego.s, *pos(old.leader), L, idm)
    ego_new = _accel(ego.v, v_desired, ego.s, *pos(new.leader), L, idm)

    nf_before = acc_of(new.follower, *pos(new.leader))
    nf_after = acc_of(new.follower, ego.s, ego.v)
    of_before = acc_of(old.follower, ego.s, ego.v)
    of_after = acc_of(old.follower, *pos(old.leader))

    overlap = any(
        veh is not None and abs(veh.s - ego.s) < L for veh in (new.leader, new.follower)
    )
    safe = not overlap and nf_after >= params.b_safe
    others = nf_after - nf_before + of_after - of_before
    incentive = ego_new - ego_old + params.politeness * others
    return MobilAssessment(lane, incentive, nf_after, safe)


def mobil_decision(
    snapshot: WorldSnapshot,
    params: MobilParams,
    idm: Optional[IdmParams] = None,
    v_desired: float = 15.0,
    vehicle_length: float = 4.5,
    lane_width: Optional[float] = None,
) -> int:
    """
    Target lane chosen by MOBIL; the current target while a change is still under way.

    Example:
        >>> mobil_decision(snapshot, MobilParams())   # slow leader, empty left lane
        0
    """
    idm = idm or IdmParams()
    ego = snapshot.ego
    w = lane_width if lane_width is not None else snapshot.road.lane_width_m
    if ego.lane != ego.prev_target or abs(ego.lateral - lateral_of_lane(ego.lane, w)) > 1e-6:
        return ego.prev_target

    lanes = lane_set(snapshot.road, snapshot.k)
    options = [
        assess_lane(snapshot, lane, params, idm, v_desired, vehicle_length)
        for lane in (ego.lane - 1, ego.lane + 1)
        if lane in lanes
    ]
    viable = [o for o in options if o.safe and o.incentive > params.a_threshold]
    if not viable:
        return ego.lane
    best = max(viable, key=lambda o: (o.incentive, -o.lane))
    logger.debug("MOBIL: lane %d -> %d (incentive %.3f)", ego.lane, best.lane, best.incentive)
    return best.lane
