"""
Intelligent Driver Model.

Used for the surrounding traffic's braking clamp, for the No-Change baseline's
speed choice and for the acceleration estimates behind MOBIL.
"""

from __future__ import annotations

import math
from typing import Optional

from slas_engine.models import IdmParams


def desired_gap(v: float, v_leader: float, p: IdmParams) -> float:
    """Dynamic desired gap s*(v, Δv), never below the jam distance."""
    dv = v - v_leader
    interaction = v * dv / (2.0 * math.sqrt(p.a_max * p.b_comf))
    return p.jam_distance + max(0.0, v * p.time_headway + interaction)


def idm_acceleration(
    v: float,
    v_desired: float,
    gap: Optional[float] = None,
    v_leader: Optional[float] = None,
    p: Optional[IdmParams] = None,
) -> float:
    """
    IDM acceleration; ``gap`` is bumper to bumper, ``None`` means a free road.

    Example:
        >>> idm_acceleration(10.0, 10.0)   # free road at the desired speed
        0.0
    """
    p = p or IdmParams()
    free = p.a_max * (1.0 - (v / max(v_desired, 1e-6)) ** p.delta)
    if gap is None or v_leader is None:
        return free
    s_star = desired_gap(v, v_leader, p)
    return free - p.a_max * (s_star / max(gap, 1e-3)) ** 2


def braking_clamp(
    v: float,
    v_nominal: float,
    gap: Optional[float],
    v_leader: Optional[float],
    dt: float,
    p: IdmParams,
) -> float:
    """
    Acceleration of a vehicle that holds its nominal speed unless it is
    closer to its leader than the IDM desired gap, in which case it brakes
    with the IDM deceleration.
    """
    if gap is not None and v_leader is not None and gap < desired_gap(v, v_leader, p):
        return min(0.0, idm_acceleration(v, v_nominal, gap, v_leader, p))
    return min(max((v_nominal - v) / dt, -p.b_comf), p.a_max)
