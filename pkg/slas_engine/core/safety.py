"""
Safety margins — minimum safe distance, lateral deviation bookkeeping and the
deviation-augmented margin used while a lane change is in progress.

All distances here are bumper-to-bumper gaps; the optimizer adds the vehicle
length to turn them into centre-to-centre separations.
"""

from __future__ import annotations

from dataclasses import dataclass

from slas_engine.core.highway import lateral_of_lane
from slas_engine.models import Direction, SafetyParams


@dataclass(frozen=True)
class DeviationState:
    """Lateral progress past the previous target lane's near boundary."""

    delta_k: float
    prev_target: int


@dataclass(frozen=True)
class AffineMargin:
    """Margin ``intercept + slope * v_ego`` valid over a speed interval."""

    intercept: float
    slope: float

    def at(self, v: float) -> float:
        return self.intercept + self.slope * v


def _raw_distance(
    v_follower: float, v_leader: float, t_react: float, a_f: float, a_l: float
) -> float:
    return v_follower * t_react + v_follower**2 / (2 * a_f) - v_leader**2 / (2 * a_l)


def min_safe_distance(
    v_ego: float, v_other: float, p: SafetyParams, direction: Direction = Direction.FORWARD
) -> float:
    """
    Reaction-time plus braking-difference gap, floored at ``d_min``.

    FORWARD: ego follows the other vehicle. REAR: the other vehicle follows
    the ego, so the roles (and braking capabilities) swap.

    Example:
        >>> min_safe_distance(10.0, 10.0, SafetyParams())
        5.0
    """
    if direction is Direction.FORWARD:
        raw = _raw_distance(v_ego, v_other, p.t_react, p.a_brake_ego, p.a_brake_other)
    else:
        raw = _raw_distance(v_other, v_ego, p.t_react, p.a_brake_other, p.a_brake_ego)
    return max(p.d_min, raw)


def linearized_safe_distance(
    v_lo: float, v_hi: float, v_other: float, p: SafetyParams, direction: Direction
) -> AffineMargin:
    """
    Affine upper bound of the unfloored safe distance over ego speeds [v_lo, v_hi].

    The forward gap is convex in the ego speed, so its chord over the interval
    bounds it from above and is exact at both end points. The rear gap is
    concave in the ego speed, so the tangent at the interval midpoint bounds it
    and is exact there. Pair with a separate ``d_min`` row for the floor.
    """
    if direction is Direction.FORWARD:
        # v^2 <= (lo + hi) v - lo hi on [lo, hi]
        intercept = -v_lo * v_hi / (2 * p.a_brake_ego) - v_other**2 / (2 * p.a_brake_other)
        slope = p.t_react + (v_lo + v_hi) / (2 * p.a_brake_ego)
    else:
        # -v^2 <= -2 m v + m^2
        m = 0.5 * (v_lo + v_hi)
        intercept = (
            v_other * p.t_react + v_other**2 / (2 * p.a_brake_other) + m * m / (2 * p.a_brake_ego)
        )
        slope = -m / p.a_brake_ego
    return AffineMargin(intercept=intercept, slope=slope)


def deviation_from_boundary(lateral: float, prev_target: int, lane_width: float) -> float:
    """
    How far the ego sits outside the previous target lane, past its near boundary.

    Zero anywhere inside that lane, growing to ``lane_width / 2`` at the
    centre of the neighbouring lane.

    Example:
        >>> deviation_from_boundary(1.0, 1, 3.5)
        0.75
    """
    offset = abs(lateral - lateral_of_lane(prev_target, lane_width))
    return min(max(offset - 0.5 * lane_width, 0.0), 0.5 * lane_width)


def projected_deviation(dev: DeviationState, j: int, p: SafetyParams) -> float:
    """Deviation expected j steps ahead if the manoeuvre keeps its pace."""
    return min(dev.delta_k + p.lane_width * j / p.N, 0.5 * p.lane_width)


def deviation_cost(delta_j: float, p: SafetyParams) -> float:
    """Dynamic cost weight γ_d in [0, γ4]."""
    return p.gamma4 * 2.0 * abs(delta_j) / p.lane_width


def augmented_safe_distance(L_s: float, gamma_d: float, v_j: float, p: SafetyParams) -> float:
    """Safe distance widened by the distance covered during one lane change."""
    return L_s + gamma_d * v_j * p.N * p.T_s
