"""Pydantic models for the advisory engine: road, vehicles, parameters, commands."""

from __future__ import annotations

import math
from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

# ─── Enums ────────────────────────────────────────────────────────────────────


class Formulation(str, Enum):
    BINARY = "binary"
    INTEGER = "integer"


class PolicyName(str, Enum):
    SLAS = "slas"
    MOBIL = "mobil"
    NOCHANGE = "nochange"


class Direction(str, Enum):
    FORWARD = "forward"  # ego follows the other vehicle
    REAR = "rear"  # ego leads, the other vehicle follows


# ─── Road ─────────────────────────────────────────────────────────────────────


class LaneBreakpoint(BaseModel):
    """Lane count that holds from ``from_step`` until the next breakpoint."""

    model_config = ConfigDict(frozen=True)

    from_step: int = Field(..., ge=0)
    lanes: int = Field(..., ge=1)


class RoadModel(BaseModel):
    """Straight multi-lane highway patch in road-aligned coordinates.

    Lane 0 is the leftmost lane. ``lanes`` is either a constant count or a
    list of breakpoints for lanes that open or close during an episode.
    """

    model_config = ConfigDict(frozen=True)

    lanes: int | list[LaneBreakpoint]
    lane_width_m: float = Field(3.5, gt=0)
    speed_limit_mps: float = Field(15.0, gt=0)
    length_m: float = Field(350.0, gt=0)

    @field_validator("lanes")
    @classmethod
    def lanes_well_formed(cls, v: int | list[LaneBreakpoint]) -> int | list[LaneBreakpoint]:
        if isinstance(v, int):
            if v < 1:
                raise ValueError("a road needs at least one lane")
            return v
        if not v:
            raise ValueError("lane breakpoints must not be empty")
        if v[0].from_step != 0:
            raise ValueError("the first lane breakpoint must start at step 0")
        steps = [bp.from_step for bp in v]
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ValueError("lane breakpoints must be strictly increasing in from_step")
        return v

    def lane_count(self, k: int) -> int:
        """Number of usable lanes N_l(k) at planner step k."""
        if isinstance(self.lanes, int):
            return self.lanes
        count = self.lanes[0].lanes
        for bp in self.lanes:
            if bp.from_step > k:
                break
            count = bp.lanes
        return count

    @property
    def max_lanes(self) -> int:
        if isinstance(self.lanes, int):
            return self.lanes
        return max(bp.lanes for bp in self.lanes)


# ─── Vehicles ─────────────────────────────────────────────────────────────────


class EgoState(BaseModel):
    """Ego state at a planner tick.

    ``target_history`` holds the last N commanded target lanes, oldest first;
    its last entry is the previous target.
    """

    model_config = ConfigDict(frozen=True)

    s: float
    v: float = Field(..., ge=0)
    lane: int = Field(..., ge=0)
    lateral: float
    target_history: tuple[int, ...] = Field(..., min_length=1)

    @property
    def prev_target(self) -> int:
        return self.target_history[-1]


class ObservedVehicle(BaseModel):
    """A surrounding vehicle as seen by the ego's sensors."""

    model_config = ConfigDict(frozen=True)

    id: int = Field(..., gt=0)
    s: float
    v: float = Field(..., ge=0)
    lane: int = Field(..., ge=0)
    speed_history: tuple[tuple[float, float], ...] = ()

    @field_validator("speed_history")
    @classmethod
    def history_time_ordered(
        cls, v: tuple[tuple[float, float], ...]
    ) -> tuple[tuple[float, float], ...]:
        times = [t for t, _ in v]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("speed_history must be strictly time-ordered")
        return v


class WorldSnapshot(BaseModel):
    """Everything the planner sees at tick k: ego, filtered traffic, road."""

    model_config = ConfigDict(frozen=True)

    time: float = Field(..., ge=0)
    k: int = Field(..., ge=0)
    ego: EgoState
    vehicles: tuple[ObservedVehicle, ...] = ()
    road: RoadModel


# ─── Parameters ───────────────────────────────────────────────────────────────


class SafetyParams(BaseModel):
    """Safe-distance and deviation-cost parameters.

    ``N``, ``T_s`` and ``lane_width`` mirror the planner and road values; the
    enclosing ``PlannerParams`` / ``Scenario`` keep them in sync.
    """

    d_min: float = Field(2.0, gt=0, description="Standstill gap, bumper to bumper")
    t_react: float = Field(0.5, ge=0)
    a_brake_ego: float = Field(5.0, gt=0)
    a_brake_other: float = Field(5.0, gt=0)
    gamma4: float = Field(1.0, ge=0)
    vehicle_length: float = Field(4.5, gt=0)
    N: int = Field(3, ge=1)
    T_s: float = Field(0.4, gt=0)
    lane_width: float = Field(3.5, gt=0)


class PlannerParams(BaseModel):
    """Horizon, weights, limits and solver knobs of the advisory planner."""

    H: int = Field(40, ge=1)
    T_s: float = Field(0.4, gt=0)
    N: int = Field(3, ge=1)
    gamma1: float = Field(1.0, ge=0)
    gamma2: float = Field(0.1, ge=0)
    gamma3: float = Field(0.01, ge=0)
    A_min: float = -5.0
    A_max: float = 3.5
    V_l: float = Field(15.0, gt=0)
    V_m: Optional[float] = Field(None, gt=0, description="Vehicle top speed; defaults to V_l")
    R_v: float = Field(50.0, gt=0, description="Sensor visibility range")
    big_M: Optional[float] = Field(None, gt=0, description="None derives it from the horizon")
    epsilon: float = Field(0.1, gt=0, lt=1)
    time_limit: float = Field(0.2, gt=0)
    node_limit: Optional[int] = Field(None, ge=1)
    workers: int = Field(1, ge=1)
    lazy_lane_constraints: bool = True
    use_warm_start: bool = True
    formulation: Formulation = Formulation.BINARY
    H_a: int = Field(5, ge=0, description="Acceleration horizon of the predictor")
    history_window: int = Field(10, ge=2)
    safety: SafetyParams = Field(default_factory=SafetyParams)

    @model_validator(mode="after")
    def check_limits(self) -> "PlannerParams":
        if not self.A_min < 0 < self.A_max:
            raise ValueError("acceleration limits must satisfy A_min < 0 < A_max")
        if self.epsilon > 1.0 / (2 * self.N):
            raise ValueError(
                f"epsilon={self.epsilon} is too coarse for N={self.N}: "
                "the lane-timing floor needs epsilon <= 1/(2N)"
            )
        if self.safety.N != self.N or self.safety.T_s != self.T_s:
            self.safety = self.safety.model_copy(update={"N": self.N, "T_s": self.T_s})
        return self

    @property
    def v_max(self) -> float:
        """Effective speed bound min(V_m, V_l)."""
        return self.V_l if self.V_m is None else min(self.V_m, self.V_l)

    def max_margin(self) -> float:
        """Largest centre-to-centre safety margin any row can demand."""
        p = self.safety
        v = self.v_max
        raw = v * p.t_react + v * v / (2 * p.a_brake_ego)
        aug = p.gamma4 * v * self.N * self.T_s
        return p.vehicle_length + max(p.d_min, raw) + aug

    @property
    def effective_big_M(self) -> float:
        if self.big_M is not None:
            return self.big_M
        return 2 * self.R_v + self.V_l * self.H * self.T_s + self.max_margin()


class IdmParams(BaseModel):
    """Intelligent Driver Model car-following parameters."""

    a_max: float = Field(3.5, gt=0)
    b_comf: float = Field(2.0, gt=0)
    time_headway: float = Field(1.5, ge=0)
    jam_distance: float = Field(2.0, ge=0)
    delta: float = Field(4.0, gt=0)


class MobilParams(BaseModel):
    """MOBIL lane-change incentive and safety parameters."""

    politeness: float = Field(0.3, ge=0, le=1)
    a_threshold: float = Field(0.1, ge=0)
    b_safe: float = Field(
        -4.0, lt=0, description="Most negative acceleration imposed on the new follower"
    )


class SimParams(BaseModel):
    dt_s: float = Field(0.05, gt=0)
    seed: int = 0
    max_time_s: float = Field(120.0, gt=0)
    lateral_overlap_m: float = Field(
        2.0, gt=0, description="Vehicle width used for lateral overlap"
    )


# ─── Scenario ─────────────────────────────────────────────────────────────────


class EgoSeed(BaseModel):
    s0_m: float = Field(..., ge=0)
    v0_mps: float = Field(..., ge=0)
    lane0: int = Field(..., ge=0)


class VehicleSeed(BaseModel):
    id: int = Field(..., gt=0)
    lane: int = Field(..., ge=0)
    s0_m: float = Field(..., ge=0)
    v_mps: float = Field(..., ge=0)


class Scenario(BaseModel):
    """A validated closed-loop experiment: road, initial world, parameters."""

    name: str = "scenario"
    description: str = ""
    road: RoadModel
    ego: EgoSeed
    traffic: list[VehicleSeed] = Field(default_factory=list)
    sim: SimParams = Field(default_factory=SimParams)
    planner: PlannerParams = Field(default_factory=PlannerParams)
    idm: IdmParams = Field(default_factory=IdmParams)
    mobil: MobilParams = Field(default_factory=MobilParams)

    @model_validator(mode="after")
    def check_world(self) -> "Scenario":
        ratio = self.planner.T_s / self.sim.dt_s
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError(
                f"sim.dt_s={self.sim.dt_s} must divide planner.T_s={self.planner.T_s} exactly"
            )
        lanes = self.road.lane_count(0)
        if self.ego.lane0 >= lanes:
            raise ValueError(f"ego lane {self.ego.lane0} outside lanes 0..{lanes - 1}")
        ids = [v.id for v in self.traffic]
        if len(set(ids)) != len(ids):
            raise ValueError("traffic vehicle ids must be unique")
        for veh in self.traffic:
            if veh.lane >= lanes:
                raise ValueError(f"vehicle {veh.id} lane {veh.lane} outside lanes 0..{lanes - 1}")

        # id 0 stands for the ego in spacing messages
        placed = [(0, self.ego.lane0, self.ego.s0_m)] + [
            (v.id, v.lane, v.s0_m) for v in self.traffic
        ]
        min_gap = self.planner.safety.vehicle_length + self.planner.safety.d_min
        for i, (id_a, lane_a, s_a) in enumerate(placed):
            for id_b, lane_b, s_b in placed[i + 1 :]:
                if lane_a == lane_b and abs(s_a - s_b) < min_gap:
                    name_a = "ego" if id_a == 0 else f"vehicle {id_a}"
                    name_b = "ego" if id_b == 0 else f"vehicle {id_b}"
                    raise ValueError(
                        f"{name_a} and {name_b} start {abs(s_a - s_b):.2f} m apart in lane "
                        f"{lane_a}; minimum is {min_gap:.2f} m"
                    )

        sync = {}
        if self.planner.V_l != self.road.speed_limit_mps:
            sync["V_l"] = self.road.speed_limit_mps
        if self.planner.safety.lane_width != self.road.lane_width_m:
            sync["safety"] = self.planner.safety.model_copy(
                update={"lane_width": self.road.lane_width_m}
            )
        if sync:
            self.planner = self.planner.model_copy(update=sync)
        return self

    @property
    def ticks_per_plan(self) -> int:
        return int(round(self.planner.T_s / self.sim.dt_s))


# ─── Planner output ───────────────────────────────────────────────────────────


class AdvisoryCommand(BaseModel):
    """Target lane and reference speed for the next planner period."""

    model_config = ConfigDict(frozen=True)

    target_lane: int = Field(..., ge=0)
    ref_speed: float = Field(..., ge=0)
    horizon_speeds: tuple[float, ...] = ()
    horizon_lanes: tuple[int, ...] = ()
    fallback: bool = False

    @field_validator("ref_speed")
    @classmethod
    def finite_speed(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("ref_speed must be finite")
        return v
