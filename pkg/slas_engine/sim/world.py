"""
Kinematic multi-lane highway world.

Traffic keeps its lane and nominal speed, braking with IDM only when it gets
closer to its leader than the desired gap. The ego follows the active
advisory: its speed ramps towards the reference over one planner period and
its lateral position follows the lane-change executor.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from slas_engine.core.highway import lane_indicator, lateral_of_lane, observe, step_longitudinal
from slas_engine.models import (
    AdvisoryCommand,
    EgoState,
    ObservedVehicle,
    RoadModel,
    Scenario,
    WorldSnapshot,
)
from slas_engine.sim.executor import LaneChangeExecutor, ManoeuvreEvent
from slas_engine.sim.idm import braking_clamp

logger = logging.getLogger(__name__)


@dataclass
class TrafficVehicle:
    id: int
    lane: int
    s: float
    v: float
    v_nominal: float


@dataclass(frozen=True)
class WorldState:
    """Ground truth at one simulator tick."""

    time: float
    ego: EgoState
    traffic: tuple[ObservedVehicle, ...]
    road: RoadModel


@dataclass
class World:
    """
    One episode's mutable world.

    Example:
        >>> world = World.from_scenario(scenario)
        >>> world.apply(command)
        >>> world.step()
    """

    scenario: Scenario
    time: float
    tick: int
    ego_s: float
    ego_v: float
    executor: LaneChangeExecutor
    target_history: deque[int]
    traffic: list[TrafficVehicle]
    ego_a: float = 0.0
    command: Optional[AdvisoryCommand] = None
    removed: list[int] = field(default_factory=list)

    @classmethod
    def from_scenario(cls, scenario: Scenario) -> World:
        p = scenario.planner
        lane0 = scenario.ego.lane0
        return cls(
            scenario=scenario,
            time=0.0,
            tick=0,
            ego_s=scenario.ego.s0_m,
            ego_v=min(scenario.ego.v0_mps, p.v_max),
            executor=LaneChangeExecutor.at_lane(lane0, scenario.road.lane_width_m, p.N, p.T_s),
            target_history=deque([lane0] * p.N, maxlen=p.N),
            traffic=[
                TrafficVehicle(v.id, v.lane, v.s0_m, v.v_mps, v.v_mps)
                for v in sorted(scenario.traffic, key=lambda veh: veh.id)
            ],
        )

    # ─── Views ────────────────────────────────────────────────────────────────

    @property
    def dt(self) -> float:
        return self.scenario.sim.dt_s

    @property
    def planner_tick(self) -> int:
        return self.tick // self.scenario.ticks_per_plan

    @property
    def physical_lane(self) -> int:
        return self.executor.physical_lane

    @property
    def ego_lateral(self) -> float:
        return self.executor.lateral

    @property
    def goal_reached(self) -> bool:
        return self.ego_s >= self.scenario.road.length_m

    def ego_state(self) -> EgoState:
        history = tuple(self.target_history)
        return EgoState(
            s=self.ego_s,
            v=self.ego_v,
            lane=lane_indicator(history),
            lateral=self.executor.lateral,
            target_history=history,
        )

    def ground_truth(self) -> tuple[ObservedVehicle, ...]:
        return tuple(ObservedVehicle(id=t.id, s=t.s, v=t.v, lane=t.lane) for t in self.traffic)

    def state(self) -> WorldState:
        return WorldState(self.time, self.ego_state(), self.ground_truth(), self.scenario.road)

    def snapshot(self) -> WorldSnapshot:
        """What the planner sees: traffic within the visibility range."""
        ego = self.ego_state()
        return WorldSnapshot(
            time=self.time,
            k=self.planner_tick,
            ego=ego,
            vehicles=observe(ego, self.ground_truth(), self.scenario.planner.R_v),
            road=self.scenario.road,
        )

    def headway(self) -> float:
        """Gap to the nearest leader in the ego's physical lane, saturated at R_v."""
        R_v = self.scenario.planner.R_v
        length = self.scenario.planner.safety.vehicle_length
        lane = self.physical_lane
        gaps = [
            t.s - self.ego_s - length
            for t in self.traffic
            if t.lane == lane and t.s >= self.ego_s
        ]
        return min([R_v] + [max(g, 0.0) for g in gaps])

    def closest_distance(self) -> float:
        """Bumper-gap / lateral-offset distance to the nearest vehicle, saturated at R_v."""
        R_v = self.scenario.planner.R_v
        length = self.scenario.planner.safety.vehicle_length
        w = self.scenario.road.lane_width_m
        best = R_v
        for t in self.traffic:
            ds = max(abs(t.s - self.ego_s) - length, 0.0)
            dl = self.executor.lateral - lateral_of_lane(t.lane, w)
            best = min(best, math.hypot(ds, dl))
        return best

    # ─── Dynamics ─────────────────────────────────────────────────────────────

    def apply(self, command: AdvisoryCommand) -> list[ManoeuvreEvent]:
        """Latch a new advisory at a planner tick; ``LaneChangeError`` for non-adjacent targets."""
        events = self.executor.command(command.target_lane)
        self.target_history.append(command.target_lane)
        p = self.scenario.planner
        ref = min(max(command.ref_speed, 0.0), p.v_max)
        self.ego_a = min(max((ref - self.ego_v) / p.T_s, p.A_min), p.A_max)
        self.command = command
        return events

    def step(self) -> list[ManoeuvreEvent]:
        """Advance every vehicle by one simulator tick."""
        dt = self.dt
        p = self.scenario.planner
        length = p.safety.vehicle_length

        # traffic reacts to the world as it was at the start of the tick
        leaders = self._leaders(length)
        for veh in self.traffic:
            gap, v_lead = leaders.get(veh.id, (None, None))
            a = braking_clamp(veh.v, veh.v_nominal, gap, v_lead, dt, self.scenario.idm)
            v_next = min(max(veh.v + a * dt, 0.0), veh.v_nominal)
            veh.s = step_longitudinal(veh.s, veh.v, v_next, dt)
            veh.v = v_next

        v_next = min(max(self.ego_v + self.ego_a * dt, 0.0), p.v_max)
        self.ego_s = step_longitudinal(self.ego_s, self.ego_v, v_next, dt)
        self.ego_v = v_next
        events = self.executor.advance(dt)

        self.time = (self.tick + 1) * dt
        self.tick += 1

        road_end = self.scenario.road.length_m
        gone = [t.id for t in self.traffic if t.s > road_end]
        if gone:
            logger.debug("t=%.2f: vehicles %s left the road", self.time, gone)
            self.removed.extend(gone)
            self.traffic = [t for t in self.traffic if t.s <= road_end]
        return events

    def _leaders(self, length: float) -> dict[int, tuple[float, float]]:
        """Gap and speed of each traffic vehicle's leader; the ego counts in its physical lane."""
        by_lane: dict[int, list[tuple[float, float, int]]] = {}
        for t in self.traffic:
            by_lane.setdefault(t.lane, []).append((t.s, t.v, t.id))
        by_lane.setdefault(self.physical_lane, []).append((self.ego_s, self.ego_v, 0))
        out: dict[int, tuple[float, float]] = {}
        for row in by_lane.values():
            row.sort()
            for (s, _, vid), (s_lead, v_lead, _) in zip(row, row[1:]):
                if vid != 0:
                    out[vid] = (s_lead - s - length, v_lead)
        return out

    def collision(self) -> Optional[str]:
        """Description of the first overlap found, or None."""
        p = self.scenario.planner
        length = p.safety.vehicle_length
        width = self.scenario.sim.lateral_overlap_m
        w = self.scenario.road.lane_width_m
        for t in self.traffic:
            lateral_gap = abs(self.executor.lateral - lateral_of_lane(t.lane, w))
            if abs(t.s - self.ego_s) < length and lateral_gap < width:
                return f"ego overlaps vehicle {t.id} at s={self.ego_s:.2f}"
        by_lane: dict[int, list[TrafficVehicle]] = {}
        for t in self.traffic:
            by_lane.setdefault(t.lane, []).append(t)
        for lane, row in by_lane.items():
            row.sort(key=lambda t: t.s)
            for a, b in zip(row, row[1:]):
                if b.s - a.s < length:
                    return f"vehicles {a.id} and {b.id} overlap in lane {lane}"
        return None
