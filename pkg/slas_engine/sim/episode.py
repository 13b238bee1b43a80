"""
Closed-loop episodes: the simulator loop, its log and the log's CSV/JSON form.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Optional

import pandas as pd

from slas_engine.models import AdvisoryCommand, PolicyName, Scenario
from slas_engine.optim.bnb import SolveStatus
from slas_engine.planner import PlanDiagnostics, fallback_command
from slas_engine.sim.executor import LaneChangeError, ManoeuvreEvent
from slas_engine.sim.metrics import Metrics, compute_metrics
from slas_engine.sim.policies import Policy
from slas_engine.sim.world import World

logger = logging.getLogger(__name__)

BASE_COLUMNS = (
    "time",
    "ego_s",
    "ego_v",
    "ego_a",
    "ego_lateral",
    "ego_lane",
    "target_lane",
    "ref_speed",
    "headway",
    "closest_distance",
    "solve_status",
    "objective",
    "first_incumbent_time",
    "solve_time",
    "nodes",
    "fallback",
)
NO_STATUS = "none"


class EventKind(str, Enum):
    LANE_CHANGE_START = "lane_change_start"
    LANE_CHANGE_FINISH = "lane_change_finish"
    LANE_CHANGE_ABORT = "lane_change_abort"
    COLLISION = "collision"
    INFEASIBLE = "infeasible"
    FALLBACK = "fallback"
    GOAL = "goal"


@dataclass(frozen=True)
class EpisodeEvent:
    time: float
    kind: EventKind
    detail: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {"time": self.time, "kind": self.kind.value, "detail": self.detail}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> EpisodeEvent:
        return cls(float(d["time"]), EventKind(d["kind"]), str(d.get("detail", "")))


@dataclass
class EpisodeLog:
    """Per-tick samples, events and metrics of one episode."""

    scenario_name: str
    policy: PolicyName
    dt: float
    road_length: float
    A_min: float
    A_max: float
    seed: int
    samples: pd.DataFrame
    events: list[EpisodeEvent] = field(default_factory=list)
    planner_errors: int = 0
    metrics: Optional[Metrics] = None

    @property
    def collided(self) -> bool:
        return any(e.kind is EventKind.COLLISION for e in self.events)

    def count(self, kind: EventKind) -> int:
        return sum(1 for e in self.events if e.kind is kind)

    @property
    def summary(self) -> str:
        m = self.metrics.summary if self.metrics else "no metrics"
        return (
            f"{self.policy.value} on {self.scenario_name}: {m}; "
            f"{self.count(EventKind.FALLBACK)} fallbacks, {self.planner_errors} planner errors"
        )

    # ─── Serialisation ────────────────────────────────────────────────────────

    def write(self, out_dir: Path, stem: str = "episode") -> tuple[Path, Path]:
        """Write ``<stem>.csv`` plus its events sidecar; returns both paths."""
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / f"{stem}.csv"
        events_path = out_dir / ("events.json" if stem == "episode" else f"{stem}_events.json")
        self.samples.to_csv(csv_path, index=False)
        events_path.write_text(json.dumps([e.to_dict() for e in self.events], indent=2))
        return csv_path, events_path

    @staticmethod
    def read_samples(path: Path) -> pd.DataFrame:
        return pd.read_csv(path, float_precision="round_trip")

    @staticmethod
    def read_events(path: Path) -> list[EpisodeEvent]:
        return [EpisodeEvent.from_dict(d) for d in json.loads(path.read_text())]

    def header(self) -> dict[str, Any]:
        return {
            "scenario": self.scenario_name,
            "policy": self.policy.value,
            "dt": self.dt,
            "road_length": self.road_length,
            "seed": self.seed,
            "planner_errors": self.planner_errors,
            "events": {kind.value: self.count(kind) for kind in EventKind},
            "metrics": None if self.metrics is None else self.metrics.to_dict(),
        }


# ─── Simulation loop ──────────────────────────────────────────────────────────


def _sample(
    world: World, command: AdvisoryCommand, diag: Optional[PlanDiagnostics], vehicle_ids: list[int]
) -> dict[str, Any]:
    row: dict[str, Any] = {
        "time": world.time,
        "ego_s": world.ego_s,
        "ego_v": world.ego_v,
        "ego_a": world.ego_a,
        "ego_lateral": world.ego_lateral,
        "ego_lane": world.physical_lane,
        "target_lane": world.executor.target,
        "ref_speed": command.ref_speed,
        "headway": world.headway(),
        "closest_distance": world.closest_distance(),
        "solve_status": NO_STATUS,
        "objective": math.nan,
        "first_incumbent_time": math.nan,
        "solve_time": math.nan,
        "nodes": math.nan,
        "fallback": command.fallback,
    }
    if diag is not None:
        row["solve_status"] = diag.status.value if diag.status is not None else NO_STATUS
        row["objective"] = diag.objective
        row["first_incumbent_time"] = (
            math.nan if diag.first_incumbent_time is None else diag.first_incumbent_time
        )
        row["solve_time"] = diag.solve_time
        row["nodes"] = float(diag.nodes)
    present = {t.id: t for t in world.traffic}
    for vid in vehicle_ids:
        t = present.get(vid)
        row[f"veh{vid}_s"] = math.nan if t is None else t.s
        row[f"veh{vid}_v"] = math.nan if t is None else t.v
        row[f"veh{vid}_lane"] = math.nan if t is None else float(t.lane)
    return row


def _manoeuvre_events(time: float, events: list[ManoeuvreEvent], target: int) -> list[EpisodeEvent]:
    return [EpisodeEvent(time, EventKind(ev.value), f"target lane {target}") for ev in events]


def run_episode(scenario: Scenario, policy: Policy, max_time: Optional[float] = None) -> EpisodeLog:
    """
    Simulate ``policy`` on ``scenario`` until the goal, a collision or the time cap.

    The policy is consulted every planner period with the observation-filtered
    snapshot; between consultations its last command holds.

    Example:
        >>> log = run_episode(load_scenario("empty_road"), NoChangePolicy())
        >>> log.metrics.travel_time
    """
    world = World.from_scenario(scenario)
    policy.reset(scenario)
    cap = scenario.sim.max_time_s if max_time is None else max_time
    tpp = scenario.ticks_per_plan
    vehicle_ids = sorted(v.id for v in scenario.traffic)
    events: list[EpisodeEvent] = []
    rows: list[dict[str, Any]] = []
    planner_errors = 0
    command = AdvisoryCommand(target_lane=scenario.ego.lane0, ref_speed=world.ego_v)
    logger.info("episode start: %s with %s", scenario.name, policy.name.value)

    while True:
        diag: Optional[PlanDiagnostics] = None
        if world.tick % tpp == 0:
            snapshot = world.snapshot()
            try:
                command = policy.decide(snapshot)
            except Exception as exc:
                logger.exception("t=%.2f: policy %s failed", world.time, policy.name.value)
                planner_errors += 1
                command = fallback_command(snapshot, scenario.planner)
                events.append(EpisodeEvent(world.time, EventKind.FALLBACK, f"policy error: {exc}"))
            diag = policy.diagnostics
            if diag is not None:
                if diag.failed:
                    planner_errors += 1
                if diag.status is SolveStatus.INFEASIBLE:
                    events.append(EpisodeEvent(world.time, EventKind.INFEASIBLE, diag.message))
                if diag.fallback:
                    events.append(EpisodeEvent(world.time, EventKind.FALLBACK, diag.message))
            try:
                applied = world.apply(command)
            except LaneChangeError as exc:
                logger.warning("t=%.2f: %s", world.time, exc)
                events.append(EpisodeEvent(world.time, EventKind.FALLBACK, str(exc)))
                command = fallback_command(snapshot, scenario.planner)
                applied = world.apply(command)
            events.extend(_manoeuvre_events(world.time, applied, world.executor.target))

        rows.append(_sample(world, command, diag, vehicle_ids))
        if world.goal_reached:
            events.append(EpisodeEvent(world.time, EventKind.GOAL, f"s={world.ego_s:.2f}"))
            break
        if world.time >= cap - 1e-9:
            logger.warning(
                "episode %s hit the %.0f s cap at s=%.1f", scenario.name, cap, world.ego_s
            )
            break

        stepped = world.step()
        events.extend(_manoeuvre_events(world.time, stepped, world.executor.target))
        crash = world.collision()
        if crash is not None:
            rows.append(_sample(world, command, None, vehicle_ids))
            events.append(EpisodeEvent(world.time, EventKind.COLLISION, crash))
            logger.warning("t=%.2f: collision: %s", world.time, crash)
            break

    per_vehicle = [f"veh{vid}_{c}" for vid in vehicle_ids for c in ("s", "v", "lane")]
    columns = list(BASE_COLUMNS) + per_vehicle
    samples = pd.DataFrame(rows, columns=columns)
    log = EpisodeLog(
        scenario_name=scenario.name,
        policy=policy.name,
        dt=scenario.sim.dt_s,
        road_length=scenario.road.length_m,
        A_min=scenario.planner.A_min,
        A_max=scenario.planner.A_max,
        seed=scenario.sim.seed,
        samples=samples,
        events=events,
        planner_errors=planner_errors,
    )
    log.metrics = compute_metrics(log)
    logger.info("episode finish: %s", log.summary)
    return log


__all__ = [
    "BASE_COLUMNS",
    "EpisodeEvent",
    "EpisodeLog",
    "EventKind",
    "run_episode",
]
