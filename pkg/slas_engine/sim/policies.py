"""
Driving policies the simulator can run: the advisory planner and two
baselines (MOBIL lane changes, and lane keeping with IDM speed).
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Protocol, runtime_checkable

from slas_engine.models import (
    AdvisoryCommand,
    ObservedVehicle,
    PlannerParams,
    PolicyName,
    Scenario,
    WorldSnapshot,
)
from slas_engine.planner import PlanDiagnostics, SlasPlanner
from slas_engine.sim.idm import idm_acceleration
from slas_engine.sim.mobil import mobil_decision


@runtime_checkable
class Policy(Protocol):
    name: PolicyName

    def reset(self, scenario: Scenario) -> None: ...

    def decide(self, snapshot: WorldSnapshot) -> AdvisoryCommand: ...

    @property
    def diagnostics(self) -> Optional[PlanDiagnostics]: ...


def _leader(snapshot: WorldSnapshot, lane: int) -> Optional[ObservedVehicle]:
    ahead = [veh for veh in snapshot.vehicles if veh.lane == lane and veh.s >= snapshot.ego.s]
    return min(ahead, key=lambda veh: veh.s, default=None)


def _idm_reference(snapshot: WorldSnapshot, lanes: tuple[int, ...], scenario: Scenario) -> float:
    """Speed after one planner period of IDM behind the closest leader among ``lanes``."""
    p = scenario.planner
    ego = snapshot.ego
    length = p.safety.vehicle_length
    accel = p.A_max
    for lane in lanes:
        lead = _leader(snapshot, lane)
        if lead is None:
            a = idm_acceleration(ego.v, p.v_max, p=scenario.idm)
        else:
            a = idm_acceleration(ego.v, p.v_max, lead.s - ego.s - length, lead.v, scenario.idm)
        accel = min(accel, a)
    accel = min(max(accel, p.A_min), p.A_max)
    return min(max(ego.v + accel * p.T_s, 0.0), p.v_max)


class _Baseline:
    name: PolicyName
    scenario: Scenario

    def reset(self, scenario: Scenario) -> None:
        self.scenario = scenario

    @property
    def diagnostics(self) -> Optional[PlanDiagnostics]:
        return None


class NoChangePolicy(_Baseline):
    """Stay in the current lane; IDM speed behind the leader."""

    name = PolicyName.NOCHANGE

    def decide(self, snapshot: WorldSnapshot) -> AdvisoryCommand:
        lane = snapshot.ego.prev_target
        ref = _idm_reference(snapshot, (lane,), self.scenario)
        return AdvisoryCommand(target_lane=lane, ref_speed=ref)


class MobilPolicy(_Baseline):
    """MOBIL lane choice; IDM speed behind the nearer of the current and target lanes' leaders."""

    name = PolicyName.MOBIL

    def decide(self, snapshot: WorldSnapshot) -> AdvisoryCommand:
        sc = self.scenario
        target = mobil_decision(
            snapshot,
            sc.mobil,
            sc.idm,
            v_desired=sc.planner.v_max,
            vehicle_length=sc.planner.safety.vehicle_length,
        )
        lanes = tuple(sorted({snapshot.ego.lane, target}))
        ref = _idm_reference(snapshot, lanes, sc)
        return AdvisoryCommand(target_lane=target, ref_speed=ref)


class SlasPolicy:
    """The receding-horizon advisory planner."""

    name = PolicyName.SLAS

    def __init__(
        self, params: Optional[PlannerParams] = None, trace_path: Optional[Path] = None
    ) -> None:
        self._override = params
        self.trace_path = trace_path
        self.planner: Optional[SlasPlanner] = None

    def reset(self, scenario: Scenario) -> None:
        params = self._override or scenario.planner
        self.planner = SlasPlanner(params, self.trace_path)

    def decide(self, snapshot: WorldSnapshot) -> AdvisoryCommand:
        if self.planner is None:
            raise RuntimeError("SlasPolicy.reset must be called before decide")
        return self.planner.step(snapshot)

    @property
    def diagnostics(self) -> Optional[PlanDiagnostics]:
        return None if self.planner is None else self.planner.diagnostics


def make_policy(name: PolicyName | str, trace_path: Optional[Path] = None) -> Policy:
    """
    Policy instance by name.

    Example:
        >>> make_policy("mobil").name
        <PolicyName.MOBIL: 'mobil'>
    """
    name = PolicyName(name)
    if name is PolicyName.SLAS:
        return SlasPolicy(trace_path=trace_path)
    if name is PolicyName.MOBIL:
        return MobilPolicy()
    return NoChangePolicy()
