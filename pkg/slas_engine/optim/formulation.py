"""
Planning model builders.

Two interchangeable formulations of the same receding-horizon problem:

- integer: one integer target lane per step, the physical lane derived from
  the last N targets by a floor encoding, safety gated on the physical lane;
- binary: a one-hot lane selector per step with implication-encoded
  adjacency (optionally lazy), safety gated on the selected lane and widened
  by the deviation cost while a lane change is under way.

Both minimise  sum_j [ -g1 v(j) + g2 (L(j) - L(j-1))^2 + g3 (v(j) - v(j-1))^2 ].
"""

from __future__ import annotations

import logging
from collections.abc import Mapping
from dataclasses import dataclass
from typing import Optional

import numpy as np

from slas_engine.core.highway import (
    lane_set,
    occupied_lanes,
    reachable_displacements,
    reachable_speeds,
)
from slas_engine.core.prediction import PredictedTrajectory
from slas_engine.core.safety import (
    AffineMargin,
    DeviationState,
    deviation_cost,
    deviation_from_boundary,
    linearized_safe_distance,
    projected_deviation,
)
from slas_engine.models import (
    AdvisoryCommand,
    Direction,
    Formulation,
    PlannerParams,
    WorldSnapshot,
)
from slas_engine.optim.bnb import SolveResult
from slas_engine.optim.encodings import encode_abs_safety, encode_floor, encode_implication
from slas_engine.optim.model import (
    LinExpr,
    ModelBuilder,
    OptimizationModel,
    PlanHint,
    SafetyPair,
    VarKind,
    VarRole,
)

logger = logging.getLogger(__name__)


class ModelBuildError(ValueError):
    """Inputs cannot form a planning instance (e.g. predictions shorter than the horizon)."""


class FallbackRequired(RuntimeError):
    """No incumbent to act on; the caller must apply the fallback command."""


@dataclass
class _Skeleton:
    builder: ModelBuilder
    lanes: tuple[int, ...]
    speed_idx: list[int]
    disp_idx: list[int]


# ─── Shared pieces ────────────────────────────────────────────────────────────


def _admissible_first_lanes(snapshot: WorldSnapshot, lanes: tuple[int, ...]) -> set[int]:
    """Lanes reachable at step 1: adjacent to both the physical and the previous target lane."""
    ego = snapshot.ego
    return {
        lane
        for lane in lanes
        if abs(lane - ego.lane) <= 1 and abs(lane - ego.prev_target) <= 1
    }


def lane_change_deviation(
    snapshot: WorldSnapshot, params: PlannerParams
) -> Optional[DeviationState]:
    """
    Deviation bookkeeping for the binary model's widened margins.

    None while the ego is settled: on its previous target lane, inside that
    lane, with no other target among the last N commands. Margins then carry
    no deviation term.
    """
    ego = snapshot.ego
    delta = deviation_from_boundary(ego.lateral, ego.prev_target, params.safety.lane_width)
    recent = ego.target_history[-params.N :]
    settled = ego.lane == ego.prev_target and delta == 0.0
    if settled and all(lane == ego.prev_target for lane in recent):
        return None
    return DeviationState(delta_k=delta, prev_target=ego.prev_target)


def _check_inputs(
    snapshot: WorldSnapshot, preds: Mapping[int, PredictedTrajectory], params: PlannerParams
) -> tuple[int, ...]:
    for vid, pred in preds.items():
        if len(pred.speeds) != params.H + 1 or len(pred.displacements) != params.H + 1:
            raise ModelBuildError(
                f"prediction for vehicle {vid} covers {len(pred.speeds) - 1} steps, "
                f"horizon is {params.H}"
            )
    lanes = tuple(sorted(lane_set(snapshot.road, snapshot.k)))
    if snapshot.ego.lane not in lanes:
        raise ModelBuildError(f"ego lane {snapshot.ego.lane} is not in the lane set {lanes}")
    if not _admissible_first_lanes(snapshot, lanes):
        raise ModelBuildError(
            "no lane is adjacent to both the current and the previous target lane"
        )
    return lanes


def _longitudinal(
    snapshot: WorldSnapshot, params: PlannerParams, lanes: tuple[int, ...]
) -> _Skeleton:
    """Speed and displacement variables, dynamics rows and the speed terms of the objective."""
    b = ModelBuilder()
    H, T = params.H, params.T_s
    v0 = snapshot.ego.v
    speed_idx = [
        b.add_var(f"v_{j}", lb=0.0, ub=params.v_max, role=VarRole.SPEED, step=j)
        for j in range(1, H + 1)
    ]
    disp_idx = [b.add_var(f"s_{j}", role=VarRole.DISPLACEMENT, step=j) for j in range(1, H + 1)]

    v_prev = LinExpr.constant(v0)
    s_prev = LinExpr.constant(0.0)
    for j in range(1, H + 1):
        v = LinExpr.var(speed_idx[j - 1])
        s = LinExpr.var(disp_idx[j - 1])
        b.add_row(v - v_prev, lo=params.A_min * T, hi=params.A_max * T, name=f"accel_{j}")
        b.add_row(s - s_prev - (v_prev + v) * (0.5 * T), lo=0.0, hi=0.0, name=f"disp_{j}")
        b.add_linear(v, -params.gamma1)
        b.add_square(v - v_prev, params.gamma3)
        v_prev, s_prev = v, s
    return _Skeleton(b, lanes, speed_idx, disp_idx)


@dataclass(frozen=True)
class PairMargins:
    """Centre-to-centre separation a vehicle needs from the ego at one step."""

    s_hat: float  # predicted position relative to the ego's current s
    front: tuple[AffineMargin, AffineMargin]  # linearised gap, d_min floor
    rear: tuple[AffineMargin, AffineMargin]
    decided: bool  # every reachable ego state already satisfies one side


def pair_margins(
    snapshot: WorldSnapshot,
    pred: PredictedTrajectory,
    j: int,
    params: PlannerParams,
    augment: Optional[DeviationState],
) -> PairMargins:
    """Affine front and rear margins for ``pred`` at step ``j``, as functions of the ego speed."""
    p = params.safety
    ego = snapshot.ego
    s_hat = float(pred.displacements[j]) - ego.s
    v_other = float(pred.speeds[j])
    v_lo, v_hi = reachable_speeds(ego.v, j, params.T_s, params.A_min, params.A_max, params.v_max)
    aug = 0.0
    if augment is not None:
        aug = deviation_cost(projected_deviation(augment, j, p), p) * p.N * p.T_s

    fwd = linearized_safe_distance(v_lo, v_hi, v_other, p, Direction.FORWARD)
    rear = linearized_safe_distance(v_lo, v_hi, v_other, p, Direction.REAR)
    base = p.vehicle_length
    floor = AffineMargin(base + p.d_min, aug)
    front = (AffineMargin(base + fwd.intercept, fwd.slope + aug), floor)
    back = (AffineMargin(base + rear.intercept, rear.slope + aug), floor)

    def peak(margins: tuple[AffineMargin, AffineMargin]) -> float:
        return max(max(m.at(v_lo), m.at(v_hi)) for m in margins)

    s_lo, s_hi = reachable_displacements(
        ego.v, j, params.T_s, params.A_min, params.A_max, params.v_max
    )[j]
    decided = s_hat - s_hi >= peak(front) or s_lo - s_hat >= peak(back)
    return PairMargins(s_hat, front, back, decided)


def _safety_rows(
    sk: _Skeleton,
    snapshot: WorldSnapshot,
    preds: Mapping[int, PredictedTrajectory],
    params: PlannerParams,
    gate_of: dict[tuple[int, int], int],
    augment: Optional[DeviationState],
) -> list[SafetyPair]:
    """
    Front-or-rear disjunctions for every vehicle/step pair the ego can reach.

    Pairs whose outcome is fixed by the reachable displacement envelope are
    left out. ``gate_of[(lane, j)]`` names the binary that switches a pair on;
    lanes the ego still occupies because of commands in flight are enforced
    unconditionally.
    """
    b = sk.builder
    ego = snapshot.ego
    M = params.effective_big_M
    pairs: list[SafetyPair] = []

    for vid in sorted(preds):
        pred = preds[vid]
        if pred.lane not in sk.lanes:
            continue
        for j in range(1, params.H + 1):
            pm = pair_margins(snapshot, pred, j, params, augment)
            if pm.decided:
                continue
            held = pred.lane in occupied_lanes(ego, j, params.N)
            gate_idx = None if held else gate_of.get((pred.lane, j))
            if not held and gate_idx is None:
                continue
            gate = None if gate_idx is None else LinExpr.var(gate_idx)

            v = LinExpr.var(sk.speed_idx[j - 1])
            delta_s = pm.s_hat - LinExpr.var(sk.disp_idx[j - 1])
            tag = f"{vid}_{j}"
            c: Optional[int] = None
            for (f, r), suffix in zip(zip(pm.front, pm.rear), ("", "_floor")):
                c, _ = encode_abs_safety(
                    b,
                    delta_s,
                    v * f.slope + f.intercept,
                    v * r.slope + r.intercept,
                    M,
                    name=f"{tag}{suffix}",
                    gate=gate,
                    selector=c,
                    step=j,
                )
            assert c is not None
            pairs.append(SafetyPair(vid, j, pred.lane, pm.s_hat, c, gate_idx))
    return pairs


def _finish(
    sk: _Skeleton,
    snapshot: WorldSnapshot,
    params: PlannerParams,
    formulation: Formulation,
    lane_idx: object,
    pairs: list[SafetyPair],
    floor_idx: Optional[list[int]] = None,
    member_idx: object = None,
) -> OptimizationModel:
    P, q = sk.builder.objective_arrays()
    ego = snapshot.ego
    model = OptimizationModel(
        formulation=formulation,
        variables=sk.builder.variables,
        P=P,
        q=q,
        objective_constant=sk.builder.objective_constant,
        rows=sk.builder.rows,
        H=params.H,
        lanes=sk.lanes,
        v0=ego.v,
        l0=ego.lane,
        prev_target=ego.prev_target,
        target_history=ego.target_history,
        N=params.N,
        T_s=params.T_s,
        A_min=params.A_min,
        A_max=params.A_max,
        v_max=params.v_max,
        epsilon=params.epsilon,
        big_M=params.effective_big_M,
        speed_idx=sk.speed_idx,
        disp_idx=sk.disp_idx,
        lane_idx=np.asarray(lane_idx, dtype=int),
        floor_idx=floor_idx or [],
        member_idx=None if member_idx is None else np.asarray(member_idx, dtype=int),
        pairs=pairs,
    )
    logger.debug(
        "built %s model: %d vars (%d discrete), %d rows (%d lazy), %d safety pairs",
        formulation.value,
        model.n,
        len(model.discrete_indices),
        len(model.rows),
        len(model.lazy_rows),
        len(pairs),
    )
    return model


# ─── Builders ─────────────────────────────────────────────────────────────────


def build_binary_model(
    snapshot: WorldSnapshot, preds: Mapping[int, PredictedTrajectory], params: PlannerParams
) -> OptimizationModel:
    """One-hot lane selectors with adjacency implications and deviation-widened margins."""
    lanes = _check_inputs(snapshot, preds, params)
    sk = _longitudinal(snapshot, params, lanes)
    b = sk.builder
    H = params.H
    first = _admissible_first_lanes(snapshot, lanes)

    sel = [
        [
            b.add_var(
                f"L_{i}_{j}",
                VarKind.BINARY,
                ub=0.0 if (j == 1 and i not in first) else 1.0,
                role=VarRole.LANE,
                step=j,
                lane=i,
            )
            for j in range(1, H + 1)
        ]
        for i in lanes
    ]

    def lane_index(j: int) -> LinExpr:
        if j == 0:
            return LinExpr.constant(snapshot.ego.prev_target)
        return LinExpr.total(LinExpr.var(sel[k][j - 1], i) for k, i in enumerate(lanes))

    for j in range(1, H + 1):
        one_hot = LinExpr.total(LinExpr.var(sel[k][j - 1]) for k in range(len(lanes)))
        b.add_row(one_hot, lo=1.0, hi=1.0, name=f"onehot_{j}")
        b.add_square(lane_index(j) - lane_index(j - 1), params.gamma2)

    for j in range(2, H + 1):
        for ka, a in enumerate(lanes):
            near = [kb for kb, lane in enumerate(lanes) if abs(lane - a) <= 1]
            if len(near) == len(lanes):
                continue  # every lane is adjacent; one-hot already implies it
            encode_implication(
                b,
                LinExpr.var(sel[ka][j - 2]),
                LinExpr.total(LinExpr.var(sel[kb][j - 1]) for kb in near),
                params.epsilon,
                1.0,
                name=f"adj_{a}_{j}",
                lazy=params.lazy_lane_constraints,
            )

    gate_of = {(i, j): sel[k][j - 1] for k, i in enumerate(lanes) for j in range(1, H + 1)}
    dev = lane_change_deviation(snapshot, params)
    pairs = _safety_rows(sk, snapshot, preds, params, gate_of, augment=dev)
    return _finish(sk, snapshot, params, Formulation.BINARY, sel, pairs)


def build_integer_model(
    snapshot: WorldSnapshot, preds: Mapping[int, PredictedTrajectory], params: PlannerParams
) -> OptimizationModel:
    """Integer target lanes, floor-derived physical lanes, safety on the physical lane."""
    lanes = _check_inputs(snapshot, preds, params)
    sk = _longitudinal(snapshot, params, lanes)
    b = sk.builder
    H, N = params.H, params.N
    l0 = snapshot.ego.lane
    first = _admissible_first_lanes(snapshot, lanes)
    lo_lane, hi_lane = float(min(lanes)), float(max(lanes))

    target = [
        b.add_var(
            f"T_{j}",
            VarKind.INTEGER,
            lb=float(min(first)) if j == 1 else lo_lane,
            ub=float(max(first)) if j == 1 else hi_lane,
            role=VarRole.LANE,
            step=j,
        )
        for j in range(1, H + 1)
    ]

    def target_expr(j: int) -> LinExpr:
        return LinExpr.constant(l0) if j <= 0 else LinExpr.var(target[j - 1])

    floor_idx: list[int] = []
    member = [[0] * H for _ in lanes]
    for j in range(1, H + 1):
        if j >= 2:
            b.add_row(target_expr(j) - target_expr(j - 1), lo=-1.0, hi=1.0, name=f"adj_{j}")
        b.add_square(target_expr(j) - target_expr(j - 1), params.gamma2)

        x = LinExpr.total(target_expr(j - i) for i in range(N)) * (1.0 / N) + 0.5
        y, _ = encode_floor(b, x, params.epsilon, f"l_{j}", lb=lo_lane, ub=hi_lane, step=j)
        floor_idx.append(y)

        for k, i in enumerate(lanes):
            member[k][j - 1] = b.add_var(
                f"phi_{i}_{j}", VarKind.BINARY, role=VarRole.MEMBERSHIP, step=j, lane=i
            )
        b.add_row(
            LinExpr.total(LinExpr.var(member[k][j - 1]) for k in range(len(lanes))),
            lo=1.0,
            hi=1.0,
            name=f"member_{j}",
        )
        b.add_row(
            LinExpr.total(LinExpr.var(member[k][j - 1], i) for k, i in enumerate(lanes))
            - LinExpr.var(y),
            lo=0.0,
            hi=0.0,
            name=f"member_index_{j}",
        )

    gate_of = {(i, j): member[k][j - 1] for k, i in enumerate(lanes) for j in range(1, H + 1)}
    pairs = _safety_rows(sk, snapshot, preds, params, gate_of, augment=None)
    return _finish(
        sk,
        snapshot,
        params,
        Formulation.INTEGER,
        target,
        pairs,
        floor_idx=floor_idx,
        member_idx=member,
    )


def build_model(
    snapshot: WorldSnapshot, preds: Mapping[int, PredictedTrajectory], params: PlannerParams
) -> OptimizationModel:
    if params.formulation is Formulation.INTEGER:
        return build_integer_model(snapshot, preds, params)
    return build_binary_model(snapshot, preds, params)


# ─── Warm start and command extraction ────────────────────────────────────────


def warm_start_from(prev: Optional[SolveResult], H: int) -> Optional[PlanHint]:
    """
    Shift the previous plan one step forward, repeating its last step.

    Example:
        >>> warm_start_from(prev_with_speeds([5, 6, 7, 8]), H=4).speeds
        (6, 7, 8, 8)
    """
    if prev is None or not prev.speeds or not prev.lanes:
        return None
    speeds = list(prev.speeds[1:]) + [prev.speeds[-1]]
    lanes = list(prev.lanes[1:]) + [prev.lanes[-1]]
    while len(speeds) < H:
        speeds.append(speeds[-1])
        lanes.append(lanes[-1])
    return PlanHint(tuple(speeds[:H]), tuple(lanes[:H]))


def extract_command(result: SolveResult, model: OptimizationModel) -> AdvisoryCommand:
    """Step-1 lane and speed of the incumbent, with the full plan attached."""
    if not result.has_incumbent or result.incumbent is None:
        raise FallbackRequired(
            f"solver returned {result.status.value} without an incumbent; "
            "apply the fallback command"
        )
    speeds = model.speed_plan(result.incumbent)
    lanes = model.lane_plan(result.incumbent)
    ref = min(max(speeds[0], 0.0), model.v_max)
    return AdvisoryCommand(
        target_lane=lanes[0],
        ref_speed=ref,
        horizon_speeds=speeds,
        horizon_lanes=lanes,
    )


def keep_lane_witness(
    snapshot: WorldSnapshot, preds: Mapping[int, PredictedTrajectory], params: PlannerParams
) -> PlanHint:
    """
    Keep the current lane and follow the leader's predicted speed.

    The plan the fallback command starts; safe whenever the current state is
    safe, so the solver starts from it. Without a leader the current speed is
    held. ``OptimizationModel.complete`` clips the speeds to the limits.
    """
    ego = snapshot.ego
    lane = ego.lane if abs(ego.lane - ego.prev_target) <= 1 else ego.prev_target
    ahead = [
        pred
        for pred in preds.values()
        if pred.lane == lane and float(pred.displacements[0]) >= ego.s
    ]
    if ahead:
        leader = min(ahead, key=lambda pred: (float(pred.displacements[0]), pred.vehicle_id))
        speeds = tuple(float(v) for v in leader.speeds[1 : params.H + 1])
    else:
        speeds = (ego.v,) * params.H
    return PlanHint(speeds=speeds, lanes=(lane,) * params.H)
