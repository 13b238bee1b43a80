"""
Exhaustive reference solver for small planning instances.

Every admissible lane path is enumerated; for each path the speed problem is
a convex QP over the H speeds once every safety disjunction has picked a
side, so the disjunctions are branched on only when the current speed plan
violates both sides. Used to cross-check the two formulations and the
branch-and-bound solver.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterator, Mapping
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from slas_engine.core.highway import lane_indicator, lane_set, occupied_lanes
from slas_engine.core.prediction import PredictedTrajectory
from slas_engine.models import Formulation, PlannerParams, WorldSnapshot
from slas_engine.optim.formulation import PairMargins, lane_change_deviation, pair_margins

logger = logging.getLogger(__name__)

_TOL = 1e-7


class Gating(str, Enum):
    """Which lane switches a vehicle's safety pair on."""

    TARGET = "target"  # the commanded lane (binary formulation)
    PHYSICAL = "physical"  # the floor-derived occupied lane (integer formulation)


@dataclass(frozen=True)
class OracleResult:
    objective: float
    speeds: tuple[float, ...]
    lanes: tuple[int, ...]
    paths_evaluated: int
    qps_solved: int

    @property
    def feasible(self) -> bool:
        return math.isfinite(self.objective)


@dataclass(frozen=True)
class _Pair:
    step: int
    margins: PairMargins


def admissible_lane_paths(snapshot: WorldSnapshot, H: int) -> Iterator[tuple[int, ...]]:
    """Lane paths whose first lane neighbours both the physical and previous target lane."""
    lanes = sorted(lane_set(snapshot.road, snapshot.k))
    ego = snapshot.ego
    first = [l for l in lanes if abs(l - ego.lane) <= 1 and abs(l - ego.prev_target) <= 1]

    def extend(path: tuple[int, ...]) -> Iterator[tuple[int, ...]]:
        if len(path) == H:
            yield path
            return
        for lane in lanes:
            if abs(lane - path[-1]) <= 1:
                yield from extend(path + (lane,))

    for lane in first:
        yield from extend((lane,))


class _SpeedQP:
    """Speed-only QP: s is affine in v, so every row is linear in the H speeds."""

    def __init__(self, snapshot: WorldSnapshot, params: PlannerParams) -> None:
        H, T = params.H, params.T_s
        self.params = params
        self.v0 = snapshot.ego.v
        # s_j = T/2 v0 + T (v_1 + ... + v_{j-1}) + T/2 v_j
        self.S = np.tril(np.full((H, H), T)) - np.eye(H) * (0.5 * T)
        self.s0 = np.full(H, 0.5 * T * self.v0)
        D = np.eye(H) - np.eye(H, k=-1)
        e0 = np.zeros(H)
        e0[0] = self.v0
        self.D, self.e0 = D, e0
        self.G_acc = np.vstack([D, -D])
        self.h_acc = np.concatenate(
            [np.full(H, params.A_min * T) + e0, -(np.full(H, params.A_max * T) + e0)]
        )
        self.bounds = [(0.0, params.v_max)] * H
        self.solves = 0

    def objective(self, v: np.ndarray) -> float:
        p = self.params
        dv = self.D @ v - self.e0
        return float(-p.gamma1 * v.sum() + p.gamma3 * dv @ dv)

    def gradient(self, v: np.ndarray) -> np.ndarray:
        p = self.params
        dv = self.D @ v - self.e0
        return -p.gamma1 * np.ones_like(v) + 2.0 * p.gamma3 * (self.D.T @ dv)

    def side_rows(self, pair: _Pair, front: bool) -> tuple[np.ndarray, np.ndarray]:
        """Rows ``G v >= h`` forcing the pair onto one side."""
        j = pair.step - 1
        pm = pair.margins
        G, h = [], []
        for m in pm.front if front else pm.rear:
            row = np.zeros(len(self.s0))
            row[j] = -m.slope
            if front:
                # s_hat - s_j >= a + b v_j
                row = row - self.S[j]
                h.append(m.intercept - pm.s_hat + self.s0[j])
            else:
                # s_j - s_hat >= a + b v_j
                row = row + self.S[j]
                h.append(m.intercept + pm.s_hat - self.s0[j])
            G.append(row)
        return np.array(G), np.array(h)

    def satisfied(self, v: np.ndarray, pair: _Pair, front: bool) -> bool:
        G, h = self.side_rows(pair, front)
        return bool(np.all(G @ v - h >= -1e-6))

    def solve(self, rows: list[tuple[np.ndarray, np.ndarray]]) -> Optional[np.ndarray]:
        G = np.vstack([self.G_acc] + [g for g, _ in rows])
        h = np.concatenate([self.h_acc] + [hh for _, hh in rows])
        start = np.clip(np.full(len(self.s0), self.v0), 0.0, self.params.v_max)
        self.solves += 1
        res = minimize(
            self.objective,
            start,
            jac=self.gradient,
            method="SLSQP",
            bounds=self.bounds,
            constraints=[{"type": "ineq", "fun": lambda v: G @ v - h, "jac": lambda v: G}],
            options={"ftol": 1e-12, "maxiter": 500},
        )
        v = np.clip(res.x, 0.0, self.params.v_max)
        if np.min(G @ v - h) < -1e-6:
            return None
        return v


def brute_force_optimum(
    snapshot: WorldSnapshot,
    preds: Mapping[int, PredictedTrajectory],
    params: PlannerParams,
    gating: Optional[Gating] = None,
) -> OracleResult:
    """
    Optimal objective, speeds and lanes by enumeration.

    ``gating`` defaults to the rule of ``params.formulation``. The objective
    matches ``OptimizationModel.objective`` of the corresponding model,
    constants included.

    Example:
        >>> res = brute_force_optimum(snapshot, preds, params.model_copy(update={"H": 4}))
        >>> res.objective, res.lanes
    """
    if gating is None:
        gating = Gating.TARGET if params.formulation is Formulation.BINARY else Gating.PHYSICAL
    ego = snapshot.ego
    H, N = params.H, params.N
    augment = None
    ref_lane = ego.lane
    if gating is Gating.TARGET:
        augment = lane_change_deviation(snapshot, params)
        ref_lane = ego.prev_target

    lanes_now = lane_set(snapshot.road, snapshot.k)
    pairs_by_lane: dict[int, list[_Pair]] = {}
    held: list[_Pair] = []
    for vid in sorted(preds):
        pred = preds[vid]
        if pred.lane not in lanes_now:
            continue
        for j in range(1, H + 1):
            pm = pair_margins(snapshot, pred, j, params, augment)
            if pm.decided:
                continue
            pair = _Pair(j, pm)
            if pred.lane in occupied_lanes(ego, j, N):
                held.append(pair)
            else:
                pairs_by_lane.setdefault(pred.lane, []).append(pair)

    qp = _SpeedQP(snapshot, params)
    free = qp.solve([])
    free_obj = -math.inf if free is None else qp.objective(free)

    def lane_cost(path: tuple[int, ...]) -> float:
        prev = (ref_lane,) + path[:-1]
        return params.gamma2 * sum((a - b) ** 2 for a, b in zip(path, prev))

    paths = sorted(admissible_lane_paths(snapshot, H), key=lambda p: (lane_cost(p), p))
    best_obj = math.inf
    best_v: Optional[np.ndarray] = None
    best_path: tuple[int, ...] = ()
    evaluated = 0

    for path in paths:
        base = lane_cost(path)
        if base + free_obj >= best_obj - _TOL:
            break
        evaluated += 1
        if gating is Gating.TARGET:
            gate_lanes = path
        else:
            history = [ego.lane] * (N - 1) + list(path)
            gate_lanes = tuple(lane_indicator(history[j : j + N]) for j in range(H))
        active = list(held) + [
            pair
            for lane, group in pairs_by_lane.items()
            for pair in group
            if gate_lanes[pair.step - 1] == lane
        ]

        def search(chosen: list[tuple[np.ndarray, np.ndarray]]) -> None:
            nonlocal best_obj, best_v, best_path
            v = qp.solve(chosen)
            if v is None:
                return
            obj = base + qp.objective(v)
            if obj >= best_obj - _TOL:
                return
            for pair in active:
                if not (qp.satisfied(v, pair, True) or qp.satisfied(v, pair, False)):
                    for front in (True, False):
                        search(chosen + [qp.side_rows(pair, front)])
                    return
            best_obj, best_v, best_path = obj, v, path

        search([])

    logger.debug(
        "oracle: %d/%d paths, %d QPs, best %.6f", evaluated, len(paths), qp.solves, best_obj
    )
    if best_v is None:
        return OracleResult(math.inf, (), (), evaluated, qp.solves)
    return OracleResult(
        objective=best_obj,
        speeds=tuple(float(v) for v in best_v),
        lanes=best_path,
        paths_evaluated=evaluated,
        qps_solved=qp.solves,
    )
