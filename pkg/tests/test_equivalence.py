"""Cross-checks of the binary model, the integer model and the exhaustive solver."""

import numpy as np
import pytest

from slas_engine.core.prediction import TrajectoryPredictor
from slas_engine.models import (
    EgoState,
    Formulation,
    ObservedVehicle,
    PlannerParams,
    RoadModel,
    WorldSnapshot,
)
from slas_engine.optim.bnb import BranchAndBound, SolverOptions, SolveStatus
from slas_engine.optim.formulation import build_model, keep_lane_witness
from slas_engine.optim.oracle import Gating, brute_force_optimum

SNAPSHOTS = 200


class TestSameOptimum:
    """With one-step lane changes the commanded and the occupied lane coincide."""

    @pytest.mark.parametrize("s", [25.0, 40.0])
    def test_slow_leader_ahead(self, s: float) -> None:
        leader = ObservedVehicle(id=1, s=s, v=8.0, lane=1)
        snap = _make_snapshot(lane=1, v=10.0, lanes=2, vehicles=(leader,), N=1)
        params = PlannerParams(H=4, N=1)
        preds = _predict(snap, params)
        target = brute_force_optimum(snap, preds, params, Gating.TARGET)
        physical = brute_force_optimum(snap, preds, params, Gating.PHYSICAL)
        assert target.feasible
        assert target.objective == pytest.approx(physical.objective, abs=1e-6)

    @pytest.mark.slow
    def test_random_snapshots(self) -> None:
        rng = np.random.default_rng(2024)
        checked = 0
        for index in range(SNAPSHOTS):
            snap, H = _random_snapshot(rng, N=1)
            binary = PlannerParams(H=H, N=1, formulation=Formulation.BINARY)
            integer = PlannerParams(H=H, N=1, formulation=Formulation.INTEGER)
            preds = _predict(snap, binary)
            reference = brute_force_optimum(snap, preds, binary)
            results = [_solve(snap, preds, params) for params in (binary, integer)]
            if not reference.feasible:
                assert all(not r.has_incumbent for r in results), f"snapshot {index}"
                continue
            checked += 1
            for result in results:
                assert result.status is SolveStatus.OPTIMAL, f"snapshot {index}"
                assert result.objective == pytest.approx(
                    reference.objective, rel=1e-6, abs=1e-6
                ), f"snapshot {index}"
        assert checked >= SNAPSHOTS // 4


class TestOwnGating:
    """With multi-step lane changes each model matches enumeration under its own gating."""

    @pytest.mark.slow
    @pytest.mark.parametrize(
        ("formulation", "gating"),
        [(Formulation.BINARY, Gating.TARGET), (Formulation.INTEGER, Gating.PHYSICAL)],
    )
    def test_random_snapshots(self, formulation: Formulation, gating: Gating) -> None:
        rng = np.random.default_rng(99)
        for index in range(40):
            snap, H = _random_snapshot(rng, N=3)
            params = PlannerParams(H=H, N=3, formulation=formulation)
            preds = _predict(snap, params)
            reference = brute_force_optimum(snap, preds, params, gating)
            result = _solve(snap, preds, params)
            if not reference.feasible:
                assert not result.has_incumbent, f"snapshot {index}"
                continue
            assert result.status is SolveStatus.OPTIMAL, f"snapshot {index}"
            assert result.objective == pytest.approx(
                reference.objective, rel=1e-6, abs=1e-6
            ), f"snapshot {index}"


# ─── Helpers ──────────────────────────────────────────────────────────────────


def _make_snapshot(
    lane: int,
    v: float,
    lanes: int,
    vehicles: tuple[ObservedVehicle, ...],
    N: int,
) -> WorldSnapshot:
    ego = EgoState(s=0.0, v=v, lane=lane, lateral=3.5 * lane, target_history=(lane,) * N)
    return WorldSnapshot(time=0.0, k=0, ego=ego, vehicles=vehicles, road=RoadModel(lanes=lanes))


def _random_snapshot(rng: np.random.Generator, N: int) -> tuple[WorldSnapshot, int]:
    lanes = int(rng.integers(1, 3))
    lane = int(rng.integers(0, lanes))
    vehicles = tuple(
        ObservedVehicle(
            id=k + 1,
            s=float(rng.choice([-1.0, 1.0]) * rng.uniform(15.0, 60.0)),
            v=float(rng.uniform(4.0, 15.0)),
            lane=int(rng.integers(0, lanes)),
        )
        for k in range(int(rng.integers(0, 3)))
    )
    H = int(rng.integers(3, 7))
    snap = _make_snapshot(lane, float(rng.uniform(4.0, 15.0)), lanes, vehicles, N)
    return snap, H


def _predict(snap: WorldSnapshot, params: PlannerParams) -> dict:
    predictor = TrajectoryPredictor(H_a=params.H_a, T_s=params.T_s, v_max=params.v_max)
    return predictor.predict_all(snap, params.H)


def _solve(snap: WorldSnapshot, preds: dict, params: PlannerParams):
    model = build_model(snap, preds, params)
    witness = keep_lane_witness(snap, preds, params)
    return BranchAndBound(model, SolverOptions(time_limit=30.0)).solve(witness=witness)
