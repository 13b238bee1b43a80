"""
Trajectory Predictor — per-vehicle speed and displacement rollout.

Each observed vehicle keeps its lane over the horizon. Its speed follows a
line fitted by least squares to the recent speed history, extrapolated for
an acceleration horizon H_a and held constant afterwards.
"""

from __future__ import annotations

import logging
from collections import deque
from collections.abc import Iterator, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from slas_engine.models import ObservedVehicle, WorldSnapshot

logger = logging.getLogger(__name__)


class InsufficientDataError(ValueError):
    """Fewer than two speed samples to fit a line through."""


@dataclass(frozen=True)
class SpeedModel:
    """Fitted speed line: slope ``a_bar`` and value ``v_bar`` at the latest sample."""

    a_bar: float
    v_bar: float
    fitted_at: int
    sample_count: int


@dataclass(frozen=True)
class PredictedTrajectory:
    vehicle_id: int
    lane: int
    speeds: np.ndarray  # v_hat(0..H)
    displacements: np.ndarray  # s_hat(0..H), absolute road positions
    model: SpeedModel
    fallback: bool = False


@dataclass
class PredictionSet(Mapping[int, PredictedTrajectory]):
    """Predicted trajectories keyed by vehicle id, plus fallback bookkeeping."""

    trajectories: dict[int, PredictedTrajectory] = field(default_factory=dict)

    def __getitem__(self, vehicle_id: int) -> PredictedTrajectory:
        return self.trajectories[vehicle_id]

    def __iter__(self) -> Iterator[int]:
        return iter(self.trajectories)

    def __len__(self) -> int:
        return len(self.trajectories)

    @property
    def fallback_count(self) -> int:
        return sum(1 for t in self.trajectories.values() if t.fallback)


# ─── Pure rollout functions ───────────────────────────────────────────────────


def fit_speed_model(history: Sequence[tuple[float, float]], fitted_at: int = 0) -> SpeedModel:
    """
    Least-squares line through (time, speed) samples.

    Example:
        >>> m = fit_speed_model([(0.0, 8.0), (0.4, 10.0), (0.8, 9.0)])
        >>> round(m.a_bar, 4), round(m.v_bar, 4)
        (1.25, 9.5)
    """
    if len(history) < 2:
        raise InsufficientDataError(f"need at least 2 speed samples, got {len(history)}")
    t = np.array([p[0] for p in history], dtype=float)
    v = np.array([p[1] for p in history], dtype=float)
    if np.any(np.diff(t) <= 0):
        raise ValueError("speed history timestamps must be strictly increasing")

    slope, intercept, *_ = stats.linregress(t, v)
    v_bar = intercept + slope * t[-1]
    return SpeedModel(
        a_bar=float(slope),
        v_bar=float(v_bar),
        fitted_at=fitted_at,
        sample_count=len(history),
    )


def predict_speed(
    model: SpeedModel, H: int, H_a: int, T_s: float, v_max: float
) -> np.ndarray:
    """Speeds v_hat(0..H): ramp for H_a steps, then hold; clamped to [0, v_max]."""
    speeds = np.empty(H + 1)
    speeds[0] = min(max(model.v_bar, 0.0), v_max)
    for j in range(1, H + 1):
        step = model.a_bar * T_s if j <= H_a else 0.0
        speeds[j] = min(max(speeds[j - 1] + step, 0.0), v_max)
    return speeds


def predict_displacement(s0: float, speeds: np.ndarray, T_s: float) -> np.ndarray:
    """Trapezoidal positions s_hat(0..H) from a speed sequence."""
    speeds = np.asarray(speeds, dtype=float)
    if speeds.size == 0:
        raise ValueError("speeds must not be empty")
    out = np.empty_like(speeds)
    out[0] = s0
    if speeds.size > 1:
        out[1:] = s0 + np.cumsum(0.5 * T_s * (speeds[:-1] + speeds[1:]))
    return out


# ─── Predictor ────────────────────────────────────────────────────────────────


class TrajectoryPredictor:
    """
    Roll out every observed vehicle over the planning horizon.

    Histories are held per vehicle id at the planner rate and capped at
    ``history_window`` samples; vehicles that leave the visibility range
    lose their history.

    Example:
        >>> predictor = TrajectoryPredictor(H_a=5, T_s=0.4, v_max=15.0)
        >>> snapshot = predictor.observe(snapshot)   # attaches histories
        >>> preds = predictor.predict_all(snapshot, H=40)
    """

    def __init__(
        self, H_a: int = 5, T_s: float = 0.4, v_max: float = 15.0, history_window: int = 10
    ) -> None:
        self.H_a = H_a
        self.T_s = T_s
        self.v_max = v_max
        self.history_window = history_window
        self.histories: dict[int, deque[tuple[float, float]]] = {}

    def observe(self, snapshot: WorldSnapshot) -> WorldSnapshot:
        """Record the current speeds and return the snapshot with histories attached."""
        visible = {veh.id for veh in snapshot.vehicles}
        for gone in [vid for vid in self.histories if vid not in visible]:
            del self.histories[gone]

        vehicles = []
        for veh in snapshot.vehicles:
            buf = self.histories.setdefault(veh.id, deque(maxlen=self.history_window))
            for sample in veh.speed_history:
                if not buf or sample[0] > buf[-1][0]:
                    buf.append(sample)
            if not buf or snapshot.time > buf[-1][0]:
                buf.append((snapshot.time, veh.v))
            vehicles.append(veh.model_copy(update={"speed_history": tuple(buf)}))
        return snapshot.model_copy(update={"vehicles": tuple(vehicles)})

    def predict(self, vehicle: ObservedVehicle, H: int, k: int = 0) -> PredictedTrajectory:
        fallback = False
        try:
            model = fit_speed_model(vehicle.speed_history, fitted_at=k)
        except InsufficientDataError:
            model = SpeedModel(a_bar=0.0, v_bar=vehicle.v, fitted_at=k, sample_count=1)
            fallback = True
        speeds = predict_speed(model, H, self.H_a, self.T_s, self.v_max)
        # the rollout starts from the measured position
        displacements = predict_displacement(vehicle.s, speeds, self.T_s)
        return PredictedTrajectory(
            vehicle_id=vehicle.id,
            lane=vehicle.lane,
            speeds=speeds,
            displacements=displacements,
            model=model,
            fallback=fallback,
        )

    def predict_all(self, snapshot: WorldSnapshot, H: int) -> PredictionSet:
        preds = PredictionSet(
            {veh.id: self.predict(veh, H, snapshot.k) for veh in snapshot.vehicles}
        )
        if preds.fallback_count:
            logger.debug(
                "tick %d: %d of %d vehicles predicted at constant speed",
                snapshot.k,
                preds.fallback_count,
                len(preds),
            )
        return preds
