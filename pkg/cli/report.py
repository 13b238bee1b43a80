"""
Run reports: per-policy metrics of episodes on one world, improvement ratios
against the advisory planner, artifact paths and the ``summary.json`` writer.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from slas_engine.models import PolicyName, Scenario
from slas_engine.sim.episode import EpisodeLog
from slas_engine.sim.metrics import Metrics


def improvement_pct(baseline: Optional[float], candidate: Optional[float]) -> Optional[float]:
    """Percentage by which ``candidate`` lowers ``baseline``; None when either is missing."""
    if baseline is None or candidate is None or baseline == 0 or math.isnan(baseline):
        return None
    return 100.0 * (baseline - candidate) / baseline


@dataclass
class RunReport:
    """Outcome of ``run`` or ``compare``: every episode here shares one world."""

    scenario: Scenario
    seed: int
    metrics: dict[str, Metrics]
    planner_errors: dict[str, int]
    collisions: dict[str, bool]
    artifacts: list[Path] = field(default_factory=list)

    @classmethod
    def from_logs(cls, scenario: Scenario, seed: int, logs: list[EpisodeLog]) -> RunReport:
        return cls(
            scenario=scenario,
            seed=seed,
            metrics={log.policy.value: log.metrics for log in logs if log.metrics is not None},
            planner_errors={log.policy.value: log.planner_errors for log in logs},
            collisions={log.policy.value: log.collided for log in logs},
        )

    @property
    def ok(self) -> bool:
        return not any(self.collisions.values()) and not any(self.planner_errors.values())

    def ratios(
        self, reference: str = PolicyName.SLAS.value
    ) -> dict[str, dict[str, Optional[float]]]:
        """
        Travel-time and headway improvement of ``reference`` over each other policy.

        Travel time improves when it drops; headway improves when it grows.
        """
        ref = self.metrics.get(reference)
        if ref is None:
            return {}
        out: dict[str, dict[str, Optional[float]]] = {}
        for name, m in self.metrics.items():
            if name == reference:
                continue
            headway: Optional[float] = None
            if m.mean_headway > 0:
                headway = 100.0 * (ref.mean_headway - m.mean_headway) / m.mean_headway
            out[name] = {
                "travel_time_pct": improvement_pct(m.travel_time, ref.travel_time),
                "headway_pct": headway,
            }
        return out

    @property
    def summary(self) -> str:
        parts = [f"{name}: {m.summary}" for name, m in self.metrics.items()]
        return "; ".join(parts) + ("" if self.ok else " [FAILED]")

    def to_dict(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "scenario": self.scenario.model_dump(mode="json"),
            "metrics": {name: m.to_dict() for name, m in self.metrics.items()},
            "planner_errors": self.planner_errors,
            "collisions": self.collisions,
            "ratios": self.ratios(),
            "artifacts": [str(p) for p in self.artifacts],
        }


def write_summary(out_dir: Path, payload: dict[str, Any]) -> Path:
    path = out_dir / "summary.json"
    path.write_text(json.dumps(payload, indent=2, default=_json_default))
    return path


def _json_default(value: Any) -> Any:
    if isinstance(value, Path):
        return str(value)
    if hasattr(value, "item"):
        return value.item()
    raise TypeError(f"{type(value).__name__} is not JSON serialisable")
