"""
Monte Carlo campaigns: randomised copies of a base scenario, every policy run
on identical worlds, and a mean / standard deviation table per policy.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import ValidationError

from slas_engine.models import PolicyName, Scenario
from slas_engine.optim.bnb import SolveStatus
from slas_engine.sim.episode import run_episode
from slas_engine.sim.metrics import COMFORT_COLUMNS
from slas_engine.sim.policies import make_policy

logger = logging.getLogger(__name__)

POSITION_JITTER_M = 8.0
MAX_RESAMPLES = 20


@dataclass
class MonteCarloResult:
    """Per-run metrics and the aggregate table of one campaign."""

    runs: pd.DataFrame
    table: pd.DataFrame
    seed: int
    skipped: list[int] = field(default_factory=list)

    @property
    def summary(self) -> str:
        lines = [f"Monte Carlo seed={self.seed}, {len(self.skipped)} worlds skipped"]
        for policy, row in self.table.iterrows():
            lines.append(
                f"  {policy}: n={int(row[('n_valid', '')])} "
                f"travel={row[('travel_time', 'mean')]:.2f}±{row[('travel_time', 'std')]:.2f}s "
                f"collisions={int(row[('collisions', '')])}"
            )
        return "\n".join(lines)

    def flat_table(self) -> pd.DataFrame:
        """The table with ``<metric>_<mean|std>`` column names, for CSV output."""
        flat = self.table.copy()
        flat.columns = [
            c if isinstance(c, str) else (c[0] if not c[1] else f"{c[0]}_{c[1]}")
            for c in flat.columns
        ]
        return flat.reset_index()


# ─── World randomisation ──────────────────────────────────────────────────────


def randomize_scenario(base: Scenario, rng: np.random.Generator) -> Scenario:
    """
    Copy of ``base`` with traffic positions jittered uniformly within ±8 m and
    the nominal lane speeds assigned to the lanes by a random permutation.

    Raises ``pydantic.ValidationError`` when the draw breaks the spacing rules.
    """
    lane_speeds: dict[int, float] = {}
    for veh in base.traffic:
        lane_speeds.setdefault(veh.lane, veh.v_mps)
    lanes = sorted(lane_speeds)
    permuted = rng.permutation(len(lanes))
    remap = {lane: lane_speeds[lanes[int(p)]] for lane, p in zip(lanes, permuted)}

    data = base.model_dump(mode="json")
    for veh in data["traffic"]:
        jitter = rng.uniform(-POSITION_JITTER_M, POSITION_JITTER_M)
        veh["s0_m"] = max(0.0, veh["s0_m"] + float(jitter))
        veh["v_mps"] = remap[veh["lane"]]
    return Scenario.model_validate(data)


def draw_world(base: Scenario, seed: int, run: int) -> Optional[Scenario]:
    """Randomised world for ``run``, resampled on spacing violations; None when skipped."""
    rng = np.random.default_rng(seed + run)
    for _ in range(MAX_RESAMPLES):
        try:
            world = randomize_scenario(base, rng)
        except ValidationError:
            continue
        sim = world.sim.model_copy(update={"seed": seed + run})
        return world.model_copy(update={"name": f"{base.name}#{run}", "sim": sim})
    logger.warning("run %d: no valid world after %d draws, skipped", run, MAX_RESAMPLES)
    return None


# ─── Campaign ─────────────────────────────────────────────────────────────────


def _run_one(scenario_json: dict[str, Any], policy: str, run: int) -> dict[str, Any]:
    """Top-level so process pools can pickle it."""
    scenario = Scenario.model_validate(scenario_json)
    log = run_episode(scenario, make_policy(policy))
    assert log.metrics is not None
    row: dict[str, Any] = {"run": run, "policy": policy}
    row.update(log.metrics.comfort_row())
    row["valid"] = log.metrics.valid
    row["collided"] = log.collided
    row["planner_errors"] = log.planner_errors
    row["infeasible_solves"] = infeasible_after_first_plan(log.samples["solve_status"])
    row["min_distance_to_closest"] = log.metrics.min_distance_to_closest
    return row


def infeasible_after_first_plan(status: pd.Series) -> int:
    """Infeasible solves once the planner has produced its first plan."""
    planned = status.isin([SolveStatus.OPTIMAL.value, SolveStatus.FEASIBLE_TIMEOUT.value])
    after = status[planned.cummax()]
    return int((after == SolveStatus.INFEASIBLE.value).sum())


def aggregate(runs: pd.DataFrame) -> pd.DataFrame:
    """
    Mean and population standard deviation of COMFORT_COLUMNS over the valid
    runs of each policy, plus run, valid-run and collision counts.
    """
    cols = list(COMFORT_COLUMNS)
    valid = runs[runs["valid"].astype(bool)]
    stats = valid.groupby("policy", sort=False)[cols].agg(["mean", lambda x: x.std(ddof=0)])
    stats.columns = pd.MultiIndex.from_tuples(
        [(metric, "mean" if agg == "mean" else "std") for metric, agg in stats.columns]
    )
    counts = runs.groupby("policy", sort=False).agg(
        n_runs=("run", "size"), n_valid=("valid", "sum"), collisions=("collided", "sum")
    )
    counts.columns = pd.MultiIndex.from_tuples([(c, "") for c in counts.columns])
    table = counts.join(stats, how="left")
    table.index.name = "policy"
    return table


def monte_carlo(
    base: Scenario,
    n: int = 50,
    policies: Sequence[PolicyName | str] = (PolicyName.SLAS, PolicyName.MOBIL),
    seed: int = 0,
    workers: int = 1,
) -> MonteCarloResult:
    """
    Run ``n`` randomised worlds under every policy.

    World ``r`` is drawn from ``seed + r``, so every policy sees the same
    worlds and repeating a campaign with the same seed gives the same table.

    Example:
        >>> result = monte_carlo(load_scenario("case_study"), n=50, seed=7)
        >>> print(result.summary)
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    names = [PolicyName(p).value for p in policies]
    worlds: list[tuple[int, Scenario]] = []
    skipped: list[int] = []
    for run in range(n):
        world = draw_world(base, seed, run)
        if world is None:
            skipped.append(run)
        else:
            worlds.append((run, world))

    jobs = [(w.model_dump(mode="json"), p, run) for run, w in worlds for p in names]
    logger.info(
        "Monte Carlo: %d worlds x %d policies on %d workers", len(worlds), len(names), workers
    )
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_one, *job) for job in jobs]
            rows = [f.result() for f in futures]
    else:
        rows = [_run_one(*job) for job in jobs]

    runs = pd.DataFrame(rows)
    if runs.empty:
        runs = pd.DataFrame(
            columns=[
                "run",
                "policy",
                *COMFORT_COLUMNS,
                "valid",
                "collided",
                "planner_errors",
                "infeasible_solves",
            ]
        )
    runs = runs.sort_values("run", kind="stable").reset_index(drop=True)
    result = MonteCarloResult(runs=runs, table=aggregate(runs), seed=seed, skipped=skipped)
    logger.info("Monte Carlo finished: %d runs", len(runs))
    return result


__all__ = [
    "MonteCarloResult",
    "aggregate",
    "draw_world",
    "infeasible_after_first_plan",
    "monte_carlo",
    "randomize_scenario",
]
