"""
SVG plots of episode logs: travel time, lateral position and headway, each
against longitudinal displacement, one trace per policy.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.axes import Axes  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402

from slas_engine.models import RoadModel  # noqa: E402
from slas_engine.sim.episode import EpisodeLog  # noqa: E402

logger = logging.getLogger(__name__)

PANELS = (
    ("travel_time", "time", "Travel time [s]"),
    ("lateral", "ego_lateral", "Lateral displacement [m]"),
    ("headway", "headway", "Headway [m]"),
)

STYLE = {
    "slas": {"color": "tab:blue", "linestyle": "-"},
    "mobil": {"color": "tab:orange", "linestyle": "--"},
    "nochange": {"color": "tab:green", "linestyle": ":"},
}


def _makefig() -> tuple[Figure, Axes]:
    plt.rcParams["svg.fonttype"] = "none"
    plt.rcParams["svg.hashsalt"] = "slas"
    fig, ax = plt.subplots(1, 1, figsize=(6, 4))
    ax.grid(alpha=0.15)
    ax.set_xlabel("Longitudinal displacement [m]")
    ax.ticklabel_format(useOffset=False, style="plain")
    return fig, ax


def plot_panel(
    logs: Sequence[EpisodeLog], panel: str, path: Path, road: Optional[RoadModel] = None
) -> Path:
    """Write one panel for ``logs`` overlaid; ``panel`` is a key of PANELS."""
    column, label = {name: (col, lab) for name, col, lab in PANELS}[panel]
    fig, ax = _makefig()
    for log in logs:
        df = log.samples
        style = STYLE.get(log.policy.value, {})
        ax.plot(df["ego_s"], df[column], label=log.policy.value, **style)

    ax.set_ylabel(label)
    first = logs[0]
    ax.set_xlim(0.0, first.road_length)
    if panel == "lateral" and road is not None:
        w = road.lane_width_m
        centres = [w * i for i in range(road.max_lanes)]
        ax.set_yticks(centres)
        ax.set_ylim(centres[-1] + w / 2, -w / 2)  # lane 0 on top
    if len(logs) > 1:
        ax.legend(loc="best", fancybox=False, edgecolor="black")
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    logger.debug("wrote %s", path)
    return path


def write_plots(
    logs: Sequence[EpisodeLog], out_dir: Path, road: Optional[RoadModel] = None
) -> list[Path]:
    """The three panels as ``plots/<panel>.svg`` under ``out_dir``."""
    if not logs:
        raise ValueError("no episode logs to plot")
    plots = out_dir / "plots"
    return [plot_panel(logs, name, plots / f"{name}.svg", road) for name, _, _ in PANELS]
