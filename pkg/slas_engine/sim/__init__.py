"""
Simulation sub-package — closed-loop episodes, baselines, metrics, Monte Carlo.
"""

from slas_engine.sim.episode import EpisodeLog, run_episode
from slas_engine.sim.metrics import Metrics, compute_metrics
from slas_engine.sim.montecarlo import MonteCarloResult, monte_carlo
from slas_engine.sim.policies import MobilPolicy, NoChangePolicy, SlasPolicy, make_policy

__all__ = [
    "EpisodeLog",
    "Metrics",
    "MobilPolicy",
    "MonteCarloResult",
    "NoChangePolicy",
    "SlasPolicy",
    "compute_metrics",
    "make_policy",
    "monte_carlo",
    "run_episode",
]
