"""
Core sub-package — road geometry, trajectory prediction, safe distances.
"""

from slas_engine.core.highway import lane_indicator, lane_set, observe, reachable_speeds
from slas_engine.core.prediction import InsufficientDataError, TrajectoryPredictor
from slas_engine.core.safety import deviation_cost, min_safe_distance

__all__ = [
    "InsufficientDataError",
    "TrajectoryPredictor",
    "deviation_cost",
    "lane_indicator",
    "lane_set",
    "min_safe_distance",
    "observe",
    "reachable_speeds",
]
