"""
Data sub-package — scenario loading and the shipped scenarios.
"""

from slas_engine.data.scenario import ScenarioError, load_scenario

__all__ = ["ScenarioError", "load_scenario"]
