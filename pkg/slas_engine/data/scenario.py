"""
Scenario ingestion: shipped and user JSON files, dotted overrides and
validation through the pydantic scenario model.
"""

from __future__ import annotations

import json
import logging
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Optional, Union

from pydantic import ValidationError

from slas_engine.models import Scenario

logger = logging.getLogger(__name__)

SHIPPED_SCENARIOS = ("case_study", "empty_road", "blocked")


class ScenarioError(ValueError):
    """A scenario that cannot be read or fails validation; ``path`` is the dotted field."""

    def __init__(self, message: str, path: str = "") -> None:
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


def resolve_scenario_path(source: Union[str, Path]) -> Path:
    """
    File path of a scenario given by shipped name or by path.

    Example:
        >>> resolve_scenario_path("case_study").name
        'case_study.json'
    """
    if isinstance(source, str) and source in SHIPPED_SCENARIOS:
        ref = resources.files("slas_engine.data") / "scenarios" / f"{source}.json"
        return Path(str(ref))
    path = Path(source)
    if not path.is_file():
        raise ScenarioError(f"no scenario file or shipped scenario named {str(source)!r}")
    return path


def _coerce(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(data: dict[str, Any], overrides: Iterable[str]) -> dict[str, Any]:
    """
    Apply ``key.sub=value`` overrides to a scenario JSON tree in place.

    Values are parsed as JSON when possible (``3``, ``true``, ``[1, 2]``) and
    kept as strings otherwise. Integer keys index into lists.
    """
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ScenarioError(f"override {item!r} is not of the form key=value")
        parts = key.split(".")
        node: Any = data
        for i, part in enumerate(parts[:-1]):
            try:
                if isinstance(node, list):
                    node = node[int(part)]
                else:
                    node = node.setdefault(part, {})
            except (ValueError, IndexError) as exc:
                raise ScenarioError(f"cannot index {part!r}", ".".join(parts[: i + 1])) from exc
            if not isinstance(node, (dict, list)):
                raise ScenarioError("is not an object", ".".join(parts[: i + 1]))
        last = parts[-1]
        if isinstance(node, list):
            try:
                node[int(last)] = _coerce(raw)
            except (ValueError, IndexError) as exc:
                raise ScenarioError(f"cannot index {last!r}", key) from exc
        else:
            node[last] = _coerce(raw)
        logger.debug("override %s = %r", key, _coerce(raw))
    return data


def scenario_from_dict(data: dict[str, Any]) -> Scenario:
    try:
        return Scenario.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        loc = ".".join(str(p) for p in err["loc"])
        raise ScenarioError(err["msg"], loc) from exc


def load_scenario(
    source: Union[str, Path, dict[str, Any]], overrides: Optional[Iterable[str]] = None
) -> Scenario:
    """
    Load and validate a scenario.

    Args:
        source: Shipped scenario name, JSON file path, or an already-parsed tree.
        overrides: Dotted ``key=value`` strings applied before validation.

    Raises:
        ScenarioError: Unreadable file, malformed JSON or invalid field.

    Example:
        >>> sc = load_scenario("case_study", ["planner.gamma2=100"])
        >>> sc.planner.gamma2
        100.0
    """
    if isinstance(source, dict):
        data = json.loads(json.dumps(source))
    else:
        path = resolve_scenario_path(source)
        try:
            data = json.loads(path.read_text())
        except OSError as exc:
            raise ScenarioError(f"cannot read {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ScenarioError(f"{path} must hold a JSON object")
    apply_overrides(data, overrides or ())
    scenario = scenario_from_dict(data)
    logger.info("loaded scenario %s (%d vehicles)", scenario.name, len(scenario.traffic))
    return scenario


__all__ = [
    "SHIPPED_SCENARIOS",
    "ScenarioError",
    "apply_overrides",
    "load_scenario",
    "resolve_scenario_path",
    "scenario_from_dict",
]
