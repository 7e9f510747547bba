"""Bundled scenario discovery for tvcmob.

Each scenario is a subdirectory of tvcmob/scenarios/ containing:
    __init__.py  : NAME, DESCRIPTION, DEFAULT_RANGE constants
    config.json  : the mobility configuration document

Anywhere a command takes ``--config`` it accepts either a path to a JSON
document or the name of a bundled scenario.
"""

from __future__ import annotations

import importlib
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from tvcmob.errors import TraceIOError

FALLBACK_RANGE = 10.0


@dataclass
class ScenarioInfo:
    """Metadata about a bundled scenario."""

    name: str
    description: str
    default_range: float
    path: Path
    config_path: Path

    def read_config(self) -> str:
        return self.config_path.read_text(encoding="utf-8")


def _scenarios_root() -> Path:
    """Absolute path to the scenarios/ directory."""
    return Path(__file__).parent


def list_scenarios() -> list[ScenarioInfo]:
    """Discover all bundled scenarios, sorted by directory name."""
    scenarios = []
    for child in sorted(_scenarios_root().iterdir()):
        if not child.is_dir():
            continue
        if not (child / "__init__.py").exists() or not (child / "config.json").exists():
            continue
        info = load_scenario(child.name)
        if info:
            scenarios.append(info)
    return scenarios


def load_scenario(name: str) -> Optional[ScenarioInfo]:
    """Load a single scenario by directory name (e.g. 'model1').

    Returns None when no such scenario is bundled.
    """
    scenario_dir = _scenarios_root() / name
    config_path = scenario_dir / "config.json"
    if not scenario_dir.is_dir() or not config_path.exists():
        return None

    try:
        mod = importlib.import_module(f"tvcmob.scenarios.{name}")
    except ImportError:
        return None

    return ScenarioInfo(
        name=getattr(mod, "NAME", name),
        description=getattr(mod, "DESCRIPTION", ""),
        default_range=float(getattr(mod, "DEFAULT_RANGE", FALLBACK_RANGE)),
        path=scenario_dir,
        config_path=config_path,
    )


def resolve_config(ref: str) -> tuple[str, str, Optional[ScenarioInfo]]:
    """Resolve ``--config`` into (label, document text, scenario or None).

    An existing file path wins over a scenario of the same name.
    """
    path = Path(ref)
    if path.is_file():
        try:
            return str(path), path.read_text(encoding="utf-8"), None
        except OSError as e:
            raise TraceIOError(f"cannot read config: {e}", location=str(path)) from e

    info = load_scenario(ref)
    if info is not None:
        return info.name, info.read_config(), info

    raise TraceIOError(
        f"no such config file or bundled scenario '{ref}' (see 'tvcmob list')",
        location=ref,
    )
