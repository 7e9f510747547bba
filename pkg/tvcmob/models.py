"""Data models for tvcmob.

Node profiles (field, schedule, communities, on/off policy), traces, run
specifications and the analytic/validation reports. These are the typed
structures that flow through config → simulator/analytics → runner → CLI.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from pathlib import Path
from typing import Any, Iterator, Optional

import numpy as np

from tvcmob.geometry import Rect


class OnOffKind(str, Enum):
    """When a node is observable ("on") in a trace."""

    ALWAYS_ON = "always_on"
    ON_WHEN_PAUSED = "on_when_paused"
    ON_WHEN_MOVING = "on_when_moving"
    FIXED_PROB = "fixed_prob"


class Phase(IntEnum):
    """Motion phase of a trajectory leg (stored as small ints in leg arrays)."""

    MOVING = 0
    PAUSED = 1
    TRANSITIONAL = 2


def json_float(x: float) -> float | str:
    """JSON-safe float: infinities become the strings 'inf' / '-inf'."""
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return x


# ---------------------------------------------------------------------------
# Profile types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FieldSpec:
    """Square simulation field [0, N]^2."""

    edge_length: float

    @property
    def rect(self) -> Rect:
        return Rect(0.0, 0.0, self.edge_length, self.edge_length)

    @property
    def area(self) -> float:
        return self.edge_length * self.edge_length


@dataclass(frozen=True)
class Community:
    """Square community with lower-left corner (origin_x, origin_y)."""

    id: str
    origin_x: float
    origin_y: float
    edge_length: float
    is_roaming: bool = False
    speed_range: Optional[tuple[float, float]] = None

    @property
    def rect(self) -> Rect:
        return Rect.square(self.origin_x, self.origin_y, self.edge_length)

    @property
    def area(self) -> float:
        return self.edge_length * self.edge_length

    def to_dict(self) -> dict:
        d: dict[str, Any] = {
            "id": self.id,
            "x": self.origin_x,
            "y": self.origin_y,
            "edge": self.edge_length,
        }
        if self.speed_range is not None:
            d["speed"] = {"min": self.speed_range[0], "max": self.speed_range[1]}
        return d


@dataclass(frozen=True)
class TimePeriod:
    """One segment of the repeating schedule."""

    index: int
    duration: float
    communities: tuple[Community, ...]
    transition_matrix: tuple[tuple[float, ...], ...]
    mean_epoch_length: tuple[float, ...]
    max_pause: tuple[float, ...]
    speed_range: tuple[float, float]

    @property
    def size(self) -> int:
        return len(self.communities)

    def speed(self, j: int) -> tuple[float, float]:
        return resolve_speed(self, j)

    def v_bar(self, j: int) -> float:
        lo, hi = self.speed(j)
        return 0.5 * (lo + hi)

    def mean_pause(self, j: int) -> float:
        # Pauses are uniform on [0, D_max].
        return 0.5 * self.max_pause[j]

    def matrix(self) -> np.ndarray:
        return np.array(self.transition_matrix, dtype=float)

    def roaming_index(self) -> Optional[int]:
        for j, c in enumerate(self.communities):
            if c.is_roaming:
                return j
        return None

    def to_dict(self) -> dict:
        return {
            "duration_s": self.duration,
            "speed": {"min": self.speed_range[0], "max": self.speed_range[1]},
            "communities": [c.to_dict() for c in self.communities],
            "transition_matrix": [list(r) for r in self.transition_matrix],
            "mean_epoch_length": list(self.mean_epoch_length),
            "max_pause_s": list(self.max_pause),
        }


def resolve_speed(period: TimePeriod, j: int) -> tuple[float, float]:
    """Speed range of community j, falling back to the period's range."""
    return period.communities[j].speed_range or period.speed_range


@dataclass(frozen=True)
class OnOffPolicy:
    kind: OnOffKind = OnOffKind.ALWAYS_ON
    # Per period, per community; only used by FIXED_PROB.
    p_on: Optional[tuple[tuple[float, ...], ...]] = None

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"kind": self.kind.value}
        if self.p_on is not None:
            d["p_on"] = [list(r) for r in self.p_on]
        return d


@dataclass(frozen=True)
class NodeProfile:
    """A node's complete TVC parameterization."""

    node_id: str
    field: FieldSpec
    schedule: tuple[TimePeriod, ...]
    onoff: OnOffPolicy = OnOffPolicy()
    group: str = ""

    @property
    def cycle_duration(self) -> float:
        return sum(p.duration for p in self.schedule)

    def period_durations(self) -> tuple[float, ...]:
        return tuple(p.duration for p in self.schedule)

    def period_index_at(self, t: float) -> int:
        """Index of the period active at absolute time t."""
        phase = math.fmod(t, self.cycle_duration)
        acc = 0.0
        for i, p in enumerate(self.schedule):
            acc += p.duration
            if phase < acc:
                return i
        return len(self.schedule) - 1

    def period_end_after(self, t: float) -> float:
        """Absolute time at which the period active at t ends."""
        cycle = self.cycle_duration
        base = math.floor(t / cycle) * cycle
        acc = base
        for p in self.schedule:
            acc += p.duration
            if t < acc:
                return acc
        return base + cycle

    def to_dict(self) -> dict:
        return {
            "id": self.node_id,
            "group": self.group,
            "field": {"edge_length": self.field.edge_length},
            "schedule": [p.to_dict() for p in self.schedule],
            "onoff": self.onoff.to_dict(),
        }

    def digest(self) -> str:
        return profile_digest(self)


def profile_digest(profile: NodeProfile) -> str:
    """Stable sha256 over the canonical JSON form of a profile."""
    blob = json.dumps(profile.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class StateProbabilities:
    """State occupancy of one node in one period."""

    period: int
    pi: tuple[float, ...]
    p_move: tuple[float, ...]
    p_pause: tuple[float, ...]
    p_tr: float
    psi: float
    l_tr: tuple[tuple[float, ...], ...]
    p_on: tuple[float, ...] = ()
    p_on_transitional: float = 1.0

    @property
    def p_state(self) -> tuple[float, ...]:
        return tuple(m + s for m, s in zip(self.p_move, self.p_pause))

    def total(self) -> float:
        return sum(self.p_move) + sum(self.p_pause) + self.p_tr

    def to_dict(self) -> dict:
        return {
            "period": self.period,
            "pi": list(self.pi),
            "p_move": list(self.p_move),
            "p_pause": list(self.p_pause),
            "p_tr": self.p_tr,
            "psi": self.psi,
            "p_state": list(self.p_state),
            "l_tr": [list(r) for r in self.l_tr],
            "p_on": list(self.p_on),
            "p_on_transitional": self.p_on_transitional,
        }


# ---------------------------------------------------------------------------
# Runs and traces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunSpec:
    seed: int
    duration: float
    profiles: tuple[NodeProfile, ...]
    dt: float = 1.0

    def __post_init__(self) -> None:
        from tvcmob.errors import InvariantError

        if not (self.dt > 0 and self.duration >= self.dt):
            raise InvariantError(f"need duration >= dt > 0 (duration={self.duration}, dt={self.dt})")


@dataclass
class Trace:
    """Time-ordered samples for every node on one shared time grid.

    ``x``/``y``/``on`` have shape (samples, nodes). ``trajectories`` holds the
    underlying movement legs when the trace was generated (not ingested).
    """

    dt: float
    node_ids: tuple[str, ...]
    times: np.ndarray
    x: np.ndarray
    y: np.ndarray
    on: np.ndarray
    metadata: dict = field(default_factory=dict)
    trajectories: Optional[list] = None

    @property
    def node_count(self) -> int:
        return len(self.node_ids)

    @property
    def sample_count(self) -> int:
        return int(self.times.size)

    @property
    def span(self) -> float:
        if self.times.size == 0:
            return 0.0
        return float(self.times[-1] - self.times[0]) + self.dt

    def rows(self) -> Iterator[tuple[float, str, float, float, bool]]:
        """(t, node, x, y, on) ordered by (t, node index)."""
        for i, t in enumerate(self.times):
            for n, node in enumerate(self.node_ids):
                yield float(t), node, float(self.x[i, n]), float(self.y[i, n]), bool(self.on[i, n])


# ---------------------------------------------------------------------------
# Analytic reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DegreeContribution:
    period: int
    community: str
    peer: str
    peer_community: str
    value: float


@dataclass
class DegreeReport:
    node_id: str
    range_m: float
    degree: float = 0.0
    contributions: list[DegreeContribution] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"node": self.node_id, "range_m": self.range_m, "degree": self.degree}

    def to_rows(self) -> list[dict]:
        return [
            {
                "node": self.node_id,
                "period": c.period,
                "community": c.community,
                "peer": c.peer,
                "peer_community": c.peer_community,
                "contribution": c.value,
            }
            for c in self.contributions
        ]


@dataclass
class CellHitting:
    """Hitting-time breakdown for one scenario cell."""

    probability: float
    membership: dict[str, bool]
    p_h: list[float]
    p_H: list[float]
    cycle_probability: float
    first_hit_weights: list[float]
    hitting_time: float

    def to_dict(self) -> dict:
        return {
            "probability": self.probability,
            "membership": self.membership,
            "p_h": self.p_h,
            "p_H": self.p_H,
            "cycle_probability": self.cycle_probability,
            "first_hit_weights": self.first_hit_weights,
            "hitting_time": json_float(self.hitting_time),
        }


@dataclass
class HittingReport:
    node_id: str
    range_m: float
    hitting_time: float = math.inf
    cells: list[CellHitting] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def infinite(self) -> bool:
        return math.isinf(self.hitting_time)

    def to_dict(self) -> dict:
        return {
            "node": self.node_id,
            "range_m": self.range_m,
            "hitting_time": json_float(self.hitting_time),
            "cells": [c.to_dict() for c in self.cells],
            "warnings": self.warnings,
        }

    def to_rows(self) -> list[dict]:
        rows = []
        for i, c in enumerate(self.cells):
            rows.append({
                "node": self.node_id,
                "cell": i,
                "probability": c.probability,
                "inside": ";".join(k for k, v in c.membership.items() if v),
                "cycle_probability": c.cycle_probability,
                "hitting_time": json_float(c.hitting_time),
            })
        return rows


@dataclass
class MeetingReport:
    node_a: str
    node_b: str
    range_m: float
    meeting_time: float = math.inf
    p_m: list[float] = field(default_factory=list)
    p_M: list[float] = field(default_factory=list)
    cycle_probability: float = 0.0
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "node_a": self.node_a,
            "node_b": self.node_b,
            "range_m": self.range_m,
            "meeting_time": json_float(self.meeting_time),
            "p_m": self.p_m,
            "p_M": self.p_M,
            "cycle_probability": self.cycle_probability,
            "warnings": self.warnings,
        }

    def to_rows(self) -> list[dict]:
        return [
            {"node_a": self.node_a, "node_b": self.node_b, "period": t, "p_m": pm, "p_M": pM}
            for t, (pm, pM) in enumerate(zip(self.p_m, self.p_M))
        ]


@dataclass
class MonteCarloResult:
    """Mean ± stderr of a Monte Carlo harness, with timeouts counted apart."""

    mean: float
    stderr: float
    count: int
    timeouts: int = 0
    samples: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "mean": json_float(self.mean),
            "stderr": json_float(self.stderr),
            "count": self.count,
            "timeouts": self.timeouts,
        }


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass
class QuantityCheck:
    """Analytic value vs simulated mean for one quantity."""

    quantity: str
    analytic: float
    simulated: float
    stderr: float
    threshold: float
    effective_threshold: float
    applicable: bool = True
    note: str = ""

    @property
    def relative_error(self) -> float:
        if self.simulated == 0 or math.isinf(self.analytic) or math.isinf(self.simulated):
            return math.inf
        return abs(self.analytic - self.simulated) / abs(self.simulated)

    @property
    def passed(self) -> bool:
        if not self.applicable:
            return True
        return self.relative_error <= self.effective_threshold

    @property
    def verdict(self) -> str:
        if not self.applicable:
            return "skipped"
        return "pass" if self.passed else "fail"

    def to_dict(self) -> dict:
        return {
            "quantity": self.quantity,
            "analytic": json_float(self.analytic),
            "simulated": json_float(self.simulated),
            "stderr": json_float(self.stderr),
            "relative_error": json_float(self.relative_error),
            "threshold": self.threshold,
            "effective_threshold": self.effective_threshold,
            "applicable": self.applicable,
            "verdict": self.verdict,
            "note": self.note,
        }

    @classmethod
    def from_dict(cls, d: dict) -> QuantityCheck:
        return cls(
            quantity=d.get("quantity", ""),
            analytic=float(d.get("analytic", "nan")),
            simulated=float(d.get("simulated", "nan")),
            stderr=float(d.get("stderr", 0.0)),
            threshold=d.get("threshold", 0.0),
            effective_threshold=d.get("effective_threshold", 0.0),
            applicable=d.get("applicable", True),
            note=d.get("note", ""),
        )


@dataclass
class ValidationReport:
    """Theory-vs-simulation comparison for one configuration."""

    config: str
    seed: int
    iterations: int
    range_m: float
    timestamp: str = ""
    checks: list[QuantityCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "seed": self.seed,
            "iterations": self.iterations,
            "range_m": self.range_m,
            "timestamp": self.timestamp,
            "passed": self.passed,
            "checks": [c.to_dict() for c in self.checks],
        }

    @classmethod
    def from_dict(cls, d: dict) -> ValidationReport:
        return cls(
            config=d.get("config", ""),
            seed=d.get("seed", 0),
            iterations=d.get("iterations", 0),
            range_m=d.get("range_m", 0.0),
            timestamp=d.get("timestamp", ""),
            checks=[QuantityCheck.from_dict(c) for c in d.get("checks", [])],
        )

    def save(self, result_dir: Path) -> None:
        """Write validation.json to the result directory."""
        result_dir.mkdir(parents=True, exist_ok=True)
        (result_dir / "validation.json").write_text(
            json.dumps(self.to_dict(), indent=2), encoding="utf-8"
        )

    @classmethod
    def load(cls, result_dir: Path) -> Optional[ValidationReport]:
        """Load validation.json from a result directory."""
        p = result_dir / "validation.json"
        if not p.exists():
            return None
        try:
            return cls.from_dict(json.loads(p.read_text(encoding="utf-8")))
        except (json.JSONDecodeError, OSError):
            return None
