"""Trace generation under the time-variant community model.

Each node runs an independent epoch process:

    pick community (π of the first period) → uniform start point
    loop:
        epoch: exponential length, uniform speed and heading, torus wrap inside
               the community, then a uniform pause
        next community from the current row of p (or from π of the new period
        when a boundary passed during the epoch)
        transitional epoch (straight line) when the node is outside it

Motion is recorded as straight *legs*; samples, NS2 scripts and exact
occupancy fractions are all derived from them.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import IO, Iterator, NamedTuple, Optional, Union

import numpy as np
from numpy.random import Generator, SeedSequence, SFC64

from tvcmob.errors import InvariantError, TraceIOError
from tvcmob.geometry import TWO_PI, torus_segments, uniform_point
from tvcmob.models import (
    NodeProfile,
    OnOffKind,
    OnOffPolicy,
    Phase,
    RunSpec,
    TimePeriod,
    Trace,
    profile_digest,
)
from tvcmob.occupancy import stationary_distribution

logger = logging.getLogger(__name__)

# Exponential epoch lengths are clipped at this multiple of the mean.
EPOCH_TRUNCATION = 100.0


class EpochKind(str, Enum):
    IN_COMMUNITY = "in_community"
    TRANSITIONAL = "transitional"


@dataclass(frozen=True)
class Epoch:
    kind: EpochKind
    community: int
    community_id: str
    length: float
    speed: float
    heading: float
    pause_after: float
    next_community: int
    on: bool = True


@dataclass(frozen=True)
class NodeState:
    position: tuple[float, float]
    period: int
    community: int
    phase: Phase = Phase.MOVING
    remaining: float = 0.0


class Leg(NamedTuple):
    """Straight piece of motion: position = (x0, y0) + (vx, vy)·(t − t0)."""

    t0: float
    t1: float
    x0: float
    y0: float
    vx: float
    vy: float
    phase: int
    community: int
    period: int
    on: bool

    def end(self) -> tuple[float, float]:
        dt = self.t1 - self.t0
        return (self.x0 + self.vx * dt, self.y0 + self.vy * dt)


def node_generator(seed: int, index: int) -> Generator:
    """Independent stream for node ``index``; unaffected by the node count."""
    return Generator(SFC64(SeedSequence(seed, spawn_key=(index,))))


@lru_cache(maxsize=256)
def _period_pi_cdf(period: TimePeriod) -> np.ndarray:
    return np.cumsum(stationary_distribution(period.matrix()))


@lru_cache(maxsize=256)
def _row_cdfs(period: TimePeriod) -> np.ndarray:
    return np.cumsum(period.matrix(), axis=1)


def _draw(cdf: np.ndarray, rng: Generator) -> int:
    idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(idx, cdf.size - 1)


def sample_epoch(
    state: NodeState,
    period: TimePeriod,
    rng: Generator,
    onoff: OnOffPolicy = OnOffPolicy(),
) -> Epoch:
    """Draw the next in-community epoch for a node in ``state``.

    Draw order is fixed (length, speed, heading, pause, next community, on
    flag) so streams are reproducible.
    """
    j = state.community
    mean = period.mean_epoch_length[j]
    length = min(float(rng.exponential(mean)), EPOCH_TRUNCATION * mean)
    lo, hi = period.speed(j)
    speed = float(rng.uniform(lo, hi))
    heading = float(rng.uniform(0.0, TWO_PI))
    pause = float(rng.uniform(0.0, period.max_pause[j])) if period.max_pause[j] > 0 else 0.0
    nxt = _draw(_row_cdfs(period)[j], rng)
    on = True
    if onoff.kind is OnOffKind.FIXED_PROB:
        assert onoff.p_on is not None
        on = bool(rng.random() < onoff.p_on[period.index][j])
    return Epoch(
        kind=EpochKind.IN_COMMUNITY,
        community=j,
        community_id=period.communities[j].id,
        length=length,
        speed=speed,
        heading=heading,
        pause_after=pause,
        next_community=nxt,
        on=on,
    )


class NodeProcess:
    """Lazily extended trajectory of one node."""

    def __init__(self, profile: NodeProfile, rng: Generator, start_time: float = 0.0) -> None:
        self.profile = profile
        self.rng = rng
        self.legs: list[Leg] = []
        self.clock = start_time
        per = profile.period_index_at(start_time)
        period = profile.schedule[per]
        j = _draw(_period_pi_cdf(period), rng)
        pos = uniform_point(period.communities[j].rect, rng)
        self.state = NodeState(position=pos, period=per, community=j)
        self.start = pos

    def advance_until(self, t: float) -> None:
        """Generate epochs until the trajectory covers [start, t]."""
        while self.clock < t:
            self._run_epoch()

    def iter_legs(self) -> Iterator[Leg]:
        """Every leg in time order, generating more epochs on demand."""
        i = 0
        while True:
            while i >= len(self.legs):
                self._run_epoch()
            yield self.legs[i]
            i += 1

    def trajectory(self) -> Trajectory:
        return Trajectory.from_legs(self.profile.node_id, self.legs, self.start)

    # -- internals --------------------------------------------------------

    def _on_flag(self, phase: Phase, epoch_on: bool) -> bool:
        kind = self.profile.onoff.kind
        if kind is OnOffKind.ALWAYS_ON:
            return True
        if kind is OnOffKind.ON_WHEN_PAUSED:
            return phase is Phase.PAUSED
        if kind is OnOffKind.ON_WHEN_MOVING:
            return phase is Phase.MOVING
        return epoch_on

    def _run_epoch(self) -> None:
        st = self.state
        period = self.profile.schedule[st.period]
        comm = period.communities[st.community]
        epoch = sample_epoch(st, period, self.rng, self.profile.onoff)
        t = self.clock
        x, y = st.position

        if epoch.length > 0.0:
            duration = epoch.length / epoch.speed
            vx = epoch.speed * math.cos(epoch.heading)
            vy = epoch.speed * math.sin(epoch.heading)
            on = self._on_flag(Phase.MOVING, epoch.on)
            for seg in torus_segments((x, y), epoch.heading, epoch.speed, duration, comm.rect):
                leg = Leg(t + seg.t_start, t + seg.t_end, seg.x, seg.y, vx, vy,
                          Phase.MOVING, st.community, st.period, on)
                self.legs.append(leg)
                x, y = leg.end()
            t += duration

        if epoch.pause_after > 0.0:
            on = self._on_flag(Phase.PAUSED, epoch.on)
            self.legs.append(Leg(t, t + epoch.pause_after, x, y, 0.0, 0.0,
                                 Phase.PAUSED, st.community, st.period, on))
            t += epoch.pause_after

        per = self.profile.period_index_at(t)
        if per == st.period:
            nxt = epoch.next_community
        else:
            nxt = _draw(_period_pi_cdf(self.profile.schedule[per]), self.rng)
        self.clock = t
        self._enter(nxt, per, (x, y), period.speed(st.community))

    def _enter(
        self,
        nxt: int,
        per: int,
        pos: tuple[float, float],
        speed_range: tuple[float, float],
    ) -> None:
        t = self.clock
        x, y = pos
        while True:
            period = self.profile.schedule[per]
            target = period.communities[nxt]
            if target.rect.contains_point(x, y):
                break
            dx, dy = uniform_point(target.rect, self.rng)
            speed = float(self.rng.uniform(*speed_range))
            dist = math.hypot(dx - x, dy - y)
            duration = dist / speed
            on = self._transitional_on(period, nxt)
            if duration > 0.0:
                self.legs.append(Leg(t, t + duration, x, y, (dx - x) / duration, (dy - y) / duration,
                                     Phase.TRANSITIONAL, nxt, per, on))
            t += duration
            x, y = dx, dy
            new_per = self.profile.period_index_at(t)
            if new_per == per:
                break
            # A boundary passed while bridging: redraw from the new period.
            per = new_per
            nxt = _draw(_period_pi_cdf(self.profile.schedule[per]), self.rng)
        self.clock = t
        self.state = NodeState(position=(x, y), period=per, community=nxt)

    def _transitional_on(self, period: TimePeriod, nxt: int) -> bool:
        onoff = self.profile.onoff
        if onoff.kind is OnOffKind.ALWAYS_ON:
            return True
        if onoff.kind is OnOffKind.FIXED_PROB:
            assert onoff.p_on is not None
            return bool(self.rng.random() < onoff.p_on[period.index][nxt])
        return False


@dataclass
class Trajectory:
    """Leg arrays of one node, contiguous in time from ``t0[0]``."""

    node_id: str
    t0: np.ndarray
    t1: np.ndarray
    x0: np.ndarray
    y0: np.ndarray
    vx: np.ndarray
    vy: np.ndarray
    phase: np.ndarray
    community: np.ndarray
    period: np.ndarray
    on: np.ndarray
    start: tuple[float, float] = (0.0, 0.0)

    @classmethod
    def from_legs(cls, node_id: str, legs: list[Leg], start: tuple[float, float]) -> Trajectory:
        if not legs:
            raise InvariantError(f"node '{node_id}' has no motion legs")
        cols = list(zip(*legs))
        return cls(
            node_id=node_id,
            t0=np.array(cols[0], dtype=float),
            t1=np.array(cols[1], dtype=float),
            x0=np.array(cols[2], dtype=float),
            y0=np.array(cols[3], dtype=float),
            vx=np.array(cols[4], dtype=float),
            vy=np.array(cols[5], dtype=float),
            phase=np.array(cols[6], dtype=np.int8),
            community=np.array(cols[7], dtype=np.int32),
            period=np.array(cols[8], dtype=np.int32),
            on=np.array(cols[9], dtype=bool),
            start=start,
        )

    @property
    def end_time(self) -> float:
        return float(self.t1[-1])

    def __len__(self) -> int:
        return int(self.t0.size)

    def leg_index(self, times: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.t0, times, side="right") - 1
        return np.clip(idx, 0, self.t0.size - 1)

    def position_at(self, times: np.ndarray | float) -> tuple[np.ndarray, np.ndarray]:
        ts = np.asarray(times, dtype=float)
        idx = self.leg_index(ts)
        dt = ts - self.t0[idx]
        return self.x0[idx] + self.vx[idx] * dt, self.y0[idx] + self.vy[idx] * dt

    def on_at(self, times: np.ndarray | float) -> np.ndarray:
        return self.on[self.leg_index(np.asarray(times, dtype=float))]

    def phase_at(self, times: np.ndarray | float) -> np.ndarray:
        return self.phase[self.leg_index(np.asarray(times, dtype=float))]

    def legs(self) -> Iterator[Leg]:
        for i in range(len(self)):
            yield Leg(
                float(self.t0[i]), float(self.t1[i]), float(self.x0[i]), float(self.y0[i]),
                float(self.vx[i]), float(self.vy[i]), int(self.phase[i]),
                int(self.community[i]), int(self.period[i]), bool(self.on[i]),
            )


# ---------------------------------------------------------------------------
# Trace generation
# ---------------------------------------------------------------------------

def sample_times(duration: float, dt: float) -> np.ndarray:
    n = int(math.floor(duration / dt + 1e-9))
    return np.arange(n, dtype=float) * dt


def generate_trace(run: RunSpec) -> Trace:
    """Simulate every node of ``run`` and sample them every Δt.

    Bit-identical for identical (seed, profiles, duration, dt).
    """
    if not run.profiles:
        raise InvariantError("run has no nodes")
    times = sample_times(run.duration, run.dt)
    m = len(run.profiles)
    xs = np.empty((times.size, m))
    ys = np.empty((times.size, m))
    ons = np.empty((times.size, m), dtype=bool)
    trajectories: list[Trajectory] = []

    for i, profile in enumerate(run.profiles):
        proc = NodeProcess(profile, node_generator(run.seed, i))
        proc.advance_until(run.duration)
        traj = proc.trajectory()
        xs[:, i], ys[:, i] = traj.position_at(times)
        ons[:, i] = traj.on_at(times)
        trajectories.append(traj)
        logger.debug("node %s: %d legs over %.0f s", profile.node_id, len(traj), run.duration)

    metadata = {
        "seed": run.seed,
        "duration": run.duration,
        "dt": run.dt,
        "nodes": len(run.profiles),
        "profiles": {p.node_id: profile_digest(p) for p in run.profiles},
    }
    return Trace(
        dt=run.dt,
        node_ids=tuple(p.node_id for p in run.profiles),
        times=times,
        x=xs,
        y=ys,
        on=ons,
        metadata=metadata,
        trajectories=trajectories,
    )


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

Sink = Union[str, Path, IO[str]]


def emit(trace: Trace, fmt: str, sink: Sink) -> int:
    """Write ``trace`` as 'ns2' or 'csv' text; returns the UTF-8 byte count."""
    if trace.sample_count == 0 or trace.node_count == 0:
        raise InvariantError("cannot emit an empty trace")
    fmt = fmt.lower()
    if fmt == "csv":
        text = _csv_text(trace)
    elif fmt == "ns2":
        text = _ns2_text(trace)
    else:
        raise ValueError(f"unknown trace format '{fmt}' (expected ns2 or csv)")

    try:
        if isinstance(sink, (str, Path)):
            Path(sink).write_text(text, encoding="utf-8", newline="\n")
        else:
            sink.write(text)
    except OSError as e:
        raise TraceIOError(f"failed writing {fmt} trace: {e}") from e
    return len(text.encode("utf-8"))


def write_metadata(trace: Trace, path: Path) -> None:
    """Write the trace sidecar (seed, duration, Δt, profile digests)."""
    try:
        path.write_text(json.dumps(trace.metadata, indent=2, sort_keys=True), encoding="utf-8")
    except OSError as e:
        raise TraceIOError(f"failed writing metadata: {e}") from e


def _csv_text(trace: Trace) -> str:
    lines = ["t,node,x,y,on"]
    for t, node, x, y, on in trace.rows():
        lines.append(f"{t!r},{node},{x!r},{y!r},{1 if on else 0}")
    return "\n".join(lines) + "\n"


def _ns2_text(trace: Trace) -> str:
    if trace.trajectories is None:
        return _ns2_from_samples(trace)
    header: list[str] = []
    events: list[tuple[float, int, int, str]] = []
    end = trace.span

    for i, traj in enumerate(trace.trajectories):
        x, y = traj.start
        header += [
            f"$node_({i}) set X_ {x:.2f}",
            f"$node_({i}) set Y_ {y:.2f}",
            f"$node_({i}) set Z_ 0.00",
        ]
        seq = 0
        prev_end: Optional[tuple[float, float]] = (x, y)
        for leg in traj.legs():
            if leg.t0 >= end:
                break
            if prev_end is not None and math.hypot(leg.x0 - prev_end[0], leg.y0 - prev_end[1]) > 1e-6:
                # Torus re-insertion: ns-2 nodes cannot jump, so relocate.
                events.append((leg.t0, i, seq, f'$ns_ at {leg.t0:.2f} "$node_({i}) set X_ {leg.x0:.2f}"'))
                events.append((leg.t0, i, seq + 1, f'$ns_ at {leg.t0:.2f} "$node_({i}) set Y_ {leg.y0:.2f}"'))
                seq += 2
            if leg.phase != Phase.PAUSED:
                ex, ey = leg.end()
                speed = math.hypot(leg.vx, leg.vy)
                events.append((leg.t0, i, seq, f'$ns_ at {leg.t0:.2f} "$node_({i}) setdest {ex:.2f} {ey:.2f} {speed:.2f}"'))
                seq += 1
            prev_end = leg.end()

    events.sort(key=lambda e: (e[0], e[1], e[2]))
    return "\n".join(header + [e[3] for e in events]) + "\n"


def _ns2_from_samples(trace: Trace) -> str:
    """NS2 script for an ingested trace: one setdest per sample step."""
    lines: list[str] = []
    for i in range(trace.node_count):
        lines += [
            f"$node_({i}) set X_ {trace.x[0, i]:.2f}",
            f"$node_({i}) set Y_ {trace.y[0, i]:.2f}",
            f"$node_({i}) set Z_ 0.00",
        ]
    for k in range(trace.sample_count - 1):
        t = trace.times[k]
        for i in range(trace.node_count):
            dx = trace.x[k + 1, i] - trace.x[k, i]
            dy = trace.y[k + 1, i] - trace.y[k, i]
            if not (math.isfinite(dx) and math.isfinite(dy)) or (dx == 0.0 and dy == 0.0):
                continue
            speed = math.hypot(dx, dy) / trace.dt
            lines.append(
                f'$ns_ at {t:.2f} "$node_({i}) setdest {trace.x[k + 1, i]:.2f} {trace.y[k + 1, i]:.2f} {speed:.2f}"'
            )
    return "\n".join(lines) + "\n"
