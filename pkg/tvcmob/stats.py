"""Empirical metrics over traces, and Monte Carlo hitting/meeting harnesses.

Works on generated traces and on ingested ones (the simulator's CSV, or a
generic a,b,start_s,end_s encounter log). Every curve can be written as a
small CSV for external plotting.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Optional, Sequence, Union

import numpy as np
from numpy.random import Generator, SeedSequence, SFC64

from tvcmob.errors import (
    InvariantError,
    NoHitPossibleError,
    NoMeetingPossibleError,
    NonMonotoneTimeError,
    TraceParseError,
)
from tvcmob.geometry import relative_hit_time, segment_hit_time, uniform_point
from tvcmob.models import MonteCarloResult, NodeProfile, Phase, Trace

logger = logging.getLogger(__name__)

TRACE_HEADER = ["t", "node", "x", "y", "on"]
CONTACT_HEADER = ["a", "b", "start_s", "end_s"]

# Harness iterations that never hit stop here when no analytic value exists.
DEFAULT_TIMEOUT_S = 1e8
TIMEOUT_FACTOR = 100.0

# Node pairs per vectorised distance block, 16 MB per float64 array.
PAIR_BUDGET = 1 << 21

Source = Union[str, Path, IO[str]]


# ---------------------------------------------------------------------------
# Result types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ContactEvent:
    a: str
    b: str
    start: float
    end: float

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass
class Ecdf:
    """Empirical CDF: sorted values with right-continuous cumulative fractions."""

    values: np.ndarray
    cdf: np.ndarray

    def __len__(self) -> int:
        return int(self.values.size)

    def rows(self) -> list[tuple[float, float]]:
        return [(float(v), float(c)) for v, c in zip(self.values, self.cdf)]


def ecdf(values: Iterable[float]) -> Ecdf:
    v = np.sort(np.asarray(list(values), dtype=float))
    if v.size == 0:
        return Ecdf(values=v, cdf=v.copy())
    return Ecdf(values=v, cdf=np.arange(1, v.size + 1, dtype=float) / v.size)


@dataclass
class RankedPreference:
    node: str
    fractions: list[float] = field(default_factory=list)
    on_time: float = 0.0

    @property
    def empty(self) -> bool:
        return self.on_time == 0.0


@dataclass
class VisitingPreference:
    per_node: dict[str, RankedPreference]
    mean: list[float]
    flagged: list[str] = field(default_factory=list)


@dataclass
class ReappearanceCurve:
    gaps_s: list[float]
    probabilities: list[float]
    pairs: list[int]

    @property
    def gaps_h(self) -> list[float]:
        return [g / 3600.0 for g in self.gaps_s]


@dataclass
class ContactSummary:
    events: list[ContactEvent]
    durations: Ecdf
    inter_meetings: Ecdf


@dataclass
class OccupancyFractions:
    """Measured time shares of one period: moving/paused per community, bridging."""

    period: int
    move: list[float]
    pause: list[float]
    tr: float
    time: float


@dataclass
class RunningStats:
    """Mergeable (count, sum, sum of squares) accumulator."""

    count: int = 0
    total: float = 0.0
    total_sq: float = 0.0

    def add(self, x: float) -> None:
        self.count += 1
        self.total += x
        self.total_sq += x * x

    def merge(self, other: RunningStats) -> RunningStats:
        return RunningStats(
            self.count + other.count,
            self.total + other.total,
            self.total_sq + other.total_sq,
        )

    @property
    def mean(self) -> float:
        return self.total / self.count if self.count else math.nan

    @property
    def variance(self) -> float:
        if self.count < 2:
            return 0.0
        m = self.mean
        return max((self.total_sq - self.count * m * m) / (self.count - 1), 0.0)

    @property
    def stderr(self) -> float:
        if self.count < 2:
            return 0.0
        return math.sqrt(self.variance / self.count)


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------

def _read_text(source: Source) -> str:
    if isinstance(source, (str, Path)):
        return Path(source).read_text(encoding="utf-8")
    return source.read()


def _parse_float(v: str, line: int, name: str) -> float:
    try:
        return float(v)
    except ValueError:
        raise TraceParseError(f"bad {name} value {v!r}", line=line) from None


def _parse_on(v: str, line: int) -> bool:
    s = v.strip().lower()
    if s in ("1", "true"):
        return True
    if s in ("0", "false"):
        return False
    raise TraceParseError(f"bad on value {v!r}", line=line)


def ingest_csv(source: Source) -> Trace:
    """Read a `t,node,x,y,on` CSV into a Trace on the union time grid.

    Nodes missing a sample at some grid time are off there, with NaN position.
    """
    rows = list(csv.reader(io.StringIO(_read_text(source))))
    if not rows or not any(cell.strip() for cell in rows[0]):
        raise TraceParseError("missing header", line=1)
    if [c.strip() for c in rows[0]] != TRACE_HEADER:
        raise TraceParseError(f"expected header {','.join(TRACE_HEADER)}", line=1)

    node_order: dict[str, int] = {}
    samples: dict[str, list[tuple[float, float, float, bool]]] = {}
    for n, row in enumerate(rows[1:], start=2):
        if not row or not any(cell.strip() for cell in row):
            continue
        if len(row) != 5:
            raise TraceParseError(f"expected 5 fields, got {len(row)}", line=n)
        t = _parse_float(row[0], n, "t")
        node = row[1].strip()
        x = _parse_float(row[2], n, "x")
        y = _parse_float(row[3], n, "y")
        on = _parse_on(row[4], n)
        seq = samples.setdefault(node, [])
        if node not in node_order:
            node_order[node] = len(node_order)
        if seq and t <= seq[-1][0]:
            raise NonMonotoneTimeError(f"node '{node}' time {t!r} does not follow {seq[-1][0]!r}", line=n)
        seq.append((t, x, y, on))

    if not samples:
        raise TraceParseError("no samples", line=2)

    times = np.array(sorted({s[0] for seq in samples.values() for s in seq}))
    diffs = np.diff(times)
    dt = float(np.median(diffs)) if diffs.size else 1.0
    ids = tuple(node_order)
    xs = np.full((times.size, len(ids)), np.nan)
    ys = np.full((times.size, len(ids)), np.nan)
    ons = np.zeros((times.size, len(ids)), dtype=bool)
    for i, node in enumerate(ids):
        arr = samples[node]
        idx = np.searchsorted(times, [s[0] for s in arr])
        xs[idx, i] = [s[1] for s in arr]
        ys[idx, i] = [s[2] for s in arr]
        ons[idx, i] = [s[3] for s in arr]
    return Trace(dt=dt, node_ids=ids, times=times, x=xs, y=ys, on=ons, metadata={"source": "csv"})


def ingest_contacts_csv(source: Source) -> ContactSummary:
    """Read an `a,b,start_s,end_s` encounter log into contact events + ECDFs."""
    rows = list(csv.reader(io.StringIO(_read_text(source))))
    if not rows or not any(cell.strip() for cell in rows[0]):
        raise TraceParseError("missing header", line=1)
    if [c.strip() for c in rows[0]] != CONTACT_HEADER:
        raise TraceParseError(f"expected header {','.join(CONTACT_HEADER)}", line=1)

    events: list[ContactEvent] = []
    last_end: dict[tuple[str, str], float] = {}
    for n, row in enumerate(rows[1:], start=2):
        if not row or not any(cell.strip() for cell in row):
            continue
        if len(row) != 4:
            raise TraceParseError(f"expected 4 fields, got {len(row)}", line=n)
        a, b = sorted((row[0].strip(), row[1].strip()))
        start = _parse_float(row[2], n, "start_s")
        end = _parse_float(row[3], n, "end_s")
        if end <= start:
            raise TraceParseError("end_s must be after start_s", line=n)
        key = (a, b)
        if key in last_end and start < last_end[key]:
            raise NonMonotoneTimeError(f"contacts of {a}-{b} overlap or are out of order", line=n)
        last_end[key] = end
        events.append(ContactEvent(a, b, start, end))
    return _summarize(events)


def _summarize(events: list[ContactEvent]) -> ContactSummary:
    by_pair: dict[tuple[str, str], list[ContactEvent]] = {}
    for e in events:
        by_pair.setdefault((e.a, e.b), []).append(e)
    gaps: list[float] = []
    for seq in by_pair.values():
        seq.sort(key=lambda e: e.start)
        gaps.extend(nxt.start - prev.end for prev, nxt in zip(seq, seq[1:]))
    return ContactSummary(
        events=events,
        durations=ecdf(e.duration for e in events),
        inter_meetings=ecdf(gaps),
    )


# ---------------------------------------------------------------------------
# Trace metrics
# ---------------------------------------------------------------------------

def _cells(trace: Trace, grid: float) -> np.ndarray:
    """Integer cell id per sample; -1 where the position is unknown."""
    with np.errstate(invalid="ignore"):
        cx = np.floor(trace.x / grid)
        cy = np.floor(trace.y / grid)
    ok = np.isfinite(cx) & np.isfinite(cy)
    ids = np.where(ok, cx * 1_000_003 + cy, -1)
    return ids.astype(np.int64)


def visiting_preference(
    trace: Trace,
    grid: float = 100.0,
    field_edge: Optional[float] = None,
) -> VisitingPreference:
    """Per-node on-time share per grid cell, ranked descending."""
    if grid <= 0:
        raise InvariantError("grid cell size must be > 0")
    if field_edge is not None and abs(field_edge / grid - round(field_edge / grid)) > 1e-9:
        raise InvariantError(f"grid {grid:g} must divide the field edge {field_edge:g}")
    cells = _cells(trace, grid)
    per_node: dict[str, RankedPreference] = {}
    flagged: list[str] = []
    curves: list[np.ndarray] = []
    for i, node in enumerate(trace.node_ids):
        mask = trace.on[:, i] & (cells[:, i] >= 0)
        pref = RankedPreference(node=node, on_time=float(mask.sum()) * trace.dt)
        if mask.any():
            _, counts = np.unique(cells[mask, i], return_counts=True)
            frac = np.sort(counts)[::-1] / counts.sum()
            pref.fractions = [float(f) for f in frac]
            curves.append(frac)
        else:
            flagged.append(node)
            logger.warning("node %s is never on; no visiting preference", node)
        per_node[node] = pref

    mean: list[float] = []
    if curves:
        width = max(c.size for c in curves)
        padded = np.zeros((len(curves), width))
        for r, c in enumerate(curves):
            padded[r, : c.size] = c
        mean = [float(v) for v in padded.mean(axis=0)]
    return VisitingPreference(per_node=per_node, mean=mean, flagged=flagged)


def reappearance_curve(
    trace: Trace,
    grid: float,
    gaps: Sequence[float],
    normalize: str = "on_both",
) -> ReappearanceCurve:
    """Probability of being seen in the same grid cell ``gap`` seconds later.

    Pooled over nodes and sample instants. ``normalize="on_both"`` conditions
    on the node being on at both instants; ``"all"`` divides by every sample
    pair, giving the joint probability of on-at-both and same cell.
    """
    if normalize not in ("on_both", "all"):
        raise ValueError(f"normalize must be 'on_both' or 'all', got {normalize!r}")
    cells = _cells(trace, grid)
    on = trace.on & (cells >= 0)
    n = trace.sample_count
    probs: list[float] = []
    pairs: list[int] = []
    for gap in gaps:
        lag = int(round(gap / trace.dt))
        if lag <= 0 or lag >= n:
            raise InvariantError(f"gap {gap:g} s does not fit a trace of {n} samples")
        both = on[:-lag] & on[lag:]
        same = both & (cells[:-lag] == cells[lag:])
        denom = int(both.sum()) if normalize == "on_both" else int(both.size)
        pairs.append(denom)
        probs.append(float(same.sum()) / denom if denom else 0.0)
    return ReappearanceCurve(gaps_s=[float(g) for g in gaps], probabilities=probs, pairs=pairs)


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """(start, stop) index pairs of maximal True runs."""
    if not mask.any():
        return []
    padded = np.concatenate(([False], mask, [False])).astype(np.int8)
    d = np.diff(padded)
    return list(zip(np.flatnonzero(d == 1), np.flatnonzero(d == -1)))


def contacts(trace: Trace, range_m: float) -> ContactSummary:
    """Maximal in-range runs per node pair (closed threshold: distance ≤ K)."""
    events: list[ContactEvent] = []
    m = trace.node_count
    for a in range(m):
        for b in range(a + 1, m):
            with np.errstate(invalid="ignore"):
                dist = np.hypot(trace.x[:, a] - trace.x[:, b], trace.y[:, a] - trace.y[:, b])
                mask = trace.on[:, a] & trace.on[:, b] & (dist <= range_m)
            for i0, i1 in _runs(mask):
                events.append(ContactEvent(
                    trace.node_ids[a],
                    trace.node_ids[b],
                    float(trace.times[i0]),
                    float(trace.times[i1 - 1]) + trace.dt,
                ))
    return _summarize(events)


def pair_chunk(nodes: int, budget: int = PAIR_BUDGET) -> int:
    """Samples per block so that a (samples, nodes, nodes) array stays within ``budget``."""
    return max(1, budget // max(nodes * nodes, 1))


def empirical_node_degree(trace: Trace, range_m: float, chunk: Optional[int] = None) -> dict[str, float]:
    """Mean number of other on-nodes within ``range_m``, per node."""
    m = trace.node_count
    chunk = chunk or pair_chunk(m)
    counts = np.zeros(m)
    for s in range(0, trace.sample_count, chunk):
        x = trace.x[s : s + chunk]
        y = trace.y[s : s + chunk]
        on = trace.on[s : s + chunk]
        with np.errstate(invalid="ignore"):
            dx = x[:, :, None] - x[:, None, :]
            dy = y[:, :, None] - y[:, None, :]
            near = (dx * dx + dy * dy) <= range_m * range_m
        near &= on[:, None, :]
        idx = np.arange(m)
        near[:, idx, idx] = False
        counts += near.sum(axis=(0, 2))
    n = max(trace.sample_count, 1)
    return {node: float(c / n) for node, c in zip(trace.node_ids, counts)}


def occupancy_fractions(trajectory, profile: NodeProfile) -> list[OccupancyFractions]:
    """Exact time shares per period from a trajectory's legs.

    Legs are attributed to the period their epoch belongs to.
    """
    dur = trajectory.t1 - trajectory.t0
    out: list[OccupancyFractions] = []
    for t, period in enumerate(profile.schedule):
        in_t = trajectory.period == t
        total = float(dur[in_t].sum())
        move = np.zeros(period.size)
        pause = np.zeros(period.size)
        sel = in_t & (trajectory.phase == Phase.MOVING)
        np.add.at(move, trajectory.community[sel], dur[sel])
        sel = in_t & (trajectory.phase == Phase.PAUSED)
        np.add.at(pause, trajectory.community[sel], dur[sel])
        tr = float(dur[in_t & (trajectory.phase == Phase.TRANSITIONAL)].sum())
        scale = 1.0 / total if total > 0 else 0.0
        out.append(OccupancyFractions(
            period=t,
            move=[float(v * scale) for v in move],
            pause=[float(v * scale) for v in pause],
            tr=tr * scale,
            time=total,
        ))
    return out


# ---------------------------------------------------------------------------
# Monte Carlo harnesses
# ---------------------------------------------------------------------------

def iteration_streams(seed: int, iteration: int, count: int) -> list[Generator]:
    """``count`` independent generators for one Monte Carlo iteration."""
    children = SeedSequence(seed, spawn_key=(iteration,)).spawn(count)
    return [Generator(SFC64(c)) for c in children]


def _finish(stats: RunningStats, samples: list[float], timeouts: int, label: str) -> MonteCarloResult:
    if timeouts:
        logger.warning("%s: %d iterations timed out and were excluded", label, timeouts)
    return MonteCarloResult(
        mean=stats.mean,
        stderr=stats.stderr,
        count=stats.count,
        timeouts=timeouts,
        samples=samples,
    )


def _default_cap(analytic: float) -> float:
    if math.isfinite(analytic) and analytic > 0:
        return TIMEOUT_FACTOR * analytic
    return DEFAULT_TIMEOUT_S


def first_hit(process, target: tuple[float, float], range_m: float, cap: float) -> Optional[float]:
    """Earliest on-time at which ``process`` comes within range of ``target``."""
    tx, ty = target
    for leg in process.iter_legs():
        if leg.t0 > cap:
            return None
        if not leg.on:
            continue
        s = segment_hit_time(leg.x0, leg.y0, leg.vx, leg.vy, tx, ty, range_m, leg.t1 - leg.t0)
        if s is not None:
            hit = leg.t0 + s
            return hit if hit <= cap else None


def empirical_hitting_time(
    profile: NodeProfile,
    range_m: float,
    iterations: int,
    seed: int = 0,
    cap: Optional[float] = None,
) -> MonteCarloResult:
    """Mean time for a stationary-started node to reach a uniform target."""
    from tvcmob.analytics import hitting_time
    from tvcmob.simulator import NodeProcess

    if cap is None:
        try:
            cap = _default_cap(hitting_time(profile, range_m).hitting_time)
        except NoHitPossibleError:
            cap = DEFAULT_TIMEOUT_S
    stats = RunningStats()
    samples: list[float] = []
    timeouts = 0
    for i in range(iterations):
        move_rng, target_rng = iteration_streams(seed, i, 2)
        target = uniform_point(profile.field.rect, target_rng)
        proc = NodeProcess(profile, move_rng)
        hit = first_hit(proc, target, range_m, cap)
        if hit is None:
            timeouts += 1
            continue
        stats.add(hit)
        samples.append(hit)
    return _finish(stats, samples, timeouts, f"hitting {profile.node_id}")


def first_meeting(proc_a, proc_b, range_m: float, cap: float) -> Optional[float]:
    """Earliest time both nodes are on and within range of each other."""
    legs_a = proc_a.iter_legs()
    legs_b = proc_b.iter_legs()
    la = next(legs_a)
    lb = next(legs_b)
    while True:
        start = max(la.t0, lb.t0)
        stop = min(la.t1, lb.t1)
        if start > cap:
            return None
        if la.on and lb.on and stop > start:
            ax = la.x0 + la.vx * (start - la.t0)
            ay = la.y0 + la.vy * (start - la.t0)
            bx = lb.x0 + lb.vx * (start - lb.t0)
            by = lb.y0 + lb.vy * (start - lb.t0)
            s = relative_hit_time(ax, ay, la.vx, la.vy, bx, by, lb.vx, lb.vy, range_m, stop - start)
            if s is not None:
                hit = start + s
                return hit if hit <= cap else None
        if la.t1 <= lb.t1:
            la = next(legs_a)
        else:
            lb = next(legs_b)


def empirical_meeting_time(
    profile_a: NodeProfile,
    profile_b: NodeProfile,
    range_m: float,
    iterations: int,
    seed: int = 0,
    cap: Optional[float] = None,
) -> MonteCarloResult:
    """Mean time until two stationary-started nodes first meet."""
    from tvcmob.analytics import meeting_time
    from tvcmob.simulator import NodeProcess

    if cap is None:
        try:
            cap = _default_cap(meeting_time(profile_a, profile_b, range_m).meeting_time)
        except NoMeetingPossibleError:
            cap = DEFAULT_TIMEOUT_S
    stats = RunningStats()
    samples: list[float] = []
    timeouts = 0
    for i in range(iterations):
        rng_a, rng_b = iteration_streams(seed, i, 2)
        hit = first_meeting(NodeProcess(profile_a, rng_a), NodeProcess(profile_b, rng_b), range_m, cap)
        if hit is None:
            timeouts += 1
            continue
        stats.add(hit)
        samples.append(hit)
    return _finish(stats, samples, timeouts, f"meeting {profile_a.node_id}-{profile_b.node_id}")


# ---------------------------------------------------------------------------
# Curve CSVs
# ---------------------------------------------------------------------------

def _write_rows(path: Path, header: str, rows: Iterable[tuple]) -> None:
    lines = [header] + [",".join(repr(float(v)) if isinstance(v, (float, np.floating)) else str(v) for v in r) for r in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_preference_csv(path: Path, fractions: Sequence[float]) -> None:
    _write_rows(path, "rank,fraction", ((r, float(f)) for r, f in enumerate(fractions, start=1)))


def write_reappearance_csv(path: Path, curve: ReappearanceCurve) -> None:
    _write_rows(path, "gap_h,probability", zip(curve.gaps_h, curve.probabilities))


def write_ecdf_csv(path: Path, dist: Ecdf) -> None:
    _write_rows(path, "value,cdf", dist.rows())
