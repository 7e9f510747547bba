"""Case studies built on the model: epidemic spread and greedy forwarding.

- si_solve integrates the multi-group SI fluid model with RK4 and verifies
  the step by halving it.
- epidemic_simulate replays generated traces and spreads one packet hop by
  hop at every sample.
- greedy_forwarding_success routes over random snapshots of a trace;
  nodes_needed inverts the (affine in M) analytic degree, averaged over the
  population or seen from the route site, to size a population.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from numpy.random import Generator, SeedSequence, SFC64

from tvcmob.analytics import pairwise_degree, site_contribution, unit_meeting_probability
from tvcmob.errors import InvariantError, StepTooCoarseError
from tvcmob.geometry import Rect
from tvcmob.models import NodeProfile, RunSpec, Trace
from tvcmob.simulator import generate_trace
from tvcmob.stats import pair_chunk

logger = logging.getLogger(__name__)

# Relative change of the final value allowed when the step is halved.
HALVING_TOLERANCE = 1e-3


# ---------------------------------------------------------------------------
# SI model
# ---------------------------------------------------------------------------

@dataclass
class SiParams:
    """Group sizes, pairwise contact rates and initial infections.

    ``beta_schedule`` is a repeating list of (duration, β matrix); a single
    entry means constant β.
    """

    group_sizes: tuple[float, ...]
    beta_schedule: list[tuple[float, np.ndarray]]
    initial_infected: tuple[float, ...]
    group_names: tuple[str, ...] = ()

    @classmethod
    def constant(cls, group_sizes: Sequence[float], beta, initial_infected: Sequence[float]) -> SiParams:
        return cls(
            group_sizes=tuple(float(m) for m in group_sizes),
            beta_schedule=[(math.inf, np.asarray(beta, dtype=float))],
            initial_infected=tuple(float(i) for i in initial_infected),
        )

    @property
    def total(self) -> float:
        return float(sum(self.group_sizes))

    def validate(self) -> None:
        g = len(self.group_sizes)
        if len(self.initial_infected) != g:
            raise InvariantError("initial_infected needs one entry per group")
        for m, i0 in zip(self.group_sizes, self.initial_infected):
            if not 0.0 <= i0 <= m:
                raise InvariantError(f"initial infected {i0:g} outside [0, {m:g}]")
        if not self.beta_schedule:
            raise InvariantError("beta schedule is empty")
        for dur, beta in self.beta_schedule:
            if dur <= 0:
                raise InvariantError("beta schedule durations must be > 0")
            if beta.shape != (g, g):
                raise InvariantError(f"beta must be {g}x{g}, got {beta.shape}")
            if (beta < 0).any():
                raise InvariantError("beta entries must be >= 0")
            if not np.allclose(beta, beta.T, rtol=1e-9, atol=0.0):
                raise InvariantError("beta must be symmetric")

    def beta_at(self, t: float) -> np.ndarray:
        if len(self.beta_schedule) == 1:
            return self.beta_schedule[0][1]
        cycle = sum(d for d, _ in self.beta_schedule)
        phase = math.fmod(t, cycle)
        acc = 0.0
        for dur, beta in self.beta_schedule:
            acc += dur
            if phase < acc:
                return beta
        return self.beta_schedule[-1][1]

    def to_dict(self) -> dict:
        return {
            "group_names": list(self.group_names),
            "group_sizes": list(self.group_sizes),
            "initial_infected": list(self.initial_infected),
            "beta_schedule": [
                {"duration_s": d if math.isfinite(d) else "inf", "beta": b.tolist()}
                for d, b in self.beta_schedule
            ],
        }


@dataclass
class EpidemicCurve:
    times: np.ndarray
    infected: np.ndarray
    stderr: Optional[np.ndarray] = None
    per_group: Optional[np.ndarray] = None

    def to_rows(self) -> list[tuple[float, float]]:
        return [(float(t), float(i)) for t, i in zip(self.times, self.infected)]

    def write_csv(self, path: Path) -> None:
        lines = ["t_s,infected"] + [f"{t!r},{i!r}" for t, i in self.to_rows()]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _rk4(params: SiParams, horizon: float, step: float) -> tuple[np.ndarray, np.ndarray]:
    m = np.array(params.group_sizes)
    y = np.array(params.initial_infected)
    n = int(math.ceil(horizon / step - 1e-9))
    times = np.arange(n + 1) * step
    out = np.empty((n + 1, m.size))
    out[0] = y

    def f(t: float, i: np.ndarray) -> np.ndarray:
        return (m - i) * (params.beta_at(t) @ i)

    for k in range(n):
        t = times[k]
        k1 = f(t, y)
        k2 = f(t + step / 2, y + step / 2 * k1)
        k3 = f(t + step / 2, y + step / 2 * k2)
        k4 = f(t + step, y + step * k3)
        y = np.clip(y + step / 6 * (k1 + 2 * k2 + 2 * k3 + k4), 0.0, m)
        out[k + 1] = y
    return times, out


def si_solve(params: SiParams, horizon: float, step: float = 1.0) -> EpidemicCurve:
    """Integrate dI_g/dt = Σ_h β_gh·I_h·(M_g − I_g) on a fixed grid."""
    params.validate()
    if horizon <= 0 or step <= 0:
        raise InvariantError("horizon and step must be > 0")
    times, groups = _rk4(params, horizon, step)
    _, fine = _rk4(params, horizon, step / 2)
    coarse_end = float(groups[-1].sum())
    fine_end = float(fine[-1].sum())
    rel = abs(coarse_end - fine_end) / max(abs(fine_end), 1e-300)
    if rel > HALVING_TOLERANCE:
        raise StepTooCoarseError(
            f"halving step {step:g} changed the final value by {rel:.3%} (limit {HALVING_TOLERANCE:.1%})"
        )
    return EpidemicCurve(times=times, infected=groups.sum(axis=1), per_group=groups)


def si_params_from_profiles(
    profiles: Sequence[NodeProfile],
    range_m: float,
    source_group: Optional[str] = None,
) -> SiParams:
    """SI parameters for a population: groups by ``NodeProfile.group``.

    β_gh per period is the unit-time meeting probability between the first
    members of groups g and h.
    """
    reps: dict[str, NodeProfile] = {}
    sizes: dict[str, int] = {}
    for p in profiles:
        reps.setdefault(p.group, p)
        sizes[p.group] = sizes.get(p.group, 0) + 1
    names = tuple(reps)
    source = source_group if source_group is not None else names[0]
    if source not in reps:
        raise InvariantError(f"unknown source group '{source}'")

    first = reps[names[0]]
    schedule = []
    for t, period in enumerate(first.schedule):
        beta = np.zeros((len(names), len(names)))
        for g, gn in enumerate(names):
            for h in range(g, len(names)):
                v = unit_meeting_probability(reps[gn], reps[names[h]], t, range_m)
                beta[g, h] = beta[h, g] = v
        schedule.append((period.duration, beta))
    return SiParams(
        group_sizes=tuple(float(sizes[g]) for g in names),
        beta_schedule=schedule,
        initial_infected=tuple(1.0 if g == source else 0.0 for g in names),
        group_names=names,
    )


def _trial_seed(seed: int, trial: int) -> int:
    return int(SeedSequence(seed, spawn_key=(trial,)).generate_state(1, np.uint64)[0])


def _spread(trace: Trace, range_m: float, source: int, chunk: Optional[int] = None) -> np.ndarray:
    """Infected count at every sample; one hop per sample, both nodes on."""
    m = trace.node_count
    chunk = chunk or pair_chunk(m)
    infected = np.zeros(m, dtype=bool)
    infected[source] = True
    counts = np.empty(trace.sample_count)
    r2 = range_m * range_m
    for s in range(0, trace.sample_count, chunk):
        x = trace.x[s : s + chunk]
        y = trace.y[s : s + chunk]
        on = trace.on[s : s + chunk]
        with np.errstate(invalid="ignore"):
            dx = x[:, :, None] - x[:, None, :]
            dy = y[:, :, None] - y[:, None, :]
            near = (dx * dx + dy * dy) <= r2
        near &= on[:, :, None] & on[:, None, :]
        for k in range(x.shape[0]):
            if not infected.all():
                infected |= near[k][infected].any(axis=0)
            counts[s + k] = infected.sum()
    return counts


def epidemic_simulate(
    run: RunSpec,
    range_m: float,
    source: Optional[str] = None,
    trials: int = 100,
) -> EpidemicCurve:
    """Mean infected count over ``trials`` independently generated traces.

    Without ``source`` every trial picks its source node uniformly.
    """
    ids = [p.node_id for p in run.profiles]
    if source is not None and source not in ids:
        raise InvariantError(f"unknown source node '{source}'")
    total: Optional[np.ndarray] = None
    total_sq: Optional[np.ndarray] = None
    times = None
    for trial in range(trials):
        seed = _trial_seed(run.seed, trial)
        trace = generate_trace(dataclasses.replace(run, seed=seed))
        if source is None:
            src = int(Generator(SFC64(SeedSequence(seed, spawn_key=(1 << 20,)))).integers(len(ids)))
        else:
            src = ids.index(source)
        counts = _spread(trace, range_m, src)
        if total is None:
            total = np.zeros_like(counts)
            total_sq = np.zeros_like(counts)
            times = trace.times
        total += counts
        total_sq += counts * counts
        logger.debug("epidemic trial %d: %d/%d infected at end", trial, int(counts[-1]), len(ids))
    assert total is not None and total_sq is not None and times is not None
    mean = total / trials
    var = np.maximum(total_sq / trials - mean * mean, 0.0)
    stderr = np.sqrt(var / max(trials - 1, 1))
    return EpidemicCurve(times=times, infected=mean, stderr=stderr)


# ---------------------------------------------------------------------------
# Greedy geographic forwarding
# ---------------------------------------------------------------------------

@dataclass
class RouteResult:
    success: bool
    path: list[int] = field(default_factory=list)


def greedy_route(
    positions: np.ndarray,
    on: np.ndarray,
    range_m: float,
    src: tuple[float, float],
    dst: tuple[float, float],
) -> RouteResult:
    """Greedy forwarding on one snapshot (no face routing).

    The packet enters at the on-node nearest ``src`` within range and moves to
    the neighbor closest to ``dst`` as long as that strictly reduces the
    distance. Success when a holder is within range of ``dst``.
    """
    if positions.size == 0 or not on.any():
        return RouteResult(False)
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    live = np.flatnonzero(on)
    d_src = np.hypot(pos[live, 0] - src[0], pos[live, 1] - src[1])
    if d_src.min() > range_m:
        return RouteResult(False)
    cur = int(live[np.argmin(d_src)])
    d_dst = np.hypot(pos[:, 0] - dst[0], pos[:, 1] - dst[1])
    path = [cur]
    while True:
        if d_dst[cur] <= range_m:
            return RouteResult(True, path)
        hop = np.hypot(pos[live, 0] - pos[cur, 0], pos[live, 1] - pos[cur, 1])
        cand = live[(hop <= range_m) & (d_dst[live] < d_dst[cur])]
        if cand.size == 0:
            return RouteResult(False, path)
        cur = int(cand[np.argmin(d_dst[cand])])
        path.append(cur)


def snapshot_times(run: RunSpec, trials: int) -> np.ndarray:
    """Uniform snapshot instants, fixed by the run seed."""
    rng = Generator(SFC64(SeedSequence(run.seed, spawn_key=(1 << 21,))))
    return rng.uniform(0.0, run.duration, trials)


def greedy_forwarding_success(
    run: RunSpec,
    range_m: float,
    src: tuple[float, float],
    dst: tuple[float, float],
    trials: int = 100,
    trace: Optional[Trace] = None,
) -> float:
    """Fraction of random snapshots in which greedy forwarding delivers.

    Pass a pre-generated ``trace`` to evaluate several ranges on the same
    snapshot set.
    """
    if not run.profiles:
        return 0.0
    if trace is None:
        trace = generate_trace(run)
    assert trace.trajectories is not None
    times = snapshot_times(run, trials)
    xs = np.stack([tr.position_at(times)[0] for tr in trace.trajectories], axis=1)
    ys = np.stack([tr.position_at(times)[1] for tr in trace.trajectories], axis=1)
    ons = np.stack([tr.on_at(times) for tr in trace.trajectories], axis=1)
    wins = 0
    for k in range(trials):
        pos = np.column_stack((xs[k], ys[k]))
        if greedy_route(pos, ons[k], range_m, src, dst).success:
            wins += 1
    return wins / trials


# ---------------------------------------------------------------------------
# Population sizing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PopulationGroup:
    profile: NodeProfile
    fraction: float


def scale_population(groups: Sequence[PopulationGroup], size: int) -> list[NodeProfile]:
    """``size`` node copies split across groups by largest remainder."""
    if size < 0:
        raise InvariantError("population size must be >= 0")
    total = sum(g.fraction for g in groups)
    raw = [g.fraction / total * size for g in groups]
    counts = [int(math.floor(r)) for r in raw]
    order = sorted(range(len(groups)), key=lambda i: raw[i] - counts[i], reverse=True)
    for i in order[: size - sum(counts)]:
        counts[i] += 1
    out: list[NodeProfile] = []
    for g, c in zip(groups, counts):
        name = g.profile.group or g.profile.node_id
        for i in range(c):
            out.append(dataclasses.replace(g.profile, node_id=f"{name}.{i}", group=name))
    return out


def degree_coefficients(groups: Sequence[PopulationGroup], range_m: float) -> tuple[float, float]:
    """(α, β) with mean analytic degree = α·M − β for an M-node population."""
    total = sum(g.fraction for g in groups)
    f = [g.fraction / total for g in groups]
    alpha = 0.0
    beta = 0.0
    for i, gi in enumerate(groups):
        for j, gj in enumerate(groups):
            d = pairwise_degree(gi.profile, dataclasses.replace(gj.profile, node_id=f"__peer{j}"), range_m)
            alpha += f[i] * f[j] * d
            if i == j:
                beta += f[i] * d
    return alpha, beta


def population_degree(groups: Sequence[PopulationGroup], size: int, range_m: float) -> float:
    alpha, beta = degree_coefficients(groups, range_m)
    return alpha * size - beta


def route_site(src: tuple[float, float], dst: tuple[float, float], field_edge: float) -> Optional[Rect]:
    """Square spanned by a route, clipped to the field; None for a zero-length route."""
    side = max(abs(dst[0] - src[0]), abs(dst[1] - src[1]))
    if side <= 0.0:
        return None
    side = min(side, field_edge)
    x0 = min(max(0.5 * (src[0] + dst[0] - side), 0.0), field_edge - side)
    y0 = min(max(0.5 * (src[1] + dst[1] - side), 0.0), field_edge - side)
    return Rect.square(x0, y0, side)


def site_degree_coefficients(
    groups: Sequence[PopulationGroup],
    range_m: float,
    site: Rect,
) -> list[tuple[float, float]]:
    """Per-period (α_t, β_t): a node at ``site`` sees α_t·M − β_t on-peers.

    The observer itself is removed, drawn from the groups in proportion to
    their density at the site.
    """
    periods = {len(g.profile.schedule) for g in groups}
    if len(periods) != 1:
        raise InvariantError("population groups follow schedules with different period counts")
    total = sum(g.fraction for g in groups)
    f = [g.fraction / total for g in groups]
    out: list[tuple[float, float]] = []
    for t in range(periods.pop()):
        c = [site_contribution(g.profile, site, t, range_m) for g in groups]
        alpha = math.fsum(fi * ci for fi, ci in zip(f, c))
        beta = math.fsum(fi * ci * ci for fi, ci in zip(f, c)) / alpha if alpha > 0.0 else 0.0
        out.append((alpha, beta))
    return out


def population_site_degree(
    groups: Sequence[PopulationGroup],
    size: int,
    range_m: float,
    site: Rect,
) -> list[float]:
    """Degree of a node at ``site`` in each period for an M-node population."""
    return [max(a * size - b, 0.0) for a, b in site_degree_coefficients(groups, range_m, site)]


def nodes_needed(
    groups: Sequence[PopulationGroup],
    reference_degree: float,
    range_m: float,
    site: Optional[Rect] = None,
) -> int:
    """Smallest population whose analytic degree reaches the reference.

    Without ``site`` the cycle-mean degree over all nodes is matched. With a
    ``site`` the degree of a node located there must reach the reference in
    every period, so the sparsest period decides.
    """
    if reference_degree <= 0:
        return 1
    if site is None:
        alpha, beta = degree_coefficients(groups, range_m)
        if alpha <= 0:
            raise InvariantError("population has zero expected degree at any size")
        return max(1, int(math.ceil((reference_degree + beta) / alpha - 1e-9)))

    need = 1
    for t, (alpha, beta) in enumerate(site_degree_coefficients(groups, range_m, site)):
        if alpha <= 0:
            raise InvariantError(f"period {t}: no node ever reaches the site {site.as_tuple()}")
        need = max(need, int(math.ceil((reference_degree + beta) / alpha - 1e-9)))
    logger.debug("nodes_needed at site %s: %d (reference %.6f)", site.as_tuple(), need, reference_degree)
    return need
