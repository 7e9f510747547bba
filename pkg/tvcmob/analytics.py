"""Closed-form node degree, hitting time and meeting time.

All quantities are built from per-period state occupancy (occupancy.py) and
exact community overlap areas (geometry.py):

    degree   Σ_t w_t Σ_j P_j(a) Σ_b Σ_k P_k(b)·P_on · πK²·A/(C_j²C_k²)
    hitting  unit-time P_h per scenario cell → P_H per period → cycle P → HT
    meeting  unit-time P_m per node pair    → P_M per period → cycle Q → MT

Roaming and transitional time count as field-sized states. A first event
inside a period is placed at the truncated geometric mean of that period.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from tvcmob.errors import InvariantError, NoHitPossibleError, NoMeetingPossibleError
from tvcmob.geometry import Rect, build_arrangement, intersection_area, relative_speed
from tvcmob.models import (
    CellHitting,
    DegreeContribution,
    DegreeReport,
    HittingReport,
    MeetingReport,
    NodeProfile,
    StateProbabilities,
    TimePeriod,
)
from tvcmob.occupancy import period_weights, state_probabilities

logger = logging.getLogger(__name__)


def _check_same_schedule(profiles: Sequence[NodeProfile]) -> None:
    ref = profiles[0]
    for p in profiles[1:]:
        if p.field.edge_length != ref.field.edge_length:
            raise InvariantError(f"node '{p.node_id}' uses a different field than '{ref.node_id}'")
        if p.period_durations() != ref.period_durations():
            raise InvariantError(
                f"node '{p.node_id}' period durations {p.period_durations()} differ from "
                f"'{ref.node_id}' {ref.period_durations()}"
            )


# ---------------------------------------------------------------------------
# Node degree
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _DegreeState:
    label: str
    rect: Rect
    weight: float
    on_weight: float


def _degree_states(profile: NodeProfile, t: int) -> list[_DegreeState]:
    """Local communities plus one field-sized state for roaming and bridging.

    Transitional time is spread over the whole field, so it is merged with the
    roaming community (or stands alone as a field-sized state without one).
    """
    sp = state_probabilities(profile, t)
    period = profile.schedule[t]
    states: list[_DegreeState] = []
    field_weight = sp.p_tr
    field_on = sp.p_tr * sp.p_on_transitional
    for j, comm in enumerate(period.communities):
        pj = sp.p_state[j]
        if comm.is_roaming:
            field_weight += pj
            field_on += pj * sp.p_on[j]
        else:
            states.append(_DegreeState(comm.id, comm.rect, pj, pj * sp.p_on[j]))
    if field_weight > 0.0:
        states.append(_DegreeState("<field>", profile.field.rect, field_weight, field_on))
    return states


def pairwise_degree_contribution(
    a: NodeProfile,
    j: int,
    b: NodeProfile,
    k: int,
    t: int,
    range_m: float,
) -> float:
    """Expected neighbor count from b in community k seen by a in community j.

    πK²/C_j² · A/C_k², symmetric under swapping (a, j) and (b, k).
    """
    ra = a.schedule[t].communities[j].rect
    rb = b.schedule[t].communities[k].rect
    return _contribution(ra, rb, range_m)


def _contribution(ra: Rect, rb: Rect, range_m: float) -> float:
    area = intersection_area(ra, rb)
    if area == 0.0:
        return 0.0
    return math.pi * range_m * range_m * area / (ra.area * rb.area)


def pairwise_degree(a: NodeProfile, b: NodeProfile, range_m: float) -> float:
    """Cycle-averaged expected degree contribution of peer b to node a."""
    return sum(c.value for c in _pair_contributions(a, b, range_m))


def site_contribution(b: NodeProfile, site: Rect, t: int, range_m: float) -> float:
    """Expected count of b, on and within range, seen from a uniform point of ``site``.

    The inner sum of the degree formula with the observer's community
    replaced by ``site``.
    """
    return math.fsum(s.on_weight * _contribution(site, s.rect, range_m) for s in _degree_states(b, t))


def _pair_contributions(a: NodeProfile, b: NodeProfile, range_m: float) -> list[DegreeContribution]:
    _check_same_schedule([a, b])
    out: list[DegreeContribution] = []
    for t, w in enumerate(period_weights(a)):
        states_a = _degree_states(a, t)
        states_b = _degree_states(b, t)
        for sa in states_a:
            for sb in states_b:
                c = _contribution(sa.rect, sb.rect, range_m)
                if c == 0.0:
                    continue
                out.append(DegreeContribution(
                    period=t,
                    community=sa.label,
                    peer=b.node_id,
                    peer_community=sb.label,
                    value=float(w * sa.weight * sb.on_weight * c),
                ))
    return out


def average_node_degree(
    a: NodeProfile,
    peers: Sequence[NodeProfile],
    range_m: float,
) -> DegreeReport:
    """Expected number of on-peers within ``range_m`` of node ``a``.

    ``peers`` may include ``a`` itself; it is skipped by node id.
    """
    if range_m <= 0:
        raise InvariantError("transmission range must be > 0")
    report = DegreeReport(node_id=a.node_id, range_m=range_m)
    for b in peers:
        if b.node_id == a.node_id:
            continue
        report.contributions.extend(_pair_contributions(a, b, range_m))
    report.degree = float(math.fsum(c.value for c in report.contributions))
    logger.debug("degree(%s, K=%g) = %.6f over %d peers", a.node_id, range_m, report.degree, len(peers))
    return report


# ---------------------------------------------------------------------------
# Hitting time
# ---------------------------------------------------------------------------

def _compound(p_unit: float, duration: float) -> float:
    """1 − (1 − p)^T without cancellation."""
    if p_unit <= 0.0:
        return 0.0
    if p_unit >= 1.0:
        return 1.0
    return float(-math.expm1(duration * math.log1p(-p_unit)))


def unit_hitting_probability(
    a: NodeProfile,
    inside: Sequence[bool],
    t: int,
    range_m: float,
) -> float:
    """P_h for period t given which of its communities contain the target.

    Σ_j I(target ∈ j)·P_move,j·2K·v̄_j/C_j²; transitional epochs contribute nothing.
    """
    sp = state_probabilities(a, t)
    period = a.schedule[t]
    total = 0.0
    for j, comm in enumerate(period.communities):
        if inside[j]:
            total += sp.p_move[j] * 2.0 * range_m * period.v_bar(j) / comm.area
    return total


def _truncated_mean(p_unit: float, duration: float) -> float:
    """E[X | X ≤ T] for X geometric with success probability ``p_unit``.

    1/p − T(1−p)^T / (1−(1−p)^T); tends to (T+1)/2 as p·T → 0.
    """
    if p_unit >= 1.0:
        return 1.0
    if p_unit * duration < 1e-9:
        return 0.5 * (duration + 1.0)
    p_H = _compound(p_unit, duration)
    return 1.0 / p_unit - duration * (1.0 - p_H) / p_H


def _expected_time(
    p_unit: Sequence[float],
    p_period: Sequence[float],
    durations: Sequence[float],
) -> tuple[float, float, list[float]]:
    """Shared cycle assembly for hitting and meeting times.

    A first event in period t costs the whole cycles missed before it, the
    periods preceding t in its cycle, and the mean offset of the event inside
    t given that it falls there. Returns (expected time, cycle probability,
    first-event weights per period).
    """
    survive = 1.0
    for pp in p_period:
        survive *= 1.0 - pp
    cycle_p = 1.0 - survive
    if cycle_p <= 0.0:
        return math.inf, 0.0, [0.0] * len(p_period)

    cycle = sum(durations)
    weights: list[float] = []
    expected = 0.0
    prefix = 0.0
    reach = 1.0
    for pu, pp, dur in zip(p_unit, p_period, durations):
        w = reach * pp / cycle_p
        weights.append(w)
        if w > 0.0:
            expected += w * (cycle * (1.0 / cycle_p - 1.0) + prefix + _truncated_mean(pu, dur))
        reach *= 1.0 - pp
        prefix += dur
    return expected, cycle_p, weights


def hitting_time(a: NodeProfile, range_m: float) -> HittingReport:
    """Expected time for ``a`` to come within ``range_m`` of a uniform target."""
    if range_m <= 0:
        raise InvariantError("transmission range must be > 0")
    rects = [
        ((t, j), comm.rect)
        for t, period in enumerate(a.schedule)
        for j, comm in enumerate(period.communities)
    ]
    cells = build_arrangement(rects, a.field.edge_length)
    durations = a.period_durations()
    report = HittingReport(node_id=a.node_id, range_m=range_m)
    short_periods: set[int] = set()

    total = 0.0
    any_hit = False
    for cell in cells:
        prob = cell.probability(a.field.edge_length)
        p_h = [
            unit_hitting_probability(
                a, [cell.inside((t, j)) for j in range(period.size)], t, range_m
            )
            for t, period in enumerate(a.schedule)
        ]
        p_H = [_compound(ph, dur) for ph, dur in zip(p_h, durations)]
        ht, cycle_p, weights = _expected_time(p_h, p_H, durations)
        for t, (ph, dur) in enumerate(zip(p_h, durations)):
            if 0.0 < ph * dur < 1.0:
                short_periods.add(t)
        any_hit = any_hit or cycle_p > 0.0
        report.cells.append(CellHitting(
            probability=prob,
            membership={f"{t}:{a.schedule[t].communities[j].id}": cell.inside((t, j)) for t, j in cell.keys},
            p_h=p_h,
            p_H=p_H,
            cycle_probability=cycle_p,
            first_hit_weights=weights,
            hitting_time=ht,
        ))
        if prob > 0.0:
            total += prob * ht

    if not any_hit:
        raise NoHitPossibleError(f"node '{a.node_id}' can never come within {range_m:g} m of the target")
    report.hitting_time = total
    if math.isinf(total):
        report.warnings.append("some target cells are never hit; hitting time is infinite")
    for t in sorted(short_periods):
        report.warnings.append(
            f"period {t}: P_h·T < 1 for some cells; most first hits fall in a later cycle"
        )
    for w in report.warnings:
        logger.warning("hitting_time(%s): %s", a.node_id, w)
    return report


# ---------------------------------------------------------------------------
# Meeting time
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OverlapEstimate:
    """Monte Carlo overlap statistics for two randomly placed communities."""

    p_overlap: float
    p_overlap_stderr: float
    mean_area: float
    mean_area_stderr: float
    samples: int

    def to_dict(self) -> dict:
        return {
            "p_overlap": self.p_overlap,
            "p_overlap_stderr": self.p_overlap_stderr,
            "mean_area": self.mean_area,
            "mean_area_stderr": self.mean_area_stderr,
            "samples": self.samples,
        }


def _origins(edge: float, field_edge: float, n: int, rng: np.random.Generator, placement: str) -> np.ndarray:
    cells = field_edge / edge
    grid = abs(cells - round(cells)) < 1e-9
    if placement == "grid" or (placement == "auto" and grid):
        if not grid:
            raise InvariantError(f"grid placement needs edge {edge:g} to divide {field_edge:g}")
        return edge * rng.integers(0, int(round(cells)), n).astype(float)
    return rng.uniform(0.0, field_edge - edge, n)


def estimate_overlap_probability(
    edge_a: float,
    edge_b: float,
    field_edge: float,
    samples: int = 100_000,
    seed: int = 0,
    placement: str = "auto",
) -> OverlapEstimate:
    """P(overlap) and E[A | overlap] for independently placed squares.

    ``placement`` follows the configuration's random placement ("auto"):
    grid-aligned cells when the edge divides the field, else uniform origins.
    "grid" and "uniform" force one rule.
    """
    for e in (edge_a, edge_b):
        if not 0.0 < e <= field_edge:
            raise InvariantError(f"community edge {e:g} must lie in (0, {field_edge:g}]")
    rng = np.random.default_rng(seed)
    ax = _origins(edge_a, field_edge, samples, rng, placement)
    ay = _origins(edge_a, field_edge, samples, rng, placement)
    bx = _origins(edge_b, field_edge, samples, rng, placement)
    by = _origins(edge_b, field_edge, samples, rng, placement)
    w = np.minimum(ax + edge_a, bx + edge_b) - np.maximum(ax, bx)
    h = np.minimum(ay + edge_a, by + edge_b) - np.maximum(ay, by)
    area = np.where((w > 0) & (h > 0), w * h, 0.0)
    hit = area > 0.0
    p = float(hit.mean())
    p_se = math.sqrt(p * (1.0 - p) / samples)
    if hit.any():
        cond = area[hit]
        mean_area = float(cond.mean())
        area_se = float(cond.std(ddof=1) / math.sqrt(cond.size)) if cond.size > 1 else 0.0
    else:
        mean_area, area_se = 0.0, 0.0
    return OverlapEstimate(p, p_se, mean_area, area_se, samples)


@dataclass(frozen=True)
class _MeetingState:
    index: Optional[int]
    rect: Rect
    p_move: float
    p_pause: float
    speed: tuple[float, float]

    @property
    def v_bar(self) -> float:
        return 0.5 * (self.speed[0] + self.speed[1])


def _transitional_speed(period: TimePeriod, sp: StateProbabilities) -> tuple[float, float]:
    # Bridging epochs keep the speed range of the community being left.
    p = period.matrix()
    weights = [
        sp.pi[k] * float(p[k] @ np.array(sp.l_tr[k])) / period.v_bar(k) for k in range(period.size)
    ]
    total = math.fsum(weights)
    if total <= 0.0:
        return period.speed_range
    lo = math.fsum(w * period.speed(k)[0] for k, w in enumerate(weights)) / total
    hi = math.fsum(w * period.speed(k)[1] for k, w in enumerate(weights)) / total
    return lo, hi


def _meeting_states(profile: NodeProfile, t: int) -> list[_MeetingState]:
    """Communities of period t plus a field-sized state for transitional epochs.

    The transitional state always moves and carries index None.
    """
    sp = state_probabilities(profile, t)
    period = profile.schedule[t]
    states = [
        _MeetingState(j, comm.rect, sp.p_move[j], sp.p_pause[j], period.speed(j))
        for j, comm in enumerate(period.communities)
    ]
    if sp.p_tr > 0.0:
        states.append(_MeetingState(None, profile.field.rect, sp.p_tr, 0.0, _transitional_speed(period, sp)))
    return states


def _pair_meeting_rate(
    sa: _MeetingState,
    sb: _MeetingState,
    range_m: float,
    area: float,
    v_hat: Optional[float],
) -> float:
    """Unit-time meeting probability from a in state ``sa`` and b in ``sb``."""
    if area <= 0.0:
        return 0.0
    va = sa.v_bar
    vb = sb.v_bar
    if v_hat is not None:
        rel = v_hat * 0.5 * (va + vb)
    else:
        rel = relative_speed(sa.speed, sb.speed)[0]
    rate = (
        sa.p_move * sb.p_move * rel
        + sa.p_move * sb.p_pause * va
        + sa.p_pause * sb.p_move * vb
    )
    return rate * 2.0 * range_m * area / (sa.rect.area * sb.rect.area)


def unit_meeting_probability(
    a: NodeProfile,
    b: NodeProfile,
    t: int,
    range_m: float,
    v_hat: Optional[float] = None,
    overlaps: Optional[dict[tuple[int, int, int], OverlapEstimate]] = None,
) -> float:
    """P_m for period t, summed over every overlapping pair of states.

    States are the communities of each node plus a field-sized transitional
    state. Without ``v_hat`` the move-move term uses the Monte Carlo mean
    relative speed of the two speed ranges. ``overlaps`` maps (t, j, k) to an
    overlap estimate for randomly placed community pairs; such a pair
    contributes P_ov·P_m evaluated at E[A | overlap].
    """
    total = 0.0
    for sa in _meeting_states(a, t):
        for sb in _meeting_states(b, t):
            est = None
            if overlaps and sa.index is not None and sb.index is not None:
                est = overlaps.get((t, sa.index, sb.index))
            if est is not None:
                total += est.p_overlap * _pair_meeting_rate(sa, sb, range_m, est.mean_area, v_hat)
            else:
                area = intersection_area(sa.rect, sb.rect)
                total += _pair_meeting_rate(sa, sb, range_m, area, v_hat)
    return total


def meeting_time(
    a: NodeProfile,
    b: NodeProfile,
    range_m: float,
    v_hat: Optional[float] = None,
    overlaps: Optional[dict[tuple[int, int, int], OverlapEstimate]] = None,
) -> MeetingReport:
    """Expected time until nodes ``a`` and ``b`` first come within range."""
    if range_m <= 0:
        raise InvariantError("transmission range must be > 0")
    _check_same_schedule([a, b])
    durations = a.period_durations()
    report = MeetingReport(node_a=a.node_id, node_b=b.node_id, range_m=range_m)

    for t, dur in enumerate(durations):
        pm = unit_meeting_probability(a, b, t, range_m, v_hat, overlaps)
        if pm > 1.0:
            report.warnings.append(f"period {t}: P_m = {pm:.4g} > 1 clipped to 1 (range too large)")
            pm = 1.0
        if 0.0 < pm * dur < 1.0:
            report.warnings.append(f"period {t}: P_m·T < 1; most first meetings fall in a later cycle")
        report.p_m.append(pm)
        report.p_M.append(_compound(pm, dur))

    mt, q, _ = _expected_time(report.p_m, report.p_M, durations)
    if q <= 0.0:
        raise NoMeetingPossibleError(f"nodes '{a.node_id}' and '{b.node_id}' never share an area")
    report.meeting_time = mt
    report.cycle_probability = q
    for w in report.warnings:
        logger.warning("meeting_time(%s, %s): %s", a.node_id, b.node_id, w)
    return report
