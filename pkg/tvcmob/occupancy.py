"""Stationary community distributions and long-run state occupancy.

For each period the community-selection chain has a stationary vector π.
Weighting π by the mean time a node spends per visit moving, pausing and
bridging between communities gives the fraction of time in each state.
"""

from __future__ import annotations

import logging
import math
from functools import lru_cache

import numpy as np

from tvcmob.errors import ReducibleChainError
from tvcmob.geometry import Rect
from tvcmob.models import (
    Community,
    FieldSpec,
    NodeProfile,
    OnOffKind,
    OnOffPolicy,
    StateProbabilities,
    TimePeriod,
)

logger = logging.getLogger(__name__)

# Mean distance from a uniform point of a square to its center, in edge units.
ROAMING_TRANSITION_FACTOR = 0.3826

STATIONARY_RESIDUAL = 1e-12


def is_irreducible(p: np.ndarray) -> bool:
    """True when every state reaches every other state."""
    n = p.shape[0]
    adj = p > 0.0

    def reach(a: np.ndarray) -> np.ndarray:
        seen = np.zeros(n, dtype=bool)
        seen[0] = True
        frontier = seen.copy()
        while frontier.any():
            nxt = a[frontier].any(axis=0) & ~seen
            seen |= nxt
            frontier = nxt
        return seen

    return bool(reach(adj).all() and reach(adj.T).all())


def stationary_distribution(p: np.ndarray | list) -> np.ndarray:
    """Stationary vector of a row-stochastic matrix (GTH elimination).

    Grassmann-Taksar-Heyman avoids subtractions, so π stays positive and the
    residual ‖πp − π‖∞ stays at rounding level even for stiff chains.
    """
    a = np.array(p, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ReducibleChainError(f"transition matrix must be square, got shape {a.shape}")
    n = a.shape[0]
    if not is_irreducible(a):
        raise ReducibleChainError("transition matrix is reducible; no unique stationary distribution")
    if n == 1:
        return np.ones(1)

    p_orig = a.copy()
    for k in range(n - 1, 0, -1):
        s = a[k, :k].sum()
        a[:k, k] /= s
        a[:k, :k] += np.outer(a[:k, k], a[k, :k])

    pi = np.zeros(n)
    pi[0] = 1.0
    for k in range(1, n):
        pi[k] = pi[:k] @ a[:k, k]
    pi /= pi.sum()

    residual = float(np.max(np.abs(pi @ p_orig - pi)))
    if residual >= STATIONARY_RESIDUAL:
        logger.warning("stationary residual %.3g exceeds %.0e", residual, STATIONARY_RESIDUAL)
    return pi


# ---------------------------------------------------------------------------
# Transitional epochs
# ---------------------------------------------------------------------------

def expected_transitional_length(
    from_c: Community,
    to_c: Community,
    field: FieldSpec,
    samples: int = 100_000,
    seed: int = 0,
) -> tuple[float, float]:
    """Mean length of the transitional epoch bridging ``from_c`` → ``to_c``.

    Returns (mean, stderr). Zero when ``to_c`` contains ``from_c``; the
    0.3826·N constant when leaving the roaming community; otherwise the
    Monte Carlo mean of |p − q|·1(p ∉ to) with p uniform in ``from_c`` and q
    uniform in ``to_c`` (the plain mean distance for disjoint pairs).
    """
    if to_c.rect.contains_rect(from_c.rect):
        return 0.0, 0.0
    if from_c.is_roaming:
        return ROAMING_TRANSITION_FACTOR * field.edge_length, 0.0
    return _mc_transitional_length(from_c.rect, to_c.rect, samples, seed)


@lru_cache(maxsize=256)
def _mc_transitional_length(src: Rect, dst: Rect, samples: int, seed: int) -> tuple[float, float]:
    rng = np.random.default_rng(seed)
    px = rng.uniform(src.x0, src.x1, samples)
    py = rng.uniform(src.y0, src.y1, samples)
    qx = rng.uniform(dst.x0, dst.x1, samples)
    qy = rng.uniform(dst.y0, dst.y1, samples)
    outside = ~((px >= dst.x0) & (px <= dst.x1) & (py >= dst.y0) & (py <= dst.y1))
    d = np.hypot(px - qx, py - qy) * outside
    mean = float(d.mean())
    stderr = float(d.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    logger.debug("L_tr %s -> %s = %.3f ± %.3f", src.as_tuple(), dst.as_tuple(), mean, stderr)
    return mean, stderr


def transitional_lengths(period: TimePeriod, field: FieldSpec) -> np.ndarray:
    """S×S matrix of expected transitional lengths for one period."""
    s = period.size
    out = np.zeros((s, s))
    for k in range(s):
        for n in range(s):
            if k != n:
                out[k, n] = expected_transitional_length(
                    period.communities[k], period.communities[n], field
                )[0]
    return out


# ---------------------------------------------------------------------------
# State occupancy
# ---------------------------------------------------------------------------

def on_probability(policy: OnOffPolicy, period: TimePeriod, j: int) -> float:
    """Probability that a node in community j of ``period`` is observable."""
    if policy.kind is OnOffKind.ALWAYS_ON:
        return 1.0
    if policy.kind is OnOffKind.FIXED_PROB:
        assert policy.p_on is not None
        return policy.p_on[period.index][j]
    move = period.mean_epoch_length[j] / period.v_bar(j)
    pause = period.mean_pause(j)
    if move + pause == 0.0:
        return 1.0
    if policy.kind is OnOffKind.ON_WHEN_PAUSED:
        return pause / (pause + move)
    return move / (pause + move)


@lru_cache(maxsize=1024)
def state_probabilities(profile: NodeProfile, t: int) -> StateProbabilities:
    """Fraction of time in each (community, phase) state during period t."""
    period = profile.schedule[t]
    pi = stationary_distribution(period.matrix())
    p = period.matrix()
    l_tr = transitional_lengths(period, profile.field)

    move = np.array([period.mean_epoch_length[j] / period.v_bar(j) for j in range(period.size)])
    pause = np.array([period.mean_pause(j) for j in range(period.size)])
    bridge = np.array([
        float(p[k] @ l_tr[k]) / period.v_bar(k) for k in range(period.size)
    ])

    psi = float(pi @ (move + pause + bridge))
    p_move = pi * move / psi
    p_pause = pi * pause / psi
    p_tr = float(pi @ bridge) / psi

    p_on = tuple(on_probability(profile.onoff, period, j) for j in range(period.size))
    kind = profile.onoff.kind
    if kind is OnOffKind.ALWAYS_ON:
        p_on_tr = 1.0
    elif kind is OnOffKind.FIXED_PROB:
        p_on_tr = float(pi @ np.array(p_on))
    else:
        p_on_tr = 0.0

    return StateProbabilities(
        period=t,
        pi=tuple(float(v) for v in pi),
        p_move=tuple(float(v) for v in p_move),
        p_pause=tuple(float(v) for v in p_pause),
        p_tr=p_tr,
        psi=psi,
        l_tr=tuple(tuple(float(v) for v in row) for row in l_tr),
        p_on=p_on,
        p_on_transitional=p_on_tr,
    )


def all_state_probabilities(profile: NodeProfile) -> list[StateProbabilities]:
    return [state_probabilities(profile, t) for t in range(len(profile.schedule))]


def period_weights(profile: NodeProfile) -> np.ndarray:
    """T^t / ΣT for every period of the schedule."""
    durations = np.array(profile.period_durations())
    return durations / durations.sum()


def reappearance_peak(profile: NodeProfile) -> float:
    """Predicted re-appearance probability one full cycle later.

    Σ_t (T^t/ΣT) Σ_j (P_j^t)² (P_on,j^t)², the chance of being observed in the
    same community at both instants.
    """
    total = 0.0
    for w, sp in zip(period_weights(profile), all_state_probabilities(profile)):
        total += w * sum((pj * po) ** 2 for pj, po in zip(sp.p_state, sp.p_on))
    return float(total)
