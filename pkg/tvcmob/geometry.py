"""Rectangle arithmetic, scenario-cell arrangements and torus kinematics.

Communities are axis-aligned squares inside a square field, so every area
here is exact: overlaps are closed-form and the target/community
arrangement is built by coordinate compression rather than integration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Hashable, Optional, Sequence

import numpy as np

from tvcmob.errors import InvariantError, TooManyRectsError

# Coordinate compression grows as (2R+1)^2; beyond this the arrangement
# stops being a desk-scale computation.
MAX_ARRANGEMENT_RECTS = 20

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle [x0, x1] x [y0, y1] in meters."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self) -> None:
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise InvariantError(f"degenerate rectangle {self.as_tuple()}")

    @classmethod
    def square(cls, x: float, y: float, edge: float) -> Rect:
        return cls(x, y, x + edge, y + edge)

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x0, self.y0, self.x1, self.y1)

    def contains_point(self, x: float, y: float, tol: float = 1e-9) -> bool:
        return (self.x0 - tol <= x <= self.x1 + tol) and (self.y0 - tol <= y <= self.y1 + tol)

    def contains_rect(self, other: Rect) -> bool:
        return (
            self.x0 <= other.x0 and other.x1 <= self.x1
            and self.y0 <= other.y0 and other.y1 <= self.y1
        )

    def inside_field(self, edge_length: float, tol: float = 1e-9) -> bool:
        return (
            self.x0 >= -tol and self.y0 >= -tol
            and self.x1 <= edge_length + tol and self.y1 <= edge_length + tol
        )


def intersection_area(a: Rect, b: Rect) -> float:
    """Exact overlap area of two rectangles (0 when disjoint or touching)."""
    w = min(a.x1, b.x1) - max(a.x0, b.x0)
    h = min(a.y1, b.y1) - max(a.y0, b.y0)
    if w <= 0.0 or h <= 0.0:
        return 0.0
    return w * h


def uniform_point(rect: Rect, rng: np.random.Generator) -> tuple[float, float]:
    return (
        rect.x0 + rect.width * rng.random(),
        rect.y0 + rect.height * rng.random(),
    )


# ---------------------------------------------------------------------------
# Scenario-cell arrangement
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioCell:
    """Atomic region of the field with one joint membership vector.

    ``membership[i]`` tells whether a target in this cell lies inside the
    rectangle labelled ``keys[i]`` (the same ``keys`` order for every cell of
    one arrangement). Restricting to one period's keys gives that period's w^t.
    """

    area: float
    membership: tuple[bool, ...]
    keys: tuple[Hashable, ...]

    def inside(self, key: Hashable) -> bool:
        return self.membership[self.keys.index(key)]

    def probability(self, edge_length: float) -> float:
        return self.area / (edge_length * edge_length)


def build_arrangement(
    rects: Sequence[tuple[Hashable, Rect]],
    edge_length: float,
) -> list[ScenarioCell]:
    """Partition the field into cells of identical joint membership.

    All rectangle edges are coordinate-compressed into a grid; grid cells with
    the same membership vector are merged and their areas summed, so every
    returned cell has a distinct vector and the areas add up to N^2.
    """
    distinct = {r for _, r in rects}
    if len(distinct) > MAX_ARRANGEMENT_RECTS:
        raise TooManyRectsError(
            f"{len(distinct)} distinct rectangles exceed the limit of {MAX_ARRANGEMENT_RECTS}"
        )
    keys = tuple(k for k, _ in rects)

    def _cuts(lo_attr: str, hi_attr: str) -> np.ndarray:
        vals = {0.0, float(edge_length)}
        for _, r in rects:
            vals.add(min(max(getattr(r, lo_attr), 0.0), edge_length))
            vals.add(min(max(getattr(r, hi_attr), 0.0), edge_length))
        return np.array(sorted(vals))

    xs = _cuts("x0", "x1")
    ys = _cuts("y0", "y1")
    cx = 0.5 * (xs[:-1] + xs[1:])
    cy = 0.5 * (ys[:-1] + ys[1:])
    widths = np.diff(xs)
    heights = np.diff(ys)
    areas = np.outer(widths, heights).ravel()

    if not keys:
        return [ScenarioCell(area=float(areas.sum()), membership=(), keys=())]

    bits = np.empty((len(rects), cx.size * cy.size), dtype=bool)
    for i, (_, r) in enumerate(rects):
        in_x = (cx > r.x0) & (cx < r.x1)
        in_y = (cy > r.y0) & (cy < r.y1)
        bits[i] = np.outer(in_x, in_y).ravel()

    keep = areas > 0.0
    rows, inverse = np.unique(bits[:, keep].T, axis=0, return_inverse=True)
    merged = np.bincount(inverse.ravel(), weights=areas[keep], minlength=rows.shape[0])
    return [
        ScenarioCell(area=float(a), membership=tuple(bool(b) for b in row), keys=keys)
        for row, a in zip(rows, merged)
        if a > 0.0
    ]


# ---------------------------------------------------------------------------
# Torus kinematics
# ---------------------------------------------------------------------------

def torus_advance(
    pos: tuple[float, float],
    direction: float,
    speed: float,
    dt: float,
    bounds: Rect,
) -> tuple[float, float]:
    """Straight-line move of speed*dt, wrapped into ``bounds`` per axis."""
    dx = speed * math.cos(direction) * dt
    dy = speed * math.sin(direction) * dt
    x = bounds.x0 + math.fmod(pos[0] - bounds.x0 + dx, bounds.width)
    y = bounds.y0 + math.fmod(pos[1] - bounds.y0 + dy, bounds.height)
    if x < bounds.x0:
        x += bounds.width
    if y < bounds.y0:
        y += bounds.height
    return (x, y)


@dataclass(frozen=True)
class Segment:
    """One straight piece of a wrapped movement, offsets relative to its start."""

    t_start: float
    t_end: float
    x: float
    y: float


def torus_segments(
    pos: tuple[float, float],
    direction: float,
    speed: float,
    duration: float,
    bounds: Rect,
) -> list[Segment]:
    """Split a wrapped random-direction move into straight sub-segments.

    Each segment runs until the mover reaches a side of ``bounds``; the next one
    starts at the re-inserted position on the opposite side.
    """
    vx = speed * math.cos(direction)
    vy = speed * math.sin(direction)
    x, y = pos
    t = 0.0
    out: list[Segment] = []
    # Each wrap moves at least min(width, height) / speed, so this bounds the loop.
    max_pieces = 4 + 2 * int(speed * duration / min(bounds.width, bounds.height) + 1)
    for _ in range(max_pieces):
        remaining = duration - t
        tx = _time_to_side(x, vx, bounds.x0, bounds.x1)
        ty = _time_to_side(y, vy, bounds.y0, bounds.y1)
        step = min(tx, ty)
        if step >= remaining:
            if remaining > 0.0 or not out:
                out.append(Segment(t, duration, x, y))
            return out
        if step > 0.0:
            out.append(Segment(t, t + step, x, y))
        x += vx * step
        y += vy * step
        t += step
        if tx <= step:
            x = bounds.x0 if vx > 0 else bounds.x1
        if ty <= step:
            y = bounds.y0 if vy > 0 else bounds.y1
    out.append(Segment(t, duration, x, y))
    return out


def _time_to_side(p: float, v: float, lo: float, hi: float) -> float:
    if v > 0.0:
        return max(hi - p, 0.0) / v
    if v < 0.0:
        return max(p - lo, 0.0) / -v
    return math.inf


# ---------------------------------------------------------------------------
# Closest approach
# ---------------------------------------------------------------------------

def segment_hit_time(
    px: float, py: float,
    vx: float, vy: float,
    tx: float, ty: float,
    radius: float,
    duration: float,
) -> Optional[float]:
    """Earliest s in [0, duration] with |p + v*s - target| <= radius, else None."""
    dx = px - tx
    dy = py - ty
    c = dx * dx + dy * dy - radius * radius
    if c <= 0.0:
        return 0.0
    a = vx * vx + vy * vy
    if a == 0.0:
        return None
    b = dx * vx + dy * vy
    disc = b * b - a * c
    if disc < 0.0:
        return None
    s = (-b - math.sqrt(disc)) / a
    if s < 0.0 or s > duration:
        return None
    return s


def relative_hit_time(
    ax: float, ay: float, avx: float, avy: float,
    bx: float, by: float, bvx: float, bvy: float,
    radius: float,
    duration: float,
) -> Optional[float]:
    """Earliest s in [0, duration] at which two linear movers are within radius."""
    return segment_hit_time(ax - bx, ay - by, avx - bvx, avy - bvy, 0.0, 0.0, radius, duration)


# ---------------------------------------------------------------------------
# Kinematic constants
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KinematicConstants:
    """Mean speed and relative-speed multiplier v_hat = E|v1 - v2| / v_bar."""

    v_bar: float
    v_hat: float
    stderr: float = 0.0
    samples: int = 0

    def to_dict(self) -> dict:
        return {"v_bar": self.v_bar, "v_hat": self.v_hat, "stderr": self.stderr, "samples": self.samples}


_CHUNK = 1_000_000


def relative_speed(
    range_a: tuple[float, float],
    range_b: tuple[float, float],
    samples: int = 1_000_000,
    seed: int = 0,
) -> tuple[float, float]:
    """Monte Carlo E|v_a - v_b| for uniform speeds and uniform headings.

    Returns (mean, stderr). Deterministic for a given seed.
    """
    return _relative_speed_cached(
        (float(range_a[0]), float(range_a[1])),
        (float(range_b[0]), float(range_b[1])),
        int(samples),
        int(seed),
    )


@lru_cache(maxsize=64)
def _relative_speed_cached(
    range_a: tuple[float, float],
    range_b: tuple[float, float],
    samples: int,
    seed: int,
) -> tuple[float, float]:
    rng = np.random.default_rng(seed)
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < samples:
        n = min(_CHUNK, samples - done)
        va = rng.uniform(range_a[0], range_a[1], n)
        vb = rng.uniform(range_b[0], range_b[1], n)
        dtheta = rng.uniform(0.0, TWO_PI, n) - rng.uniform(0.0, TWO_PI, n)
        rel = np.sqrt(np.maximum(va * va + vb * vb - 2.0 * va * vb * np.cos(dtheta), 0.0))
        total += float(rel.sum())
        total_sq += float((rel * rel).sum())
        done += n
    mean = total / samples
    var = max(total_sq / samples - mean * mean, 0.0)
    return mean, math.sqrt(var / samples)


def relative_speed_factor(
    v_min: float,
    v_max: float,
    samples: int = 1_000_000,
    seed: int = 0,
    static_peer: bool = False,
) -> KinematicConstants:
    """v_hat for two nodes with speeds ~ U[v_min, v_max].

    With ``static_peer`` the other node does not move and the factor is 1 by
    definition.
    """
    v_bar = 0.5 * (v_min + v_max)
    if static_peer:
        return KinematicConstants(v_bar=v_bar, v_hat=1.0)
    mean, stderr = relative_speed((v_min, v_max), (v_min, v_max), samples, seed)
    return KinematicConstants(v_bar=v_bar, v_hat=mean / v_bar, stderr=stderr / v_bar, samples=samples)
