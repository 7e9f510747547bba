"""Tests for rectangle arithmetic, arrangements and torus kinematics."""

from __future__ import annotations

import math

import numpy as np
import pytest

from tvcmob.errors import InvariantError, TooManyRectsError
from tvcmob.geometry import (
    MAX_ARRANGEMENT_RECTS,
    Rect,
    build_arrangement,
    intersection_area,
    relative_hit_time,
    relative_speed_factor,
    segment_hit_time,
    torus_advance,
    torus_segments,
    uniform_point,
)


# --- Rectangles (4 tests) ---

def test_degenerate_rect_rejected():
    with pytest.raises(InvariantError):
        Rect(0, 0, 0, 10)


def test_intersection_partial_overlap():
    assert intersection_area(Rect(0, 0, 100, 100), Rect(50, 50, 150, 150)) == 2500.0


def test_intersection_touching_is_zero():
    assert intersection_area(Rect(0, 0, 100, 100), Rect(100, 0, 200, 100)) == 0.0


def test_intersection_contained_is_inner_area():
    outer = Rect(0, 0, 1000, 1000)
    inner = Rect.square(250, 250, 100)
    assert intersection_area(outer, inner) == inner.area == 10000.0
    assert outer.contains_rect(inner)
    assert not inner.contains_rect(outer)


# --- Arrangement (4 tests) ---

def test_arrangement_nested_pair():
    cells = build_arrangement(
        [("big", Rect(0, 0, 1000, 1000)), ("small", Rect.square(250, 250, 100))], 1000
    )
    assert len(cells) == 2
    by_small = {c.inside("small"): c for c in cells}
    assert by_small[True].area == pytest.approx(10000.0)
    assert by_small[False].area == pytest.approx(990000.0)
    assert all(c.inside("big") for c in cells)


def test_arrangement_conserves_area_and_distinct_membership():
    rng = np.random.default_rng(5)
    rects = []
    for i in range(12):
        edge = float(rng.uniform(50, 400))
        x, y = rng.uniform(0, 1000 - edge, 2)
        rects.append((i, Rect.square(float(x), float(y), edge)))
    cells = build_arrangement(rects, 1000)
    assert math.fsum(c.area for c in cells) == pytest.approx(1e6, rel=1e-12)
    assert len({c.membership for c in cells}) == len(cells)
    assert math.fsum(c.probability(1000) for c in cells) == pytest.approx(1.0)


def test_arrangement_duplicate_rects_share_membership():
    r = Rect.square(0, 0, 500)
    cells = build_arrangement([((0, 0), r), ((1, 0), r)], 1000)
    assert len(cells) == 2
    for c in cells:
        assert c.inside((0, 0)) == c.inside((1, 0))


def test_arrangement_too_many_rects():
    rects = [(i, Rect.square(10.0 * i, 0, 5)) for i in range(MAX_ARRANGEMENT_RECTS + 1)]
    with pytest.raises(TooManyRectsError):
        build_arrangement(rects, 1000)


# --- Torus movement (5 tests) ---

def test_torus_advance_wraps():
    x, y = torus_advance((95.0, 50.0), 0.0, 10.0, 1.0, Rect(0, 0, 100, 100))
    assert x == pytest.approx(5.0)
    assert y == pytest.approx(50.0)


@pytest.mark.parametrize(
    ("heading", "speed", "first", "second"),
    [(0.3, 7.0, 4.0, 11.0), (2.5, 12.0, 9.5, 0.5), (4.1, 5.0, 33.0, 27.0), (math.pi / 2, 10.0, 10.0, 10.0)],
)
def test_torus_moves_compose(heading, speed, first, second):
    bounds = Rect(200, 200, 300, 300)
    start = (231.0, 262.0)
    mid = torus_advance(start, heading, speed, first, bounds)
    x, y = torus_advance(mid, heading, speed, second, bounds)
    ex, ey = torus_advance(start, heading, speed, first + second, bounds)
    # Same point on the torus: differences are whole multiples of the edge.
    assert math.remainder(x - ex, 100.0) == pytest.approx(0.0, abs=1e-6)
    assert math.remainder(y - ey, 100.0) == pytest.approx(0.0, abs=1e-6)


def test_torus_segments_cover_duration_inside_bounds():
    bounds = Rect(200, 200, 300, 300)
    segs = torus_segments((250.0, 250.0), 0.7, 12.0, 60.0, bounds)
    assert segs[0].t_start == 0.0
    assert segs[-1].t_end == pytest.approx(60.0)
    for a, b in zip(segs, segs[1:]):
        assert b.t_start == pytest.approx(a.t_end)
    vx, vy = 12.0 * math.cos(0.7), 12.0 * math.sin(0.7)
    for s in segs:
        for t in (0.0, s.t_end - s.t_start):
            assert bounds.contains_point(s.x + vx * t, s.y + vy * t, tol=1e-6)
    assert len(segs) > 1


def test_torus_advance_keeps_uniform_positions_uniform():
    stats = pytest.importorskip("scipy.stats")
    bounds = Rect(200, 200, 300, 300)
    rng = np.random.default_rng(8)
    counts = np.zeros((10, 10))
    for _ in range(20_000):
        start = uniform_point(bounds, rng)
        x, y = torus_advance(start, rng.uniform(0, 2 * math.pi), rng.uniform(5, 15), rng.uniform(0, 100), bounds)
        counts[min(int((x - 200) // 10), 9), min(int((y - 200) // 10), 9)] += 1
    assert stats.chisquare(counts.ravel()).pvalue > 1e-3


def test_torus_segments_short_move_is_one_piece():
    segs = torus_segments((250.0, 250.0), 0.0, 1.0, 10.0, Rect(200, 200, 300, 300))
    assert len(segs) == 1
    assert (segs[0].x, segs[0].y) == (250.0, 250.0)


# --- Closest approach (5 tests) ---

def test_segment_hit_time_straight_on():
    assert segment_hit_time(0, 0, 1, 0, 10, 0, 2, 100) == pytest.approx(8.0)


def test_segment_hit_time_starts_inside():
    assert segment_hit_time(0, 0, 1, 0, 1, 0, 2, 100) == 0.0


def test_segment_hit_time_miss_and_too_late():
    assert segment_hit_time(0, 0, 1, 0, 10, 5, 2, 100) is None
    assert segment_hit_time(0, 0, 1, 0, 10, 0, 2, 5) is None


def test_segment_hit_time_static_outside():
    assert segment_hit_time(0, 0, 0, 0, 10, 0, 2, 100) is None


def test_relative_hit_time_head_on():
    assert relative_hit_time(0, 0, 1, 0, 10, 0, -1, 0, 2, 100) == pytest.approx(4.0)


# --- Relative speed (3 tests) ---

def test_relative_speed_equal_speeds_is_four_over_pi():
    k = relative_speed_factor(10.0, 10.0, samples=400_000, seed=1)
    assert k.v_bar == 10.0
    assert abs(k.v_hat - 4.0 / math.pi) <= 3.0 * k.stderr + 1e-12


def test_relative_speed_static_peer_is_one():
    k = relative_speed_factor(5.0, 15.0, static_peer=True)
    assert k.v_hat == 1.0
    assert k.v_bar == 10.0


def test_relative_speed_is_deterministic():
    a = relative_speed_factor(5.0, 15.0, samples=50_000, seed=9)
    b = relative_speed_factor(5.0, 15.0, samples=50_000, seed=9)
    assert a == b
    assert 1.2 < a.v_hat < 1.4
