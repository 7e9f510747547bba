"""Tests for the closed-form degree, hitting-time and meeting-time formulas."""

from __future__ import annotations

import dataclasses
import math

import pytest

from tvcmob.analytics import (
    average_node_degree,
    estimate_overlap_probability,
    hitting_time,
    meeting_time,
    pairwise_degree,
    pairwise_degree_contribution,
    unit_hitting_probability,
    unit_meeting_probability,
)
from tvcmob.config import load_and_validate
from tvcmob.errors import InvariantError, NoMeetingPossibleError


def _copy(profile, name):
    return dataclasses.replace(profile, node_id=name)


def _single_period(config_text, period, community, duration, communities, matrix, epoch, pause, node_id="n0"):
    return load_and_validate(config_text([{
        "id": node_id,
        "schedule": [period(duration, communities, matrix, epoch, pause)],
    }]))[0]


# --- Node degree (5 tests) ---

def test_pairwise_contribution_symmetric(scenario_profiles):
    a, b = scenario_profiles("model1_two_group")[0], scenario_profiles("model1_two_group")[-1]
    for t in range(2):
        for j in range(2):
            for k in range(2):
                assert pairwise_degree_contribution(a, j, b, k, t, 10.0) == pytest.approx(
                    pairwise_degree_contribution(b, k, a, j, t, 10.0)
                )


def test_contribution_same_local_community(local_profile):
    # πK²·C²/(C²·C²) = πK²/C²
    assert pairwise_degree_contribution(local_profile, 0, local_profile, 0, 0, 10.0) == pytest.approx(
        math.pi * 100 / 10000
    )


def test_degree_is_additive_over_peers(local_profile):
    b = _copy(local_profile, "b")
    c = _copy(local_profile, "c")
    report = average_node_degree(local_profile, [local_profile, b, c], 10.0)
    expected = pairwise_degree(local_profile, b, 10.0) + pairwise_degree(local_profile, c, 10.0)
    assert report.degree == pytest.approx(expected)
    assert report.contributions


def test_roaming_peers_give_field_density(roaming_profile):
    peers = [_copy(roaming_profile, f"p{i}") for i in range(49)]
    report = average_node_degree(roaming_profile, peers, 50.0)
    assert report.degree == pytest.approx(49 * math.pi * 2500 / 1e6)


def test_degree_needs_same_schedule(local_profile, roaming_profile):
    with pytest.raises(InvariantError, match="period durations"):
        average_node_degree(local_profile, [_copy(roaming_profile, "x")], 10.0)


# --- Hitting time (9 tests) ---

def test_unit_hitting_probability_roaming(roaming_profile):
    assert unit_hitting_probability(roaming_profile, [True], 0, 10.0) == pytest.approx(2e-4)
    assert unit_hitting_probability(roaming_profile, [False], 0, 10.0) == 0.0


def test_roaming_hitting_time_long_period(roaming_profile):
    report = hitting_time(roaming_profile, 10.0)
    assert report.hitting_time == pytest.approx(5000.0, rel=1e-9)
    assert len(report.cells) == 1
    assert report.cells[0].probability == pytest.approx(1.0)
    assert not report.warnings


def test_compounded_period_probability(config_text, period, community):
    profile = _single_period(config_text, period, community, 5000,
                             [community("r", 0, 0, 1000)], [[1.0]], [520], [0])
    report = hitting_time(profile, 10.0)
    expected = -math.expm1(5000 * math.log1p(-2e-4))
    assert report.cells[0].p_H[0] == pytest.approx(expected, rel=1e-12)
    assert report.cells[0].p_H[0] == pytest.approx(0.6321, abs=1e-3)


def test_short_period_warns_but_stays_memoryless(scenario_profiles):
    # One 3600 s period repeated: missed cycles plus the truncated tail give 1/P_h
    report = hitting_time(scenario_profiles("minimal")[0], 10.0)
    assert any("P_h·T < 1" in w for w in report.warnings)
    assert report.hitting_time == pytest.approx(5000.0, rel=1e-9)


def test_two_period_hitting_time_matches_stepwise_sum(config_text, period, community):
    fast = period(1000, [community("r", 0, 0, 1000)], [[1.0]], [520], [0])
    fast["speed"] = {"min": 15, "max": 25}
    profile = load_and_validate(config_text([{
        "id": "n0",
        "schedule": [period(1000, [community("r", 0, 0, 1000)], [[1.0]], [520], [0]), fast],
    }]))[0]
    # Survival summed step by step over one cycle, then renewed every cycle.
    q1, q2 = 1 - 2e-4, 1 - 4e-4
    cycle = (1 - q1**1000) / (1 - q1) + q1**1000 * (1 - q2**1000) / (1 - q2)
    expected = cycle / (1 - q1**1000 * q2**1000)
    report = hitting_time(profile, 10.0)
    assert report.cells[0].p_h == pytest.approx([2e-4, 4e-4])
    assert report.hitting_time == pytest.approx(expected, rel=1e-9)


@pytest.mark.parametrize("range_m", [5.0, 10.0, 20.0])
def test_hitting_time_falls_as_move_share_rises(config_text, period, community, range_m):
    times = []
    for pause in (800, 200, 50, 0):
        profile = _single_period(config_text, period, community, 1e6,
                                 [community("r", 0, 0, 1000)], [[1.0]], [520], [pause])
        times.append(hitting_time(profile, range_m).hitting_time)
    assert all(a > b for a, b in zip(times, times[1:]))


def test_hitting_time_decreases_with_range(local_profile):
    times = [hitting_time(local_profile, k).hitting_time for k in (5.0, 10.0, 20.0, 40.0)]
    assert all(a > b for a, b in zip(times, times[1:]))


def test_cell_bookkeeping(local_profile):
    report = hitting_time(local_profile, 10.0)
    assert math.fsum(c.probability for c in report.cells) == pytest.approx(1.0)
    for c in report.cells:
        if c.cycle_probability > 0:
            assert math.fsum(c.first_hit_weights) == pytest.approx(1.0)
    inside = next(c for c in report.cells if c.membership["0:l"])
    outside = next(c for c in report.cells if not c.membership["0:l"])
    assert inside.p_h[0] > outside.p_h[0]
    assert inside.hitting_time < outside.hitting_time


def test_local_only_node_never_hits_outside(config_text, period, community):
    profile = _single_period(config_text, period, community, 1000,
                             [community("l", 0, 0, 100)], [[1.0]], [50], [10])
    report = hitting_time(profile, 10.0)
    assert report.infinite
    assert any("never hit" in w for w in report.warnings)


# --- Meeting time (7 tests) ---

def test_meeting_roaming_pair_with_fixed_v_hat(roaming_profile):
    b = _copy(roaming_profile, "b")
    v_hat = 4 / math.pi
    pm = unit_meeting_probability(roaming_profile, b, 0, 10.0, v_hat=v_hat)
    assert pm == pytest.approx(v_hat * 10 * 20 / 1e6)
    report = meeting_time(roaming_profile, b, 10.0, v_hat=v_hat)
    assert report.meeting_time == pytest.approx(1 / pm, rel=1e-9)


def test_meeting_roaming_pair_default_v_hat(roaming_profile):
    report = meeting_time(roaming_profile, _copy(roaming_profile, "b"), 10.0)
    assert 3500 < report.meeting_time < 4000


def test_meeting_disjoint_local_communities(config_text, period, community):
    a = _single_period(config_text, period, community, 1000, [community("l", 0, 0, 100)], [[1.0]], [50], [10], "a")
    b = _single_period(config_text, period, community, 1000, [community("l", 500, 500, 100)], [[1.0]], [50], [10], "b")
    with pytest.raises(NoMeetingPossibleError):
        meeting_time(a, b, 10.0)


def test_bridging_nodes_meet_outside_their_communities(config_text, period, community):
    # Corner communities never overlap; only transitional epochs cross paths.
    a = _single_period(config_text, period, community, 1e5,
                       [community("l1", 0, 0, 100), community("l2", 900, 900, 100)],
                       [[0.5, 0.5], [0.5, 0.5]], [50, 50], [20, 20], "a")
    b = _single_period(config_text, period, community, 1e5,
                       [community("l3", 0, 900, 100), community("l4", 900, 0, 100)],
                       [[0.5, 0.5], [0.5, 0.5]], [50, 50], [20, 20], "b")
    pm = unit_meeting_probability(a, b, 0, 10.0)
    assert pm > 0.0
    report = meeting_time(a, b, 10.0)
    assert math.isfinite(report.meeting_time)
    assert report.meeting_time == pytest.approx(1 / pm, rel=1e-6)


def test_meeting_probability_clipped(roaming_profile):
    report = meeting_time(roaming_profile, _copy(roaming_profile, "b"), 1e5, v_hat=4 / math.pi)
    assert report.p_m == [1.0]
    assert any("clipped" in w for w in report.warnings)


def test_meeting_with_overlap_estimate(roaming_profile):
    b = _copy(roaming_profile, "b")
    est = estimate_overlap_probability(1000, 1000, 1000, samples=1000)
    plain = unit_meeting_probability(roaming_profile, b, 0, 10.0, v_hat=1.3)
    weighted = unit_meeting_probability(roaming_profile, b, 0, 10.0, v_hat=1.3, overlaps={(0, 0, 0): est})
    assert est.p_overlap == 1.0
    assert weighted == pytest.approx(plain)


def test_meeting_negative_range_rejected(roaming_profile):
    with pytest.raises(InvariantError):
        meeting_time(roaming_profile, _copy(roaming_profile, "b"), -1.0)


# --- Overlap estimate (3 tests) ---

def test_overlap_grid_placement():
    est = estimate_overlap_probability(100, 100, 1000, samples=200_000, seed=1)
    assert abs(est.p_overlap - 0.01) < 5 * est.p_overlap_stderr
    assert est.mean_area == pytest.approx(10000.0)


def test_overlap_uniform_placement():
    est = estimate_overlap_probability(100, 100, 1000, samples=200_000, seed=1, placement="uniform")
    per_axis = 1 - (800 / 900) ** 2
    assert abs(est.p_overlap - per_axis ** 2) < 5 * est.p_overlap_stderr
    assert 0 < est.mean_area < 10000


def test_overlap_grid_needs_divisor():
    with pytest.raises(InvariantError):
        estimate_overlap_probability(300, 300, 1000, placement="grid")
