"""Long statistical checks of the formulas against simulation.

Run with ``pytest -m slow``. Each test holds the analytic result to the
tolerance the model is expected to meet at desk scale.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from tvcmob.analytics import average_node_degree, hitting_time, meeting_time
from tvcmob.experiments import (
    epidemic_simulate,
    nodes_needed,
    population_site_degree,
    route_site,
    scale_population,
    si_params_from_profiles,
    si_solve,
)
from tvcmob.models import RunSpec
from tvcmob.occupancy import all_state_probabilities, reappearance_peak
from tvcmob.runner import load_config, partner_for, population_groups, route_success
from tvcmob.simulator import NodeProcess, generate_trace, node_generator
from tvcmob.stats import (
    empirical_hitting_time,
    empirical_meeting_time,
    empirical_node_degree,
    occupancy_fractions,
    reappearance_curve,
)

pytestmark = pytest.mark.slow

MODELS = ["model1", "model2", "model3", "model4"]
ROUTE_SRC = (250.0, 250.0)
ROUTE_DST = (350.0, 350.0)


def _rel(analytic: float, simulated: float) -> float:
    return abs(analytic - simulated) / abs(simulated)


# --- Occupancy (1 test) ---

@pytest.mark.parametrize("name", MODELS)
def test_state_fractions(name):
    profile = load_config(name).profiles[0]
    proc = NodeProcess(profile, node_generator(100, 0))
    proc.advance_until(40 * profile.cycle_duration)
    measured = occupancy_fractions(proc.trajectory(), profile)
    for t, sp in enumerate(all_state_probabilities(profile)):
        got = measured[t]
        for j in range(len(sp.p_move)):
            assert abs(got.move[j] - sp.p_move[j]) <= 0.03
            assert abs(got.pause[j] - sp.p_pause[j]) <= 0.03
        assert abs(got.tr - sp.p_tr) <= 0.03


# --- Node degree (2 tests) ---

def test_degree_random_communities():
    expected = 49 * math.pi * 50.0**2 / 1e6
    assert expected == pytest.approx(0.3848, abs=1e-4)
    runs = []
    for seed in range(20):
        cfg = load_config("random_communities", seed)
        run = RunSpec(seed=seed, duration=2 * cfg.cycle_duration(), profiles=tuple(cfg.profiles), dt=4.0)
        runs.append(np.mean(list(empirical_node_degree(generate_trace(run), 50.0).values())))
    # σ is the run-to-run spread of the measured mean degree
    assert abs(float(np.mean(runs)) - expected) <= 3 * float(np.std(runs, ddof=1))


@pytest.mark.parametrize("range_m", [5.0, 10.0, 15.0])
def test_degree_two_groups(range_m):
    cfg = load_config("model1_two_group")
    run = RunSpec(seed=3, duration=10 * cfg.cycle_duration(), profiles=tuple(cfg.profiles), dt=2.0)
    analytic = np.mean([average_node_degree(p, cfg.profiles, range_m).degree for p in cfg.profiles])
    empirical = np.mean(list(empirical_node_degree(generate_trace(run), range_m).values()))
    assert _rel(float(analytic), float(empirical)) <= 0.20


# --- Hitting and meeting time (2 tests) ---

@pytest.mark.parametrize("name", MODELS)
def test_hitting_time_models(name):
    profile = load_config(name).profiles[0]
    analytic = hitting_time(profile, 10.0).hitting_time
    res = empirical_hitting_time(profile, 10.0, iterations=5000, seed=11)
    assert res.timeouts == 0
    assert res.stderr / res.mean <= 0.02
    assert _rel(analytic, res.mean) <= 0.15


@pytest.mark.parametrize("name", MODELS)
def test_meeting_time_models(name):
    cfg = load_config(name)
    a = cfg.profiles[0]
    b = partner_for(a, cfg.profiles)
    analytic = meeting_time(a, b, 10.0).meeting_time
    res = empirical_meeting_time(a, b, 10.0, iterations=5000, seed=12)
    assert res.timeouts == 0
    assert _rel(analytic, res.mean) <= 0.20


# --- Re-appearance (1 test) ---

def test_reappearance_one_cycle_later():
    cfg = load_config("model1_reappearance")
    cycle = cfg.cycle_duration()
    run = RunSpec(seed=5, duration=30 * cycle, profiles=tuple(cfg.profiles), dt=5.0)
    curve = reappearance_curve(generate_trace(run), 100.0, [cycle], normalize="all")
    predicted = reappearance_peak(cfg.profiles[0])
    assert _rel(predicted, curve.probabilities[0]) <= 0.10


# --- Epidemic (1 test) ---

def test_si_model_tracks_simulated_spread():
    cfg = load_config("model3_two_group")
    m = len(cfg.profiles)
    params = si_params_from_profiles(cfg.profiles, 10.0)
    theory = si_solve(params, horizon=3000.0, step=1.0)
    run = RunSpec(seed=9, duration=3000.0, profiles=tuple(cfg.profiles), dt=1.0)
    sim = epidemic_simulate(run, 10.0, source="a.0", trials=100)
    predicted = np.interp(sim.times, theory.times, theory.infected)
    assert float(np.max(np.abs(predicted - sim.infected))) <= 0.15 * m


# --- Geographic forwarding (1 test) ---

def test_sized_population_routes_like_reference():
    site = route_site(ROUTE_SRC, ROUTE_DST, 1000.0)
    reference = load_config("model1_two_group")
    target = load_config("model3_two_group")
    ref_groups = population_groups(reference.profiles)
    groups = population_groups(target.profiles)
    degree = min(population_site_degree(ref_groups, 200, 10.0, site))
    n = nodes_needed(groups, degree, 10.0, site)
    assert n == pytest.approx(760, rel=0.05)

    ranges = [10.0, 20.0, 30.0, 40.0, 50.0]
    ref_rates = route_success(scale_population(ref_groups, 200), 1, ranges, 500, ROUTE_SRC, ROUTE_DST,
                              3 * reference.cycle_duration(), 10.0)
    rates = route_success(scale_population(groups, n), 1, ranges, 500, ROUTE_SRC, ROUTE_DST,
                          3 * target.cycle_duration(), 10.0)
    for k, r_ref, r in zip(ranges, ref_rates, rates):
        assert abs(r - r_ref) <= 0.10, f"K={k:g}: {r:.3f} vs reference {r_ref:.3f}"
