"""Tests for epoch sampling, trace generation and trace output."""

from __future__ import annotations

import io
import json
import math

import numpy as np
import pytest

from tvcmob.config import load_and_validate
from tvcmob.errors import InvariantError
from tvcmob.models import Phase, RunSpec
from tvcmob.simulator import (
    EpochKind,
    NodeProcess,
    NodeState,
    emit,
    generate_trace,
    node_generator,
    sample_epoch,
    sample_times,
    write_metadata,
)


def _run(profiles, seed=1, duration=2000.0, dt=1.0):
    return RunSpec(seed=seed, duration=duration, profiles=tuple(profiles), dt=dt)


# --- Epoch sampling (2 tests) ---

def test_sample_epoch_reproducible(local_profile):
    period = local_profile.schedule[0]
    state = NodeState(position=(500.0, 500.0), period=0, community=0)
    a = sample_epoch(state, period, node_generator(4, 0))
    b = sample_epoch(state, period, node_generator(4, 0))
    assert a == b
    assert a.kind is EpochKind.IN_COMMUNITY
    assert a.community_id == "l"
    assert 5.0 <= a.speed <= 15.0
    assert 0.0 <= a.pause_after <= 100.0
    assert a.next_community in (0, 1)


def test_node_streams_independent_of_node_count(local_profile, roaming_profile):
    one = generate_trace(_run([local_profile]))
    two = generate_trace(_run([local_profile, roaming_profile]))
    assert np.array_equal(one.x[:, 0], two.x[:, 0])
    assert np.array_equal(one.y[:, 0], two.y[:, 0])


# --- Trace generation (7 tests) ---

def test_generate_is_deterministic(local_profile):
    a = generate_trace(_run([local_profile], seed=7))
    b = generate_trace(_run([local_profile], seed=7))
    c = generate_trace(_run([local_profile], seed=8))
    assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)
    assert not np.array_equal(a.x, c.x)


def test_trace_shape_and_metadata(local_profile):
    trace = generate_trace(_run([local_profile], duration=100.0, dt=0.5))
    assert trace.sample_count == 200
    assert trace.x.shape == (200, 1)
    assert trace.span == pytest.approx(100.0)
    assert trace.metadata["seed"] == 1
    assert trace.metadata["profiles"]["n0"] == local_profile.digest()


def test_positions_stay_in_field(scenario_profiles):
    profiles = scenario_profiles("model2")[:5]
    trace = generate_trace(_run(profiles, duration=6000.0))
    assert np.all((trace.x >= -1e-6) & (trace.x <= 1000 + 1e-6))
    assert np.all((trace.y >= -1e-6) & (trace.y <= 1000 + 1e-6))


def test_in_community_legs_stay_in_their_community(local_profile):
    proc = NodeProcess(local_profile, node_generator(3, 0))
    proc.advance_until(3 * local_profile.cycle_duration)
    for leg in proc.trajectory().legs():
        if leg.phase == Phase.TRANSITIONAL:
            continue
        rect = local_profile.schedule[leg.period].communities[leg.community].rect
        assert rect.contains_point(leg.x0, leg.y0, tol=1e-6)
        assert rect.contains_point(*leg.end(), tol=1e-6)


def test_leg_speeds_bounded(local_profile):
    proc = NodeProcess(local_profile, node_generator(3, 0))
    proc.advance_until(local_profile.cycle_duration)
    traj = proc.trajectory()
    speeds = np.hypot(traj.vx, traj.vy)
    assert np.all(speeds <= 15.0 + 1e-9)
    assert np.all(speeds[traj.phase == Phase.PAUSED] == 0.0)
    assert np.allclose(traj.t0[1:], traj.t1[:-1])


def test_on_when_paused_marks_only_pauses(scenario_profiles):
    profile = scenario_profiles("model1_reappearance")[0]
    proc = NodeProcess(profile, node_generator(5, 0))
    proc.advance_until(profile.cycle_duration)
    traj = proc.trajectory()
    assert np.array_equal(traj.on, traj.phase == Phase.PAUSED)


def test_fixed_prob_extremes(config_text, period, community):
    def node(p_on):
        return load_and_validate(config_text([{
            "id": "n0",
            "schedule": [period(1000, [community("l", 0, 0, 100), community("r", 0, 0, 1000)],
                                [[0.5, 0.5], [0.5, 0.5]], [80, 520], [20, 20])],
            "onoff": {"kind": "fixed_prob", "p_on": p_on},
        }]))[0]

    never = generate_trace(_run([node([0.0, 0.0])], duration=3000.0))
    always = generate_trace(_run([node([1.0, 1.0])], duration=3000.0))
    assert not never.on.any()
    assert always.on.all()


# --- Invalid runs (2 tests) ---

def test_duration_shorter_than_dt_rejected(local_profile):
    with pytest.raises(InvariantError):
        RunSpec(seed=0, duration=0.5, profiles=(local_profile,), dt=1.0)


def test_empty_run_rejected():
    with pytest.raises(InvariantError):
        generate_trace(RunSpec(seed=0, duration=10.0, profiles=()))


# --- Output (6 tests) ---

def test_sample_times_grid():
    assert sample_times(3.0, 1.0).tolist() == [0.0, 1.0, 2.0]
    assert sample_times(1.0, 0.1).size == 10


def test_csv_is_byte_identical_across_runs(local_profile):
    texts = []
    for _ in range(2):
        buf = io.StringIO()
        emit(generate_trace(_run([local_profile], seed=11, duration=500.0)), "csv", buf)
        texts.append(buf.getvalue())
    assert texts[0] == texts[1]


def test_csv_layout(local_profile):
    trace = generate_trace(_run([local_profile], duration=10.0))
    buf = io.StringIO()
    size = emit(trace, "csv", buf)
    text = buf.getvalue()
    lines = text.splitlines()
    assert lines[0] == "t,node,x,y,on"
    assert len(lines) == 11
    assert lines[1].startswith("0.0,n0,")
    assert size == len(text.encode("utf-8"))


def test_ns2_layout(local_profile):
    trace = generate_trace(_run([local_profile], duration=1000.0))
    buf = io.StringIO()
    emit(trace, "ns2", buf)
    lines = buf.getvalue().splitlines()
    assert lines[0].startswith("$node_(0) set X_ ")
    assert lines[1].startswith("$node_(0) set Y_ ")
    assert lines[2] == "$node_(0) set Z_ 0.00"
    dests = [ln for ln in lines if "setdest" in ln]
    assert dests
    times = [float(ln.split()[2]) for ln in lines[3:]]
    assert times == sorted(times)


def test_unknown_format_rejected(local_profile):
    trace = generate_trace(_run([local_profile], duration=10.0))
    with pytest.raises(ValueError):
        emit(trace, "gpx", io.StringIO())


def test_metadata_sidecar(tmp_path, local_profile):
    trace = generate_trace(_run([local_profile], seed=3, duration=50.0))
    path = tmp_path / "trace.meta.json"
    write_metadata(trace, path)
    meta = json.loads(path.read_text())
    assert meta["seed"] == 3
    assert meta["nodes"] == 1
    assert math.isclose(meta["duration"], 50.0)
