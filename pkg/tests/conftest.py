"""Shared fixtures: configuration builders and loaded profiles."""

from __future__ import annotations

import json

import pytest

from tvcmob.config import load_and_validate
from tvcmob.runner import load_config


def _community(cid: str, x, y, edge: float) -> dict:
    return {"id": cid, "x": x, "y": y, "edge": edge}


def _period(
    duration: float,
    communities: list[dict],
    matrix: list[list[float]],
    epoch: list[float],
    pause: list[float],
) -> dict:
    return {
        "duration_s": duration,
        "communities": communities,
        "transition_matrix": matrix,
        "mean_epoch_length": epoch,
        "max_pause_s": pause,
    }


def _config(nodes: list[dict], edge: float = 1000.0, speed=(5.0, 15.0)) -> str:
    doc = {"field": {"edge_length": edge}, "nodes": nodes}
    if speed is not None:
        doc["speed"] = {"min": speed[0], "max": speed[1]}
    return json.dumps(doc)


@pytest.fixture
def community():
    """Factory: community dict (id, x, y, edge)."""
    return _community


@pytest.fixture
def period():
    """Factory: one schedule period dict."""
    return _period


@pytest.fixture
def config_text():
    """Factory: full configuration document as JSON text."""
    return _config


@pytest.fixture
def roaming_text():
    """One roaming-only node, one long period, no pauses."""
    return _config([{
        "id": "n0",
        "schedule": [_period(1e6, [_community("r", 0, 0, 1000)], [[1.0]], [520], [0])],
    }])


@pytest.fixture
def roaming_profile(roaming_text):
    return load_and_validate(roaming_text)[0]


@pytest.fixture
def local_text():
    """One node with a 100 m community centered in the field plus roaming."""
    return _config([{
        "id": "n0",
        "schedule": [
            _period(
                5760,
                [_community("l", 450, 450, 100), _community("r", 0, 0, 1000)],
                [[0.8, 0.2], [0.5, 0.5]],
                [80, 520],
                [100, 50],
            ),
            _period(
                2880,
                [_community("l", 450, 450, 100), _community("r", 0, 0, 1000)],
                [[0.875, 0.125], [0.5, 0.5]],
                [80, 520],
                [100, 50],
            ),
        ],
    }])


@pytest.fixture
def local_profile(local_text):
    return load_and_validate(local_text)[0]


@pytest.fixture
def scenario_profiles():
    """Factory: profiles of a bundled scenario for a given seed."""
    def load(name: str, seed: int = 0):
        return load_config(name, seed).profiles
    return load
