"""Configuration loading for tvcmob.

A configuration is a JSON document describing the field and every node's
time-variant community schedule. Loading expands template nodes, resolves
"random" community placement with the run seed, applies speed/on-off defaults
and checks every invariant, naming the node/period/community at fault.
"""

from __future__ import annotations

import json
import math
from typing import Any, Optional

import numpy as np

from tvcmob.errors import InvariantError, ReducibleChainError, SchemaError
from tvcmob.models import (
    Community,
    FieldSpec,
    NodeProfile,
    OnOffKind,
    OnOffPolicy,
    TimePeriod,
)

ROW_SUM_TOLERANCE = 1e-9

# Placement streams are keyed apart from the per-node movement streams.
_PLACEMENT_STREAM = 0x706C6163

SCHEMA_HELP = """\
Configuration document (JSON, UTF-8):

  {
    "field": {"edge_length": 1000},
    "speed": {"min": 5, "max": 15},            optional global default
    "nodes": [
      {
        "id": "n0",
        "group": "g1",                          optional, defaults to id
        "count": 25,                            optional, expands a template
        "schedule": [
          {
            "duration_s": 5760,
            "speed": {"min": 5, "max": 15},     optional if global speed set
            "communities": [
              {"id": "l", "x": 250, "y": 250, "edge": 100},
              {"id": "r", "x": 0, "y": 0, "edge": 1000}
            ],
            "transition_matrix": [[0.8, 0.2], [0.5, 0.5]],
            "mean_epoch_length": [80, 520],
            "max_pause_s": [100, 50]
          }
        ],
        "onoff": {"kind": "always_on"}          always_on | on_when_paused |
                                                on_when_moving | fixed_prob (+ "p_on")
      }
    ]
  }

"x"/"y" may be "random": placement is drawn per node from the run seed.
A community with edge == field edge at origin (0, 0) is the roaming community.
"""


def load_and_validate(text: str, seed: int = 0) -> list[NodeProfile]:
    """Parse a configuration document into validated node profiles."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"invalid JSON: {e.msg} (line {e.lineno})") from e
    if not isinstance(doc, dict):
        raise SchemaError("top level must be an object")

    field_doc = _require(doc, "field", dict, "document")
    edge = _number(field_doc, "edge_length", "field")
    if edge <= 0:
        raise InvariantError("edge_length must be > 0", location="field")
    fld = FieldSpec(edge_length=edge)

    global_speed = _speed_range(doc["speed"], "document") if "speed" in doc else None

    nodes_doc = _require(doc, "nodes", list, "document")
    if not nodes_doc:
        raise SchemaError("at least one node is required", location="document")

    profiles: list[NodeProfile] = []
    seen: set[str] = set()
    for n, node_doc in enumerate(nodes_doc):
        if not isinstance(node_doc, dict):
            raise SchemaError("node must be an object", location=f"node #{n}")
        node_id = _require(node_doc, "id", str, f"node #{n}")
        count = node_doc.get("count")
        if count is None:
            ids = [node_id]
            group = node_doc.get("group", node_id)
        else:
            if isinstance(count, bool) or not isinstance(count, int) or count < 1:
                raise SchemaError("count must be a positive integer", location=f"node '{node_id}'")
            ids = [f"{node_id}.{i}" for i in range(count)]
            group = node_doc.get("group", node_id)
        if not isinstance(group, str):
            raise SchemaError("group must be a string", location=f"node '{node_id}'")

        for nid in ids:
            if nid in seen:
                raise InvariantError("duplicate node id", location=f"node '{nid}'")
            seen.add(nid)
            placement_rng = np.random.default_rng([seed, _PLACEMENT_STREAM, len(profiles)])
            profiles.append(
                _build_profile(node_doc, nid, group, fld, global_speed, placement_rng)
            )
    return profiles


def _build_profile(
    node_doc: dict,
    node_id: str,
    group: str,
    fld: FieldSpec,
    global_speed: Optional[tuple[float, float]],
    placement_rng: np.random.Generator,
) -> NodeProfile:
    where = f"node '{node_id}'"
    schedule_doc = _require(node_doc, "schedule", list, where)
    if not schedule_doc:
        raise SchemaError("schedule needs at least one period", location=where)

    # Same community id in several periods keeps one random placement.
    placed: dict[tuple[str, float], tuple[float, float]] = {}
    periods = tuple(
        _build_period(p_doc, t, node_id, fld, global_speed, placement_rng, placed)
        for t, p_doc in enumerate(schedule_doc)
    )
    onoff = _build_onoff(node_doc.get("onoff"), periods, where)
    return NodeProfile(node_id=node_id, field=fld, schedule=periods, onoff=onoff, group=group)


def _build_period(
    doc: Any,
    t: int,
    node_id: str,
    fld: FieldSpec,
    global_speed: Optional[tuple[float, float]],
    placement_rng: np.random.Generator,
    placed: dict[tuple[str, float], tuple[float, float]],
) -> TimePeriod:
    where = f"node '{node_id}' period {t}"
    if not isinstance(doc, dict):
        raise SchemaError("period must be an object", location=where)

    duration = _number(doc, "duration_s", where)
    if duration <= 0:
        raise InvariantError("duration_s must be > 0", location=where)

    if "speed" in doc:
        speed = _speed_range(doc["speed"], where)
    elif global_speed is not None:
        speed = global_speed
    else:
        raise SchemaError("missing field 'speed' (no global default)", location=where)

    comm_docs = _require(doc, "communities", list, where)
    if not comm_docs:
        raise SchemaError("period needs at least one community", location=where)
    communities = []
    ids: set[str] = set()
    for c_doc in comm_docs:
        comm = _build_community(c_doc, where, fld, placement_rng, placed)
        if comm.id in ids:
            raise InvariantError("duplicate community id", location=f"{where} community '{comm.id}'")
        ids.add(comm.id)
        communities.append(comm)
    size = len(communities)

    matrix_doc = _require(doc, "transition_matrix", list, where)
    if len(matrix_doc) != size:
        raise SchemaError(f"transition_matrix must be {size}x{size}", location=where)
    matrix = []
    for i, row in enumerate(matrix_doc):
        row_where = f"{where} community '{communities[i].id}'"
        if not isinstance(row, list) or len(row) != size:
            raise SchemaError(f"transition_matrix row must have {size} entries", location=row_where)
        vals = tuple(_as_number(v, row_where) for v in row)
        if any(v < 0 for v in vals):
            raise InvariantError("negative transition probability", location=row_where)
        if abs(math.fsum(vals) - 1.0) > ROW_SUM_TOLERANCE:
            raise InvariantError(f"row sum ≠ 1 (got {math.fsum(vals):.12g})", location=row_where)
        matrix.append(vals)

    epoch = _per_community(doc, "mean_epoch_length", communities, where)
    for c, v in zip(communities, epoch):
        if v <= 0:
            raise InvariantError("mean_epoch_length must be > 0", location=f"{where} community '{c.id}'")
    pause = _per_community(doc, "max_pause_s", communities, where)
    for c, v in zip(communities, pause):
        if v < 0:
            raise InvariantError("max_pause_s must be >= 0", location=f"{where} community '{c.id}'")

    from tvcmob.occupancy import is_irreducible

    if not is_irreducible(np.array(matrix)):
        raise ReducibleChainError("transition matrix is reducible", location=where)

    return TimePeriod(
        index=t,
        duration=duration,
        communities=tuple(communities),
        transition_matrix=tuple(matrix),
        mean_epoch_length=epoch,
        max_pause=pause,
        speed_range=speed,
    )


def _build_community(
    doc: Any,
    period_where: str,
    fld: FieldSpec,
    placement_rng: np.random.Generator,
    placed: dict[tuple[str, float], tuple[float, float]],
) -> Community:
    if not isinstance(doc, dict):
        raise SchemaError("community must be an object", location=period_where)
    cid = _require(doc, "id", str, period_where)
    where = f"{period_where} community '{cid}'"
    edge = _number(doc, "edge", where)
    if edge <= 0:
        raise InvariantError("edge must be > 0", location=where)
    if edge > fld.edge_length + 1e-9:
        raise InvariantError("community larger than the field", location=where)

    key = (cid, edge)
    if key in placed and (doc.get("x") == "random" or doc.get("y") == "random"):
        x, y = placed[key]
    else:
        x = _coordinate(doc, "x", edge, fld, placement_rng, where)
        y = _coordinate(doc, "y", edge, fld, placement_rng, where)
        placed[key] = (x, y)

    limit = fld.edge_length - edge
    for name, v in (("x", x), ("y", y)):
        if v < -1e-9 or v > limit + 1e-9:
            raise InvariantError(f"community outside field ({name}={v:g}, allowed [0, {limit:g}])", location=where)

    speed = _speed_range(doc["speed"], where) if "speed" in doc else None
    roaming = abs(edge - fld.edge_length) <= 1e-9 and abs(x) <= 1e-9 and abs(y) <= 1e-9
    return Community(
        id=cid,
        origin_x=x,
        origin_y=y,
        edge_length=edge,
        is_roaming=roaming,
        speed_range=speed,
    )


def random_origin(edge: float, field_edge: float, rng: np.random.Generator) -> float:
    """Random placement along one axis.

    When the community edge divides the field, origins snap to the grid of
    community-sized cells so that every field point is covered with the same
    probability; otherwise the origin is uniform on [0, N - C].
    """
    cells = field_edge / edge
    if abs(cells - round(cells)) < 1e-9:
        return edge * float(rng.integers(0, int(round(cells))))
    return float(rng.uniform(0.0, field_edge - edge))


def _coordinate(
    doc: dict,
    key: str,
    edge: float,
    fld: FieldSpec,
    rng: np.random.Generator,
    where: str,
) -> float:
    v = doc.get(key)
    if v == "random":
        return random_origin(edge, fld.edge_length, rng)
    if v is None:
        raise SchemaError(f"missing field '{key}'", location=where)
    return _as_number(v, where, key)


def _build_onoff(doc: Any, periods: tuple[TimePeriod, ...], where: str) -> OnOffPolicy:
    if doc is None:
        return OnOffPolicy()
    if not isinstance(doc, dict):
        raise SchemaError("onoff must be an object", location=where)
    raw = _require(doc, "kind", str, f"{where} onoff")
    try:
        kind = OnOffKind(raw.strip().lower().replace("-", "_"))
    except ValueError:
        valid = ", ".join(k.value for k in OnOffKind)
        raise SchemaError(f"unknown onoff kind '{raw}' (expected one of {valid})", location=where) from None

    if kind is not OnOffKind.FIXED_PROB:
        return OnOffPolicy(kind=kind)

    p_doc = doc.get("p_on")
    if not isinstance(p_doc, list) or not p_doc:
        raise SchemaError("fixed_prob needs a 'p_on' list", location=f"{where} onoff")
    if all(isinstance(r, list) for r in p_doc):
        rows = p_doc
    else:
        # A flat list applies to every period by community position.
        rows = [p_doc] * len(periods)
    if len(rows) != len(periods):
        raise SchemaError("p_on needs one row per period", location=f"{where} onoff")

    table = []
    for t, (row, period) in enumerate(zip(rows, periods)):
        if len(row) != period.size:
            raise SchemaError(f"p_on row must have {period.size} entries", location=f"{where} period {t}")
        vals = tuple(_as_number(v, f"{where} period {t}") for v in row)
        for c, v in zip(period.communities, vals):
            if not 0.0 <= v <= 1.0:
                raise InvariantError("p_on must lie in [0, 1]", location=f"{where} period {t} community '{c.id}'")
        table.append(vals)
    return OnOffPolicy(kind=kind, p_on=tuple(table))


# ---------------------------------------------------------------------------
# Field helpers
# ---------------------------------------------------------------------------

def _require(doc: dict, key: str, typ: type, where: str) -> Any:
    if key not in doc:
        raise SchemaError(f"missing field '{key}'", location=where)
    v = doc[key]
    if not isinstance(v, typ):
        raise SchemaError(f"field '{key}' must be {typ.__name__}", location=where)
    return v


def _as_number(v: Any, where: str, key: str = "value") -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SchemaError(f"{key} must be a number, got {v!r}", location=where)
    f = float(v)
    if not math.isfinite(f):
        raise SchemaError(f"{key} must be finite", location=where)
    return f


def _number(doc: dict, key: str, where: str) -> float:
    if key not in doc:
        raise SchemaError(f"missing field '{key}'", location=where)
    return _as_number(doc[key], where, key)


def _speed_range(doc: Any, where: str) -> tuple[float, float]:
    if not isinstance(doc, dict):
        raise SchemaError("speed must be an object with min/max", location=where)
    lo = _number(doc, "min", f"{where} speed")
    hi = _number(doc, "max", f"{where} speed")
    if not (hi >= lo > 0):
        raise InvariantError(f"need speed max >= min > 0 (min={lo:g}, max={hi:g})", location=where)
    return (lo, hi)


def _per_community(doc: dict, key: str, communities: list[Community], where: str) -> tuple[float, ...]:
    vals = _require(doc, key, list, where)
    if len(vals) != len(communities):
        raise SchemaError(f"'{key}' needs {len(communities)} entries", location=where)
    return tuple(_as_number(v, f"{where} community '{c.id}'", key) for v, c in zip(vals, communities))
