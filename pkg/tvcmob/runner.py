"""tvcmob runner: orchestrates one CLI verb: config → computation → result files.

Data flow per run:
1. Resolve --config (file path or bundled scenario) and load it with the seed
2. Create the result directory (--out, or results/<verb>/<timestamp>/)
3. Run the verb: simulate, measure, evaluate formulas or compare them
4. Write the verb's CSV/JSON outputs
5. Write manifest.json (verb, seed, config digest, versions, parameters)

Every output except the manifest's created_at field is a pure function of
(verb, config, seed, parameters).
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import platform
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from rich.console import Console

from tvcmob import __version__
from tvcmob.analytics import average_node_degree, hitting_time, meeting_time
from tvcmob.config import load_and_validate
from tvcmob.errors import InvariantError, NoHitPossibleError, NoMeetingPossibleError
from tvcmob.experiments import (
    PopulationGroup,
    epidemic_simulate,
    greedy_forwarding_success,
    nodes_needed,
    population_degree,
    population_site_degree,
    route_site,
    scale_population,
    si_params_from_profiles,
    si_solve,
)
from tvcmob.models import (
    NodeProfile,
    QuantityCheck,
    RunSpec,
    Trace,
    ValidationReport,
)
from tvcmob.scenarios import ScenarioInfo, resolve_config
from tvcmob.scorer import build_check, render_report
from tvcmob.simulator import emit, generate_trace, write_metadata
from tvcmob.stats import (
    ContactSummary,
    contacts,
    empirical_hitting_time,
    empirical_meeting_time,
    empirical_node_degree,
    reappearance_curve,
    visiting_preference,
    write_ecdf_csv,
    write_preference_csv,
    write_reappearance_csv,
)

DEFAULT_CYCLES = 10
DEGREE_BATCHES = 10
# Local-community share the disk πK² may cover for the degree check to apply.
DEGREE_DISK_SHARE = 0.2
# Default greedy route: across the community centered at (300, 300).
DEFAULT_ROUTE_SRC = (250.0, 250.0)
DEFAULT_ROUTE_DST = (350.0, 350.0)


@dataclass
class LoadedConfig:
    """A resolved and validated configuration."""

    label: str
    text: str
    profiles: list[NodeProfile]
    scenario: Optional[ScenarioInfo] = None

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.text.encode("utf-8")).hexdigest()

    @property
    def default_range(self) -> float:
        return self.scenario.default_range if self.scenario else 10.0

    @property
    def field_edge(self) -> float:
        return self.profiles[0].field.edge_length

    def cycle_duration(self) -> float:
        return max(p.cycle_duration for p in self.profiles)


def load_config(ref: str, seed: int = 0) -> LoadedConfig:
    """Resolve ``ref`` and parse it; raises TvcError on any problem."""
    label, text, scenario = resolve_config(ref)
    return LoadedConfig(label=label, text=text, profiles=load_and_validate(text, seed), scenario=scenario)


# ---------------------------------------------------------------------------
# Result directories and manifests
# ---------------------------------------------------------------------------

def _results_root() -> Path:
    """Absolute path to tvcmob/results/."""
    return Path(__file__).parent / "results"


def _timestamp() -> str:
    return datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")


def ensure_result_dir(verb: str, out: Optional[Path]) -> Path:
    """Create the result directory for one run.

    Default layout: tvcmob/results/<verb>/<timestamp>/
    """
    result_dir = out if out is not None else _results_root() / verb / _timestamp()
    result_dir.mkdir(parents=True, exist_ok=True)
    return result_dir


def write_manifest(
    result_dir: Path,
    verb: str,
    seed: int,
    cfg: Optional[LoadedConfig],
    params: dict,
) -> Path:
    """Write manifest.json; created_at is the only non-reproducible field."""
    manifest = {
        "verb": verb,
        "seed": seed,
        "config": cfg.label if cfg else None,
        "config_sha256": cfg.digest if cfg else None,
        "params": params,
        "versions": {
            "tvcmob": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
        },
        "created_at": datetime.now(timezone.utc).isoformat(),
    }
    path = result_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    return path


def _write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, indent=2), encoding="utf-8")


def _write_dict_rows(path: Path, rows: Sequence[dict]) -> None:
    if not rows:
        path.write_text("", encoding="utf-8")
        return
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def _run_spec(cfg: LoadedConfig, seed: int, duration: Optional[float], dt: float) -> RunSpec:
    if duration is None:
        duration = DEFAULT_CYCLES * cfg.cycle_duration()
    return RunSpec(seed=seed, duration=duration, profiles=tuple(cfg.profiles), dt=dt)


def simulate(cfg: LoadedConfig, seed: int, duration: Optional[float], dt: float) -> Trace:
    return generate_trace(_run_spec(cfg, seed, duration, dt))


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------

def run_generate(
    cfg: LoadedConfig,
    seed: int,
    duration: Optional[float],
    dt: float,
    formats: Sequence[str],
    result_dir: Path,
    console: Console,
) -> Trace:
    """Simulate the configuration and write trace.<fmt> plus trace.meta.json."""
    run = _run_spec(cfg, seed, duration, dt)
    console.print(f"\n[bold]Generating:[/bold] {cfg.label}")
    console.print(f"  Nodes: {len(run.profiles)}  Duration: {run.duration:g} s  Δt: {run.dt:g} s  Seed: {seed}")

    trace = generate_trace(run)
    for fmt in formats:
        path = result_dir / f"trace.{fmt}"
        size = emit(trace, fmt, path)
        console.print(f"  [dim]{path.name}: {size} bytes[/dim]")
    write_metadata(trace, result_dir / "trace.meta.json")

    write_manifest(result_dir, "generate", seed, cfg, {
        "duration": run.duration,
        "dt": run.dt,
        "formats": list(formats),
    })
    console.print(f"  [bold green]Done.[/bold green] Trace saved to {result_dir}")
    return trace


# ---------------------------------------------------------------------------
# stats
# ---------------------------------------------------------------------------

def default_gaps(trace: Trace) -> list[float]:
    """Whole-hour lags that fit the trace; half the span for short traces."""
    longest = (trace.sample_count - 1) * trace.dt
    hours = int(longest // 3600)
    if hours >= 1:
        return [3600.0 * h for h in range(1, hours + 1)]
    half = (trace.sample_count // 2) * trace.dt
    return [half] if half > 0 else []


def run_stats(
    trace: Optional[Trace],
    range_m: float,
    grid: float,
    result_dir: Path,
    console: Console,
    field_edge: Optional[float] = None,
    gaps: Optional[Sequence[float]] = None,
    contact_log: Optional[ContactSummary] = None,
) -> dict:
    """Write empirical curves for a trace and/or an encounter log.

    Outputs: preference.csv, reappearance.csv, durations_ecdf.csv,
    intermeeting_ecdf.csv, degree.json and stats.json (summary).
    """
    summary: dict = {"range_m": range_m, "grid": grid}

    if trace is not None:
        console.print(f"\n[bold]Trace:[/bold] {trace.node_count} nodes, {trace.sample_count} samples, Δt {trace.dt:g} s")
        pref = visiting_preference(trace, grid, field_edge)
        write_preference_csv(result_dir / "preference.csv", pref.mean)
        summary["never_on"] = pref.flagged
        summary["top_cell_share"] = pref.mean[0] if pref.mean else 0.0

        lags = list(gaps) if gaps else default_gaps(trace)
        if lags:
            curve = reappearance_curve(trace, grid, lags)
            write_reappearance_csv(result_dir / "reappearance.csv", curve)
            summary["reappearance"] = dict(zip(curve.gaps_h, curve.probabilities))
        else:
            console.print("  [yellow]Trace too short for a re-appearance curve[/yellow]")

        degree = empirical_node_degree(trace, range_m)
        _write_json(result_dir / "degree.json", {"range_m": range_m, "degree": degree})
        summary["mean_degree"] = float(np.mean(list(degree.values()))) if degree else 0.0
        console.print(f"  Mean degree (K={range_m:g}): {summary['mean_degree']:.4f}")

    found = contact_log if contact_log is not None else (contacts(trace, range_m) if trace is not None else None)
    if found is not None:
        write_ecdf_csv(result_dir / "durations_ecdf.csv", found.durations)
        write_ecdf_csv(result_dir / "intermeeting_ecdf.csv", found.inter_meetings)
        summary["contacts"] = len(found.events)
        summary["inter_meetings"] = len(found.inter_meetings.values)
        console.print(f"  Contacts: {len(found.events)}  Inter-meeting gaps: {len(found.inter_meetings.values)}")

    _write_json(result_dir / "stats.json", summary)
    return summary


# ---------------------------------------------------------------------------
# theory
# ---------------------------------------------------------------------------

def group_representatives(profiles: Sequence[NodeProfile]) -> list[tuple[NodeProfile, int]]:
    """(first member, member count) per group, in configuration order."""
    reps: dict[str, NodeProfile] = {}
    counts: dict[str, int] = {}
    for p in profiles:
        reps.setdefault(p.group, p)
        counts[p.group] = counts.get(p.group, 0) + 1
    return [(reps[g], counts[g]) for g in reps]


def partner_for(a: NodeProfile, profiles: Sequence[NodeProfile]) -> NodeProfile:
    """Another member of a's group, or an independent copy of a."""
    for p in profiles:
        if p.group == a.group and p.node_id != a.node_id:
            return p
    return dataclasses.replace(a, node_id=f"{a.node_id}~copy")


def _meeting_pairs(profiles: Sequence[NodeProfile]) -> list[tuple[NodeProfile, NodeProfile]]:
    reps = [r for r, _ in group_representatives(profiles)]
    pairs = []
    for i, a in enumerate(reps):
        pairs.append((a, partner_for(a, profiles)))
        for b in reps[i + 1 :]:
            pairs.append((a, b))
    return pairs


def run_theory(
    cfg: LoadedConfig,
    seed: int,
    range_m: float,
    iterations: int,
    result_dir: Path,
    console: Console,
) -> dict:
    """Analytic degree / hitting / meeting times, optionally cross-checked.

    Degree is reported for every node; hitting time per group representative;
    meeting time per pair of representatives (and within each group).
    """
    console.print(f"\n[bold]Theory:[/bold] {cfg.label}  K={range_m:g} m")
    profiles = cfg.profiles
    out: dict = {"config": cfg.label, "range_m": range_m, "degree": [], "hitting": [], "meeting": []}
    degree_rows: list[dict] = []
    hitting_rows: list[dict] = []
    meeting_rows: list[dict] = []

    degrees = []
    for p in profiles:
        rep = average_node_degree(p, profiles, range_m)
        degrees.append(rep.degree)
        out["degree"].append(rep.to_dict())
        degree_rows.extend(rep.to_rows())
    out["mean_degree"] = float(np.mean(degrees))
    console.print(f"  Mean degree: {out['mean_degree']:.5f}")

    mc: dict = {"iterations": iterations, "hitting": {}, "meeting": {}}
    for rep, _ in group_representatives(profiles):
        try:
            hr = hitting_time(rep, range_m)
        except NoHitPossibleError as e:
            console.print(f"  [yellow]{rep.node_id}: {e}[/yellow]")
            out["hitting"].append({"node": rep.node_id, "hitting_time": "inf", "error": e.code})
            continue
        out["hitting"].append(hr.to_dict())
        hitting_rows.extend(hr.to_rows())
        console.print(f"  Hitting time {rep.node_id}: {hr.hitting_time:.1f} s")
        if iterations > 0:
            res = empirical_hitting_time(rep, range_m, iterations, seed)
            mc["hitting"][rep.node_id] = res.to_dict()
            console.print(f"    [dim]Monte Carlo: {res.mean:.1f} ± {res.stderr:.1f} s[/dim]")

    for a, b in _meeting_pairs(profiles):
        key = f"{a.node_id}|{b.node_id}"
        try:
            mr = meeting_time(a, b, range_m)
        except NoMeetingPossibleError as e:
            console.print(f"  [yellow]{key}: {e}[/yellow]")
            out["meeting"].append({"node_a": a.node_id, "node_b": b.node_id, "meeting_time": "inf", "error": e.code})
            continue
        out["meeting"].append(mr.to_dict())
        meeting_rows.extend(mr.to_rows())
        console.print(f"  Meeting time {a.node_id}/{b.node_id}: {mr.meeting_time:.1f} s")
        if iterations > 0:
            res = empirical_meeting_time(a, b, range_m, iterations, seed)
            mc["meeting"][key] = res.to_dict()
            console.print(f"    [dim]Monte Carlo: {res.mean:.1f} ± {res.stderr:.1f} s[/dim]")

    if iterations > 0:
        out["monte_carlo"] = mc

    _write_json(result_dir / "theory.json", out)
    _write_dict_rows(result_dir / "degree.csv", degree_rows)
    _write_dict_rows(result_dir / "hitting.csv", hitting_rows)
    _write_dict_rows(result_dir / "meeting.csv", meeting_rows)
    write_manifest(result_dir, "theory", seed, cfg, {"range_m": range_m, "iterations": iterations})
    return out


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------

def smallest_local_edge(profiles: Sequence[NodeProfile]) -> float:
    """Edge of the smallest non-roaming community (the field edge if none)."""
    edges = [
        c.edge_length
        for p in profiles
        for period in p.schedule
        for c in period.communities
        if not c.is_roaming
    ]
    return min(edges) if edges else profiles[0].field.edge_length


def batch_degree(trace: Trace, range_m: float, batches: int = DEGREE_BATCHES) -> tuple[float, float]:
    """Mean empirical degree over nodes, with a batch-means standard error."""
    bounds = np.linspace(0, trace.sample_count, batches + 1).astype(int)
    means = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        if hi <= lo:
            continue
        part = dataclasses.replace(
            trace,
            times=trace.times[lo:hi],
            x=trace.x[lo:hi],
            y=trace.y[lo:hi],
            on=trace.on[lo:hi],
            trajectories=None,
        )
        means.append(float(np.mean(list(empirical_node_degree(part, range_m).values()))))
    arr = np.array(means)
    stderr = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
    return float(arr.mean()), stderr


def _degree_check(
    cfg: LoadedConfig,
    seed: int,
    range_m: float,
    threshold: float,
    duration: Optional[float],
    dt: float,
    console: Console,
) -> QuantityCheck:
    profiles = cfg.profiles
    edge = smallest_local_edge(profiles)
    if len(profiles) < 2:
        return QuantityCheck("degree", math.nan, math.nan, 0.0, threshold, threshold,
                             applicable=False, note="single-node configuration")
    if math.pi * range_m * range_m > DEGREE_DISK_SHARE * edge * edge:
        return QuantityCheck("degree", math.nan, math.nan, 0.0, threshold, threshold, applicable=False,
                             note=f"πK² exceeds {DEGREE_DISK_SHARE:.0%} of the {edge:g} m community")

    analytic = float(np.mean([average_node_degree(p, profiles, range_m).degree for p in profiles]))
    console.print("  Simulating degree trace ...")
    trace = generate_trace(_run_spec(cfg, seed, duration, dt))
    mean, stderr = batch_degree(trace, range_m)
    return build_check("degree", analytic, mean, stderr, threshold,
                       note=f"{trace.sample_count} samples, {DEGREE_BATCHES} batches")


def run_validate(
    cfg: LoadedConfig,
    seed: int,
    iterations: int,
    range_m: float,
    thresholds: dict[str, float],
    duration: Optional[float],
    dt: float,
    result_dir: Path,
    console: Console,
) -> ValidationReport:
    """Compare hitting time, meeting time and degree against simulation.

    The first node is the hitting/meeting subject; its partner is another
    member of its group or an independent copy of it.
    """
    console.print(f"\n[bold]Validating:[/bold] {cfg.label}")
    console.print(f"  Iterations: {iterations}  K: {range_m:g} m  Seed: {seed}")
    report = ValidationReport(
        config=cfg.label,
        seed=seed,
        iterations=iterations,
        range_m=range_m,
        timestamp=result_dir.name,
    )
    a = cfg.profiles[0]
    b = partner_for(a, cfg.profiles)

    console.print("  Hitting time ...")
    try:
        ht = hitting_time(a, range_m).hitting_time
    except NoHitPossibleError:
        ht = math.inf
    res = empirical_hitting_time(a, range_m, iterations, seed)
    report.checks.append(build_check("hitting_time", ht, res.mean, res.stderr, thresholds["hitting_time"],
                                     note=_timeout_note(res.timeouts)))

    console.print("  Meeting time ...")
    try:
        mt = meeting_time(a, b, range_m).meeting_time
    except NoMeetingPossibleError:
        mt = math.inf
    res = empirical_meeting_time(a, b, range_m, iterations, seed + 1)
    report.checks.append(build_check("meeting_time", mt, res.mean, res.stderr, thresholds["meeting_time"],
                                     note=_timeout_note(res.timeouts)))

    report.checks.append(_degree_check(cfg, seed, range_m, thresholds["degree"], duration, dt, console))

    report.save(result_dir)
    write_manifest(result_dir, "validate", seed, cfg, {
        "iterations": iterations,
        "range_m": range_m,
        "thresholds": thresholds,
        "duration": duration,
        "dt": dt,
    })
    render_report(report, console)
    return report


def _timeout_note(timeouts: int) -> str:
    return f"{timeouts} iterations timed out" if timeouts else ""


# ---------------------------------------------------------------------------
# epidemic
# ---------------------------------------------------------------------------

def run_epidemic(
    cfg: LoadedConfig,
    seed: int,
    range_m: float,
    trials: int,
    duration: Optional[float],
    dt: float,
    step: float,
    source_group: Optional[str],
    result_dir: Path,
    console: Console,
) -> dict:
    """SI fluid model vs simulated epidemic spreading from one source node.

    The simulated source is the first member of the source group (the first
    group by default), matching the SI model's single initial infection.
    """
    run = _run_spec(cfg, seed, duration, dt)
    params = si_params_from_profiles(cfg.profiles, range_m, source_group)
    source_name = source_group if source_group is not None else params.group_names[0]
    source = next(p.node_id for p in cfg.profiles if p.group == source_name)
    console.print(f"\n[bold]Epidemic:[/bold] {cfg.label}  M={len(cfg.profiles)}  K={range_m:g} m  source={source}")

    theory = si_solve(params, run.duration, step)
    console.print(f"  Simulating {trials} trials ...")
    sim = epidemic_simulate(run, range_m, source, trials)

    predicted = np.interp(sim.times, theory.times, theory.infected)
    max_diff = float(np.max(np.abs(predicted - sim.infected)))
    console.print(f"  Max |ΔI(t)|: {max_diff:.2f} nodes ({max_diff / len(cfg.profiles):.1%} of M)")

    theory.write_csv(result_dir / "si_curve.csv")
    sim.write_csv(result_dir / "sim_curve.csv")
    out = {
        "config": cfg.label,
        "range_m": range_m,
        "trials": trials,
        "source": source,
        "nodes": len(cfg.profiles),
        "max_abs_difference": max_diff,
        "final_si": float(theory.infected[-1]),
        "final_sim": float(sim.infected[-1]),
        "si_params": params.to_dict(),
    }
    _write_json(result_dir / "epidemic.json", out)
    write_manifest(result_dir, "epidemic", seed, cfg, {
        "range_m": range_m,
        "trials": trials,
        "duration": run.duration,
        "dt": run.dt,
        "step": step,
        "source_group": source_name,
    })
    return out


# ---------------------------------------------------------------------------
# route
# ---------------------------------------------------------------------------

def population_groups(profiles: Sequence[NodeProfile]) -> list[PopulationGroup]:
    """Group representatives weighted by member count."""
    return [PopulationGroup(rep, float(n)) for rep, n in group_representatives(profiles)]


def route_success(
    profiles: Sequence[NodeProfile],
    seed: int,
    ranges: Sequence[float],
    trials: int,
    src: tuple[float, float],
    dst: tuple[float, float],
    duration: float,
    dt: float,
) -> list[float]:
    """Greedy delivery rate per range, all ranges on one trace and snapshot set."""
    run = RunSpec(seed=seed, duration=duration, profiles=tuple(profiles), dt=dt)
    trace = generate_trace(run)
    return [greedy_forwarding_success(run, k, src, dst, trials, trace=trace) for k in ranges]


def run_route(
    cfg: LoadedConfig,
    seed: int,
    ranges: Sequence[float],
    trials: int,
    nodes: Optional[int],
    src: Optional[tuple[float, float]],
    dst: Optional[tuple[float, float]],
    duration: Optional[float],
    dt: float,
    result_dir: Path,
    console: Console,
    reference: Optional[LoadedConfig] = None,
    reference_nodes: Optional[int] = None,
) -> dict:
    """Greedy forwarding success rate versus transmission range.

    ``nodes`` rescales the population (group shares kept). With a
    ``reference`` population, the size is instead the smallest one in which a
    node on the route sees, in every period, at least the degree it sees in
    the reference population's sparsest period at the first range. The
    reference itself is routed on the same grid for comparison.
    """
    if not ranges:
        raise InvariantError("route needs at least one range")
    src = src if src is not None else DEFAULT_ROUTE_SRC
    dst = dst if dst is not None else DEFAULT_ROUTE_DST
    groups = population_groups(cfg.profiles)
    out: dict = {"config": cfg.label, "ranges": list(ranges), "trials": trials, "src": src, "dst": dst}

    ref_rates: Optional[list[float]] = None
    if reference is not None:
        ref_groups = population_groups(reference.profiles)
        ref_size = reference_nodes if reference_nodes is not None else len(reference.profiles)
        ref_profiles = scale_population(ref_groups, ref_size)
        site = route_site(src, dst, cfg.field_edge)
        if site is None:
            ref_degree = population_degree(ref_groups, ref_size, ranges[0])
        else:
            ref_degree = min(population_site_degree(ref_groups, ref_size, ranges[0], site))
        nodes = nodes_needed(groups, ref_degree, ranges[0], site)
        console.print(f"  Reference {reference.label}: {ref_size} nodes, degree {ref_degree:.3f} at K={ranges[0]:g}")
        console.print(f"  Nodes needed for {cfg.label}: [bold]{nodes}[/bold]")
        ref_duration = duration if duration is not None else reference.cycle_duration()
        ref_rates = route_success(ref_profiles, seed, ranges, trials, src, dst, ref_duration, dt)
        out.update({
            "reference": reference.label,
            "reference_nodes": ref_size,
            "reference_degree": ref_degree,
            "nodes_needed": nodes,
            "site": list(site.as_tuple()) if site is not None else None,
            "reference_success": ref_rates,
        })

    profiles = scale_population(groups, nodes) if nodes is not None else list(cfg.profiles)
    console.print(f"\n[bold]Routing:[/bold] {cfg.label}  {len(profiles)} nodes  {trials} snapshots")
    run_duration = duration if duration is not None else cfg.cycle_duration()
    rates = route_success(profiles, seed, ranges, trials, src, dst, run_duration, dt)
    out["nodes"] = len(profiles)
    out["success"] = rates

    rows = []
    for i, (k, r) in enumerate(zip(ranges, rates)):
        row = {"range_m": k, "success": r}
        if ref_rates is not None:
            row["reference_success"] = ref_rates[i]
        rows.append(row)
        console.print(f"  K={k:g}: {r:.1%}" + (f"  (reference {ref_rates[i]:.1%})" if ref_rates else ""))
    _write_dict_rows(result_dir / "route.csv", rows)
    _write_json(result_dir / "route.json", out)
    write_manifest(result_dir, "route", seed, cfg, {
        "ranges": list(ranges),
        "trials": trials,
        "nodes": len(profiles),
        "duration": run_duration,
        "dt": dt,
    })
    return out
