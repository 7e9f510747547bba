"""CLI for tvcmob.

Usage:
    python -m tvcmob list                                        # Bundled configs
    python -m tvcmob generate --config minimal --seed 1 --duration 1000
    python -m tvcmob stats --trace out/trace.csv --range 10      # Empirical curves
    python -m tvcmob theory --config model3_two_group --iters 500
    python -m tvcmob validate --config model1 --iters 5000 --seed 7
    python -m tvcmob epidemic --config model3_two_group --trials 100
    python -m tvcmob route --config model3_two_group --reference model1_two_group --reference-nodes 200
    python -m tvcmob results                                     # Stored validations

--config takes a JSON path or a bundled scenario name. Exit codes: 0 success,
1 validation failure, 2 usage or configuration error.
"""

from __future__ import annotations

import logging
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, List, Optional

import typer
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from tvcmob.config import SCHEMA_HELP
from tvcmob.errors import TvcError
from tvcmob.runner import (
    LoadedConfig,
    ensure_result_dir,
    load_config,
    run_epidemic,
    run_generate,
    run_route,
    run_stats,
    run_theory,
    run_validate,
    simulate,
    write_manifest,
)
from tvcmob.scenarios import list_scenarios
from tvcmob.scorer import DEFAULT_THRESHOLDS, list_all_results
from tvcmob.stats import ingest_contacts_csv, ingest_csv

app = typer.Typer(
    name="tvcmob",
    help="Time-variant community mobility: traces, formulas and validation",
    no_args_is_help=True,
)
console = Console(stderr=True)

EXIT_VALIDATION_FAILED = 1
EXIT_USAGE = 2

ConfigOpt = typer.Option(..., "--config", "-c", help="Config JSON path or bundled scenario name")
SeedOpt = typer.Option(0, "--seed", "-s", min=0, help="Run seed (unsigned 64-bit)")
OutOpt = typer.Option(None, "--out", "-o", help="Output directory (default: results/<verb>/<timestamp>/)")
DurationOpt = typer.Option(None, "--duration", help="Simulated seconds (default: 10 schedule cycles)")
DtOpt = typer.Option(1.0, "--dt", help="Sampling interval in seconds")


@app.callback()
def main(
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging"),
) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(message)s",
        handlers=[RichHandler(console=console, show_path=False)],
        force=True,
    )


def _load(config: str, seed: int) -> LoadedConfig:
    """Load a config or exit 2 with the schema help."""
    try:
        return load_config(config, seed)
    except TvcError as e:
        console.print(f"[red]Error:[/red] {e.code}: {e}")
        console.print(SCHEMA_HELP, markup=False, highlight=False, style="dim")
        raise typer.Exit(EXIT_USAGE)


@contextmanager
def _usage_errors() -> Iterator[None]:
    """Report model errors raised while running a verb as usage errors."""
    try:
        yield
    except TvcError as e:
        console.print(f"[red]Error:[/red] {e.code}: {e}")
        raise typer.Exit(EXIT_USAGE)


@app.command("list")
def cmd_list() -> None:
    """Show bundled scenario configurations."""
    scenarios = list_scenarios()
    if not scenarios:
        console.print("[yellow]No scenarios found.[/yellow]")
        raise typer.Exit(1)

    table = Table(title="Bundled Scenarios", show_header=True, header_style="bold")
    table.add_column("Name", style="green", min_width=15)
    table.add_column("Description", min_width=30)
    table.add_column("Default K", justify="right")

    for s in scenarios:
        table.add_row(s.name, s.description, f"{s.default_range:g} m")

    console.print()
    console.print(table)
    console.print()


@app.command("generate")
def cmd_generate(
    config: str = ConfigOpt,
    seed: int = SeedOpt,
    out: Optional[Path] = OutOpt,
    duration: Optional[float] = DurationOpt,
    dt: float = DtOpt,
    fmt: Optional[str] = typer.Option(None, "--format", "-f", help="ns2 or csv (default: both)"),
) -> None:
    """Simulate a configuration and write NS2/CSV traces plus metadata."""
    formats = ["ns2", "csv"] if fmt is None else [fmt.lower()]
    if any(f not in ("ns2", "csv") for f in formats):
        console.print(f"[red]Invalid format: {fmt}[/red]. Choose: ns2, csv")
        raise typer.Exit(EXIT_USAGE)
    cfg = _load(config, seed)
    with _usage_errors():
        run_generate(cfg, seed, duration, dt, formats, ensure_result_dir("generate", out), console)


@app.command("stats")
def cmd_stats(
    trace: Optional[Path] = typer.Option(None, "--trace", "-t", help="Trace CSV (t,node,x,y,on) to analyse"),
    contacts_log: Optional[Path] = typer.Option(None, "--contacts", help="Encounter log CSV (a,b,start_s,end_s)"),
    config: Optional[str] = typer.Option(None, "--config", "-c", help="Generate the trace from this config instead"),
    seed: int = SeedOpt,
    out: Optional[Path] = OutOpt,
    duration: Optional[float] = DurationOpt,
    dt: float = DtOpt,
    range_m: float = typer.Option(10.0, "--range", "-k", help="Transmission range K in meters"),
    grid: float = typer.Option(100.0, "--grid", "-g", help="Visiting-preference cell size in meters"),
    gap: Optional[List[float]] = typer.Option(None, "--gap", help="Re-appearance lag in seconds (repeatable)"),
) -> None:
    """Empirical visiting preference, re-appearance, contacts and degree."""
    if trace is None and contacts_log is None and config is None:
        console.print("[red]Specify --trace, --contacts or --config[/red]")
        raise typer.Exit(EXIT_USAGE)
    if trace is not None and config is not None:
        console.print("[red]--trace and --config are exclusive[/red]")
        raise typer.Exit(EXIT_USAGE)

    cfg = _load(config, seed) if config is not None else None
    result_dir = ensure_result_dir("stats", out)
    with _usage_errors():
        data = None
        field_edge = None
        if trace is not None:
            data = ingest_csv(trace)
        elif cfg is not None:
            data = simulate(cfg, seed, duration, dt)
            field_edge = cfg.field_edge
        log = ingest_contacts_csv(contacts_log) if contacts_log is not None else None
        run_stats(data, range_m, grid, result_dir, console, field_edge=field_edge, gaps=gap, contact_log=log)
    write_manifest(result_dir, "stats", seed, cfg, {
        "trace": str(trace) if trace else None,
        "contacts": str(contacts_log) if contacts_log else None,
        "range_m": range_m,
        "grid": grid,
        "gaps": gap or None,
    })
    console.print(f"  [bold green]Done.[/bold green] Curves saved to {result_dir}")


@app.command("theory")
def cmd_theory(
    config: str = ConfigOpt,
    seed: int = SeedOpt,
    out: Optional[Path] = OutOpt,
    range_m: Optional[float] = typer.Option(None, "--range", "-k", help="Transmission range K (default: scenario's)"),
    iters: int = typer.Option(0, "--iters", "-n", min=0, help="Add Monte Carlo cross-checks with N iterations"),
) -> None:
    """Analytic degree, hitting time and meeting time (JSON + CSV)."""
    cfg = _load(config, seed)
    k = range_m if range_m is not None else cfg.default_range
    with _usage_errors():
        run_theory(cfg, seed, k, iters, ensure_result_dir("theory", out), console)


@app.command("validate")
def cmd_validate(
    config: str = ConfigOpt,
    seed: int = SeedOpt,
    out: Optional[Path] = OutOpt,
    iters: int = typer.Option(5000, "--iters", "-n", min=1, help="Monte Carlo iterations"),
    range_m: Optional[float] = typer.Option(None, "--range", "-k", help="Transmission range K (default: scenario's)"),
    duration: Optional[float] = DurationOpt,
    dt: float = DtOpt,
    threshold_ht: float = typer.Option(DEFAULT_THRESHOLDS["hitting_time"], "--threshold-ht", help="Hitting-time relative error limit"),
    threshold_mt: float = typer.Option(DEFAULT_THRESHOLDS["meeting_time"], "--threshold-mt", help="Meeting-time relative error limit"),
    threshold_deg: float = typer.Option(DEFAULT_THRESHOLDS["degree"], "--threshold-deg", help="Degree relative error limit"),
) -> None:
    """Compare the formulas against Monte Carlo simulation; exit 1 on failure."""
    cfg = _load(config, seed)
    k = range_m if range_m is not None else cfg.default_range
    thresholds = {"hitting_time": threshold_ht, "meeting_time": threshold_mt, "degree": threshold_deg}
    with _usage_errors():
        report = run_validate(cfg, seed, iters, k, thresholds, duration, dt, ensure_result_dir("validate", out), console)
    if not report.passed:
        raise typer.Exit(EXIT_VALIDATION_FAILED)


@app.command("epidemic")
def cmd_epidemic(
    config: str = ConfigOpt,
    seed: int = SeedOpt,
    out: Optional[Path] = OutOpt,
    range_m: Optional[float] = typer.Option(None, "--range", "-k", help="Transmission range K (default: scenario's)"),
    trials: int = typer.Option(100, "--trials", min=1, help="Simulated epidemic trials"),
    duration: Optional[float] = DurationOpt,
    dt: float = DtOpt,
    step: float = typer.Option(1.0, "--step", help="SI integration step in seconds"),
    source_group: Optional[str] = typer.Option(None, "--source-group", help="Group holding the initial infection"),
) -> None:
    """SI fluid model vs simulated epidemic routing."""
    cfg = _load(config, seed)
    k = range_m if range_m is not None else cfg.default_range
    with _usage_errors():
        run_epidemic(cfg, seed, k, trials, duration, dt, step, source_group, ensure_result_dir("epidemic", out), console)


@app.command("route")
def cmd_route(
    config: str = ConfigOpt,
    seed: int = SeedOpt,
    out: Optional[Path] = OutOpt,
    range_m: Optional[List[float]] = typer.Option(None, "--range", "-k", help="Transmission range K (repeatable)"),
    trials: int = typer.Option(500, "--trials", min=1, help="Random snapshots per range"),
    nodes: Optional[int] = typer.Option(None, "--nodes", min=1, help="Rescale the population to N nodes"),
    reference: Optional[str] = typer.Option(None, "--reference", help="Size the population to match this config's degree"),
    reference_nodes: Optional[int] = typer.Option(None, "--reference-nodes", min=1, help="Reference population size"),
    duration: Optional[float] = typer.Option(None, "--duration", help="Simulated seconds (default: one schedule cycle)"),
    dt: float = DtOpt,
) -> None:
    """Greedy geographic forwarding success rate per range."""
    cfg = _load(config, seed)
    ref = _load(reference, seed) if reference is not None else None
    ranges = list(range_m) if range_m else [cfg.default_range]
    with _usage_errors():
        run_route(
            cfg, seed, ranges, trials, nodes, None, None, duration, dt,
            ensure_result_dir("route", out), console,
            reference=ref, reference_nodes=reference_nodes,
        )


@app.command("results")
def cmd_results() -> None:
    """List all stored validation reports."""
    list_all_results(console)


if __name__ == "__main__":
    app()
