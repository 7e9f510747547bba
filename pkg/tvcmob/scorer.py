"""tvcmob scorer: builds validation checks and renders them as Rich tables.

A check compares an analytic value with a Monte Carlo mean. Its threshold is
widened by twice the estimate's relative standard error, so reduced-iteration
runs are judged against the noise they actually carry; the widening is kept
in the stored report.

Also lists every stored validation report under tvcmob/results/validate/.
"""

from __future__ import annotations

import math
from pathlib import Path

from rich.console import Console
from rich.table import Table

from tvcmob.models import QuantityCheck, ValidationReport

DEFAULT_THRESHOLDS = {
    "hitting_time": 0.15,
    "meeting_time": 0.20,
    "degree": 0.20,
}

_VERDICT_COLORS = {"pass": "green", "fail": "red", "skipped": "dim"}


def _results_root() -> Path:
    """Absolute path to tvcmob/results/."""
    return Path(__file__).parent / "results"


def widened_threshold(threshold: float, simulated: float, stderr: float) -> float:
    """threshold + 2·stderr/|simulated|; unchanged when there is no estimate."""
    if not math.isfinite(simulated) or simulated == 0 or not math.isfinite(stderr):
        return threshold
    return threshold + 2.0 * stderr / abs(simulated)


def build_check(
    quantity: str,
    analytic: float,
    simulated: float,
    stderr: float,
    threshold: float,
    note: str = "",
) -> QuantityCheck:
    return QuantityCheck(
        quantity=quantity,
        analytic=analytic,
        simulated=simulated,
        stderr=stderr,
        threshold=threshold,
        effective_threshold=widened_threshold(threshold, simulated, stderr),
        note=note,
    )


def _fmt(v: float) -> str:
    if math.isnan(v):
        return "--"
    if math.isinf(v):
        return "∞"
    if abs(v) >= 100:
        return f"{v:,.1f}"
    return f"{v:.4g}"


def _verdict(v: str) -> str:
    color = _VERDICT_COLORS.get(v, "white")
    return f"[{color}]{v}[/{color}]"


def render_report(report: ValidationReport, console: Console) -> None:
    """Render a Rich table for one validation report."""
    table = Table(
        title=f"Validation: {report.config} (K={report.range_m:g} m, {report.iterations} iters, seed {report.seed})",
        show_header=True,
        header_style="bold",
    )
    table.add_column("Quantity", style="dim", min_width=14)
    table.add_column("Analytic", justify="right")
    table.add_column("Simulated", justify="right")
    table.add_column("± stderr", justify="right")
    table.add_column("Rel. error", justify="right")
    table.add_column("Threshold", justify="right")
    table.add_column("Verdict", justify="center")
    table.add_column("Note", style="dim")

    for c in report.checks:
        err = "--" if not c.applicable else (
            "∞" if math.isinf(c.relative_error) else f"{c.relative_error:.1%}"
        )
        thr = f"{c.threshold:.0%}"
        if c.applicable and c.effective_threshold > c.threshold:
            thr += f" → {c.effective_threshold:.1%}"
        table.add_row(
            c.quantity,
            _fmt(c.analytic),
            _fmt(c.simulated),
            _fmt(c.stderr) if c.applicable else "--",
            err,
            thr,
            _verdict(c.verdict),
            c.note,
        )

    console.print()
    console.print(table)
    overall = "pass" if report.passed else "fail"
    console.print(f"  Overall: {_verdict(overall)}")


def list_all_results(console: Console) -> None:
    """List every stored validation report, newest first."""
    root = _results_root() / "validate"
    if not root.is_dir():
        console.print("[yellow]No results directory found.[/yellow]")
        return

    table = Table(title="Stored validation reports", show_header=True, header_style="bold")
    table.add_column("Timestamp", style="dim")
    table.add_column("Config")
    table.add_column("Seed", justify="right")
    table.add_column("Iters", justify="right")
    table.add_column("K (m)", justify="right")
    table.add_column("Verdict", justify="center")

    found = 0
    # Timestamps are ISO8601 basic format and sort lexicographically
    for run_dir in sorted(root.iterdir(), reverse=True):
        if not run_dir.is_dir():
            continue
        report = ValidationReport.load(run_dir)
        if report is None:
            continue
        found += 1
        table.add_row(
            run_dir.name,
            report.config,
            str(report.seed),
            str(report.iterations),
            f"{report.range_m:g}",
            _verdict("pass" if report.passed else "fail"),
        )

    if not found:
        console.print("[yellow]No stored validation reports.[/yellow]")
        return
    console.print(table)
