# minar-cli/minar_cli/preview.py
import math
from typing import Sequence

import numpy as np
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from .estimation import FittedModel
from .evaluation import MetricsSummary
from .surveillance import SurveillanceReport


def _fmt(value: float, digits: int = 4) -> str:
    return "-" if value is None or not math.isfinite(value) else f"{value:.{digits}f}"


def show_fit(fit: FittedModel, console: Console) -> None:
    """Parameter table with estimates and standard errors"""
    status = "[green]converged[/green]" if fit.converged else "[red]not converged[/red]"
    console.print(Panel.fit(
        f"[bold cyan]{fit.layout.structure} thinning, {fit.layout.mode} innovations[/bold cyan]\n"
        f"log-likelihood {fit.loglik:.4f} | {status} after {fit.iterations} iterations"
    ))

    table = Table(show_header=True, header_style="bold magenta")
    table.add_column("Parameter", style="cyan")
    table.add_column("Estimate", style="green", justify="right")
    table.add_column("SE", style="yellow", justify="right")
    for name, value, se in zip(fit.names, fit.theta, fit.se):
        table.add_row(name, _fmt(value), f"({_fmt(se)})")
    console.print(table)

    if not fit.stationary:
        console.print(f"[yellow]⚠ Spectral radius {fit.model.spectral_radius:.4f} >= 1: fitted model is not stationary[/yellow]")
    if not fit.se_available:
        console.print("[dim]Standard errors marked '-' are unavailable (boundary estimate or singular information)[/dim]")


def show_alarms(report: SurveillanceReport, console: Console, limit: int = 50) -> None:
    times = report.alarm_times
    console.print(
        f"[bold]🚨 {len(times)} alarms[/bold] in {report.times.size} steps "
        f"(alpha={report.config.alpha}, rule={report.config.required_flags(report.n)} of {report.n})"
    )
    if not times:
        return

    table = Table(show_header=True, header_style="bold magenta")
    table.add_column("t", style="cyan", justify="right")
    for i in range(report.n):
        table.add_column(f"x{i + 1} / ub{i + 1}", justify="right")
    for row in np.flatnonzero(report.alarms)[:limit]:
        cells = []
        for i in range(report.n):
            text = f"{report.observed[row, i]} / {report.upper[row, i]}"
            cells.append(f"[red]{text}[/red]" if report.flags[row, i] else text)
        table.add_row(str(report.times[row]), *cells)
    console.print(table)
    if len(times) > limit:
        console.print(f"[dim]... {len(times) - limit} more in the report file[/dim]")


def show_metrics(
    summaries: Sequence[MetricsSummary],
    console: Console,
    monitoring_length: int,
    arl_convention: str = "censored",
) -> None:
    table = Table(title="Surveillance performance", show_header=True, header_style="bold magenta")
    table.add_column("Approach", style="cyan")
    table.add_column("κ", justify="right")
    table.add_column("α", justify="right")
    table.add_column("DR %", style="green", justify="right")
    table.add_column("FAR %", style="yellow", justify="right")
    table.add_column("ARL_i", justify="right")
    table.add_column("ARL", style="blue", justify="right")
    table.add_column("Failed", justify="right")
    for s in summaries:
        table.add_row(
            s.approach,
            f"{s.kappa:g}",
            f"{s.alpha:g}",
            f"{100 * s.detection_rate:.1f}",
            f"{100 * s.false_alarm_rate:.2f}",
            ", ".join(f"{v:.1f}" for v in s.arl),
            f"{s.overall_arl:.1f}",
            str(s.failed),
        )
    console.print(table)
    if arl_convention == "censored":
        console.print(f"[dim]Run lengths without a false flag count as {monitoring_length}[/dim]")
    else:
        console.print("[dim]Run lengths average only replicates with a false flag[/dim]")
