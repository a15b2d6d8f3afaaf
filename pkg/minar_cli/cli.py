# minar-cli/minar_cli/cli.py
import logging
from pathlib import Path
from typing import List, NoReturn, Optional

import numpy as np
import pandas as pd
import typer
from pydantic import ValidationError
from rich.console import Console
from rich.logging import RichHandler
from rich.progress import BarColumn, MofNCompleteColumn, Progress, SpinnerColumn, TextColumn

from .config import init_config, settings
from .errors import MinarError, NumericalError
from .estimation import FitOptions, build_design, design_names, fit as fit_model, with_design
from .evaluation import (
    ExperimentSpec,
    exceedance_probabilities,
    expected_outbreak_values,
    run_experiment,
    simulate_maxima,
    summarize,
    table_report,
)
from .exporter import write_alarm_log, write_frame, write_json, write_report_csv, write_series, write_tables
from .layout import ParameterLayout
from .loader import load_covariates, load_experiment, load_fit, load_json, load_model, load_series
from .model import OutbreakSpec, simulate as simulate_series
from .preview import show_alarms, show_fit, show_metrics
from .surveillance import SurveillanceConfig, monitor as run_monitor
from .utils import broadcast_sizes, parse_floats

app = typer.Typer(help="Simulate, fit and monitor multivariate INAR(1) count series")
console = Console()
err_console = Console(stderr=True)

logger = logging.getLogger(__name__)


def setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=err_console, show_path=False, rich_tracebacks=True)],
        force=True,
    )


def fail(error: Exception) -> NoReturn:
    """Report an error on stderr and exit with 3 for numerical failures, 2 otherwise"""
    err_console.print(f"[red]✗ {error}[/red]")
    raise typer.Exit(3 if isinstance(error, NumericalError) else 2)


def open_level(value: Optional[float]) -> Optional[float]:
    if value is not None and not 0.0 < value < 1.0:
        raise typer.BadParameter(f"{value} is not in the open interval (0, 1)")
    return value


def rule_level(value: Optional[float]) -> Optional[float]:
    if value is not None and not 0.0 < value <= 1.0:
        raise typer.BadParameter(f"{value} is not in the interval (0, 1]")
    return value


@app.callback()
def main_options(
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging on stderr"),
):
    setup_logging(verbose)
    logger.debug(f"Settings: {settings.model_dump()}")


@app.command()
def init(
    config_dir: Optional[Path] = typer.Option(
        None, help="Directory for model.json and experiment.json"
    )
):
    """Write the simulation-study model and experiment files"""
    model_file, experiment_file = init_config(config_dir)
    console.print(f"[green]✓ Model written to: {model_file}[/green]")
    console.print(f"[green]✓ Experiment written to: {experiment_file}[/green]")


@app.command()
def simulate(
    model_file: Path = typer.Argument(..., exists=True, dir_okay=False, help="Model JSON"),
    output_file: Path = typer.Option(Path("series.csv"), "--output", "-o", help="Output CSV"),
    length: int = typer.Option(200, "--length", "-T", min=1, help="Number of time steps"),
    seed: Optional[int] = typer.Option(None, help="Random seed (default: MINAR_SEED)"),
    burn_in: Optional[int] = typer.Option(None, min=0, help="Discarded warm-up steps"),
    outbreak_t: Optional[int] = typer.Option(None, "--outbreak-t", help="Time label of an injected outbreak"),
    outbreak_kappa: Optional[str] = typer.Option(
        None, "--outbreak-kappa", help="Expected outbreak size, one value or one per series (e.g. 10 or 5,8,10)"
    ),
    covariates_file: Optional[Path] = typer.Option(
        None, "--covariates", exists=True, dir_okay=False, help="Covariate CSV for regression-mode models"
    ),
    period: Optional[float] = typer.Option(None, help="Seasonal period when cos/sin covariates are generated"),
):
    """Simulate a series from a model file"""
    try:
        model = load_model(model_file)
        outbreak = None
        if (outbreak_t is None) != (outbreak_kappa is None):
            raise typer.BadParameter("--outbreak-t and --outbreak-kappa go together")
        if outbreak_t is not None:
            outbreak = OutbreakSpec(outbreak_t, broadcast_sizes(parse_floats(outbreak_kappa), model.n))

        covariates = None
        names = model.innovations.covariate_names
        if covariates_file is not None:
            covariates = load_covariates(covariates_file, list(names))
        elif names and set(names) == {"cos", "sin"}:
            design = build_design(np.arange(1, length + 1), period=period or settings.seasonal_period)
            covariates = design[:, [design_names(False).index(name) for name in names]]

        series = simulate_series(
            model,
            length,
            burn_in=settings.burn_in if burn_in is None else burn_in,
            outbreak=outbreak,
            covariates=covariates,
            rng=settings.seed if seed is None else seed,
        )
        write_series(series, output_file)
    except (MinarError, ValueError, OSError) as e:
        fail(e)

    console.print(f"[green]✓ Simulated {series.T} steps of {series.n} series to {output_file}[/green]")


@app.command()
def fit(
    input_file: Path = typer.Argument(..., exists=True, dir_okay=False, help="Series CSV (t, x1..xn, covariates)"),
    output_file: Path = typer.Option(Path("fit.json"), "--output", "-o", help="Fit report JSON"),
    layout: str = typer.Option("full", help="Thinning structure: full, diagonal or none"),
    covariates: Optional[str] = typer.Option(
        None, help="Comma separated covariate columns for Poisson-regression innovations"
    ),
    seasonal: bool = typer.Option(False, help="Use weekday/cos/sin design covariates"),
    weekday_column: Optional[str] = typer.Option(None, help="0/1 column used as weekday covariate"),
    period: Optional[float] = typer.Option(None, help="Seasonal period (default: MINAR_SEASONAL_PERIOD)"),
    method: str = typer.Option("L-BFGS-B", help="Optimizer: L-BFGS-B or Nelder-Mead"),
    max_iterations: Optional[int] = typer.Option(None, min=1, help="Optimizer iteration limit"),
    no_se: bool = typer.Option(False, "--no-se", help="Skip standard errors"),
):
    """Fit a model by conditional maximum likelihood"""
    if layout not in ("full", "diagonal", "none"):
        raise typer.BadParameter(f"Unknown layout: {layout}", param_hint="--layout")
    if method not in ("L-BFGS-B", "Nelder-Mead"):
        raise typer.BadParameter(f"Unknown optimizer: {method}", param_hint="--method")
    if seasonal and covariates:
        raise typer.BadParameter("Use either --seasonal or --covariates", param_hint="--covariates")

    try:
        names: List[str] = [c.strip() for c in covariates.split(",") if c.strip()] if covariates else []
        wanted = ([weekday_column] if weekday_column else []) if seasonal else names
        data = load_series(input_file, covariates=wanted)
        design = None
        if seasonal:
            design = {"period": period or settings.seasonal_period, "weekday_column": weekday_column}
            data = with_design(data, weekday_column, design["period"])
            names = list(design_names(weekday_column is not None))
        parameter_layout = ParameterLayout(
            data.n, layout, "regression" if names else "constant", tuple(names)
        )
        options = FitOptions(
            method=method,
            max_iterations=max_iterations or settings.max_iterations,
            compute_se=not no_se,
        )
        result = fit_model(data, parameter_layout, options=options)
        report = result.to_dict()
        if design is not None:
            report["design"] = design
        write_json(report, output_file)
    except (MinarError, ValueError, OSError) as e:
        fail(e)

    show_fit(result, console)
    console.print(f"[blue]Saved to: {output_file}[/blue]")
    if not result.converged:
        err_console.print(f"[red]✗ Optimizer did not converge: {result.message}[/red]")
        raise typer.Exit(3)


@app.command()
def monitor(
    fit_file: Path = typer.Argument(..., exists=True, dir_okay=False, help="Fit report JSON"),
    input_file: Path = typer.Argument(..., exists=True, dir_okay=False, help="Operational CSV with a leading conditioning row"),
    output_file: Path = typer.Option(Path("surveillance.csv"), "--output", "-o", help="Surveillance CSV"),
    alpha: Optional[float] = typer.Option(None, callback=open_level, help="Component-wise significance level"),
    rule: Optional[float] = typer.Option(None, callback=rule_level, help="Fraction of series that must flag"),
):
    """Assess incoming observations against predictive upper bounds"""
    try:
        fitted = load_fit(fit_file)
        design = load_json(fit_file).get("design")
        names = fitted.layout.covariate_names
        if design:
            wanted = [design["weekday_column"]] if design.get("weekday_column") else []
        else:
            wanted = list(names)
        data = load_series(input_file, covariates=wanted)
        if design:
            data = with_design(data, design.get("weekday_column"), design["period"])
        config = SurveillanceConfig(
            alpha=settings.alpha if alpha is None else alpha,
            rule_fraction=settings.rule_fraction if rule is None else rule,
            pmf_tolerance=settings.pmf_tolerance,
        )
        report = run_monitor(fitted, data, config)
        write_report_csv(report, output_file)
    except (MinarError, ValidationError, ValueError, OSError) as e:
        fail(e)

    show_alarms(report, console)
    console.print(f"[blue]Saved to: {output_file}[/blue]")


@app.command()
def evaluate(
    experiment_file: Path = typer.Argument(..., exists=True, dir_okay=False, help="Experiment JSON"),
    output_dir: Path = typer.Option(Path("results"), "--output-dir", "-o", help="Directory for result CSVs"),
    replicates: Optional[int] = typer.Option(None, min=1, help="Override the replicate count"),
    seed: Optional[int] = typer.Option(None, help="Override the base seed"),
    workers: Optional[int] = typer.Option(None, min=1, help="Worker processes (default: MINAR_WORKERS or CPU count)"),
):
    """Run the Monte-Carlo evaluation and write metric tables"""
    try:
        spec = load_experiment(experiment_file)
        overrides = {}
        if replicates is not None:
            overrides["replicates"] = replicates
        if seed is not None:
            overrides["base_seed"] = seed
        if overrides:
            spec = ExperimentSpec.model_validate({**spec.model_dump(), **overrides})

        with Progress(
            SpinnerColumn(),
            TextColumn("[progress.description]{task.description}"),
            BarColumn(),
            MofNCompleteColumn(),
            console=err_console,
        ) as progress:
            task = progress.add_task(f"Running {spec.replicates} replicates...", total=spec.replicates)
            result = run_experiment(
                spec,
                workers=workers or settings.workers,
                callback=lambda done: progress.update(task, completed=done),
            )

        summaries = summarize(result)
        tables = table_report(summaries, spec.n, spec.monitoring_length, spec.arl_convention)
        arl_path, rates_path = write_tables(tables, output_dir)
        write_alarm_log(result, output_dir)
        write_json(
            {
                "experiment": spec.model_dump(),
                "monitoring_times": [spec.setup_length + 1, spec.total_length],
                "arl_censoring": (
                    f"replicates without a false flag count {spec.monitoring_length} steps"
                    if spec.arl_convention == "censored"
                    else "replicates without a false flag are left out"
                ),
                "failed_replicates": len(result.failures()),
            },
            output_dir / "summary.json",
        )
    except (MinarError, ValidationError, ValueError, OSError) as e:
        fail(e)

    show_metrics(summaries, console, spec.monitoring_length, spec.arl_convention)
    console.print(f"[blue]Saved to: {arl_path}, {rates_path}[/blue]")


@app.command()
def exceedance(
    model_file: Path = typer.Argument(..., exists=True, dir_okay=False, help="Model JSON"),
    output_dir: Path = typer.Option(Path("results"), "--output-dir", "-o", help="Directory for result CSVs"),
    kappas: str = typer.Option("5,8,10", help="Comma separated outbreak sizes"),
    replicates: int = typer.Option(10_000, min=1, help="Outbreak-free series to simulate"),
    length: int = typer.Option(200, "--length", "-T", min=2, help="Series length"),
    outbreak_t: int = typer.Option(170, "--outbreak-t", help="Time label left out of the maxima"),
    seed: Optional[int] = typer.Option(None, help="Random seed (default: MINAR_SEED)"),
):
    """Expected outbreak values and the probability that in-control maxima exceed them"""
    try:
        sizes = parse_floats(kappas)
        if not sizes:
            raise typer.BadParameter("At least one outbreak size is required", param_hint="--kappas")
        model = load_model(model_file)
        maxima = simulate_maxima(
            model, length, replicates, outbreak_t, settings.seed if seed is None else seed, settings.burn_in
        )
        expected = expected_outbreak_values(model, sizes)
        probabilities = exceedance_probabilities(model, sizes, maxima=maxima)

        columns = [f"x{i + 1}" for i in range(model.n)]
        expected_frame = pd.DataFrame(expected, columns=columns)
        expected_frame.insert(0, "kappa", sizes)
        probability_frame = pd.DataFrame(probabilities, columns=columns)
        probability_frame.insert(0, "kappa", sizes)
        maxima_frame = pd.DataFrame(maxima, columns=columns)
        maxima_frame.insert(0, "replicate", np.arange(replicates))

        write_frame(expected_frame, output_dir / "expected_values.csv")
        write_frame(probability_frame, output_dir / "exceedance.csv")
        write_frame(maxima_frame, output_dir / "maxima.csv")
    except (MinarError, ValueError, OSError) as e:
        fail(e)

    console.print("[bold]📈 Expected values at the outbreak time:[/bold]")
    console.print(expected_frame.round(3).to_string(index=False))
    console.print("\n[bold]📊 P(max > expected value):[/bold]")
    console.print(probability_frame.round(3).to_string(index=False))
    console.print(f"[blue]Saved to: {output_dir}[/blue]")


if __name__ == "__main__":
    app()
