#!/usr/bin/env python3
"""
Command line front end for the skew Brownian motion simulator

Usage:
    python skewsim.py [COMMAND] --config <file> [--out <dir>] [--threads N]

Examples:
    python skewsim.py simulate --config configs/simulate_d2.json --out runs/sim
    python skewsim.py particles --config configs/particles_reflection.json
    python skewsim.py verify --suite pathwise --config configs/pathwise.json
    python skewsim.py verify --suite all --config configs/pathwise.json --threads 4
    python skewsim.py convergence --config configs/skew_half.json -n 100 -n 1000 -n 10000
    python skewsim.py oracle --config configs/skew_half.json
    python skewsim.py show-settings
"""
import logging
import sys
import time
from pathlib import Path
from typing import Annotated, List, Optional

import typer
from rich.console import Console
from rich.table import Table

from app.core.config import settings
from app.core.errors import ConfigValidationError, SkewSimError
from app.models.models import ValidatedConfig

app = typer.Typer(
    name="skewsim",
    help="Simulation and verification of multidimensional skew Brownian motion",
    add_completion=False,
)
console = Console()

ConfigOption = Annotated[Path, typer.Option("--config", "-c", help="Path to the JSON run config")]
OutOption = Annotated[Optional[Path], typer.Option("--out", "-o", help="Output directory (default: output.dir of the config)")]
ThreadsOption = Annotated[Optional[int], typer.Option("--threads", "-t", help="Worker processes")]


def _configure_logging():
    logging.basicConfig(
        level=getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )


@app.callback()
def main():
    _configure_logging()


def _load(config_path: Path) -> ValidatedConfig:
    """Read and validate a config, printing every issue before exiting on failure."""
    from app.services.config_service import load_config, validate_config

    try:
        return validate_config(load_config(config_path))
    except ConfigValidationError as e:
        table = Table(title=f"Config issues in {config_path}")
        table.add_column("Code", style="red")
        table.add_column("Location", style="cyan")
        table.add_column("Message")
        for issue in e.issues:
            table.add_row(issue.code.value, issue.location, issue.message)
        console.print(table)
        console.print(f"[red]✗[/red] Error: {e}")
        sys.exit(1)
    except (OSError, ValueError) as e:
        console.print(f"[red]✗[/red] Error: could not read {config_path}: {e}")
        sys.exit(1)


def _fail(e: Exception):
    if isinstance(e, SkewSimError):
        console.print(f"[red]✗[/red] Error: {e.code.value} {e.message}")
    else:
        console.print(f"[red]✗[/red] Error: {e}")
    sys.exit(1)


def _print_files(out: Path, files: List[str]):
    console.print(f"[bold]Output:[/bold] {out}")
    shown = [f for f in files if not f.startswith(("paths/", "particles/"))]
    for name in shown:
        console.print(f"  {name}")
    hidden = len(files) - len(shown)
    if hidden:
        console.print(f"  ... and {hidden} path file(s)")
    console.print("  manifest.json")


def _fmt(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


@app.command()
def simulate(
    config: ConfigOption,
    out: OutOption = None,
    threads: ThreadsOption = None,
):
    """Simulate an ensemble of paths and write path CSVs and a summary."""
    from app.services.simulation_service import simulate as run_simulation

    validated = _load(config)
    out = out or Path(validated.config.output.dir)
    console.print("[bold blue]Simulate[/bold blue]")
    console.print(
        f"  d={validated.dimension} n={validated.config.resolution_n} "
        f"T={validated.config.horizon_t} m={validated.config.paths_m} seed={validated.config.seed}"
    )
    console.print()

    try:
        manifest = run_simulation(validated, out, threads)
    except Exception as e:
        _fail(e)

    summary = manifest.results["simulate"]
    table = Table(title="Terminal law")
    table.add_column("Coordinate", style="cyan")
    table.add_column("Mean", justify="right", style="magenta")
    table.add_column("Stderr", justify="right")
    table.add_column("Std", justify="right")
    for i, (mean, stderr, std) in enumerate(zip(
        summary["terminal"]["mean"], summary["terminal"]["stderr"], summary["terminal"]["std"]
    )):
        table.add_row(f"x_{i + 1}", _fmt(mean), _fmt(stderr), _fmt(std))
    console.print(table)

    console.print(f"  E[L(T)]: {_fmt(summary['local_time']['mean'])} ± {_fmt(summary['local_time']['stderr'])}")
    console.print(f"  Girsanov ESS: {_fmt(summary['girsanov_ess'])}")
    if "weighted" in summary:
        console.print(f"  Weighted terminal mean: {[_fmt(v) for v in summary['weighted']['terminal_mean']]}")
    console.print()
    console.print(f"[green]✓[/green] Simulated {summary['paths']} path(s)")
    _print_files(out, manifest.files)


@app.command()
def particles(
    config: ConfigOption,
    out: OutOption = None,
    threads: ThreadsOption = None,
):
    """Simulate the two-particle collision system of a config's collision section."""
    from app.services.simulation_service import particles as run_particles

    validated = _load(config)
    out = out or Path(validated.config.output.dir)
    console.print("[bold blue]Particles[/bold blue]")
    console.print()

    try:
        manifest = run_particles(validated, out, threads)
    except Exception as e:
        _fail(e)

    summary = manifest.results["particles"]
    table = Table(title="Two-particle system")
    table.add_column("Quantity", style="cyan")
    table.add_column("Value", justify="right", style="magenta")
    table.add_row("E[X_1(T)]", _fmt(summary["terminal"]["mean"][0]))
    table.add_row("E[X_2(T)]", _fmt(summary["terminal"]["mean"][1]))
    table.add_row("E[L(T)]", _fmt(summary["local_time_mean"]))
    table.add_row("E[L+(T)]", _fmt(summary["local_time_plus_mean"]))
    table.add_row("E[L-(T)]", _fmt(summary["local_time_minus_mean"]))
    table.add_row("max |L contribution|", _fmt(summary["max_local_time_contribution"]))
    table.add_row("min (X_1 - X_2)", _fmt(summary["min_gap"]))
    table.add_row("max |L+ + L- - L|", _fmt(summary["max_split_gap"]))
    if "weighted" in summary:
        weighted = summary["weighted"]
        table.add_row("weighted E[X_1(T)]", _fmt(weighted["terminal_mean"][0]))
        table.add_row("weighted E[X_2(T)]", _fmt(weighted["terminal_mean"][1]))
        table.add_row("weighted E[L(T)]", _fmt(weighted["local_time_mean"]))
    console.print(table)
    console.print()

    _print_files(out, manifest.files)
    if not manifest.passed:
        console.print("[red]✗[/red] Local-time split identity failed")
        sys.exit(1)
    console.print("[green]✓[/green] Local-time split identity holds")


@app.command()
def verify(
    config: ConfigOption,
    suite: Annotated[str, typer.Option("--suite", "-s", help="Suite name or 'all'")] = "all",
    out: OutOption = None,
    threads: ThreadsOption = None,
):
    """Run a verification suite and exit 0 only if every check passes."""
    from app.services import export_service
    from app.services.simulation_service import new_manifest
    from app.services.verification_service import run_suite

    validated = _load(config)
    out = out or Path(validated.config.output.dir)
    workers = settings.DEFAULT_THREADS if threads is None else max(threads, 1)
    console.print(f"[bold blue]Verify: {suite}[/bold blue]")
    console.print()

    started = time.perf_counter()
    try:
        results = run_suite(suite, validated, workers)
    except Exception as e:
        _fail(e)
    elapsed = time.perf_counter() - started

    for result in results:
        table = Table(title=f"Suite {result.suite}")
        table.add_column("Check", style="cyan")
        table.add_column("Value", justify="right")
        table.add_column("Threshold", justify="right")
        table.add_column("Result")
        for check in result.checks:
            mark = "[green]✓[/green]" if check.passed else "[red]✗[/red]"
            table.add_row(check.name, _fmt(check.value), _fmt(check.threshold), mark)
        console.print(table)

    passed = all(result.passed for result in results)
    manifest = new_manifest("verify", validated).model_copy(update={
        "results": {result.suite: result.model_dump(mode="json") for result in results},
        "passed": passed,
        "timings": {"verify_seconds": elapsed},
    })
    export_service.write_manifest(manifest, out)
    console.print()
    _print_files(out, manifest.files)

    failed = [result.suite for result in results if not result.passed]
    if failed:
        console.print(f"[red]✗[/red] Failed suite(s): {', '.join(failed)}")
        sys.exit(1)
    console.print(f"[green]✓[/green] All {len(results)} suite(s) passed")


@app.command()
def convergence(
    config: ConfigOption,
    resolutions: Annotated[
        Optional[List[int]], typer.Option("--n", "-n", help="Lattice resolution; repeat for each row")
    ] = None,
    out: OutOption = None,
    threads: ThreadsOption = None,
):
    """Compare terminal laws across lattice resolutions."""
    from app.services import export_service
    from app.services.convergence_service import run_convergence, within_band
    from app.services.simulation_service import new_manifest

    validated = _load(config)
    out = out or Path(validated.config.output.dir)
    resolutions = resolutions or [validated.config.resolution_n]
    console.print(f"[bold blue]Convergence over n = {', '.join(str(n) for n in resolutions)}[/bold blue]")
    console.print()

    started = time.perf_counter()
    try:
        rows, monotone = run_convergence(validated, resolutions, threads)
    except Exception as e:
        _fail(e)

    table = Table(title="Terminal law of x_1")
    table.add_column("n", justify="right", style="cyan")
    table.add_column("KS to previous", justify="right")
    table.add_column("KS to reference", justify="right")
    table.add_column("DKW band", justify="right")
    table.add_column("E[x_1(T)]", justify="right", style="magenta")
    table.add_column("E[L(T)]", justify="right", style="magenta")
    for row in rows:
        table.add_row(
            str(row.resolution_n), _fmt(row.ks_to_previous), _fmt(row.ks_to_reference),
            _fmt(row.dkw_band), _fmt(row.mean_terminal), _fmt(row.mean_local_time),
        )
    console.print(table)

    export_service.write_convergence_csv(rows, Path(out) / "convergence.csv")
    manifest = new_manifest("convergence", validated).model_copy(update={
        "results": {
            "convergence": {
                "rows": [row.model_dump(mode="json") for row in rows],
                "monotone": monotone,
                "within_band": within_band(rows),
            }
        },
        "passed": monotone is not False,
        "files": ["convergence.csv"],
        "timings": {"convergence_seconds": time.perf_counter() - started},
    })
    export_service.write_manifest(manifest, out)
    console.print()
    _print_files(out, manifest.files)

    if monotone is None:
        console.print("[yellow]Single resolution: no trend flag[/yellow]")
    elif monotone:
        console.print("[green]✓[/green] Distances are nonincreasing within the DKW slack")
    else:
        console.print("[red]✗[/red] Distances grow beyond the DKW slack")
        sys.exit(1)


@app.command()
def oracle(
    config: ConfigOption,
    out: OutOption = None,
    threads: ThreadsOption = None,
):
    """Compute the exact lattice law after floor(nT) steps."""
    from app.services.simulation_service import oracle as run_oracle

    validated = _load(config)
    out = out or Path(validated.config.output.dir)
    console.print("[bold blue]Oracle[/bold blue]")
    console.print()

    try:
        manifest = run_oracle(validated, out)
    except Exception as e:
        _fail(e)

    summary = manifest.results["oracle"]
    signs = summary["sign_probability"]
    console.print(f"  Steps: {summary['steps']}")
    console.print(f"  Support size: {summary['support_size']}")
    console.print(f"  Total mass: {_fmt(summary['total_mass'])}")
    console.print(
        f"  P(x_1 < 0) = {_fmt(signs['p_minus'])}  P(x_1 = 0) = {_fmt(signs['p_zero'])}  "
        f"P(x_1 > 0) = {_fmt(signs['p_plus'])}"
    )
    if "reference_sup_distance" in summary:
        console.print(f"  Sup distance to skew law: {_fmt(summary['reference_sup_distance'])}")
    console.print()
    _print_files(out, manifest.files)

    if not manifest.passed:
        console.print("[red]✗[/red] Law does not have unit mass")
        sys.exit(1)
    console.print("[green]✓[/green] Exact law computed")


@app.command()
def show_settings():
    """Display the engine settings in effect."""
    table = Table(title="Settings")
    table.add_column("Setting", style="cyan")
    table.add_column("Value", style="green")
    for name, value in settings.model_dump().items():
        table.add_row(name, str(value))
    console.print(table)


if __name__ == "__main__":
    app()
