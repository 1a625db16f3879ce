#!/usr/bin/env python3
"""
Command-line interface for distortion-lab.
Train with any of the supported methods, evaluate robustness, and export
distortion, γ and loss-surface diagnostics.
"""
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import typer
import yaml
from rich.console import Console
from rich.logging import RichHandler
from rich.progress import BarColumn, Progress, SpinnerColumn, TextColumn
from rich.table import Table

from .config import LabConfig, load_config
from .container import load_model
from .errors import LabError
from .metrics import estimate_distortion, gamma as gamma_stats, robust_accuracy_table
from .rng import stream
from .runlog import read_run_log
from .schedules import eps_schedule_from_log
from .surface import export_grid, sample_surface
from .sweep import execute_run, expand_sweep, run_name, run_sweep

app = typer.Typer(
    name="distortion-lab",
    help="Single-step adversarial training, catastrophic overfitting and decision-boundary distortion",
    add_completion=False,
)
console = Console()

EXIT_CONFIG = 2
EXIT_IO = 3

# typer may vendor its own click; take the base class from the types it re-exports
UsageFailure = next(cls for cls in typer.BadParameter.__mro__ if cls.__name__ == "ClickException")


@app.callback()
def main_options(
    log_level: str = typer.Option(os.getenv("DLAB_LOG_LEVEL", "WARNING"), "--log-level", help="Logging level"),
):
    """Configure logging for every subcommand."""
    logging.basicConfig(
        level=log_level.upper(),
        format="%(message)s",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


def _eval_data(config: LabConfig):
    source = config.eval.dataset or config.dataset
    return source.load()


def _write_json(path: Optional[str], payload) -> None:
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2)
        console.print(f"[green]Wrote {path}[/green]")


def _floats(text: str) -> List[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> List[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _pct(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{100 * value:.1f}%"


@app.command()
def train(
    config_path: str = typer.Argument(..., help="YAML configuration"),
    run_dir: Optional[str] = typer.Option(None, "--run-dir", "-o", help="Output directory (default: <runs_dir>/<run name>)"),
):
    """Train a model and write its run log, weights and summary."""
    config = load_config(config_path)
    method = config.train.method
    target = Path(run_dir) if run_dir else Path(config.output.runs_dir) / run_name(method.kind, method.c, config.train.epsilon, config.seed)
    total = config.train.epochs * -(-_dataset_size(config) // config.train.batch_size)

    with Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        TextColumn("{task.completed}/{task.total}"),
        console=console,
    ) as progress:
        task = progress.add_task(f"Training {method.label()}...", total=total)
        _, log, summary = execute_run(config, target, on_batch=lambda record: progress.advance(task))

    table = Table(title=f"Run {target.name}")
    table.add_column("Metric", style="cyan")
    table.add_column("Value", style="green")
    final = summary["final"] or {}
    for key in ("clean_acc", "fgsm_acc", "pgd_acc"):
        table.add_row(key, _pct(final.get(key)))
    table.add_row("distortion_d", "n/a" if final.get("distortion_d") is None else f"{final['distortion_d']:.4f}")
    table.add_row("records", str(len(log.records)))
    table.add_row("wall time", f"{summary['wall_seconds']:.1f}s")
    console.print(table)
    if log.collapse is not None:
        console.print(f"[yellow]Catastrophic overfitting detected at epoch {log.collapse.epoch}, "
                      f"batch {log.collapse.batch_index}[/yellow]")
    console.print(f"\n[green]Run written to {target}[/green]")


def _dataset_size(config: LabConfig) -> int:
    if config.dataset.kind == "synthetic":
        size = config.dataset.synthetic.n_classes * config.dataset.synthetic.n_per_class
        return size if config.dataset.limit is None else min(size, config.dataset.limit)
    return len(config.dataset.load())


@app.command(name="eval")
def evaluate(
    config_path: str = typer.Argument(..., help="YAML configuration"),
    model_path: str = typer.Option(..., "--model", "-m", help="DLAB model file"),
    json_path: Optional[str] = typer.Option(None, "--json", help="Also write the table as JSON"),
):
    """Robust-accuracy table (clean, FGSM, PGD-n with restarts)."""
    config = load_config(config_path)
    model = load_model(model_path)
    dataset = _eval_data(config)
    attacks = config.eval.attack_specs(config.train.epsilon)
    with Progress(SpinnerColumn(), TextColumn("[progress.description]{task.description}"), console=console) as progress:
        progress.add_task(f"Evaluating {len(attacks)} attacks on {len(dataset)} examples...", total=None)
        rows = robust_accuracy_table(model, dataset, attacks, stream(config.seed, "eval"))

    table = Table(title="Robust accuracy")
    table.add_column("Attack", style="cyan")
    table.add_column("ε", style="magenta")
    table.add_column("Accuracy", style="green")
    table.add_column("On clean-correct", style="blue")
    for row in rows:
        table.add_row(row.attack, f"{row.epsilon:.4g}", _pct(row.accuracy), _pct(row.accuracy_on_correct))
    console.print(table)
    _write_json(json_path, [row.to_dict() for row in rows])


@app.command()
def distortion(
    config_path: str = typer.Argument(..., help="YAML configuration"),
    model_path: str = typer.Option(..., "--model", "-m", help="DLAB model file"),
    samples: int = typer.Option(100, "--samples", "-n", help="Interior probes per example"),
    epsilon: Optional[float] = typer.Option(None, "--epsilon", help="Radius (default: train.epsilon)"),
    json_path: Optional[str] = typer.Option(None, "--json", help="Also write the estimate as JSON"),
):
    """Decision-boundary distortion d along the FGSM direction."""
    config = load_config(config_path)
    model = load_model(model_path)
    eps = config.train.epsilon if epsilon is None else epsilon
    estimate = estimate_distortion(model, _eval_data(config), eps, samples)
    if estimate.d is None:
        console.print("[yellow]Distortion undefined: no example is correct at both ends of its segment[/yellow]")
    else:
        console.print(f"d = {estimate.d:.4f} ({estimate.n_S_D_and_S_N}/{estimate.n_S_N} examples, ε={eps:.4g})")
    _write_json(json_path, {"epsilon": eps, **estimate.to_dict()})


@app.command()
def gamma(
    config_path: str = typer.Argument(..., help="YAML configuration"),
    model_path: str = typer.Option(..., "--model", "-m", help="DLAB model file"),
    epsilon: Optional[float] = typer.Option(None, "--epsilon", help="Radius (default: train.epsilon)"),
    bins: int = typer.Option(10, "--bins", help="Histogram bins"),
    json_path: Optional[str] = typer.Option(None, "--json", help="Also write the statistics as JSON"),
):
    """Per-example loss nonlinearity γ and its distribution."""
    config = load_config(config_path)
    model = load_model(model_path)
    eps = config.train.epsilon if epsilon is None else epsilon
    stats = gamma_stats(model, _eval_data(config), eps)
    console.print(f"mean γ = {stats.mean_gamma:.6g}, negative fraction = {stats.fraction_negative:.3f}")
    payload = stats.to_dict()
    if len(stats.per_example_gamma):
        counts, edges = stats.histogram(bins)
        table = Table(title="γ histogram")
        table.add_column("From", style="cyan")
        table.add_column("To", style="cyan")
        table.add_column("Count", style="green")
        for count, lo, hi in zip(counts, edges[:-1], edges[1:]):
            table.add_row(f"{lo:.4g}", f"{hi:.4g}", str(int(count)))
        console.print(table)
        payload["histogram"] = {"counts": [int(c) for c in counts], "edges": [float(e) for e in edges]}
    _write_json(json_path, {"epsilon": eps, **payload})


@app.command()
def surface(
    config_path: str = typer.Argument(..., help="YAML configuration"),
    model_path: str = typer.Option(..., "--model", "-m", help="DLAB model file"),
    out: str = typer.Option(..., "--out", "-o", help="CSV output path"),
    anchor: Optional[int] = typer.Option(None, "--anchor", help="Example index (default: surface.anchor_index)"),
    resolution: Optional[int] = typer.Option(None, "--resolution", help="Grid points per axis"),
    v1: Optional[str] = typer.Option(None, "--v1", help="Adversarial direction: fgsm or fast"),
    symmetric: bool = typer.Option(False, "--symmetric", help="Use [-1, 1] on both axes"),
):
    """Sample the loss surface around one example and export it as CSV."""
    config = load_config(config_path)
    settings = config.surface
    model = load_model(model_path)
    eps = settings.epsilon if settings.epsilon is not None else config.train.epsilon
    grid = sample_surface(
        model,
        _eval_data(config),
        settings.anchor_index if anchor is None else anchor,
        v1 or settings.v1_source,
        stream(config.seed, "surface"),
        eps,
        a_range=settings.a_range,
        b_range=settings.b_range,
        resolution=resolution or settings.resolution,
        symmetric=symmetric or settings.symmetric,
    )
    export_grid(grid, out)
    wrong = int((~grid.correct).sum())
    console.print(f"[green]Wrote {grid.resolution}x{grid.resolution} grid to {out} ({wrong} misclassified cells)[/green]")


@app.command(name="eps-schedule")
def eps_schedule(
    run_log: str = typer.Argument(..., help="Run log of the source run"),
    out: str = typer.Option(..., "--out", "-o", help="YAML file receiving the schedule"),
    epochs: Optional[int] = typer.Option(None, "--epochs", help="Epochs to cover (default: all source epochs)"),
):
    """Extract the per-epoch ε schedule (mean ‖δ‖∞ per epoch) from a run log."""
    schedule = eps_schedule_from_log(read_run_log(run_log), epochs)
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as f:
        yaml.safe_dump({"schedule_source": run_log, "epsilons": schedule}, f, sort_keys=False)
    console.print(f"[green]Wrote a {len(schedule)}-epoch ε schedule to {out}[/green]")


@app.command()
def sweep(
    config_path: str = typer.Argument(..., help="YAML configuration every child starts from"),
    methods: str = typer.Option("fgsm,proposed", "--methods", help="Comma-separated method kinds"),
    cs: str = typer.Option("3", "--c", help="Comma-separated checkpoint counts for proposed runs"),
    eps: Optional[str] = typer.Option(None, "--eps", help="Comma-separated radii (default: train.epsilon)"),
    seeds: Optional[str] = typer.Option(None, "--seeds", help="Comma-separated seeds (default: config seed)"),
    workers: Optional[int] = typer.Option(None, "--workers", "-j", help="Parallel processes (default: DLAB_WORKERS or 1)"),
    out: Optional[str] = typer.Option(None, "--out", "-o", help="Sweep directory (default: <runs_dir>/sweep)"),
):
    """Run methods × c × ε × seeds and check the stable-training properties."""
    config = load_config(config_path)
    runs = expand_sweep(
        config,
        [m.strip() for m in methods.split(",") if m.strip()],
        _ints(cs),
        _floats(eps) if eps else [config.train.epsilon],
        _ints(seeds) if seeds else [config.seed],
    )
    target = Path(out) if out else Path(config.output.runs_dir) / "sweep"

    with Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        TextColumn("{task.completed}/{task.total}"),
        console=console,
    ) as progress:
        task = progress.add_task(f"Running {len(runs)} runs...", total=len(runs))
        summary = run_sweep(runs, target, workers, on_done=lambda result: progress.advance(task))

    table = Table(title=f"Sweep {target}")
    table.add_column("Run", style="cyan", no_wrap=True)
    table.add_column("Clean", style="green")
    table.add_column("FGSM", style="green")
    table.add_column("PGD", style="green")
    table.add_column("max d", style="magenta")
    table.add_column("Collapse", style="red")
    for result in summary["runs"]:
        final = result["final"] or {}
        collapse = result["collapse"]
        table.add_row(
            result["name"],
            _pct(final.get("clean_acc")),
            _pct(final.get("fgsm_acc")),
            _pct(final.get("pgd_acc")),
            "n/a" if result["max_distortion"] is None else f"{result['max_distortion']:.3f}",
            "-" if collapse is None else f"epoch {collapse['epoch']}, batch {collapse['batch_index']}",
        )
    console.print(table)
    verdict = "[green]hold[/green]" if summary["checks"]["holds"] else "[red]do not hold[/red]"
    console.print(f"\nStable-training checks {verdict}; summary in {target / 'sweep_summary.json'}")


def _report(kind: str, message: str) -> None:
    escaped = message.replace("\\", "\\\\").replace('"', '\\"').replace("\n", " ")
    typer.echo(f'error kind={kind} message="{escaped}"', err=True)


def run(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run the CLI and return its exit code instead of exiting.

    Exit codes: 0 success, 2 configuration or input errors, 3 file format
    or I/O errors.
    """
    command = typer.main.get_command(app)
    try:
        result = command.main(args=list(sys.argv[1:] if argv is None else argv),
                              prog_name="distortion-lab", standalone_mode=False)
    except LabError as e:
        _report(e.kind, str(e))
        return EXIT_IO if e.kind == "format" else EXIT_CONFIG
    except OSError as e:
        _report("io", str(e))
        return EXIT_IO
    except typer.Exit as e:
        return e.exit_code
    except UsageFailure as e:
        _report("config", e.format_message())
        return EXIT_CONFIG
    except typer.Abort:
        _report("config", "aborted")
        return EXIT_CONFIG
    return result if isinstance(result, int) else 0


def main():
    """Main entry point for the CLI."""
    sys.exit(run())


if __name__ == "__main__":
    main()
