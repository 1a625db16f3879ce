"""
Single runs and sweeps of runs.

A run directory holds run.jsonl (the run log), model.dlab (final weights),
config.yaml (the resolved configuration) and summary.json (wall-clock timing,
final metrics and the collapse event). A sweep expands methods × c × ε × seeds
into child runs named `<method>[-c<c>]-eps<ε>-seed<s>` and writes
sweep_summary.json next to them.
"""
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

from .config import LabConfig, save_config
from .container import save_model
from .errors import ConfigurationError
from .model import Model
from .runlog import BatchRecord, RunLog, write_run_log
from .training import initial_model, train

logger = logging.getLogger(__name__)

# stable-training property checked on every proposed run of a sweep
MAX_STABLE_DISTORTION = 0.05
MIN_PGD_TO_FGSM = 0.8


def execute_run(config: LabConfig, run_dir: Union[str, Path],
                on_batch: Optional[Callable[[BatchRecord], None]] = None) -> Tuple[Model, RunLog, Dict]:
    """
    Train one configuration and write its run directory.

    Args:
        config: resolved configuration
        run_dir: output directory, created if missing
        on_batch: progress callback forwarded to train

    Returns:
        (trained model, run log, summary mapping)
    """
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    dataset = config.dataset.load()
    config = replace(config, train=config.train.resolved())
    train_config = config.train
    model = initial_model(config.model, train_config)
    _, log = train(train_config, dataset, model, header=config.to_dict(), on_batch=on_batch)
    wall = time.perf_counter() - started

    write_run_log(log, run_dir / "run.jsonl")
    save_model(run_dir / "model.dlab", model)
    save_config(config, run_dir / "config.yaml")
    summary = summarize_run(log, train_config.method.kind, train_config.method.c, train_config.epsilon, config.seed)
    summary.update({"wall_seconds": wall, "epoch_seconds": list(log.epoch_seconds)})
    with open(run_dir / "summary.json", "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2)
    logger.info(f"Run finished in {wall:.1f}s, written to {run_dir}")
    return model, log, summary


def summarize_run(log: RunLog, method: str, c: int, epsilon: float, seed: int) -> Dict:
    """Final metrics, collapse event and stable-training checks of one run."""
    evaluated = [r for r in log.records if r.pgd_acc is not None and r.fgsm_acc is not None]
    distortions = [r.distortion_d for r in log.records if r.distortion_d is not None]
    ratios_ok = all(r.pgd_acc >= MIN_PGD_TO_FGSM * r.fgsm_acc for r in evaluated)
    last = log.records[-1] if log.records else None
    return {
        "method": method,
        "c": c if method == "proposed" else None,
        "epsilon": epsilon,
        "seed": seed,
        "records": len(log.records),
        "final": None if last is None else {
            "clean_acc": last.clean_acc,
            "fgsm_acc": last.fgsm_acc,
            "pgd_acc": last.pgd_acc,
            "distortion_d": last.distortion_d,
            "mean_delta_linf": last.mean_delta_linf,
        },
        "max_distortion": max(distortions) if distortions else None,
        "distortion_bounded": all(d <= MAX_STABLE_DISTORTION for d in distortions),
        "pgd_tracks_fgsm": ratios_ok,
        "collapse": None if log.collapse is None else log.collapse.to_dict(),
    }


@dataclass
class SweepRun:
    name: str
    config: LabConfig


def run_name(method: str, c: Optional[int], epsilon: float, seed: int) -> str:
    c_part = f"-c{c}" if method == "proposed" else ""
    return f"{method}{c_part}-eps{epsilon:.6g}-seed{seed}"


def expand_sweep(base: LabConfig, methods: Sequence[str], cs: Sequence[int], epsilons: Sequence[float],
                 seeds: Sequence[int]) -> List[SweepRun]:
    """
    Cartesian product of the sweep axes; c only multiplies proposed runs.

    Args:
        base: configuration every child starts from
        methods: method kinds
        cs: checkpoint counts for proposed runs
        epsilons: training radii
        seeds: run seeds

    Returns:
        Child runs with distinct names
    """
    runs = []
    base_method = base.train.method.to_dict()
    for method in methods:
        for c in (cs if method == "proposed" else [None]):
            for epsilon in epsilons:
                for seed in seeds:
                    method_data = {**base_method, "kind": method}
                    if c is not None:
                        method_data["c"] = int(c)
                    config = base.derive(train={"method": method_data, "epsilon": float(epsilon)}, seed=int(seed))
                    runs.append(SweepRun(run_name(method, c, float(epsilon), int(seed)), config))
    names = [run.name for run in runs]
    if len(set(names)) != len(names):
        raise ConfigurationError("Sweep axes produce duplicate run names")
    return runs


def _run_child(job: Tuple[SweepRun, str]) -> Dict:
    run, out_dir = job
    _, _, summary = execute_run(run.config, Path(out_dir) / run.name)
    return {"name": run.name, **summary}


def run_sweep(runs: Sequence[SweepRun], out_dir: Union[str, Path], workers: Optional[int] = None,
              on_done: Optional[Callable[[Dict], None]] = None) -> Dict:
    """
    Execute child runs, sequentially or in worker processes, and write sweep_summary.json.

    Args:
        runs: children from expand_sweep
        out_dir: parent directory of the child run directories
        workers: process count; DLAB_WORKERS or 1 when None
        on_done: called with each child summary as it completes

    Returns:
        The sweep summary mapping
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    workers = workers or int(os.getenv("DLAB_WORKERS", "1"))
    jobs = [(run, str(out_dir)) for run in runs]
    results = []
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for result in pool.map(_run_child, jobs):
                results.append(result)
                if on_done:
                    on_done(result)
    else:
        for job in jobs:
            result = _run_child(job)
            results.append(result)
            if on_done:
                on_done(result)

    summary = {"runs": results, "checks": study_checks(results)}
    with open(out_dir / "sweep_summary.json", "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2)
    logger.info(f"Sweep of {len(results)} runs written to {out_dir}")
    return summary


def study_checks(results: Iterable[Dict]) -> Dict:
    """
    Stable-training checks over a sweep.

    Every proposed run must keep distortion ≤ 0.05 and PGD accuracy ≥ 0.8 ×
    FGSM accuracy wherever both were logged. For each (ε, seed) where an FGSM
    run collapsed, the proposed runs with the same (ε, seed) must not.
    """
    results = list(results)
    proposed = [r for r in results if r["method"] == "proposed"]
    stable = {r["name"]: r["distortion_bounded"] and r["pgd_tracks_fgsm"] for r in proposed}
    pairs = []
    for run in results:
        if run["method"] != "fgsm" or run["collapse"] is None:
            continue
        partners = [p for p in proposed if math.isclose(p["epsilon"], run["epsilon"]) and p["seed"] == run["seed"]]
        pairs.append({
            "fgsm_run": run["name"],
            "proposed_runs": [p["name"] for p in partners],
            "holds": all(p["collapse"] is None for p in partners),
        })
    return {
        "proposed_stable": stable,
        "fgsm_collapses": len(pairs),
        "collapse_pairs": pairs,
        "holds": all(stable.values()) and all(p["holds"] for p in pairs),
    }
