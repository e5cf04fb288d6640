"""Grid of training runs over regularization weights and seeds."""
from __future__ import annotations

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .metrics import REPORT_FIELDS, MetricsReport
from .train import train

DEFAULT_LAMBDAS = (0.01, 0.05, 0.1, 0.5, 1.0)


@dataclass(frozen=True)
class SweepRow:
    lam: float
    seed: int
    epoch: int
    report: MetricsReport


def max_workers() -> int:
    raw = os.environ.get("GANVER_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"GANVER_THREADS must be an integer, got {raw!r}") from None


def _run_one(cfg: ExperimentConfig) -> SweepRow:
    result = train(cfg)
    if result.best_epoch is None:
        raise RuntimeError(f"run lam={cfg.lam} seed={cfg.seed} produced no evaluation ({result.aborted})")
    return SweepRow(cfg.lam, cfg.seed, result.best_epoch, result.best_report)


def run_sweep(base: ExperimentConfig, lambdas, seeds, out_dir=None, workers: int | None = None) -> list[SweepRow]:
    """Train every (lambda, seed) pair; each run reports its best-WD evaluation.

    Runs are independent and may execute in parallel worker processes; result
    order is always lambda-major, seed-minor.
    """
    configs = []
    for lam in lambdas:
        for seed in seeds:
            sub = ""
            if out_dir:
                sub = str(Path(out_dir) / f"lam{lam:g}_seed{seed}")
            configs.append(base.replace(lam=float(lam), seed=int(seed), output_dir=sub))
    workers = workers or max_workers()
    if workers == 1:
        return [_run_one(c) for c in configs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, configs))


def aggregate(rows: list[SweepRow]) -> list[tuple[float, int, MetricsReport, MetricsReport]]:
    """Per lambda: (lambda, number of seeds, mean report, median report)."""
    out = []
    for lam in dict.fromkeys(r.lam for r in rows):
        vals = np.array([r.report.as_row() for r in rows if r.lam == lam])
        mean = MetricsReport(*map(float, vals.mean(axis=0)))
        median = MetricsReport(*map(float, np.median(vals, axis=0)))
        out.append((lam, len(vals), mean, median))
    return out


def best_lambda(rows: list[SweepRow], metric: str = "ta") -> float:
    """Lambda whose median ``metric`` is closest to ideal (50 for 1-NN accuracies, else lowest)."""
    def score(rep: MetricsReport) -> float:
        v = getattr(rep, metric)
        return abs(v - 50.0) if metric in ("ta", "ra", "ga", "pr", "re") else v

    return min(aggregate(rows), key=lambda a: score(a[3]))[0]


def write_sweep_csv(path, rows: list[SweepRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lambda", "seed", "epoch", *REPORT_FIELDS])
        for r in rows:
            w.writerow([repr(r.lam), r.seed, r.epoch, *[repr(v) for v in r.report.as_row()]])


def write_aggregate_csv(path, rows: list[SweepRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lambda", "seeds", "stat", *REPORT_FIELDS])
        for lam, n, mean, median in aggregate(rows):
            w.writerow([repr(lam), n, "mean", *[repr(v) for v in mean.as_row()]])
            w.writerow([repr(lam), n, "median", *[repr(v) for v in median.as_row()]])
