"""Benchmark harness: accuracy sweeps, N-scaling, and runtime breakdown.

Drives the full pipeline (grid, kernel compression, task-graph
factorization, solve) and reports both error metrics plus wall times with
95% confidence intervals.  Construction is timed separately from
factorization; repetitions re-run factorization and solve on the already
built operator, so the build time carries no interval.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from .construct import build_hss, construct_error
from .factor import solve_error, ulv_solve
from .geometry import generate_grid
from .kernels import KernelSpec
from .taskdag import assign_owners, build_dag, execute, simulate_comm

__all__ = [
    "SCHEMA_VERSION",
    "RANK_SWEEP_COLUMNS",
    "SCALING_COLUMNS",
    "DEFAULT_RANK_GRID",
    "ExperimentConfig",
    "ExperimentReport",
    "run_single",
    "rank_accuracy_sweep",
    "scaling_sweep",
    "breakdown_report",
    "write_csv",
]

SCHEMA_VERSION = 1

RANK_SWEEP_COLUMNS = [
    "schema_version", "kernel", "N", "nleaf", "max_rank",
    "construct_error", "solve_error", "status", "message",
]

SCALING_COLUMNS = [
    "schema_version", "kernel", "N", "nleaf", "max_rank", "workers",
    "repetitions", "build_seconds", "factor_seconds_mean",
    "factor_seconds_ci95", "solve_seconds_mean", "solve_seconds_ci95",
    "task_count", "status", "message",
]

# Default (max_rank, nleaf) grid for the accuracy sweep.
DEFAULT_RANK_GRID = ((100, 256), (200, 256), (200, 512), (400, 512))


@dataclass(frozen=True)
class ExperimentConfig:
    kernel: KernelSpec
    n: int
    nleaf: int
    max_rank: int
    workers: int = 1
    nprocs_simulated: int = 1
    seed: int = 0
    repetitions: int = 5
    output: str | None = None

    def __post_init__(self):
        if self.max_rank > self.nleaf:
            raise ValueError(f"max_rank={self.max_rank} exceeds nleaf={self.nleaf}")
        ratio = self.n // self.nleaf
        if self.n % self.nleaf or ratio & (ratio - 1) or ratio < 2:
            raise ValueError(f"n={self.n} must equal nleaf * 2**L with L >= 1")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.workers < 1 or self.nprocs_simulated < 1:
            raise ValueError("workers and simulated procs must be >= 1")

    def as_dict(self) -> dict:
        out = asdict(self)
        out["kernel"] = asdict(self.kernel)
        return out

    @staticmethod
    def from_dict(data: dict) -> "ExperimentConfig":
        data = dict(data)
        kernel = data.pop("kernel")
        if isinstance(kernel, dict):
            kernel = KernelSpec(**kernel)
        return ExperimentConfig(kernel=kernel, **data)


def _mean_ci95(samples: list) -> tuple[float, float | None]:
    mean = float(np.mean(samples))
    if len(samples) < 2:
        return mean, None
    half = 1.96 * float(np.std(samples, ddof=1)) / math.sqrt(len(samples))
    return mean, half


@dataclass
class ExperimentReport:
    schema_version: int
    config: dict
    construct_error: float
    solve_error: float
    build_seconds: float
    factor_seconds_mean: float
    factor_seconds_ci95: float | None
    solve_seconds_mean: float
    solve_seconds_ci95: float | None
    task_count: int
    makespan_seconds: float
    per_kind_seconds: dict
    per_worker_busy_seconds: list
    max_concurrent: int
    comm_events: int
    comm_entries: int

    def as_dict(self) -> dict:
        return asdict(self)


def run_single(cfg: ExperimentConfig) -> ExperimentReport:
    """Build, factorize through the executor, solve, and measure errors."""
    ps = generate_grid(cfg.n)
    t0 = time.perf_counter()
    h = build_hss(cfg.kernel, ps, cfg.nleaf, cfg.max_rank)
    build_s = time.perf_counter() - t0

    graph = build_dag(h)
    owners = assign_owners(graph, cfg.nprocs_simulated)

    rng = np.random.default_rng(cfg.seed)
    b = rng.standard_normal(cfg.n)
    factor_times, solve_times = [], []
    factors = stats = None
    for _ in range(cfg.repetitions):
        t0 = time.perf_counter()
        factors, stats = execute(graph, h, cfg.workers, owners)
        factor_times.append(time.perf_counter() - t0)
        t0 = time.perf_counter()
        ulv_solve(factors, b)
        solve_times.append(time.perf_counter() - t0)

    cons_err = construct_error(h, cfg.kernel, ps, cfg.seed)
    solv_err = solve_error(factors, h, cfg.seed)
    trace = simulate_comm(graph, owners, h)

    factor_mean, factor_ci = _mean_ci95(factor_times)
    solve_mean, solve_ci = _mean_ci95(solve_times)
    return ExperimentReport(
        schema_version=SCHEMA_VERSION,
        config=cfg.as_dict(),
        construct_error=cons_err,
        solve_error=solv_err,
        build_seconds=build_s,
        factor_seconds_mean=factor_mean,
        factor_seconds_ci95=factor_ci,
        solve_seconds_mean=solve_mean,
        solve_seconds_ci95=solve_ci,
        task_count=len(graph),
        makespan_seconds=stats.makespan_seconds,
        per_kind_seconds=stats.per_kind_seconds,
        per_worker_busy_seconds=stats.per_worker_busy_seconds,
        max_concurrent=stats.max_concurrent,
        comm_events=len(trace.events),
        comm_entries=trace.total_entries,
    )


def rank_accuracy_sweep(kernels, rank_leaf_pairs, base: ExperimentConfig) -> list:
    """One row per (kernel, max_rank, nleaf); failures recorded per row."""
    rows = []
    for kind in kernels:
        kernel = kind if isinstance(kind, KernelSpec) else KernelSpec(kind)
        for max_rank, nleaf in rank_leaf_pairs:
            row = {
                "schema_version": SCHEMA_VERSION, "kernel": kernel.kind,
                "N": base.n, "nleaf": nleaf, "max_rank": max_rank,
                "construct_error": "", "solve_error": "",
                "status": "ok", "message": "",
            }
            try:
                cfg = ExperimentConfig(
                    kernel=kernel, n=base.n, nleaf=nleaf, max_rank=max_rank,
                    workers=base.workers, nprocs_simulated=base.nprocs_simulated,
                    seed=base.seed, repetitions=1)
                report = run_single(cfg)
                row["construct_error"] = report.construct_error
                row["solve_error"] = report.solve_error
            except Exception as exc:
                row["status"] = "error"
                row["message"] = str(exc)
            rows.append(row)
    return rows


def fit_growth_exponent(ns, times) -> float:
    """Least-squares slope of log(time) against log(N)."""
    slope, _ = np.polyfit(np.log(np.asarray(ns, float)),
                          np.log(np.asarray(times, float)), 1)
    return float(slope)


def scaling_sweep(n_list, base: ExperimentConfig) -> tuple[list, float | None]:
    """Factor wall time per N plus the fitted log-log growth exponent."""
    rows = []
    fit_ns, fit_times = [], []
    for n in n_list:
        row = {
            "schema_version": SCHEMA_VERSION, "kernel": base.kernel.kind,
            "N": n, "nleaf": base.nleaf, "max_rank": base.max_rank,
            "workers": base.workers, "repetitions": base.repetitions,
            "build_seconds": "", "factor_seconds_mean": "",
            "factor_seconds_ci95": "", "solve_seconds_mean": "",
            "solve_seconds_ci95": "", "task_count": "",
            "status": "ok", "message": "",
        }
        try:
            cfg = ExperimentConfig(
                kernel=base.kernel, n=n, nleaf=base.nleaf, max_rank=base.max_rank,
                workers=base.workers, nprocs_simulated=base.nprocs_simulated,
                seed=base.seed, repetitions=base.repetitions)
            report = run_single(cfg)
            row["build_seconds"] = report.build_seconds
            row["factor_seconds_mean"] = report.factor_seconds_mean
            row["factor_seconds_ci95"] = report.factor_seconds_ci95 or ""
            row["solve_seconds_mean"] = report.solve_seconds_mean
            row["solve_seconds_ci95"] = report.solve_seconds_ci95 or ""
            row["task_count"] = report.task_count
            fit_ns.append(n)
            fit_times.append(report.factor_seconds_mean)
        except Exception as exc:
            row["status"] = "error"
            row["message"] = str(exc)
        rows.append(row)
    exponent = fit_growth_exponent(fit_ns, fit_times) if len(fit_ns) >= 2 else None
    return rows, exponent


def breakdown_report(cfg: ExperimentConfig) -> dict:
    """Split the factorization makespan into compute vs scheduler/idle time."""
    ps = generate_grid(cfg.n)
    h = build_hss(cfg.kernel, ps, cfg.nleaf, cfg.max_rank)
    graph = build_dag(h)
    owners = assign_owners(graph, cfg.nprocs_simulated)
    _, stats = execute(graph, h, cfg.workers, owners)
    per_worker = [
        {"worker": w, "busy_seconds": busy,
         "overhead_seconds": max(stats.makespan_seconds - busy, 0.0)}
        for w, busy in enumerate(stats.per_worker_busy_seconds)
    ]
    return {
        "schema_version": SCHEMA_VERSION,
        "config": cfg.as_dict(),
        "makespan_seconds": stats.makespan_seconds,
        "compute_task_seconds": stats.total_task_seconds,
        "overhead_seconds": max(
            cfg.workers * stats.makespan_seconds - stats.total_task_seconds, 0.0),
        "per_kind_seconds": stats.per_kind_seconds,
        "per_worker": per_worker,
        "max_concurrent": stats.max_concurrent,
        "task_count": len(graph),
    }


def write_csv(rows: list, columns: list, path_or_file):
    if hasattr(path_or_file, "write"):
        writer = csv.DictWriter(path_or_file, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
        return
    with open(path_or_file, "w", newline="", encoding="utf-8") as fh:
        write_csv(rows, columns, fh)


def write_json(payload, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
