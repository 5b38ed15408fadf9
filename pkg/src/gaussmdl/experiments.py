"""Simulation studies: rank of the generating DAG and SHD of the learned DAG.

Each (cell, iteration) is an independent job seeded from the root seed and
its own coordinates, so the row set does not depend on how many workers run
the jobs or in which order they finish.
"""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .core import count_dags, shd
from .regress import DataError, SingularDesign
from .scoring import DegenerateFit, Metric, build_tables
from .search import learn_dp, rank_of
from .sim import Seed, sample_data, sample_params, sample_sparse_dag, sample_uniform_dag

log = logging.getLogger(__name__)

DEFAULT_METRICS = (Metric.RNML_EXACT, Metric.MDL3, Metric.BIC, Metric.AIC)
RANK_SAMPLE_SIZES = (25, 50, 100, 200, 500, 1000)

# Errors an iteration may legitimately hit; anything else is a bug and propagates.
RECOVERABLE = (SingularDesign, DegenerateFit, DataError, FloatingPointError)


class Row(NamedTuple):
    metric: str
    m: int
    nn: float | None
    n: int
    iteration: int
    statistic: str
    value: float


class Failure(NamedTuple):
    m: int
    nn: float | None
    n: int
    iteration: int
    error: str


@dataclass
class RankConfig:
    m: int = 4
    sample_sizes: Sequence[int] = RANK_SAMPLE_SIZES
    iterations: int = 500
    metrics: Sequence[Metric] = DEFAULT_METRICS
    seed: int = 0
    precision_noise: bool = False
    random_signs: bool = False

    def __post_init__(self):
        self.metrics = tuple(Metric.parse(mt) for mt in self.metrics)
        self.sample_sizes = tuple(int(n) for n in self.sample_sizes)
        if not 1 <= self.m <= 5:
            raise ValueError("rank experiments need 1 <= m <= 5")
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if not self.sample_sizes or not self.metrics:
            raise ValueError("sample_sizes and metrics must be non-empty")


@dataclass
class ShdConfig:
    node_counts: Sequence[int] = (8, 10, 15)
    neighbor_counts: Sequence[float] = (2, 4, 6)
    sample_sizes: Sequence[int] = (50, 500, 1000)
    iterations: int = 100
    metrics: Sequence[Metric] = DEFAULT_METRICS
    seed: int = 0
    precision_noise: bool = False
    random_signs: bool = False

    def __post_init__(self):
        self.metrics = tuple(Metric.parse(mt) for mt in self.metrics)
        self.node_counts = tuple(int(m) for m in self.node_counts)
        self.neighbor_counts = tuple(_num(nn) for nn in self.neighbor_counts)
        self.sample_sizes = tuple(int(n) for n in self.sample_sizes)
        if not (self.node_counts and self.neighbor_counts and self.sample_sizes and self.metrics):
            raise ValueError("every grid list must be non-empty")
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")


def _num(x):
    x = float(x)
    return int(x) if x.is_integer() else x


@dataclass
class ExperimentResult:
    kind: str
    metrics: tuple[Metric, ...]
    rows: list[Row] = field(default_factory=list)
    failures: list[Failure] = field(default_factory=list)

    def cells(self):
        seen = {}
        for r in self.rows:
            seen.setdefault((r.m, r.nn, r.n), None)
        for f in self.failures:
            seen.setdefault((f.m, f.nn, f.n), None)
        return sorted(seen, key=lambda c: (c[0], -1 if c[1] is None else c[1], c[2]))

    def values(self, metric: Metric, m: int, nn, n: int) -> np.ndarray:
        return np.array([r.value for r in self.rows
                         if r.metric == metric.value and (r.m, r.nn, r.n) == (m, nn, n)])

    def summary(self) -> list[dict]:
        """Mean and standard error per (metric, cell), with the failure count."""
        fails: dict = {}
        for f in self.failures:
            fails[(f.m, f.nn, f.n)] = fails.get((f.m, f.nn, f.n), 0) + 1
        out = []
        for m, nn, n in self.cells():
            for metric in self.metrics:
                v = self.values(metric, m, nn, n)
                mean = float(v.mean()) if v.size else math.nan
                se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.nan
                out.append({"metric": metric.value, "m": m, "nn": nn, "n": n,
                            "mean": mean, "stderr": se, "failures": fails.get((m, nn, n), 0)})
        return out

    def table1(self) -> list[dict]:
        """Mean SHD reduction of RNML over MDL and over the better of AIC/BIC, per n.

        Per cell the reduction is ``mean(other) - mean(rnml)``; for AIC/BIC
        the smaller of the two cell means is used.  Cells are then averaged.
        """
        means = {(s["metric"], s["m"], s["nn"], s["n"]): s["mean"] for s in self.summary()}
        have = {mt.value for mt in self.metrics}
        rnml = Metric.RNML_EXACT.value
        if rnml not in have:
            return []
        out = []
        for n in sorted({c[2] for c in self.cells()}):
            cells = [c for c in self.cells() if c[2] == n]
            comparisons = {}
            if Metric.MDL3.value in have:
                comparisons["mdl3"] = [means[("mdl3", m, nn, n)] - means[(rnml, m, nn, n)]
                                       for m, nn, _ in cells]
            xic = [mt for mt in ("aic", "bic") if mt in have]
            if xic:
                comparisons["best_aic_bic"] = [
                    min(means[(mt, m, nn, n)] for mt in xic) - means[(rnml, m, nn, n)]
                    for m, nn, _ in cells]
            for name, diffs in comparisons.items():
                out.append({"comparison": name, "n": n,
                            "mean_difference": float(np.nanmean(diffs)) if diffs else math.nan})
        return out

    def write_rows(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["metric", "m", "nn", "n", "iteration", "statistic", "value"])
            for r in self.rows:
                w.writerow([r.metric, r.m, "" if r.nn is None else r.nn, r.n, r.iteration,
                            r.statistic, _fmt(r.value)])

    def write_summary(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["metric", "m", "nn", "n", "mean", "stderr", "failures"])
            for s in self.summary():
                w.writerow([s["metric"], s["m"], "" if s["nn"] is None else s["nn"], s["n"],
                            _fmt(s["mean"]), _fmt(s["stderr"]), s["failures"]])

    def write_table1(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["comparison", "n", "mean_difference"])
            for t in self.table1():
                w.writerow([t["comparison"], t["n"], _fmt(t["mean_difference"])])

    def write_failures(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["m", "nn", "n", "iteration", "error"])
            for f in self.failures:
                w.writerow([f.m, "" if f.nn is None else f.nn, f.n, f.iteration, f.error])


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _run_jobs(fn, jobs: list, threads: int) -> list:
    if threads <= 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * threads))))


def _rank_job(job):
    config, iteration = job
    seed = Seed(config.seed).child("rank", config.m, iteration)
    dag = sample_uniform_dag(config.m, seed.child("dag"))
    params = sample_params(dag, seed.child("params"), random_signs=config.random_signs)
    rows, failures = [], []
    for n in config.sample_sizes:
        try:
            data = sample_data(dag, params, n, seed.child("data", n),
                               precision_noise=config.precision_noise)
            tables = build_tables(config.metrics, data, config.m - 1)
            ranks = {mt: rank_of(dag, tables[mt]) for mt in config.metrics}
        except RECOVERABLE as exc:
            failures.append(Failure(config.m, None, n, iteration, f"{type(exc).__name__}: {exc}"))
            continue
        for mt in config.metrics:
            rows.append(Row(mt.value, config.m, None, n, iteration, "rank", ranks[mt]))
    return rows, failures


def run_rank(config: RankConfig, threads: int = 1) -> ExperimentResult:
    """Rank of the generating DAG among all DAGs, per metric and sample size."""
    jobs = [(config, it) for it in range(config.iterations)]
    return _assemble("rank", config.metrics, _run_jobs(_rank_job, jobs, threads))


def shd_iteration(m: int, nn, n: int, iteration: int, config: ShdConfig):
    """One SHD replicate.  Returns ``(generating dag, {metric: learned dag})``.

    The graph and parameters are keyed by ``(m, nn, iteration)`` so every
    sample size of one iteration shares them; the data stream is keyed by
    ``n`` as well.
    """
    base = Seed(config.seed).child("shd", m, str(nn), iteration)
    dag = sample_sparse_dag(m, nn, base.child("dag"))
    params = sample_params(dag, base.child("params"), random_signs=config.random_signs)
    data = sample_data(dag, params, n, base.child("data", n),
                       precision_noise=config.precision_noise)
    max_parents = max(dag.max_indegree(), 1)
    tables = build_tables(config.metrics, data, max_parents)
    return dag, {mt: learn_dp(tables[mt]).best for mt in config.metrics}


def _shd_job(job):
    config, (m, nn, n), iteration = job
    try:
        dag, learned = shd_iteration(m, nn, n, iteration, config)
    except RECOVERABLE as exc:
        return [], [Failure(m, nn, n, iteration, f"{type(exc).__name__}: {exc}")]
    rows = [Row(mt.value, m, nn, n, iteration, "shd", shd(learned[mt], dag))
            for mt in config.metrics]
    return rows, []


def run_shd(config: ShdConfig, threads: int = 1) -> ExperimentResult:
    """SHD between learned and generating DAGs over the (m, nn, n) grid."""
    cells = [(m, nn, n) for m in config.node_counts for nn in config.neighbor_counts
             for n in config.sample_sizes]
    jobs = [(config, cell, it) for cell in cells for it in range(config.iterations)]
    return _assemble("shd", config.metrics, _run_jobs(_shd_job, jobs, threads))


def _assemble(kind, metrics, outputs) -> ExperimentResult:
    result = ExperimentResult(kind, tuple(metrics))
    for rows, failures in outputs:
        result.rows.extend(rows)
        result.failures.extend(failures)
    for f in result.failures:
        log.warning("%s iteration %d failed (m=%s nn=%s n=%s): %s",
                    kind, f.iteration, f.m, f.nn, f.n, f.error)
    order = {mt.value: k for k, mt in enumerate(metrics)}
    cell_key = lambda m, nn, n: (m, -1 if nn is None else nn, n)
    result.rows.sort(key=lambda r: (cell_key(r.m, r.nn, r.n), r.iteration, order[r.metric]))
    result.failures.sort(key=lambda f: (cell_key(f.m, f.nn, f.n), f.iteration))
    return result


def rank_bounds(m: int) -> tuple[int, int]:
    return 1, count_dags(m)
