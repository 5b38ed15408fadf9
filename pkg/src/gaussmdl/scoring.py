"""Decomposable codelength scores for Gaussian networks.

All scores are in nats and lower is better.  With ``k`` regressors
(intercept included), ``n`` samples, residual variance ``tau`` and fitted
energy ``R``, a node costs

==============  =============================================================
``mdl3``        ``n/2 ln(2 pi e tau) + k (ln n / 2 + ln m)``
``bic``         ``n/2 ln(2 pi e tau) + k/2 ln n``
``aic``         ``n/2 ln(2 pi e tau) + k``
``rnml``        ``n/2 ln tau - lnG(k/2) - lnG((n-k)/2) + k/2 ln(R/tau)``
``rnml-stirling`` ``(n-k) ln(tau/(n-k)) + k ln(R/k) + ln(k (n-k))``
==============  =============================================================

``lnG`` is the log-gamma function.  ``tau`` and ``R`` are floored at
:data:`EPS_TAU` / :data:`EPS_R` before taking logarithms; each floor hit is
counted.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from math import comb
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
from scipy.special import gammaln

from .core import Dag, popcount, validate_acyclic
from .regress import DataMatrix, InsufficientSamples, LocalFit, batch_fit, fit_local

EPS_TAU = 1e-12
EPS_R = 1e-12
LN_2PIE = float(np.log(2 * np.pi * np.e))


class Metric(enum.Enum):
    RNML_EXACT = "rnml"
    RNML_STIRLING = "rnml-stirling"
    MDL3 = "mdl3"
    BIC = "bic"
    AIC = "aic"

    @classmethod
    def parse(cls, value: "Metric | str") -> "Metric":
        if isinstance(value, Metric):
            return value
        try:
            return cls(value)
        except ValueError:
            names = ", ".join(mt.value for mt in cls)
            raise ValueError(f"unknown metric {value!r}; choose from {names}") from None

    @property
    def is_rnml(self) -> bool:
        return self in (Metric.RNML_EXACT, Metric.RNML_STIRLING)


class DegenerateFit(ArithmeticError):
    pass


def _codelength(metric: Metric, n, k, tau, r, m, count_intercept=True):
    # Array-friendly core shared by local_score and build_table.  The
    # intercept toggle only affects the penalty terms of the information
    # criteria; the RNML forms always use the regression dimension.
    n = np.asarray(n, dtype=float)
    k = np.asarray(k, dtype=float)
    if metric.is_rnml:
        if metric is Metric.RNML_EXACT:
            return (0.5 * n * np.log(tau) - gammaln(0.5 * k) - gammaln(0.5 * (n - k))
                    + 0.5 * k * np.log(r / tau))
        return ((n - k) * np.log(tau / (n - k)) + k * np.log(r / k)
                + np.log(k * (n - k)))
    kp = k if count_intercept else k - 1
    fit = 0.5 * n * (LN_2PIE + np.log(tau))
    if metric is Metric.BIC:
        return fit + 0.5 * kp * np.log(n)
    if metric is Metric.AIC:
        return fit + kp
    return fit + kp * (0.5 * np.log(n) + np.log(m))


def _floor(metric: Metric, tau, r, clamp: bool):
    tau = np.asarray(tau, dtype=float)
    r = np.asarray(r, dtype=float)
    low_tau = tau < EPS_TAU
    low_r = (r < EPS_R) if metric.is_rnml else np.zeros_like(low_tau)
    if not clamp and (np.any(low_tau) or np.any(low_r)):
        raise DegenerateFit(
            f"{metric.value}: residual variance or signal energy below floor "
            f"(tau_hat min {tau.min():.3g}, r_hat min {r.min():.3g})")
    hits = int(np.count_nonzero(low_tau) + np.count_nonzero(low_r))
    return np.maximum(tau, EPS_TAU), np.maximum(r, EPS_R), hits


def local_score_values(metric, n: int, k: int, tau_hat: float, r_hat: float, m: int,
                       clamp: bool = True, count_intercept: bool = True) -> float:
    """Codelength of one node from its summary statistics."""
    metric = Metric.parse(metric)
    if not n > k:
        raise InsufficientSamples(f"need n > k, got n={n}, k={k}")
    if m < 1:
        raise ValueError("m must be at least 1")
    tau, r, _ = _floor(metric, tau_hat, r_hat, clamp)
    value = float(_codelength(metric, n, k, tau, r, m, count_intercept))
    if not np.isfinite(value):
        raise DegenerateFit(f"{metric.value}: non-finite codelength")
    return value


def local_score(metric, fit: LocalFit, m: int, clamp: bool = True,
                count_intercept: bool = True) -> float:
    """Codelength in nats of ``fit.node`` given its parents."""
    return local_score_values(metric, fit.n, fit.k, fit.tau_hat, fit.r_hat, m,
                              clamp=clamp, count_intercept=count_intercept)


def node_scores(metric, data: DataMatrix, dag: Dag, **kwargs) -> list[float]:
    if dag.m != data.m:
        raise ValueError(f"DAG has {dag.m} nodes but data has {data.m} columns")
    validate_acyclic(dag)
    return [local_score(metric, fit_local(data, i, mask), data.m, **kwargs)
            for i, mask in enumerate(dag.parents)]


def total_score(metric, data: DataMatrix, dag: Dag, **kwargs) -> float:
    """Sum of local scores over the nodes of ``dag``, in node order."""
    total = 0.0
    for value in node_scores(metric, data, dag, **kwargs):
        total += value
    return total


def compress_masks(m: int, node: int) -> np.ndarray:
    """Full parent masks indexed by compressed subsets of the other nodes.

    Entry ``c`` is the mask obtained by spreading the ``m-1`` bits of ``c``
    over the node indices skipping ``node``.
    """
    c = np.arange(1 << (m - 1), dtype=np.int64)
    low = (1 << node) - 1
    return (c & low) | ((c >> node) << (node + 1))


def compress_one(mask: int, node: int) -> int:
    low = (1 << node) - 1
    return (mask & low) | ((mask >> (node + 1)) << node)


_POP8 = np.array([bin(i).count("1") for i in range(256)], dtype=np.int64)


def popcounts(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.int64)
    out = np.zeros(arr.shape, dtype=np.int64)
    for shift in range(0, 64, 8):
        out += _POP8[(arr >> shift) & 0xFF]
    return out


@dataclass
class LocalScoreTable:
    """Codelengths for every (node, parent set) with at most ``max_parents`` parents.

    ``scores[v, c]`` holds the score of node ``v`` with the parent set whose
    compressed index is ``c`` (see :func:`compress_masks`); sets larger than
    ``max_parents`` are NaN.
    """

    metric: Metric | None
    m: int
    max_parents: int
    scores: np.ndarray
    substitutions: int = 0

    def __post_init__(self):
        if self.scores.shape != (self.m, 1 << max(self.m - 1, 0)):
            raise ValueError(f"score array shape {self.scores.shape} does not fit m={self.m}")

    def __getitem__(self, key: tuple[int, int]) -> float:
        node, mask = key
        if popcount(mask) > self.max_parents or mask >> node & 1 or mask >> self.m:
            raise KeyError(key)
        return float(self.scores[node, compress_one(mask, node)])

    def __len__(self) -> int:
        return int(np.count_nonzero(~np.isnan(self.scores)))

    def __contains__(self, key) -> bool:
        try:
            self[key]
        except KeyError:
            return False
        return True

    def items(self):
        for v in range(self.m):
            full = compress_masks(self.m, v)
            for c in range(self.scores.shape[1]):
                value = self.scores[v, c]
                if not np.isnan(value):
                    yield (v, int(full[c])), float(value)

    def row(self, node: int) -> np.ndarray:
        """Scores for ``node`` over compressed parent sets, ``+inf`` where absent."""
        r = self.scores[node]
        return np.where(np.isnan(r), np.inf, r)

    def dag_score(self, dag: Dag) -> float:
        total = 0.0
        for i, mask in enumerate(dag.parents):
            total += self[i, mask]
        return total

    def shifted(self, node: int, c: float) -> "LocalScoreTable":
        scores = self.scores.copy()
        scores[node] += c
        return LocalScoreTable(self.metric, self.m, self.max_parents, scores)

    @classmethod
    def from_entries(cls, m: int, entries: Mapping[tuple[int, int], float],
                     max_parents: int | None = None, metric=None) -> "LocalScoreTable":
        """Build a table from explicit ``(node, mask) -> score`` entries.

        Every parent set of size <= ``max_parents`` must be present.
        """
        if max_parents is None:
            max_parents = max((popcount(mask) for _, mask in entries), default=0)
        scores = np.full((m, 1 << max(m - 1, 0)), np.nan)
        for (v, mask), value in entries.items():
            if popcount(mask) > max_parents:
                continue
            scores[v, compress_one(mask, v)] = value
        table = cls(metric, m, max_parents, scores)
        table._check_complete()
        return table

    def _check_complete(self):
        sizes = popcounts(np.arange(self.scores.shape[1]))
        need = sizes <= self.max_parents
        for v in range(self.m):
            row = self.scores[v]
            if np.any(np.isnan(row[need])):
                raise ValueError(f"table is missing entries for node {v}")
            if not np.all(np.isfinite(row[need])):
                raise ValueError(f"table has non-finite entries for node {v}")

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["node", "parent_mask", "k", "score_nats"])
            for (v, mask), value in self.items():
                w.writerow([v, mask, popcount(mask) + 1, format(value, ".17g")])


@dataclass
class FitTable:
    """Regression summaries for every parent set up to ``max_parents``."""

    n: int
    m: int
    max_parents: int
    k: np.ndarray
    tau: np.ndarray
    r: np.ndarray


def fit_all(data: DataMatrix, max_parents: int) -> FitTable:
    m, n = data.m, data.n
    max_parents = min(max_parents, m - 1)
    if max_parents < 0:
        raise ValueError("max_parents must be non-negative")
    if not max_parents + 1 < n:
        raise InsufficientSamples(f"max_parents={max_parents} needs n > {max_parents + 1}, got n={n}")
    width = 1 << (m - 1)
    sizes = popcounts(np.arange(width))
    k = np.full((m, width), np.nan)
    tau = np.full((m, width), np.nan)
    r = np.full((m, width), np.nan)
    for v in range(m):
        full = compress_masks(m, v)
        for size in range(max_parents + 1):
            cs = np.flatnonzero(sizes == size)
            _, t, rr, _ = batch_fit(data, v, full[cs].tolist())
            k[v, cs] = size + 1
            tau[v, cs] = t
            r[v, cs] = rr
    return FitTable(n, m, max_parents, k, tau, r)


def table_from_fits(metric, fits: FitTable, clamp: bool = True,
                    count_intercept: bool = True) -> LocalScoreTable:
    metric = Metric.parse(metric)
    ok = ~np.isnan(fits.k)
    tau, r, hits = _floor(metric, fits.tau[ok], fits.r[ok], clamp)
    values = _codelength(metric, fits.n, fits.k[ok], tau, r, fits.m, count_intercept)
    if not np.all(np.isfinite(values)):
        raise DegenerateFit(f"{metric.value}: non-finite codelength in table")
    scores = np.full(fits.k.shape, np.nan)
    scores[ok] = values
    return LocalScoreTable(metric, fits.m, fits.max_parents, scores, substitutions=hits)


def build_table(metric, data: DataMatrix, max_parents: int, **kwargs) -> LocalScoreTable:
    """Precompute local scores for all parent sets of size <= ``max_parents``."""
    return table_from_fits(metric, fit_all(data, max_parents), **kwargs)


def build_tables(metrics: Iterable, data: DataMatrix, max_parents: int,
                 **kwargs) -> dict[Metric, LocalScoreTable]:
    """Like :func:`build_table` for several metrics, sharing the regressions."""
    fits = fit_all(data, max_parents)
    return {Metric.parse(mt): table_from_fits(mt, fits, **kwargs) for mt in metrics}


def table_size(m: int, max_parents: int) -> int:
    return m * sum(comb(m - 1, j) for j in range(min(max_parents, m - 1) + 1))
