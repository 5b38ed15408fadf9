"""Least-squares fits of one node on its parents.

Every fit regresses a column on ``[1 | parent columns]``.  The quantities the
scores need are

* ``beta_hat`` -- solution of the normal equations, intercept first,
* ``tau_hat``  -- residual variance with divisor ``n`` (the MLE),
* ``r_hat``    -- fitted-signal energy ``beta' S beta`` with ``S = Pa'Pa / n``.

Fits are computed from the raw second-moment matrix of the augmented data,
so many parent sets of one dataset share a single ``O(n m^2)`` pass.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import mask_members, popcount

RCOND_MIN = 1e-12


class DataError(ValueError):
    """Malformed or unusable observation data."""


class InsufficientSamples(DataError):
    pass


class SingularDesign(ArithmeticError):
    pass


class DataMatrix:
    """An ``n x m`` matrix of finite observations, one column per variable."""

    def __init__(self, values):
        arr = np.array(values, dtype=float)
        if arr.ndim != 2:
            raise DataError(f"data must be two-dimensional, got shape {arr.shape}")
        if arr.shape[0] < 1:
            raise DataError("data needs at least one row")
        if not np.all(np.isfinite(arr)):
            raise DataError("data contains non-finite entries")
        arr.setflags(write=False)
        self.values = arr

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @cached_property
    def moments(self) -> np.ndarray:
        """``(m+1) x (m+1)`` matrix ``A'A / n`` where ``A = [1 | values]``."""
        aug = np.empty((self.n, self.m + 1))
        aug[:, 0] = 1.0
        aug[:, 1:] = self.values
        out = aug.T @ aug / self.n
        out.setflags(write=False)
        return out

    def __repr__(self) -> str:
        return f"DataMatrix(n={self.n}, m={self.m})"


@dataclass(frozen=True)
class LocalFit:
    node: int
    parents: int
    n: int
    k: int
    beta_hat: np.ndarray
    tau_hat: float
    r_hat: float
    gram: np.ndarray


def design_index(node: int, mask: int) -> list[int]:
    """Columns of the augmented data used as regressors (0 is the intercept)."""
    return [0] + [j + 1 for j in mask_members(mask)]


def batch_fit(data: DataMatrix, node: int, masks: Sequence[int]):
    """Fit ``node`` on each parent set in ``masks``; all masks must share a size.

    Returns ``(beta, tau, r, rcond)`` with ``beta`` of shape ``(len(masks), k)``.
    Raises :class:`SingularDesign` if any design is numerically singular.
    """
    masks = list(masks)
    k = popcount(masks[0]) + 1
    if data.n <= k:
        raise InsufficientSamples(f"n={data.n} samples cannot support k={k} regressors")
    idx = np.array([design_index(node, mask) for mask in masks]).reshape(len(masks), k)
    G = data.moments
    gram = G[idx[:, :, None], idx[:, None, :]]
    rhs = G[idx, node + 1]
    eig = np.linalg.eigvalsh(gram)
    rcond = np.where(eig[:, -1] > 0, eig[:, 0] / np.where(eig[:, -1] > 0, eig[:, -1], 1.0), 0.0)
    bad = np.flatnonzero(rcond < RCOND_MIN)
    if bad.size:
        raise SingularDesign(
            f"node {node} on parents {mask_members(masks[bad[0]])}: "
            f"reciprocal condition {rcond[bad[0]]:.3g} < {RCOND_MIN}")
    beta = np.linalg.solve(gram, rhs[:, :, None])[:, :, 0]
    r = np.einsum("bi,bi->b", rhs, beta)
    tau = G[node + 1, node + 1] - r
    return beta, tau, r, rcond


def fit_local(data: DataMatrix, node: int, parents: int) -> LocalFit:
    """Ordinary least squares of ``node`` on its parents plus an intercept."""
    if not 0 <= node < data.m:
        raise IndexError(f"node {node} out of range for m={data.m}")
    if parents >> node & 1:
        raise ValueError(f"node {node} cannot be its own parent")
    if parents >> data.m:
        raise ValueError(f"parent mask references nodes >= {data.m}")
    beta, tau, r, _ = batch_fit(data, node, [parents])
    idx = design_index(node, parents)
    gram = np.array(data.moments[np.ix_(idx, idx)])
    return LocalFit(node=node, parents=parents, n=data.n, k=len(idx),
                    beta_hat=beta[0], tau_hat=float(max(tau[0], 0.0)),
                    r_hat=float(r[0]), gram=gram)


def read_data_csv(path: str | Path) -> DataMatrix:
    """Read a CSV with header ``x1,...,xm`` and one float row per sample."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from None
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if header != [f"x{i + 1}" for i in range(len(header))]:
        raise DataError(f"{path}: header must be x1,...,xm, got {','.join(header)}")
    body = [r for r in rows[1:] if r]
    try:
        values = [[float(v) for v in r] for r in body]
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    if any(len(r) != len(header) for r in values):
        raise DataError(f"{path}: ragged rows")
    return DataMatrix(np.array(values, dtype=float).reshape(len(values), len(header)))


def write_data_csv(data: DataMatrix, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(f"x{i + 1}" for i in range(data.m)) + "\n")
        for row in data.values:
            fh.write(",".join(format(float(v), ".17g") for v in row) + "\n")
