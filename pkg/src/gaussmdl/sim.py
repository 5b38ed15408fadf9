"""Random Gaussian networks and data drawn from them.

Random streams come from :class:`Seed`, a root integer plus a tuple of
stream keys fed to :class:`numpy.random.SeedSequence`.  Children of a seed
are independent of the order in which they are requested, so experiment
iterations can run in any order or in parallel.
"""
from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from .core import Dag, TooLarge, count_dags, dag_masks, validate_acyclic
from .regress import DataMatrix

UNIFORM_DAG_LIMIT = 5
PARAM_LOW, PARAM_HIGH = 0.1, 1.0


class InvalidSparsity(ValueError):
    pass


def _key(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode())
    return int(part)


@dataclass(frozen=True)
class Seed:
    root: int
    stream: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if not 0 <= self.root < 2 ** 64:
            raise ValueError("seed root must be an unsigned 64-bit integer")

    def child(self, *parts) -> "Seed":
        """Derived stream; string parts are hashed to integers."""
        return Seed(self.root, self.stream + tuple(_key(p) for p in parts))

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(
            np.random.SeedSequence(self.root, spawn_key=self.stream)))


SeedLike = Union[Seed, int]


def as_seed(seed: SeedLike) -> Seed:
    return seed if isinstance(seed, Seed) else Seed(int(seed))


@dataclass(frozen=True)
class GaussianParams:
    """Means, edge weights and residual variances of a linear Gaussian network.

    ``b`` maps ``(child, parent)`` to the weight of edge ``parent -> child``.
    """

    mu: np.ndarray
    b: dict[tuple[int, int], float]
    tau: np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.tau) <= 0):
            raise ValueError("residual variances must be positive")

    def check(self, dag: Dag) -> None:
        keys = {(i, j) for j, i in dag.edges}
        if set(self.b) != keys:
            raise ValueError("coefficient keys do not match the DAG's edges")
        if len(self.mu) != dag.m or len(self.tau) != dag.m:
            raise ValueError("parameter vectors do not match the DAG size")

    def weight_matrix(self, m: int) -> np.ndarray:
        """``B`` with ``B[i, j]`` the weight of edge ``j -> i``."""
        B = np.zeros((m, m))
        for (i, j), value in self.b.items():
            B[i, j] = value
        return B

    def implied_covariance(self, precision_noise: bool = False) -> np.ndarray:
        m = len(self.mu)
        inv = np.linalg.inv(np.eye(m) - self.weight_matrix(m))
        noise = 1.0 / np.asarray(self.tau) if precision_noise else np.asarray(self.tau)
        return inv @ np.diag(noise) @ inv.T

    def to_json(self) -> dict:
        return {
            "mu": [float(v) for v in self.mu],
            "tau": [float(v) for v in self.tau],
            "b": [[i, j, float(v)] for (i, j), v in sorted(self.b.items())],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GaussianParams":
        return cls(np.array(obj["mu"], dtype=float),
                   {(int(i), int(j)): float(v) for i, j, v in obj["b"]},
                   np.array(obj["tau"], dtype=float))


def sample_uniform_dag(m: int, seed: SeedLike) -> Dag:
    """A DAG drawn uniformly from all labeled DAGs on ``m`` nodes."""
    if m > UNIFORM_DAG_LIMIT:
        raise TooLarge(f"uniform DAG sampling is guarded to m <= {UNIFORM_DAG_LIMIT}")
    rng = as_seed(seed).generator()
    index = int(rng.integers(count_dags(m)))
    return Dag(m, dag_masks(m)[index].tolist(), check=False)


def sample_sparse_dag(m: int, nn: float, seed: SeedLike) -> Dag:
    """Random DAG with expected neighbourhood size ``nn`` per node.

    A random permutation fixes the causal order; each forward pair becomes an
    edge with probability ``nn / (m - 1)``.
    """
    if m < 2 or not 0 < nn <= m - 1:
        raise InvalidSparsity(f"need 0 < nn <= m-1, got nn={nn} with m={m}")
    rng = as_seed(seed).generator()
    p = nn / (m - 1)
    order = rng.permutation(m)
    draws = rng.random(m * (m - 1) // 2)
    parents = [0] * m
    t = 0
    for a in range(m):
        for b in range(a + 1, m):
            if draws[t] < p:
                parents[order[b]] |= 1 << int(order[a])
            t += 1
    return Dag(m, parents)


def sample_params(dag: Dag, seed: SeedLike, random_signs: bool = False) -> GaussianParams:
    """Draw every mean, weight and residual variance from Uniform[0.1, 1]."""
    rng = as_seed(seed).generator()
    mu = rng.uniform(PARAM_LOW, PARAM_HIGH, dag.m)
    tau = rng.uniform(PARAM_LOW, PARAM_HIGH, dag.m)
    keys = [(i, j) for j, i in dag.edges]
    weights = rng.uniform(PARAM_LOW, PARAM_HIGH, len(keys))
    if random_signs:
        weights = weights * rng.choice([-1.0, 1.0], len(keys))
    return GaussianParams(mu, {key: float(w) for key, w in zip(keys, weights)}, tau)


def sample_data(dag: Dag, params: GaussianParams, n: int, seed: SeedLike,
                precision_noise: bool = False) -> DataMatrix:
    """Ancestral sampling of ``n`` i.i.d. rows.

    ``x_i = mu_i + sum_j b_ij (x_j - mu_j) + e_i``; ``e_i`` has variance
    ``tau_i``, or ``1 / tau_i`` with ``precision_noise``.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    params.check(dag)
    order = validate_acyclic(dag)
    rng = as_seed(seed).generator()
    tau = np.asarray(params.tau, dtype=float)
    scale = 1.0 / np.sqrt(tau) if precision_noise else np.sqrt(tau)
    x = rng.standard_normal((n, dag.m)) * scale
    mu = np.asarray(params.mu, dtype=float)
    for i in order:
        col = x[:, i] + mu[i]
        for j, i2 in dag.edges:
            if i2 == i:
                col += params.b[(i, j)] * (x[:, j] - mu[j])
        x[:, i] = col
    return DataMatrix(x)


def save_params(params: GaussianParams, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(params.to_json(), fh)
        fh.write("\n")


def load_params(path: str | Path) -> GaussianParams:
    with open(path) as fh:
        return GaussianParams.from_json(json.load(fh))
