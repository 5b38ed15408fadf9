"""Graph types for structure learning: DAGs over bitmask parent sets.

Nodes are integers ``0..m-1``.  A parent set is stored as an ``int`` bitmask
(bit ``j`` set means ``j`` is a parent).  The constant regressor that every
local model carries is never stored in the mask; :func:`parent_count` adds it
back.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from math import comb
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

MAX_NODES = 64
ENUMERATION_LIMIT = 6
COUNT_LIMIT = 10


class GraphError(ValueError):
    """Base class for malformed graphs."""


class CycleError(GraphError):
    def __init__(self, nodes: Sequence[int]):
        self.nodes = tuple(sorted(nodes))
        super().__init__(f"graph has a cycle through nodes {list(self.nodes)}")


class DimensionMismatch(GraphError):
    pass


class TooLarge(ValueError):
    """Raised when an exponential-time routine is asked for too many nodes."""


def popcount(mask: int) -> int:
    return bin(mask).count("1")


def mask_members(mask: int) -> list[int]:
    out = []
    j = 0
    while mask:
        if mask & 1:
            out.append(j)
        mask >>= 1
        j += 1
    return out


def parent_count(mask: int) -> int:
    """Number of regressors for a node with parents ``mask``, intercept included."""
    return popcount(mask) + 1


@dataclass(frozen=True)
class Dag:
    """A directed acyclic graph given by one parent bitmask per node.

    Construction checks index ranges and self-loops; acyclicity is checked
    unless ``check=False`` (used by the enumerator, which filters itself).
    """

    m: int
    parents: tuple[int, ...]

    def __init__(self, m: int, parents: Iterable[int], check: bool = True):
        parents = tuple(int(p) for p in parents)
        object.__setattr__(self, "m", int(m))
        object.__setattr__(self, "parents", parents)
        if check:
            if not 0 <= self.m <= MAX_NODES:
                raise GraphError(f"node count {m} outside [0, {MAX_NODES}]")
            if len(parents) != self.m:
                raise GraphError(f"expected {self.m} parent masks, got {len(parents)}")
            full = (1 << self.m) - 1
            for i, mask in enumerate(parents):
                if mask < 0 or mask & ~full:
                    raise GraphError(f"parent mask of node {i} references nodes >= {self.m}")
                if mask >> i & 1:
                    raise GraphError(f"node {i} is its own parent")
            validate_acyclic(self)

    @classmethod
    def empty(cls, m: int) -> "Dag":
        return cls(m, [0] * m)

    @classmethod
    def from_edges(cls, m: int, edges: Iterable[Sequence[int]]) -> "Dag":
        parents = [0] * m
        for edge in edges:
            if len(edge) != 2:
                raise GraphError(f"edge {edge!r} is not a (from, to) pair")
            a, b = int(edge[0]), int(edge[1])
            if not (0 <= a < m and 0 <= b < m):
                raise GraphError(f"edge {a}->{b} out of range for m={m}")
            parents[b] |= 1 << a
        return cls(m, parents)

    @property
    def edges(self) -> list[tuple[int, int]]:
        """Edges as ``(parent, child)`` pairs, sorted by child then parent."""
        return [(j, i) for i, mask in enumerate(self.parents) for j in mask_members(mask)]

    @property
    def edge_count(self) -> int:
        return sum(popcount(mask) for mask in self.parents)

    def has_edge(self, a: int, b: int) -> bool:
        return bool(self.parents[b] >> a & 1)

    def max_indegree(self) -> int:
        return max((popcount(mask) for mask in self.parents), default=0)

    def to_json(self) -> dict:
        return {"m": self.m, "edges": [[a, b] for a, b in sorted(self.edges)]}

    @classmethod
    def from_json(cls, obj: dict) -> "Dag":
        try:
            m = obj["m"]
            edges = obj["edges"]
        except (KeyError, TypeError) as exc:
            raise GraphError(f"DAG JSON needs 'm' and 'edges': {exc}") from None
        if not isinstance(m, int) or isinstance(m, bool):
            raise GraphError("'m' must be an integer")
        return cls.from_edges(m, edges)


def validate_acyclic(d: Dag) -> list[int]:
    """Return a topological order of ``d`` (parents before children).

    Kahn's algorithm; among ready nodes the smallest index goes first so the
    order is deterministic.  Raises :class:`CycleError` otherwise.
    """
    remaining = (1 << d.m) - 1
    order: list[int] = []
    while remaining:
        ready = [i for i in mask_members(remaining) if not d.parents[i] & remaining]
        if not ready:
            raise CycleError(_cycle_nodes(d, remaining))
        i = ready[0]
        order.append(i)
        remaining &= ~(1 << i)
    return order


def _cycle_nodes(d: Dag, remaining: int) -> list[int]:
    # Every node left has a parent inside `remaining`; walk parent pointers
    # until a node repeats.
    node = mask_members(remaining)[0]
    seen: dict[int, int] = {}
    path: list[int] = []
    while node not in seen:
        seen[node] = len(path)
        path.append(node)
        node = mask_members(d.parents[node] & remaining)[0]
    return path[seen[node]:]


def _is_acyclic(parents: Sequence[int], m: int) -> bool:
    remaining = (1 << m) - 1
    while remaining:
        removed = 0
        r = remaining
        i = 0
        while r:
            if r & 1 and not parents[i] & remaining:
                removed |= 1 << i
            r >>= 1
            i += 1
        if not removed:
            return False
        remaining &= ~removed
    return True


def shd(a: Dag, b: Dag) -> int:
    """Structural Hamming distance between two DAGs on the same nodes.

    Each unordered pair contributes one if exactly one graph has an edge
    there, or if both do with opposite directions.
    """
    if a.m != b.m:
        raise DimensionMismatch(f"cannot compare DAGs on {a.m} and {b.m} nodes")
    dist = 0
    for i in range(a.m):
        for j in range(i + 1, a.m):
            ea = (a.has_edge(i, j), a.has_edge(j, i))
            eb = (b.has_edge(i, j), b.has_edge(j, i))
            if ea != eb:
                dist += 1
    return dist


def count_dags(m: int) -> int:
    """Number of labeled DAGs on ``m`` nodes (Robinson's recurrence)."""
    if m < 0:
        raise ValueError("m must be non-negative")
    if m > COUNT_LIMIT:
        raise TooLarge(f"count_dags is guarded to m <= {COUNT_LIMIT}")
    a = [1]
    for n in range(1, m + 1):
        a.append(sum((-1) ** (k + 1) * comb(n, k) * 2 ** (k * (n - k)) * a[n - k]
                     for k in range(1, n + 1)))
    return a[m]


def enumerate_dags(m: int) -> Iterator[Dag]:
    """Yield every labeled DAG on ``m`` nodes exactly once.

    The order is fixed: parent-mask assignments in lexicographic order of
    ``(parents[0], parents[1], ...)``.
    """
    for row in dag_masks(m):
        yield Dag(m, row.tolist(), check=False)


@lru_cache(maxsize=None)
def dag_masks(m: int) -> np.ndarray:
    """All DAGs on ``m`` nodes as a read-only ``(count, m)`` array of parent masks."""
    if m < 0:
        raise ValueError("m must be non-negative")
    if m > ENUMERATION_LIMIT:
        raise TooLarge(f"DAG enumeration is guarded to m <= {ENUMERATION_LIMIT}")
    choices = []
    for i in range(m):
        others = [j for j in range(m) if j != i]
        opts = [sum(1 << others[b] for b in range(len(others)) if c >> b & 1)
                for c in range(1 << len(others))]
        choices.append(sorted(opts))

    rows: list[tuple[int, ...]] = []
    current = [0] * m

    # Depth-first over nodes 0..m-1.  Edges into already-assigned nodes are
    # final, so a cycle among them can be pruned early without changing
    # which complete assignments survive.
    def extend(i: int) -> None:
        if i == m:
            rows.append(tuple(current))
            return
        for mask in choices[i]:
            current[i] = mask
            if _prefix_acyclic(current, i + 1):
                extend(i + 1)
        current[i] = 0

    extend(0)
    out = np.array(rows, dtype=np.int64).reshape(len(rows), m)
    out.setflags(write=False)
    return out


def _prefix_acyclic(parents: list[int], upto: int) -> bool:
    # Restrict to nodes 0..upto-1 and the edges among them.
    sub = (1 << upto) - 1
    return _is_acyclic([parents[i] & sub for i in range(upto)], upto)


def load_dag(path: str | Path) -> Dag:
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise GraphError(f"{path}: invalid JSON ({exc})") from None
    return Dag.from_json(obj)


def save_dag(d: Dag, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(d.to_json(), fh)
        fh.write("\n")


def order_consistent(d: Dag, order: Sequence[int]) -> bool:
    """True if every edge of ``d`` points forward in ``order``."""
    pos = {v: k for k, v in enumerate(order)}
    return all(pos[a] < pos[b] for a, b in d.edges)


def n_parent_sets(m: int, max_parents: int) -> int:
    """Parent sets of size <= ``max_parents`` available to one node."""
    return sum(comb(m - 1, j) for j in range(min(max_parents, m - 1) + 1))
