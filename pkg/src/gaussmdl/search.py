"""Exact structure search over a precomputed local score table.

Both searches minimise the total codelength and break ties the same way:
lower score, then fewer edges, then the lexicographically smaller tuple of
parent masks (node 0 first).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Dag, TooLarge, dag_masks, validate_acyclic
from .scoring import LocalScoreTable, Metric, compress_masks, popcounts

EXHAUSTIVE_LIMIT = 6
RANK_LIMIT = 5
DP_LIMIT = 25
TIE_RTOL = 1e-10


@dataclass(frozen=True)
class SearchResult:
    best: Dag
    best_score: float
    metric: Metric | None
    node_count: int
    max_parents: int

    def to_json(self) -> dict:
        return {
            "metric": self.metric.value if self.metric is not None else None,
            "score_nats": self.best_score,
            "max_parents": self.max_parents,
            "dag": self.best.to_json(),
        }


def _compress_array(masks: np.ndarray, node: int) -> np.ndarray:
    low = (1 << node) - 1
    return (masks & low) | ((masks >> (node + 1)) << node)


def all_dag_scores(table: LocalScoreTable) -> tuple[np.ndarray, np.ndarray]:
    """Total score of every DAG on ``table.m`` nodes.

    Returns ``(masks, totals)`` where ``masks`` is the enumeration order of
    :func:`gaussmdl.core.dag_masks`.  DAGs using parent sets outside the
    table score ``+inf``.  Totals are accumulated in node order.
    """
    if table.m > EXHAUSTIVE_LIMIT:
        raise TooLarge(f"exhaustive scoring is guarded to m <= {EXHAUSTIVE_LIMIT}")
    masks = dag_masks(table.m)
    totals = np.zeros(len(masks))
    for v in range(table.m):
        totals += table.row(v)[_compress_array(masks[:, v], v)]
    return masks, totals


def _pick(masks: np.ndarray, totals: np.ndarray) -> int:
    best = totals.min()
    cand = np.flatnonzero(totals == best)
    if len(cand) > 1:
        edges = popcounts(masks[cand]).sum(axis=1)
        cand = cand[edges == edges.min()]
    if len(cand) > 1:
        cand = [min(cand, key=lambda i: tuple(masks[i]))]
    return int(cand[0])


def learn_exhaustive(table: LocalScoreTable) -> SearchResult:
    """Global optimum by scoring every DAG on ``table.m`` nodes."""
    masks, totals = all_dag_scores(table)
    i = _pick(masks, totals)
    dag = Dag(table.m, masks[i].tolist())
    return SearchResult(dag, table.dag_score(dag), table.metric, table.m, table.max_parents)


def best_parent_sets(table: LocalScoreTable, node: int):
    """For every candidate set ``C`` (compressed), the best parent set within ``C``.

    Returns arrays ``(score, mask, size)`` indexed by compressed ``C``; ``mask``
    is a full-width parent mask.
    """
    m = table.m
    width = 1 << (m - 1)
    full = compress_masks(m, node)
    score = table.row(node).copy()
    mask = full.copy()
    size = popcounts(full)
    subsets = np.arange(width)
    for b in range(m - 1):
        idx = np.flatnonzero(subsets & (1 << b))
        src = idx ^ (1 << b)
        cs, cm, cp = score[src], mask[src], size[src]
        s, mk, p = score[idx], mask[idx], size[idx]
        better = (cs < s) | ((cs == s) & ((cp < p) | ((cp == p) & (cm < mk))))
        hit = idx[better]
        score[hit] = cs[better]
        mask[hit] = cm[better]
        size[hit] = cp[better]
    return score, mask, size


def learn_dp(table: LocalScoreTable) -> SearchResult:
    """Optimal network by dynamic programming over node subsets.

    For each subset ``W`` the best network on ``W`` is the best choice of a
    sink ``s`` in ``W`` with its best parents inside ``W - {s}``, on top of
    the best network on ``W - {s}``.  Time and memory are ``O(m 2^m)``.
    """
    m = table.m
    if m > DP_LIMIT:
        raise TooLarge(f"dynamic programming search is guarded to m <= {DP_LIMIT}")
    if m == 0:
        return SearchResult(Dag.empty(0), 0.0, table.metric, 0, table.max_parents)
    bp = [best_parent_sets(table, v) for v in range(m)]

    n_sub = 1 << m
    net_score = np.full(n_sub, np.inf)
    net_edges = np.zeros(n_sub, dtype=np.int64)
    sink = np.full(n_sub, -1, dtype=np.int64)
    net_score[0] = 0.0

    subsets = np.arange(n_sub, dtype=np.int64)
    layer_of = popcounts(subsets)

    def assignment(W: int) -> dict[int, int]:
        out = {}
        while W:
            s = int(sink[W])
            rest = W ^ (1 << s)
            low = (1 << s) - 1
            out[s] = int(bp[s][1][(rest & low) | ((rest >> (s + 1)) << s)])
            W = rest
        return out

    for size in range(1, m + 1):
        Ws = subsets[layer_of == size]
        cand_score = np.full((len(Ws), m), np.inf)
        cand_edges = np.zeros((len(Ws), m), dtype=np.int64)
        for s in range(m):
            has = (Ws >> s) & 1 == 1
            rest = Ws[has] ^ (1 << s)
            c = _compress_array(rest, s)
            cand_score[has, s] = bp[s][0][c] + net_score[rest]
            cand_edges[has, s] = bp[s][2][c] + net_edges[rest]
        best = cand_score.min(axis=1)
        tied = cand_score == best[:, None]
        edges = np.where(tied, cand_edges, np.iinfo(np.int64).max)
        min_edges = edges.min(axis=1)
        tied &= cand_edges == min_edges[:, None]
        choice = np.argmax(tied, axis=1)
        for row in np.flatnonzero(tied.sum(axis=1) > 1):
            W = int(Ws[row])
            options = []
            for s in np.flatnonzero(tied[row]):
                s = int(s)
                rest = W ^ (1 << s)
                parents = assignment(rest)
                low = (1 << s) - 1
                parents[s] = int(bp[s][1][(rest & low) | ((rest >> (s + 1)) << s)])
                options.append((tuple(parents[v] for v in sorted(parents)), s))
            choice[row] = min(options)[1]
        net_score[Ws] = best
        net_edges[Ws] = cand_edges[np.arange(len(Ws)), choice]
        sink[Ws] = choice

    parents = assignment(n_sub - 1)
    dag = Dag(m, [parents[v] for v in range(m)])
    validate_acyclic(dag)
    return SearchResult(dag, table.dag_score(dag), table.metric, m, table.max_parents)


def _reference_total(reference: Dag, table: LocalScoreTable, rtol: float):
    if table.m > RANK_LIMIT:
        raise TooLarge(f"rank computation is guarded to m <= {RANK_LIMIT}")
    if reference.m != table.m:
        raise ValueError(f"reference has {reference.m} nodes, table has {table.m}")
    terms = [table[i, mask] for i, mask in enumerate(reference.parents)]
    total = 0.0
    for t in terms:
        total += t
    # Score-equivalent structures differ only by summation round-off.
    return total, rtol * sum(abs(t) for t in terms)


def rank_of(reference: Dag, table: LocalScoreTable, rtol: float = TIE_RTOL) -> int:
    """1 + the number of DAGs scoring strictly lower than ``reference``.

    Totals within ``rtol`` (relative to the summed magnitude of the
    reference's local scores) count as ties and do not raise the rank.
    """
    ref, tol = _reference_total(reference, table, rtol)
    _, totals = all_dag_scores(table)
    return 1 + int(np.count_nonzero(totals < ref - tol))


def is_unique_optimum(reference: Dag, table: LocalScoreTable, rtol: float = TIE_RTOL) -> bool:
    """True if every other DAG scores strictly (beyond round-off) above ``reference``."""
    ref, tol = _reference_total(reference, table, rtol)
    _, totals = all_dag_scores(table)
    return int(np.count_nonzero(totals <= ref + tol)) == 1


def learn(table: LocalScoreTable, algorithm: str = "dp") -> SearchResult:
    if algorithm == "dp":
        return learn_dp(table)
    if algorithm == "exhaustive":
        return learn_exhaustive(table)
    raise ValueError(f"unknown algorithm {algorithm!r}")
