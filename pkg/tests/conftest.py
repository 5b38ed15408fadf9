import numpy as np
import pytest
from hypothesis import strategies as st

from gaussmdl.core import Dag
from gaussmdl.scoring import LocalScoreTable, popcounts


def random_table(m, rng, max_parents=None, integer=False):
    """Complete local score table with random entries."""
    if max_parents is None:
        max_parents = m - 1
    width = 1 << (m - 1)
    if integer:
        scores = rng.integers(0, 4, size=(m, width)).astype(float)
    else:
        scores = rng.normal(size=(m, width))
    scores[:, popcounts(np.arange(width)) > max_parents] = np.nan
    return LocalScoreTable(None, m, max_parents, scores)


@st.composite
def dags(draw, min_nodes=1, max_nodes=6, m=None):
    """Random DAG: a random order plus a random subset of forward edges."""
    if m is None:
        m = draw(st.integers(min_nodes, max_nodes))
    order = draw(st.permutations(range(m)))
    parents = [0] * m
    for a in range(m):
        for b in range(a + 1, m):
            if draw(st.booleans()):
                parents[order[b]] |= 1 << order[a]
    return Dag(m, parents)


@st.composite
def dag_pairs(draw, max_nodes=6):
    m = draw(st.integers(1, max_nodes))
    return draw(dags(m=m)), draw(dags(m=m))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
