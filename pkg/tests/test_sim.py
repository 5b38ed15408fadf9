import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from gaussmdl.core import Dag, TooLarge, count_dags, validate_acyclic
from gaussmdl.sim import (GaussianParams, InvalidSparsity, Seed, load_params, sample_data,
                          sample_params, sample_sparse_dag, sample_uniform_dag, save_params)


def implied_cov_check(dag, params, n, seed, z=5.0):
    """Entrywise |emp - implied| <= z standard errors for Gaussian data."""
    x = sample_data(dag, params, n, seed).values
    emp = np.cov(x, rowvar=False, bias=True)
    sigma = params.implied_covariance()
    d = np.diag(sigma)
    se = np.sqrt((np.outer(d, d) + sigma ** 2) / n)
    return np.abs(emp - sigma) / se


def test_seed_streams():
    a, b = Seed(1).child("x", 3), Seed(1).child("x", 3)
    assert a == b
    assert a.generator().random() == b.generator().random()
    assert Seed(1).child("x", 4).generator().random() != a.generator().random()
    with pytest.raises(ValueError):
        Seed(-1)


class TestUniformDag:
    def test_single_node(self):
        assert sample_uniform_dag(1, 0) == Dag.empty(1)

    def test_deterministic(self):
        assert sample_uniform_dag(5, Seed(9)) == sample_uniform_dag(5, Seed(9))

    def test_guard(self):
        with pytest.raises(TooLarge):
            sample_uniform_dag(6, 0)

    def test_chi_square(self):
        draws = 54300
        counts = Counter(sample_uniform_dag(4, Seed(2).child(i)).parents for i in range(draws))
        assert len(counts) == 543
        freq = np.array(list(counts.values()))
        assert stats.chisquare(freq).pvalue > 0.001


class TestSparseDag:
    def test_complete(self):
        d = sample_sparse_dag(6, 5, Seed(3))
        assert d.edge_count == 15

    def test_mean_edges(self):
        edges = np.array([sample_sparse_dag(10, 2, Seed(4).child(i)).edge_count
                          for i in range(10000)])
        p = 2 / 9
        assert math.comb(10, 2) * p == pytest.approx(10.0)
        se = math.sqrt(45 * p * (1 - p) / 10000)
        assert abs(edges.mean() - 10.0) < 3 * se

    @pytest.mark.parametrize("nn", [0, -1, 10])
    def test_invalid(self, nn):
        with pytest.raises(InvalidSparsity):
            sample_sparse_dag(10, nn, 0)

    @settings(max_examples=50, deadline=None)
    @given(m=st.integers(2, 15), frac=st.floats(0.01, 1.0), seed=st.integers(0, 2 ** 32))
    def test_acyclic_and_deterministic(self, m, frac, seed):
        d = sample_sparse_dag(m, frac * (m - 1), Seed(seed))
        validate_acyclic(d)
        assert d == sample_sparse_dag(m, frac * (m - 1), Seed(seed))


class TestParams:
    def test_support_and_keys(self):
        dag = sample_sparse_dag(8, 3, Seed(5))
        p = sample_params(dag, Seed(6))
        p.check(dag)
        values = np.concatenate([p.mu, p.tau, list(p.b.values())])
        assert np.all((values >= 0.1) & (values <= 1.0))

    def test_empty_dag(self):
        p = sample_params(Dag.empty(3), Seed(7))
        assert p.b == {} and len(p.mu) == 3 and len(p.tau) == 3

    def test_uniform_mean(self):
        dag = Dag.empty(50)
        values = np.concatenate([sample_params(dag, Seed(8).child(i)).mu for i in range(2000)])
        assert values.size == 10 ** 5
        se = math.sqrt(0.9 ** 2 / 12 / values.size)
        assert abs(values.mean() - 0.55) < 3 * se

    def test_random_signs(self):
        dag = sample_sparse_dag(10, 9, Seed(1))
        p = sample_params(dag, Seed(2), random_signs=True)
        w = np.array(list(p.b.values()))
        assert np.any(w < 0) and np.all((np.abs(w) >= 0.1) & (np.abs(w) <= 1))

    def test_json_round_trip(self, tmp_path):
        dag = sample_sparse_dag(5, 2, Seed(1))
        p = sample_params(dag, Seed(2))
        save_params(p, tmp_path / "p.json")
        q = load_params(tmp_path / "p.json")
        assert np.array_equal(p.mu, q.mu) and np.array_equal(p.tau, q.tau) and p.b == q.b

    def test_rejects_nonpositive_tau(self):
        with pytest.raises(ValueError):
            GaussianParams(np.zeros(1), {}, np.zeros(1))


class TestData:
    def test_single_node_moments(self):
        p = GaussianParams(np.array([0.5]), {}, np.array([0.25]))
        x = sample_data(Dag.empty(1), p, 10 ** 5, Seed(10)).values[:, 0]
        n = x.size
        assert abs(x.mean() - 0.5) < 4 * math.sqrt(0.25 / n)
        # Var of the sample variance for Gaussian data is 2 sigma^4 / n.
        assert abs(x.var() - 0.25) < 4 * math.sqrt(2 * 0.25 ** 2 / n)

    def test_precision_reading(self):
        p = GaussianParams(np.array([0.0]), {}, np.array([0.25]))
        x = sample_data(Dag.empty(1), p, 10 ** 5, Seed(10), precision_noise=True).values[:, 0]
        assert x.var() == pytest.approx(4.0, rel=0.03)

    def test_two_node_covariance(self):
        dag = Dag.from_edges(2, [(0, 1)])
        p = GaussianParams(np.array([0.3, 0.6]), {(1, 0): 0.7}, np.array([0.5, 0.2]))
        x = sample_data(dag, p, 10 ** 5, Seed(11)).values
        emp = np.cov(x, rowvar=False)
        var0 = 0.5
        assert emp[0, 1] == pytest.approx(0.7 * var0, abs=5 * math.sqrt((var0 * (0.49 * 0.5 + 0.2) + 0.35 ** 2) / 1e5))
        assert p.implied_covariance()[0, 1] == pytest.approx(0.7 * var0)

    def test_implied_moments(self):
        for i in range(3):
            dag = sample_sparse_dag(5, 2, Seed(12).child(i))
            params = sample_params(dag, Seed(13).child(i))
            assert np.all(implied_cov_check(dag, params, 10 ** 5, Seed(14).child(i)) < 5)

    def test_means(self):
        dag = sample_sparse_dag(4, 2, Seed(15))
        params = sample_params(dag, Seed(16))
        x = sample_data(dag, params, 50000, Seed(17)).values
        se = np.sqrt(np.diag(params.implied_covariance()) / 50000)
        assert np.all(np.abs(x.mean(0) - params.mu) < 5 * se)

    def test_bit_identical(self):
        dag = sample_sparse_dag(6, 3, Seed(1))
        params = sample_params(dag, Seed(2))
        a = sample_data(dag, params, 100, Seed(3)).values
        b = sample_data(dag, params, 100, Seed(3)).values
        assert a.tobytes() == b.tobytes()

    def test_rejects_cycle(self):
        bad = Dag(2, [0b10, 0b01], check=False)
        with pytest.raises(ValueError):
            sample_data(bad, GaussianParams(np.zeros(2), {(0, 1): 1.0, (1, 0): 1.0}, np.ones(2)),
                        10, 0)
