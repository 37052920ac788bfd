import logging
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from accnet.errors import UndefinedSimilarityError, ValidationError
from accnet.features import FeatureMatrix
from accnet.simgraph import (
    build_graph,
    cosine_similarity,
    metric_weight,
    prune,
    read_graph,
    significance_test,
    upper_quantile,
    write_edge_list,
    write_node_list,
)

from conftest import graph_from_weights

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def matrix(rows, year=2005, ids=None):
    rows = np.asarray(rows, dtype=float)
    ids = ids or [f"b{i:02d}" for i in range(len(rows))]
    codes = [f"V{j}" for j in range(rows.shape[1])]
    return FeatureMatrix(year, ids, codes, rows, rows != 0, np.ones(len(rows)))


class TestCosine:
    def test_identity(self):
        assert cosine_similarity([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0)

    def test_orthogonal(self):
        assert cosine_similarity([1, 0], [0, 5]) == 0.0

    def test_45_degrees(self):
        assert cosine_similarity([1, 0], np.array([1, 1]) / math.sqrt(2)) == pytest.approx(
            math.sqrt(2) / 2, abs=1e-15
        )

    def test_zero_norm(self):
        with pytest.raises(UndefinedSimilarityError):
            cosine_similarity([0, 0], [1, 1])

    @given(st.lists(finite, min_size=2, max_size=6), st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
    def test_positive_rescaling(self, u, a, b):
        u = np.array(u)
        v = np.roll(u, 1) + 1.0
        if np.linalg.norm(u) < 1e-6 or np.linalg.norm(v) < 1e-6:
            return
        assert cosine_similarity(a * u, b * v) == pytest.approx(cosine_similarity(u, v), abs=1e-12)


class TestMetricWeight:
    @pytest.mark.parametrize("c, w", [(0.0, 0.0), (1.0, 1.0), (-1.0, 1.0)])
    def test_anchors(self, c, w):
        assert metric_weight(c) == w

    def test_closed_form(self):
        assert metric_weight(0.8) == pytest.approx(0.4, abs=1e-15)
        assert metric_weight(0.6) == pytest.approx(0.2, abs=1e-15)

    def test_domain(self):
        with pytest.raises(ValidationError):
            metric_weight(1.01)
        assert metric_weight(1.0 + 1e-12) == 1.0

    @given(st.floats(-1, 1))
    def test_even_and_bounded(self, c):
        w = metric_weight(c)
        assert w == metric_weight(-c)
        assert 0.0 <= w <= 1.0

    @given(st.floats(0, 1), st.floats(0, 1))
    def test_monotone_in_abs(self, a, b):
        a, b = sorted((a, b))
        assert metric_weight(a) <= metric_weight(b)

    def test_array(self):
        np.testing.assert_array_equal(metric_weight(np.array([0.0, 1.0])), [0.0, 1.0])


def test_upper_quantile_matches_numpy():
    rng = np.random.default_rng(0)
    for n in (100, 1000, 1001):
        x = rng.random(n)
        for q in (0.5, 0.95, 0.99):
            assert upper_quantile(x, q) == np.quantile(x, q)


class TestSignificance:
    def test_identical_vectors_significant(self):
        u = np.random.default_rng(1).standard_normal(50)
        assert significance_test(u, u, 1000, 0.05, rng_seed=7)

    def test_constant_vector_never_significant(self):
        u = np.random.default_rng(2).standard_normal(30)
        for seed in range(5):
            assert not significance_test(u, np.full(30, 3.0), 200, 0.05, rng_seed=seed)

    def test_reproducible(self):
        rng = np.random.default_rng(3)
        pairs = [(rng.standard_normal(10), rng.standard_normal(10)) for _ in range(30)]
        a = [significance_test(u, v, 200, 0.05, rng_seed=11) for u, v in pairs]
        b = [significance_test(u, v, 200, 0.05, rng_seed=11) for u, v in pairs]
        assert a == b

    def test_argument_domain(self):
        with pytest.raises(ValidationError):
            significance_test([1, 2], [2, 1], samples=50)
        with pytest.raises(ValidationError):
            significance_test([1, 2], [2, 1], alpha=1.0)


class TestBuildGraph:
    def test_identical_pair(self):
        g = build_graph(matrix([[1, 2, 3, 4, 5, 6, 7, 8], [1, 2, 3, 4, 5, 6, 7, 8]]), 200)
        assert g.n_edges == 1
        (edge,) = g.edges()
        assert edge[3] == 1.0 and edge[4]

    def test_edge_bound_symmetry_and_weights(self):
        rows = np.random.default_rng(4).standard_normal((12, 15))
        g = build_graph(matrix(rows), 200, rng_seed=1)
        assert g.n_edges <= 12 * 11 // 2
        assert (g.edge_mask == g.edge_mask.T).all() and not g.edge_mask.diagonal().any()
        c = g.cosine[g.edge_mask]
        np.testing.assert_allclose(g.weight[g.edge_mask], 1 - np.sqrt(1 - c**2), atol=1e-12)

    def test_verdicts_independent_of_bank_subset(self):
        rows = np.random.default_rng(5).standard_normal((6, 20))
        full = build_graph(matrix(rows), 200, rng_seed=9)
        sub = build_graph(matrix(rows[[1, 3, 4]], ids=["b01", "b03", "b04"]), 200, rng_seed=9)
        for i, a in enumerate(sub.nodes):
            for j, b in enumerate(sub.nodes):
                assert sub.edge_mask[i, j] == full.edge_mask[full.index(a), full.index(b)]

    def test_planted_two_groups(self):
        rng = np.random.default_rng(6)
        t = rng.standard_normal((2, 20))
        rows = np.vstack([t[k] + 0.1 * rng.standard_normal(20) for k in (0,) * 6 + (1,) * 6])
        g = build_graph(matrix(rows), 200)
        w = g.adjacency()
        within = np.concatenate([w[:6, :6][np.triu_indices(6, 1)], w[6:, 6:][np.triu_indices(6, 1)]])
        between = w[:6, 6:].ravel()
        assert within.mean() > between.mean()

    def test_keep_insignificant(self):
        rows = np.random.default_rng(8).standard_normal((5, 10))
        g = build_graph(matrix(rows), 200, keep_insignificant=True)
        assert g.n_edges == 10
        assert g.significant.sum() <= g.edge_mask.sum()


class TestPrune:
    def _graph(self):
        rng = np.random.default_rng(0)
        w = rng.uniform(0.01, 0.99, (8, 8))
        w = np.triu(w, 1)
        return graph_from_weights(w + w.T)

    def test_zero_is_identity(self):
        g = self._graph()
        assert (prune(g, 0.0).edge_mask == g.edge_mask).all()

    def test_one_empties_graph(self):
        assert prune(self._graph(), 1.0, warn=False).n_edges == 0

    def test_keeps_weights_at_or_above(self):
        p = prune(self._graph(), 0.4, warn=False)
        assert (p.weight[p.edge_mask] >= 0.4).all()

    @given(st.floats(0, 1), st.floats(0, 1))
    def test_composition(self, t1, t2):
        g = self._graph()
        twice = prune(prune(g, t1, warn=False), t2, warn=False)
        once = prune(g, max(t1, t2), warn=False)
        assert (twice.edge_mask == once.edge_mask).all()

    def test_fragmentation_warning(self, caplog):
        with caplog.at_level(logging.WARNING):
            prune(self._graph(), 0.9)
        assert "fragments" in caplog.text

    def test_domain(self):
        with pytest.raises(ValidationError):
            prune(self._graph(), 1.5)


def test_edge_list_round_trip(tmp_path):
    rows = np.random.default_rng(1).standard_normal((7, 9))
    g = build_graph(matrix(rows), 200)
    write_edge_list(g, tmp_path / "e.tsv")
    write_node_list(g, tmp_path / "n.tsv")
    header = (tmp_path / "e.tsv").read_text().splitlines()[0]
    assert header.split("\t") == ["src_bank", "dst_bank", "cosine", "weight", "significant"]
    back = read_graph(tmp_path / "e.tsv", tmp_path / "n.tsv", 2005)
    assert back.nodes == g.nodes
    assert (back.edge_mask == g.edge_mask).all()
    np.testing.assert_array_equal(back.weight[g.edge_mask], g.weight[g.edge_mask])
    np.testing.assert_array_equal(back.cosine[g.edge_mask], g.cosine[g.edge_mask])
