import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from accnet.community import (
    align_communities,
    eval_modularity,
    louvain,
    modularity_matrix,
    threshold_sweep,
)
from accnet.errors import UndefinedModularityError, ValidationError

from conftest import graph_from_weights, two_cliques
from oracles import (
    adjusted_rand,
    brute_force_modularity,
    modularity_delta,
    planted_blocks,
    random_weighted_graph,
    set_partitions,
)


def test_set_partitions_count_bell_numbers():
    assert [sum(1 for _ in set_partitions(n)) for n in range(1, 8)] == [1, 2, 5, 15, 52, 203, 877]


class TestModularity:
    def test_whole_graph_is_zero(self):
        w = random_weighted_graph(np.random.default_rng(0), 10)
        assert abs(modularity_matrix(w, np.zeros(10))) <= 1e-12

    def test_two_cliques(self, clique_graph):
        labels = {n: int(i >= 4) for i, n in enumerate(clique_graph.nodes)}
        assert eval_modularity(clique_graph, labels) == pytest.approx(0.5, abs=1e-12)

    def test_singletons_negative(self):
        w = random_weighted_graph(np.random.default_rng(1), 6, density=1.0)
        assert modularity_matrix(w, np.arange(6)) < 0

    def test_zero_weight(self):
        with pytest.raises(UndefinedModularityError):
            modularity_matrix(np.zeros((3, 3)), [0, 1, 2])

    def test_missing_nodes(self, clique_graph):
        with pytest.raises(ValidationError):
            eval_modularity(clique_graph, {"n0": 0})

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000), st.integers(2, 9))
    def test_matches_delta_oracle_and_bounded(self, seed, n):
        rng = np.random.default_rng(seed)
        w = random_weighted_graph(rng, n)
        labels = rng.integers(0, 3, n)
        q = modularity_matrix(w, labels)
        assert q == pytest.approx(modularity_delta(w, labels), abs=1e-12)
        assert q <= 1.0

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_relabel_invariance(self, seed):
        rng = np.random.default_rng(seed)
        w = random_weighted_graph(rng, 7)
        labels = rng.integers(0, 4, 7)
        perm = rng.permutation(4) + 10
        assert modularity_matrix(w, perm[labels]) == pytest.approx(modularity_matrix(w, labels), abs=1e-12)


class TestLouvain:
    def test_two_cliques(self, clique_graph):
        part = louvain(clique_graph, 0)
        assert part.modularity == pytest.approx(0.5, abs=1e-12)
        assert part.labels(clique_graph.nodes).tolist() == [0, 0, 0, 0, 1, 1, 1, 1]

    def test_complete_graph(self):
        g = graph_from_weights(np.ones((6, 6)) - np.eye(6))
        part = louvain(g, 3)
        assert part.modularity >= -1e-12

    def test_planted_three_blocks(self):
        w, truth = planted_blocks([7, 8, 9])
        perm = np.random.default_rng(0).permutation(len(truth))
        g = graph_from_weights(w[np.ix_(perm, perm)])
        part = louvain(g, 1)
        assert adjusted_rand(part.labels(g.nodes), truth[perm]) >= 0.99

    def test_partition_invariants(self):
        w = random_weighted_graph(np.random.default_rng(5), 12)
        g = graph_from_weights(w)
        part = louvain(g, 5)
        assert set(part.assignment) == set(g.nodes)
        assert sorted(set(part.assignment.values())) == list(range(part.n_communities))
        assert part.modularity == pytest.approx(eval_modularity(g, part.assignment), abs=1e-12)
        assert part.modularity >= modularity_matrix(w, np.arange(12))

    def test_deterministic_given_seed(self):
        g = graph_from_weights(random_weighted_graph(np.random.default_rng(6), 15))
        assert louvain(g, 42).assignment == louvain(g, 42).assignment

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000), st.integers(2, 7))
    def test_never_beats_brute_force(self, seed, n):
        w = random_weighted_graph(np.random.default_rng(seed), n)
        best, _ = brute_force_modularity(w)
        q = louvain(graph_from_weights(w), seed).modularity
        assert q <= best + 1e-12

    def test_bridged_cliques_reach_optimum(self):
        w = two_cliques(bridge=0.1)
        best, _ = brute_force_modularity(w)
        assert louvain(graph_from_weights(w), 0).modularity == pytest.approx(best, abs=1e-12)

    def test_zero_weight(self):
        with pytest.raises(UndefinedModularityError):
            louvain(graph_from_weights(np.zeros((3, 3))))


class TestSweep:
    def test_two_cliques_stable_below_clique_weight(self):
        g = graph_from_weights(two_cliques(weight=0.6, bridge=0.2))
        results = threshold_sweep(g, [0.25, 0.4, 0.55])
        assert [r.partition.modularity for r in results] == pytest.approx([0.5] * 3, abs=1e-12)

    def test_isolating_threshold_flags_fragmentation(self, caplog):
        g = graph_from_weights(two_cliques(weight=0.6))
        with caplog.at_level(logging.WARNING):
            (r,) = threshold_sweep(g, [0.9])
        assert r.fragmented
        assert math.isnan(r.partition.modularity)
        assert r.partition.n_communities == g.n_nodes

    def test_planted_band(self):
        w, _ = planted_blocks([6, 6, 6], within=0.6, between=0.2)
        g = graph_from_weights(w)
        results = threshold_sweep(g, [0.35, 0.4, 0.45, 0.5])
        assert len({tuple(sorted(r.partition.assignment.items())) for r in results}) == 1

    def test_ascending_required(self, clique_graph):
        with pytest.raises(ValidationError):
            threshold_sweep(clique_graph, [0.5, 0.4])


class TestAlign:
    def test_relabels_to_best_overlap(self):
        ref = {"a": 0, "b": 0, "c": 1, "d": 1}
        cur = {"a": 1, "b": 1, "c": 0, "d": 0}
        out, nxt = align_communities(ref, cur, 2)
        assert out == ref and nxt == 2

    def test_new_community_gets_fresh_id(self):
        ref = {"a": 0, "b": 0}
        cur = {"a": 0, "b": 0, "x": 1, "y": 1}
        out, nxt = align_communities(ref, cur, 5)
        assert out["x"] == out["y"] == 5 and out["a"] == 0 and nxt == 6
