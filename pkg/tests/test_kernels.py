"""Kernel oracles: WL against string-label enumeration, graphlets against
all-subsets enumeration, sampling against exact frequencies."""

import itertools
from collections import Counter

import numpy as np
import pytest

from treevq.errors import ConfigError, GraphError
from treevq.graph import Graph
from treevq.kernels import (GraphletConfig, WlConfig, _enumerate_connected_subsets,
                            _is_connected, connected_graphlet_catalog,
                            graphlet_frequencies, graphlet_similarity,
                            wl_subtree_similarity)

from conftest import random_connected_graph


# ----------------------------------------------------------------------
# independent WL oracle: canonical string labels, explicit multisets


def wl_oracle_similarity(g1: Graph, g2: Graph, h: int) -> float:
    def histograms(g):
        labels = ["*"] * g.num_nodes
        adj = g.neighbors()
        hists = [Counter(labels)]
        for _ in range(h):
            labels = [
                "({}|{})".format(labels[v],
                                 ",".join(sorted(labels[u] for u in adj[v])))
                for v in range(g.num_nodes)
            ]
            hists.append(Counter(labels))
        return hists

    h1, h2 = histograms(g1), histograms(g2)

    def dot(a, b):
        return float(sum(c * b[key] for key, c in a.items()))

    k12 = sum(dot(a, b) for a, b in zip(h1, h2))
    k11 = sum(dot(a, a) for a in h1)
    k22 = sum(dot(a, a) for a in h2)
    return k12 / np.sqrt(k11 * k22)


def all_connected_graphs_up_to_five():
    """One representative per isomorphism class, sizes 1 through 5."""
    graphs = [Graph(1, [], np.zeros((1, 1))),
              Graph(2, [(0, 1)], np.zeros((2, 1)))]
    for k in (3, 4, 5):
        for edges in connected_graphlet_catalog(k):
            graphs.append(Graph(k, sorted(edges), np.zeros((k, 1))))
    return graphs


class TestWlKernel:
    def test_self_similarity_is_one(self, rng):
        g = random_connected_graph(9, rng)
        for cfg in (WlConfig(0), WlConfig(2), WlConfig(2, feature_buckets=8)):
            assert wl_subtree_similarity(g, g, cfg) == pytest.approx(1.0)

    def test_h0_uniform_labels_equal_sizes(self, rng):
        g1 = random_connected_graph(6, rng)
        g2 = random_connected_graph(6, rng)
        cfg = WlConfig(iterations=0, feature_buckets=1)
        assert wl_subtree_similarity(g1, g2, cfg) == pytest.approx(1.0)

    def test_triangle_vs_path_matches_oracle(self):
        tri = Graph(3, [(0, 1), (1, 2), (0, 2)], np.zeros((3, 1)))
        path = Graph(3, [(0, 1), (1, 2)], np.zeros((3, 1)))
        got = wl_subtree_similarity(tri, path, WlConfig(1, feature_buckets=1))
        assert got == wl_oracle_similarity(tri, path, 1)

    @pytest.mark.parametrize("h", [1, 2])
    def test_exhaustive_small_graph_oracle(self, h):
        graphs = all_connected_graphs_up_to_five()
        cfg = WlConfig(iterations=h, feature_buckets=1)
        for i, a in enumerate(graphs):
            for b in graphs[i:]:
                assert wl_subtree_similarity(a, b, cfg) == \
                    wl_oracle_similarity(a, b, h)

    def test_isomorphism_invariance(self, rng):
        g = random_connected_graph(8, rng)
        perm = rng.permutation(8)
        relabeled = Graph(8, [(int(perm[u]), int(perm[v])) for u, v in g.edges],
                          g.node_features[np.argsort(perm)])
        cfg = WlConfig(iterations=2, feature_buckets=1)
        h = random_connected_graph(8, rng)
        assert wl_subtree_similarity(g, h, cfg) == \
            wl_subtree_similarity(relabeled, h, cfg)

    def test_redraws_average_and_seeded(self, rng):
        g1 = random_connected_graph(7, rng)
        g2 = random_connected_graph(7, rng)
        cfg = WlConfig(iterations=2, feature_buckets=4, redraws=20, seed=3)
        a = wl_subtree_similarity(g1, g2, cfg)
        b = wl_subtree_similarity(g1, g2, cfg)
        assert a == b
        assert 0.0 <= a <= 1.0

    def test_empty_graph_rejected(self):
        g = Graph(0, [], np.zeros((0, 1)))
        with pytest.raises(GraphError):
            wl_subtree_similarity(g, g, WlConfig())


class TestGraphletCatalog:
    def test_connected_type_counts(self):
        assert len(connected_graphlet_catalog(3)) == 2
        assert len(connected_graphlet_catalog(4)) == 6
        assert len(connected_graphlet_catalog(5)) == 21

    def test_esu_matches_brute_force(self, rng):
        for trial in range(10):
            n = int(rng.integers(6, 12))
            g = random_connected_graph(n, rng, extra_edge_prob=0.2)
            eset = g.edge_set()
            for k in (3, 4, 5):
                esu = {frozenset(s)
                       for s in _enumerate_connected_subsets(g, k)}
                brute = set()
                for sub in itertools.combinations(range(n), k):
                    induced = [(i, j) for i, j in
                               itertools.combinations(range(k), 2)
                               if (min(sub[i], sub[j]),
                                   max(sub[i], sub[j])) in eset]
                    if _is_connected(k, induced):
                        brute.add(frozenset(sub))
                assert esu == brute


class TestGraphletKernel:
    def test_k4_triples_are_all_triangles(self):
        k4 = Graph(4, list(itertools.combinations(range(4), 2)),
                   np.zeros((4, 1)))
        freq = graphlet_frequencies(k4, GraphletConfig(k=3, exact=True))
        # catalog order: path first, triangle second
        np.testing.assert_array_equal(freq, [0.0, 1.0])

    def test_self_similarity_exact_mode(self, rng):
        g = random_connected_graph(10, rng, extra_edge_prob=0.3)
        assert graphlet_similarity(g, g, GraphletConfig(k=4, exact=True)) == \
            pytest.approx(1.0)

    def test_exact_mode_isomorphism_invariance(self, rng):
        g = random_connected_graph(9, rng, extra_edge_prob=0.3)
        perm = rng.permutation(9)
        relabeled = Graph(9, [(int(perm[u]), int(perm[v])) for u, v in g.edges],
                          g.node_features[np.argsort(perm)])
        cfg = GraphletConfig(k=4, exact=True)
        np.testing.assert_array_equal(graphlet_frequencies(g, cfg),
                                      graphlet_frequencies(relabeled, cfg))

    def test_sampling_matches_exact_within_tolerance(self, rng):
        hits = 0
        trials = 12
        for seed in range(trials):
            g = random_connected_graph(10, np.random.default_rng(seed),
                                       extra_edge_prob=0.35)
            exact = graphlet_frequencies(g, GraphletConfig(k=3, exact=True))
            sampled = graphlet_frequencies(
                g, GraphletConfig(k=3, samples=100_000, seed=seed))
            hits += np.abs(exact - sampled).max() <= 0.02
        assert hits / trials >= 0.95

    def test_sampling_invariance_in_distribution(self, rng):
        # index sampling cannot be realization-identical under relabeling;
        # distributions must still agree within sampling error
        g = random_connected_graph(10, rng, extra_edge_prob=0.35)
        perm = rng.permutation(10)
        relabeled = Graph(10, [(int(perm[u]), int(perm[v])) for u, v in g.edges],
                          g.node_features[np.argsort(perm)])
        cfg = GraphletConfig(k=3, samples=100_000, seed=11)
        a = graphlet_frequencies(g, cfg)
        b = graphlet_frequencies(relabeled, cfg)
        assert np.abs(a - b).max() <= 0.02

    def test_graph_smaller_than_k_rejected(self):
        g = Graph(3, [(0, 1), (1, 2)], np.zeros((3, 1)))
        with pytest.raises(GraphError):
            graphlet_frequencies(g, GraphletConfig(k=4, exact=True))

    def test_sparse_sampling_gives_up_with_clear_error(self):
        # two far-apart stars: no connected 5-subset is ever sampled in
        # reasonable time on this nearly disconnected layout
        edges = [(0, i) for i in range(1, 5)]
        g = Graph(40, edges, np.zeros((40, 1)))
        with pytest.raises(GraphError, match="exact mode"):
            graphlet_frequencies(g, GraphletConfig(k=5, samples=1000, seed=0))

    def test_sampling_seeded_determinism(self, rng):
        g = random_connected_graph(12, rng, extra_edge_prob=0.3)
        cfg = GraphletConfig(k=4, samples=5000, seed=9)
        np.testing.assert_array_equal(graphlet_frequencies(g, cfg),
                                      graphlet_frequencies(g, cfg))

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            GraphletConfig(k=6)
        with pytest.raises(ConfigError):
            GraphletConfig(samples=0)
