"""Synthetic family construction and its kernel-ordering contract."""

import numpy as np
import pytest

from treevq.errors import ConfigError
from treevq.kernels import (GraphletConfig, WlConfig, graphlet_similarity,
                            wl_subtree_similarity)
from treevq.synthetic import (SyntheticFamily, build_synthetic,
                              make_community_graph)


def _connected(graph):
    adj = graph.neighbors()
    seen = {0}
    stack = [0]
    while stack:
        v = stack.pop()
        for u in adj[v]:
            if u not in seen:
                seen.add(u)
                stack.append(u)
    return len(seen) == graph.num_nodes


class TestConstruction:
    def test_deterministic_given_family_and_seed(self):
        a = build_synthetic(SyntheticFamily("g1", 3), 4, np.random.default_rng(7))
        b = build_synthetic(SyntheticFamily("g1", 3), 4, np.random.default_rng(7))
        assert a.edges == b.edges
        np.testing.assert_array_equal(a.node_features, b.node_features)

    def test_topology_independent_of_rng(self):
        a = build_synthetic(SyntheticFamily("g2", 4), 4, np.random.default_rng(1))
        b = build_synthetic(SyntheticFamily("g2", 4), 4, np.random.default_rng(2))
        assert a.edges == b.edges

    @pytest.mark.parametrize("family", ["g1", "g2", "g3"])
    @pytest.mark.parametrize("blocks", [1, 2, 5])
    def test_connected_and_linear_size(self, family, blocks):
        g = build_synthetic(SyntheticFamily(family, blocks), 4,
                            np.random.default_rng(0))
        assert g.num_nodes == 5 * blocks
        assert _connected(g)

    def test_default_feature_dim_is_four(self):
        g = build_synthetic(SyntheticFamily("g1", 2), rng=np.random.default_rng(0))
        assert g.feature_dim == 4
        assert g.node_features.min() >= 0.0 and g.node_features.max() < 1.0

    def test_invalid_family_and_blocks(self):
        with pytest.raises(ConfigError):
            SyntheticFamily("g9", 2)
        with pytest.raises(ConfigError):
            SyntheticFamily("g1", 0)


class TestKernelOrdering:
    """g3 shares trees with g1, g2 shares motifs with g1, at every size."""

    @pytest.mark.parametrize("num_blocks", range(2, 11))
    def test_ordering_holds(self, num_blocks):
        rng = np.random.default_rng(0)
        g1 = build_synthetic(SyntheticFamily("g1", num_blocks), 4, rng)
        g2 = build_synthetic(SyntheticFamily("g2", num_blocks), 4, rng)
        g3 = build_synthetic(SyntheticFamily("g3", num_blocks), 4, rng)
        wl = WlConfig(iterations=2, feature_buckets=1)
        gl = GraphletConfig(k=4, exact=True)
        assert wl_subtree_similarity(g1, g3, wl) > wl_subtree_similarity(g1, g2, wl)
        assert graphlet_similarity(g1, g2, gl) > graphlet_similarity(g1, g3, gl)


class TestCommunityGraph:
    def test_labels_and_classes(self):
        g = make_community_graph(num_classes=3, nodes_per_class=10,
                                 rng=np.random.default_rng(0))
        assert g.num_nodes == 30 and g.num_classes == 3
        assert g.node_labels == [i // 10 for i in range(30)]

    def test_homophily(self):
        g = make_community_graph(num_classes=2, nodes_per_class=30,
                                 intra_p=0.3, inter_p=0.01,
                                 rng=np.random.default_rng(1))
        intra = sum(g.node_labels[u] == g.node_labels[v] for u, v in g.edges)
        assert intra / len(g.edges) > 0.8

    def test_feature_shift_separates_classes(self):
        g = make_community_graph(num_classes=2, nodes_per_class=50,
                                 feature_dim=4, feature_shift=0.8,
                                 rng=np.random.default_rng(2))
        f = g.node_features
        mean0 = f[:50, 0].mean()
        mean1 = f[50:, 0].mean()
        assert mean0 - mean1 > 0.5
