"""Stability bound checker: constants, trivial cases, random sweep."""

import numpy as np
import pytest

from treevq.bound import check_distance_bound, spectral_norm
from treevq.encoder import TreeEncoder
from treevq.errors import ConfigError

from conftest import random_connected_graph


def _random_encoder(rng, feature_dim=4, hidden=8, layers=2):
    enc = TreeEncoder(feature_dim, hidden_dim=hidden, layers=layers,
                      normalize=False, final_activation=True,
                      rng=np.random.default_rng(0))
    for layer in enc.layers:
        layer.W1.data = rng.uniform(-1.0, 1.0, size=layer.W1.shape)
        layer.W2.data = rng.uniform(-1.0, 1.0, size=layer.W2.shape)
    return enc


class TestSpectralNorm:
    def test_matches_numpy(self, rng):
        for shape in ((4, 4), (3, 7), (9, 2)):
            a = rng.normal(size=shape)
            assert spectral_norm(a) == pytest.approx(np.linalg.norm(a, 2),
                                                     rel=1e-9)

    def test_zero_matrix(self):
        assert spectral_norm(np.zeros((3, 3))) == 0.0


class TestBound:
    def test_same_node_lhs_zero(self, rng):
        g = random_connected_graph(8, rng)
        rep = check_distance_bound(_random_encoder(rng), g, 3, 3)
        assert rep.lhs == 0.0 and rep.holds

    def test_zero_weights_both_sides_zero(self, rng):
        g = random_connected_graph(8, rng)
        enc = _random_encoder(rng)
        for layer in enc.layers:
            layer.W1.data[:] = 0.0
            layer.W2.data[:] = 0.0
        rep = check_distance_bound(enc, g, 0, 5)
        assert rep.lhs == 0.0 and rep.rhs == 0.0 and rep.holds

    def test_normalization_rejected(self, rng):
        g = random_connected_graph(6, rng)
        enc = TreeEncoder(4, hidden_dim=8, normalize=True)
        with pytest.raises(ConfigError, match="normaliz"):
            check_distance_bound(enc, g, 0, 1)

    def test_constants_assembled_per_definition(self, rng):
        g = random_connected_graph(10, rng)
        enc = _random_encoder(rng)
        rep = check_distance_bound(enc, g, 0, 1)
        assert rep.c1 == rep.b_w1 and rep.c2 == rep.b_w2
        assert rep.b_x == pytest.approx(
            np.linalg.norm(g.node_features, axis=1).max())
        assert rep.max_degree == int(g.degrees().max())
        expected_terms = [rep.c2 ** l * rep.max_degree ** l for l in (1, 2)]
        np.testing.assert_allclose(rep.layer_terms, expected_terms)
        np.testing.assert_allclose(
            rep.rhs, 2.0 * rep.b_x * (rep.c1 + sum(expected_terms)))

    def test_random_sweep_never_violates(self, rng):
        # the inequality itself is the oracle
        for trial in range(30):
            g = random_connected_graph(15, rng)
            enc = _random_encoder(rng)
            for v1, v2 in rng.integers(0, 15, size=(5, 2)):
                rep = check_distance_bound(enc, g, int(v1), int(v2))
                assert rep.holds, f"violated at trial {trial}"
