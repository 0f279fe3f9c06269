import numpy as np
import pytest

from treevq import autodiff as ad
from treevq.graph import Graph


def finite_difference_check(build_fn, tensors, eps=1e-6, rtol=1e-5, atol=1e-7):
    """Compare tape gradients against central finite differences.

    ``build_fn`` must rebuild the scalar loss from the current ``.data`` of
    the given tensors on every call; the numeric probe perturbs entries in
    place and re-evaluates outside any tape.
    """
    with ad.GradTape() as tape:
        loss = build_fn()
    tape.backward(loss)
    for t in tensors:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        num = numeric.reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + eps
            up = build_fn().item()
            flat[i] = saved - eps
            down = build_fn().item()
            flat[i] = saved
            num[i] = (up - down) / (2.0 * eps)
        np.testing.assert_allclose(analytic, numeric, rtol=rtol, atol=atol)


def random_connected_graph(n, rng, extra_edge_prob=0.15, feature_dim=4,
                           edge_features=False):
    """Random spanning tree plus extra edges; always connected."""
    perm = rng.permutation(n)
    edges = [(int(perm[i - 1]), int(perm[i])) for i in range(1, n)]
    have = {(min(u, v), max(u, v)) for u, v in edges}
    for u in range(n):
        for v in range(u + 1, n):
            if (u, v) not in have and rng.random() < extra_edge_prob:
                edges.append((u, v))
                have.add((u, v))
    efeat = rng.uniform(size=(len(edges), feature_dim)) if edge_features else None
    return Graph(n, edges, rng.uniform(size=(n, feature_dim)),
                 edge_features=efeat)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def triangle_graph():
    return Graph(3, [(0, 1), (1, 2), (0, 2)],
                 np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]]))
