"""Graph autoencoder baseline: two GCN layers and an inner-product decoder.

Used by the synthetic transferability experiments as the self-supervised
model trained on the source graph. The encoder applies symmetrically
normalized propagation with self-loops; the decoder scores a node pair by
the inner product of its embeddings.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from . import autodiff as ad
from .encoder import glorot
from .errors import ShapeError
from .graph import Graph
from .optim import AdamW
from .transforms import negative_edge_sample


class GcnLayer:
    """Symmetric-normalized graph convolution with self-loops and bias."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator,
                 activation: bool = True):
        self.d_in = d_in
        self.d_out = d_out
        self.activation = activation
        self.W = ad.Tensor(glorot(rng, d_in, d_out), requires_grad=True)
        self.b = ad.Tensor(np.zeros(d_out), requires_grad=True)

    def parameters(self) -> dict[str, ad.Tensor]:
        return {"W": self.W, "b": self.b}

    def forward(self, h: ad.Tensor, src: np.ndarray, dst: np.ndarray,
                coeff: np.ndarray, num_nodes: int) -> ad.Tensor:
        if h.shape[1] != self.d_in:
            raise ShapeError(f"layer expects {self.d_in} input features, "
                             f"got {h.shape[1]}")
        hw = ad.matmul(h, self.W)
        messages = ad.scale_rows(ad.gather_rows(hw, src), coeff)
        out = ad.add_rowvec(ad.segment_sum(messages, dst, num_nodes), self.b)
        return ad.relu(out) if self.activation else out


def gcn_edge_index(graph: Graph) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Directed edges plus self-loops with 1/sqrt(deg~ * deg~) coefficients."""
    src, dst, _ = graph.directed_edges()
    loops = np.arange(graph.num_nodes, dtype=np.intp)
    src = np.concatenate([src, loops])
    dst = np.concatenate([dst, loops])
    deg = graph.degrees().astype(np.float64) + 1.0
    coeff = 1.0 / np.sqrt(deg[src] * deg[dst])
    return src, dst, coeff


def inner_product_logits(z: ad.Tensor, pairs: np.ndarray) -> ad.Tensor:
    """Decoder logit for each (u, v) row of ``pairs``: z_u . z_v."""
    zu = ad.gather_rows(z, pairs[:, 0])
    zv = ad.gather_rows(z, pairs[:, 1])
    return ad.tsum(ad.mul(zu, zv), axis=1)


class GraphAutoencoder(BaseEstimator):
    """Link-reconstruction autoencoder with a two-layer GCN encoder.

    ``fit`` trains on one graph by classifying true edges against an equal
    number of freshly sampled non-edges each epoch; ``embed`` returns the
    node embeddings of any graph under the trained encoder.
    """

    def __init__(self, hidden_dim: int = 4, out_dim: int = 4, epochs: int = 200,
                 lr: float = 1e-3, weight_decay: float = 0.0, seed: int = 0):
        self.hidden_dim = hidden_dim
        self.out_dim = out_dim
        self.epochs = epochs
        self.lr = lr
        self.weight_decay = weight_decay
        self.seed = seed

    def _parameters(self) -> dict[str, ad.Tensor]:
        out = {}
        for i, layer in enumerate(self.layers_):
            for name, p in layer.parameters().items():
                out[f"layers.{i}.{name}"] = p
        return out

    def fit(self, graph: Graph, y=None):
        rng = np.random.default_rng(self.seed)
        self.layers_ = [
            GcnLayer(graph.feature_dim, self.hidden_dim, rng, activation=True),
            GcnLayer(self.hidden_dim, self.out_dim, rng, activation=False),
        ]
        optimizer = AdamW(self._parameters(), lr=self.lr,
                          weight_decay=self.weight_decay)
        pos = np.asarray(graph.edges, dtype=np.intp)
        self.history_ = []
        for _ in range(self.epochs):
            neg = np.asarray(
                negative_edge_sample(graph, len(pos), rng), dtype=np.intp)
            with ad.GradTape() as tape:
                z = self._encode(graph)
                pos_logits = inner_product_logits(z, pos)
                neg_logits = inner_product_logits(z, neg)
                loss = ad.add(
                    ad.bce_with_logits(pos_logits, ad.constant(np.ones(len(pos)))),
                    ad.bce_with_logits(neg_logits, ad.constant(np.zeros(len(neg)))))
            optimizer.zero_grad()
            tape.backward(loss)
            optimizer.step()
            self.history_.append(loss.item())
        return self

    def _encode(self, graph: Graph) -> ad.Tensor:
        src, dst, coeff = gcn_edge_index(graph)
        h = ad.constant(graph.node_features)
        for layer in self.layers_:
            h = layer.forward(h, src, dst, coeff, graph.num_nodes)
        return h

    def embed(self, graph: Graph) -> np.ndarray:
        """Node embeddings under the trained encoder (no gradient tracking)."""
        return self._encode(graph).data
