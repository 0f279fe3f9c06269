"""Message-passing tree encoder.

Each layer transforms a node by its own features plus a rectified sum over
neighbor messages:

    h_v' = act( W1 h_v + ReLU( sum_{u in N(v)} W2 (h_u + e_uv) ) )

where ``e_uv`` are edge features passed through unchanged (first layer only,
when present). The post-aggregation stack is affine, then batch
normalization when enabled, then ReLU. Row v of the output after L layers is
the embedding of the depth-L message-passing tree rooted at v.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, ShapeError
from .graph import Graph

_BN_EPS = 1e-5


def glorot(rng: np.random.Generator, d_in: int, d_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (d_in + d_out))
    return rng.uniform(-bound, bound, size=(d_in, d_out))


class SageLayer:
    """One message-passing layer with separate self and neighbor transforms."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator,
                 normalize: bool = True, activation: bool = True,
                 bn_momentum: float = 0.1):
        self.d_in = d_in
        self.d_out = d_out
        self.normalize = normalize
        self.activation = activation
        self.bn_momentum = bn_momentum
        self.W1 = ad.Tensor(glorot(rng, d_in, d_out), requires_grad=True)
        self.W2 = ad.Tensor(glorot(rng, d_in, d_out), requires_grad=True)
        if normalize:
            self.gamma = ad.Tensor(np.ones(d_out), requires_grad=True)
            self.beta = ad.Tensor(np.zeros(d_out), requires_grad=True)
            self.running_mean = np.zeros(d_out)
            self.running_var = np.ones(d_out)

    def parameters(self) -> dict[str, ad.Tensor]:
        params = {"W1": self.W1, "W2": self.W2}
        if self.normalize:
            params.update({"gamma": self.gamma, "beta": self.beta})
        return params

    def buffers(self) -> dict[str, np.ndarray]:
        if not self.normalize:
            return {}
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def forward(self, h: ad.Tensor, src: np.ndarray, dst: np.ndarray,
                num_nodes: int, edge_features: ad.Tensor | None = None,
                training: bool = False, update_stats: bool | None = None) -> ad.Tensor:
        if h.shape[1] != self.d_in:
            raise ShapeError(f"layer expects {self.d_in} input features, "
                             f"got {h.shape[1]}")
        self_term = ad.matmul(h, self.W1)
        if len(src):
            messages = ad.gather_rows(h, src)
            if edge_features is not None:
                if edge_features.shape != messages.shape:
                    raise ShapeError(
                        f"edge features {edge_features.shape} do not match "
                        f"messages {messages.shape}")
                messages = ad.add(messages, edge_features)
            agg = ad.segment_sum(ad.matmul(messages, self.W2), dst, num_nodes)
            pre = ad.add(self_term, ad.relu(agg))
        else:
            # isolated nodes: the empty neighbor sum is the zero vector
            pre = self_term
        if self.normalize:
            if training:
                pre, mean, var = ad.batch_norm_train(pre, self.gamma, self.beta,
                                                     _BN_EPS)
                if update_stats is None or update_stats:
                    m = self.bn_momentum
                    self.running_mean = (1.0 - m) * self.running_mean + m * mean
                    self.running_var = (1.0 - m) * self.running_var + m * var
            else:
                inv_std = 1.0 / np.sqrt(self.running_var + _BN_EPS)
                centered = ad.add_rowvec(pre, ad.constant(-self.running_mean))
                scaled = ad.mul_rowvec(centered,
                                       ad.mul(self.gamma, ad.constant(inv_std)))
                pre = ad.add_rowvec(scaled, self.beta)
        return ad.relu(pre) if self.activation else pre


class TreeEncoder:
    """Stack of L message-passing layers; L matches the tree depth it encodes."""

    def __init__(self, feature_dim: int, hidden_dim: int = 32, layers: int = 2,
                 normalize: bool = True, rng: np.random.Generator | None = None,
                 edge_feature_dim: int | None = None,
                 final_activation: bool = False):
        if layers < 1:
            raise ConfigError("encoder needs at least one layer")
        if edge_feature_dim is not None and edge_feature_dim != feature_dim:
            raise ConfigError(
                "edge features pass through unchanged, so their dimension "
                f"({edge_feature_dim}) must equal the node feature dimension "
                f"({feature_dim})")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.feature_dim = feature_dim
        self.hidden_dim = hidden_dim
        self.num_layers = layers
        self.normalize = normalize
        self.final_activation = final_activation
        self.layers = []
        for i in range(layers):
            d_in = feature_dim if i == 0 else hidden_dim
            # the output layer skips the ReLU so embeddings keep full
            # direction information for cosine quantization
            act = final_activation or i + 1 < layers
            self.layers.append(SageLayer(d_in, hidden_dim, rng,
                                         normalize=normalize, activation=act))

    def parameters(self) -> dict[str, ad.Tensor]:
        out = {}
        for i, layer in enumerate(self.layers):
            for name, p in layer.parameters().items():
                out[f"layers.{i}.{name}"] = p
        return out

    def buffers(self) -> dict[str, np.ndarray]:
        out = {}
        for i, layer in enumerate(self.layers):
            for name, b in layer.buffers().items():
                out[f"layers.{i}.{name}"] = b
        return out

    def set_buffers(self, values: dict[str, np.ndarray]):
        for i, layer in enumerate(self.layers):
            if layer.normalize:
                layer.running_mean = values[f"layers.{i}.running_mean"].copy()
                layer.running_var = values[f"layers.{i}.running_var"].copy()

    def encode(self, graph: Graph, training: bool = False,
               update_stats: bool | None = None) -> ad.Tensor:
        """Embeddings of every node's depth-L tree, one row per node."""
        if graph.feature_dim != self.feature_dim:
            raise ShapeError(f"encoder expects {self.feature_dim}-dim features, "
                             f"graph has {graph.feature_dim}")
        src, dst, efeat = graph.directed_edges()
        h = ad.constant(graph.node_features)
        for i, layer in enumerate(self.layers):
            layer_edges = None
            if i == 0 and efeat is not None:
                layer_edges = ad.constant(efeat)
            h = layer.forward(h, src, dst, graph.num_nodes,
                              edge_features=layer_edges, training=training,
                              update_stats=update_stats)
        return h

    def clone(self) -> "TreeEncoder":
        """Deep copy with identical parameters and running statistics."""
        twin = TreeEncoder(self.feature_dim, self.hidden_dim, self.num_layers,
                           normalize=self.normalize,
                           final_activation=self.final_activation,
                           rng=np.random.default_rng(0))
        mine = self.parameters()
        for name, p in twin.parameters().items():
            p.data = mine[name].data.copy()
        twin.set_buffers(self.buffers())
        return twin
