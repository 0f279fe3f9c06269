"""Tree-reconstruction pre-training of the encoder and token vocabulary.

Each step runs: augment the graph, encode it, quantize the tree embeddings,
and push the straight-through tokens through four small decoders that
reconstruct (1) the semantics of the uncorrupted tree as seen by a
slow-moving target encoder, (2) the root node's original features, and
(3) the connectivity (plus edge features, when present) of the original
graph. The weighted sum of those terms, the two quantization pulls, and the
token orthogonality penalty is minimized with AdamW; the target encoder
trails the online encoder by exponential moving average.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from . import autodiff as ad
from .codebook import Codebook, vocab_diagnostics
from .encoder import TreeEncoder, glorot
from .errors import ConfigError, DomainError, ShapeError, TrainingError
from .graph import Graph
from .optim import AdamW, ema_update
from .transforms import AugmentConfig, augment
from .seeding import named_stream


class Mlp:
    """Two-layer perceptron with a ReLU between the affine maps."""

    def __init__(self, d_in: int, d_hidden: int, d_out: int,
                 rng: np.random.Generator):
        self.W1 = ad.Tensor(glorot(rng, d_in, d_hidden), requires_grad=True)
        self.b1 = ad.Tensor(np.zeros(d_hidden), requires_grad=True)
        self.W2 = ad.Tensor(glorot(rng, d_hidden, d_out), requires_grad=True)
        self.b2 = ad.Tensor(np.zeros(d_out), requires_grad=True)

    def parameters(self) -> dict[str, ad.Tensor]:
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2}

    def forward(self, x: ad.Tensor) -> ad.Tensor:
        h = ad.relu(ad.add_rowvec(ad.matmul(x, self.W1), self.b1))
        return ad.add_rowvec(ad.matmul(h, self.W2), self.b2)


class ReconstructionDecoders:
    """Independent decoder heads over quantized tree embeddings.

    ``semantic`` and ``link`` map back to embedding width, ``feature`` to the
    node feature width, and ``edge`` (present only when the graphs carry edge
    features) to half the edge feature width, since edge targets are matched
    by the concatenation of the two endpoint decodings.
    """

    def __init__(self, dim: int, feature_dim: int,
                 edge_feature_dim: int | None, rng: np.random.Generator):
        self.semantic = Mlp(dim, dim, dim, rng)
        self.feature = Mlp(dim, dim, feature_dim, rng)
        self.link = Mlp(dim, dim, dim, rng)
        self.edge = None
        self.edge_feature_dim = edge_feature_dim
        if edge_feature_dim is not None:
            self.edge = Mlp(dim, dim, math.ceil(edge_feature_dim / 2), rng)

    def parameters(self) -> dict[str, ad.Tensor]:
        out = {}
        heads = {"semantic": self.semantic, "feature": self.feature,
                 "link": self.link}
        if self.edge is not None:
            heads["edge"] = self.edge
        for head_name, head in heads.items():
            for name, p in head.parameters().items():
                out[f"{head_name}.{name}"] = p
        return out


# ----------------------------------------------------------------------
# reconstruction losses


def feature_reconstruction_loss(decoded: ad.Tensor,
                                original_features: np.ndarray) -> ad.Tensor:
    """Mean over trees of the squared error against pre-augmentation features."""
    target = np.asarray(original_features, dtype=np.float64)
    if decoded.shape != target.shape:
        raise ShapeError(f"decoded {decoded.shape} vs targets {target.shape}")
    return ad.tmean(ad.sum_squares_rows(ad.sub(decoded, ad.constant(target))))


def semantic_reconstruction_loss(decoded: ad.Tensor, target_embeddings: np.ndarray,
                                 gamma: float = 1.0) -> ad.Tensor:
    """Mean of (1 - cosine)^gamma between decodings and target-encoder views."""
    target = np.asarray(target_embeddings, dtype=np.float64)
    if decoded.shape != target.shape:
        raise ShapeError(f"decoded {decoded.shape} vs targets {target.shape}")
    norms = np.linalg.norm(target, axis=1)
    if np.any(norms < 1e-12):
        raise DomainError("semantic target contains a zero-norm embedding")
    cos = ad.tsum(ad.mul(ad.row_normalize(decoded),
                         ad.constant(target / norms[:, None])), axis=1)
    # clamp tiny negative float residue so fractional gamma stays in domain
    return ad.tmean(ad.power(ad.relu(1.0 - cos), gamma))


def topology_reconstruction_loss(link_decoded: ad.Tensor,
                                 quantized: ad.Tensor,
                                 edge_decoder: Mlp | None,
                                 pos_pairs: np.ndarray,
                                 neg_pairs: np.ndarray,
                                 edge_targets: np.ndarray | None) -> ad.Tensor:
    """Edge logit cross-entropy plus, when present, edge-feature recovery.

    Positive and negative node pairs index rows of the decoded batch. Edge
    targets with odd width are padded by one zero column to match the
    concatenated decoder output.
    """
    pos_pairs = np.asarray(pos_pairs, dtype=np.intp)
    neg_pairs = np.asarray(neg_pairs, dtype=np.intp)
    if len(pos_pairs) == 0:
        raise ConfigError("topology loss needs at least one positive edge")
    pos_logits = ad.tsum(ad.mul(ad.gather_rows(link_decoded, pos_pairs[:, 0]),
                                ad.gather_rows(link_decoded, pos_pairs[:, 1])),
                         axis=1)
    neg_logits = ad.tsum(ad.mul(ad.gather_rows(link_decoded, neg_pairs[:, 0]),
                                ad.gather_rows(link_decoded, neg_pairs[:, 1])),
                         axis=1)
    loss = ad.add(
        ad.bce_with_logits(pos_logits, ad.constant(np.ones(len(pos_pairs)))),
        ad.bce_with_logits(neg_logits, ad.constant(np.zeros(len(neg_pairs)))))
    if edge_decoder is not None and edge_targets is not None:
        targets = np.asarray(edge_targets, dtype=np.float64)
        joined = ad.concat_cols(
            edge_decoder.forward(ad.gather_rows(quantized, pos_pairs[:, 0])),
            edge_decoder.forward(ad.gather_rows(quantized, pos_pairs[:, 1])))
        if targets.shape[1] < joined.shape[1]:
            pad = np.zeros((len(targets), joined.shape[1] - targets.shape[1]))
            targets = np.concatenate([targets, pad], axis=1)
        loss = ad.add(loss, ad.tmean(ad.sum_squares_rows(
            ad.sub(joined, ad.constant(targets)))))
    return loss


# ----------------------------------------------------------------------
# trainer

_LOSS_KEYS = ("total", "feat", "sem", "topo", "vocab", "commit", "ortho")


class TreeVocabPretrainer(BaseEstimator):
    """Learns the encoder and the token vocabulary from unlabeled graphs.

    ``fit`` trains on a list of graphs; ``transform`` maps a graph to the
    quantized embeddings of its trees under the frozen result. Loss weights
    follow the reference configuration: commitment 10, feature 100, semantics
    1, topology 0.01, orthogonality 1.
    """

    def __init__(self, hidden_dim: int = 32, num_layers: int = 2,
                 num_tokens: int = 128, metric: str = "cosine",
                 normalize: bool = True, beta_commit: float = 10.0,
                 beta_feat: float = 100.0, beta_sem: float = 1.0,
                 beta_topo: float = 0.01, ortho_weight: float = 1.0,
                 gamma: float = 1.0, link_fraction: float = 0.1,
                 edge_drop_rate: float = 0.2, feature_drop_rate: float = 0.2,
                 epochs: int = 25, batch_size: int | None = None,
                 lr: float = 1e-4, weight_decay: float = 1e-5,
                 ema_decay: float = 0.99, seed: int = 0):
        self.hidden_dim = hidden_dim
        self.num_layers = num_layers
        self.num_tokens = num_tokens
        self.metric = metric
        self.normalize = normalize
        self.beta_commit = beta_commit
        self.beta_feat = beta_feat
        self.beta_sem = beta_sem
        self.beta_topo = beta_topo
        self.ortho_weight = ortho_weight
        self.gamma = gamma
        self.link_fraction = link_fraction
        self.edge_drop_rate = edge_drop_rate
        self.feature_drop_rate = feature_drop_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.weight_decay = weight_decay
        self.ema_decay = ema_decay
        self.seed = seed

    # ------------------------------------------------------------------
    def _check_config(self):
        if not 0.0 < self.link_fraction <= 1.0:
            raise ConfigError("link_fraction must be in (0, 1]")
        for name in ("beta_commit", "beta_feat", "beta_sem", "beta_topo",
                     "ortho_weight"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.gamma <= 0:
            raise ConfigError("gamma must be positive")

    def _init_state(self, feature_dim: int, edge_feature_dim: int | None):
        self._check_config()
        init_rng = named_stream(self.seed, "init")
        self.feature_dim_ = feature_dim
        self.edge_feature_dim_ = edge_feature_dim
        self.encoder_ = TreeEncoder(feature_dim, self.hidden_dim,
                                    self.num_layers, normalize=self.normalize,
                                    rng=init_rng,
                                    edge_feature_dim=edge_feature_dim)
        self.target_encoder_ = self.encoder_.clone()
        self.codebook_ = Codebook(self.num_tokens, self.hidden_dim,
                                  rng=init_rng, metric=self.metric)
        self.decoders_ = ReconstructionDecoders(self.hidden_dim, feature_dim,
                                                edge_feature_dim, init_rng)
        self.optimizer_ = AdamW(self._parameters(), lr=self.lr,
                                weight_decay=self.weight_decay)
        self.history_ = []
        self.usage_ = np.zeros(self.num_tokens, dtype=np.int64)

    def _parameters(self) -> dict[str, ad.Tensor]:
        out = {}
        for prefix, module in (("encoder", self.encoder_),
                               ("codebook", self.codebook_),
                               ("decoders", self.decoders_)):
            for name, p in module.parameters().items():
                out[f"{prefix}.{name}"] = p
        return out

    # ------------------------------------------------------------------
    def fit(self, graphs: list[Graph], y=None):
        if not graphs:
            raise ConfigError("fit needs at least one graph")
        edge_dims = {g.edge_feature_dim for g in graphs}
        if len({g.feature_dim for g in graphs}) != 1 or len(edge_dims) != 1:
            raise ConfigError("all graphs must share feature dimensions")
        self._init_state(graphs[0].feature_dim, next(iter(edge_dims)))
        aug_rng = named_stream(self.seed, "augment")
        sample_rng = named_stream(self.seed, "sampling")
        reseed_rng = named_stream(self.seed, "reseed")
        for _ in range(self.epochs):
            epoch_indices = []
            sums = {k: 0.0 for k in _LOSS_KEYS}
            recent = []
            for graph in graphs:
                losses, indices, z_rows = self.pretrain_step(graph, aug_rng,
                                                             sample_rng)
                epoch_indices.append(indices)
                recent.append(z_rows)
                for k in _LOSS_KEYS:
                    sums[k] += losses[k]
            diag = vocab_diagnostics(self.codebook_, epoch_indices)
            self.codebook_.reseed_dead_tokens(diag.usage > 0, reseed_rng,
                                              recent=np.concatenate(recent))
            record = {k: sums[k] / len(graphs) for k in _LOSS_KEYS}
            record["perplexity"] = diag.perplexity
            self.history_.append(record)
            self.usage_ = diag.usage
        return self

    def pretrain_step(self, graph: Graph, aug_rng: np.random.Generator,
                      sample_rng: np.random.Generator):
        """One optimization step on one graph; returns (losses, indices, z)."""
        cfg = AugmentConfig(self.edge_drop_rate, self.feature_drop_rate)
        view = augment(graph, cfg, aug_rng)
        if self.batch_size is not None and self.batch_size < graph.num_nodes:
            batch = np.sort(sample_rng.choice(graph.num_nodes, self.batch_size,
                                              replace=False))
        else:
            batch = np.arange(graph.num_nodes)
        pos_pairs, neg_pairs, edge_targets = self._topology_batch(
            graph, batch, sample_rng)
        with ad.GradTape() as tape:
            z_all = self.encoder_.encode(view, training=True)
            z = ad.gather_rows(z_all, batch) if len(batch) < graph.num_nodes else z_all
            result = self.codebook_.quantize(z)
            q = result.quantized
            target = self._target_embeddings(graph, batch)
            losses = {
                "feat": feature_reconstruction_loss(
                    self.decoders_.feature.forward(q),
                    graph.node_features[batch]),
                "sem": semantic_reconstruction_loss(
                    self.decoders_.semantic.forward(q), target, self.gamma),
                "topo": topology_reconstruction_loss(
                    self.decoders_.link.forward(q), q, self.decoders_.edge,
                    pos_pairs, neg_pairs, edge_targets),
                "vocab": result.vocab_loss,
                "commit": result.commit_loss,
                "ortho": self.codebook_.ortho_loss(self.ortho_weight),
            }
            total = ad.add(
                ad.add(ad.add(ad.scale(losses["feat"], self.beta_feat),
                              ad.scale(losses["sem"], self.beta_sem)),
                       ad.add(ad.scale(losses["topo"], self.beta_topo),
                              losses["vocab"])),
                ad.add(ad.scale(losses["commit"], self.beta_commit),
                       losses["ortho"]))
        values = {k: v.item() for k, v in losses.items()}
        values["total"] = total.item()
        for name, value in values.items():
            if not np.isfinite(value):
                raise TrainingError(f"non-finite pre-training loss "
                                    f"component '{name}'")
        self.optimizer_.zero_grad()
        tape.backward(total)
        self.optimizer_.step()
        self.codebook_.fix_degenerate_tokens(sample_rng, fallback=z.data)
        ema_update(self.target_encoder_.parameters(),
                   self.encoder_.parameters(), self.ema_decay)
        self._ema_buffers()
        return values, result.indices, z.data.copy()

    def _ema_buffers(self):
        online = self.encoder_.buffers()
        for name, buf in self.target_encoder_.buffers().items():
            buf *= self.ema_decay
            buf += (1.0 - self.ema_decay) * online[name]

    def _target_embeddings(self, graph: Graph, batch: np.ndarray) -> np.ndarray:
        """Stop-gradient view of the original graph through the EMA encoder."""
        with ad.no_grad():
            z = self.target_encoder_.encode(graph, training=True,
                                            update_stats=False).data
        return z[batch]

    def _topology_batch(self, graph: Graph, batch: np.ndarray,
                        rng: np.random.Generator):
        """Subsampled positive links and matched negatives, in batch coordinates."""
        local = {orig: i for i, orig in enumerate(batch)}
        in_batch = [(idx, (u, v)) for idx, (u, v) in enumerate(graph.edges)
                    if u in local and v in local]
        if not in_batch:
            raise ConfigError("no graph edge joins the sampled batch nodes; "
                              "increase batch_size")
        count = max(1, math.ceil(self.link_fraction * len(in_batch)))
        chosen = rng.choice(len(in_batch), size=count, replace=False)
        pos, edge_rows = [], []
        for c in chosen:
            idx, (u, v) = in_batch[c]
            pos.append((local[u], local[v]))
            edge_rows.append(idx)
        edge_targets = None
        if graph.edge_features is not None:
            edge_targets = graph.edge_features[edge_rows]
        present = {(min(u, v), max(u, v)) for _, (u, v) in in_batch}
        n = len(batch)
        neg = []
        attempts = 0
        while len(neg) < count and attempts < 1000 * count:
            attempts += 1
            u = int(rng.integers(n))
            v = int(rng.integers(n))
            orig = (min(batch[u], batch[v]), max(batch[u], batch[v]))
            if u == v or orig in present:
                continue
            neg.append((u, v))
        if len(neg) < count:
            raise ConfigError("could not sample enough negative pairs; "
                              "the batch subgraph is nearly complete")
        return np.asarray(pos), np.asarray(neg), edge_targets

    # ------------------------------------------------------------------
    def transform(self, graph: Graph) -> np.ndarray:
        """Quantized tree embeddings of every node under the frozen model."""
        z = self.encoder_.encode(graph, training=False).data
        _, tokens = self.codebook_.lookup(z)
        return tokens

    def encode_nodes(self, graph: Graph) -> np.ndarray:
        """Raw (pre-quantization) tree embeddings under the frozen model."""
        return self.encoder_.encode(graph, training=False).data
