"""Fine-tuning: unified tree classification with two cooperating heads.

Every task instance reduces to one embedding: a node's own tree embedding, the
mean of a link's two endpoint embeddings, or the mean over all nodes for a
whole graph. A prototype head scores an embedding against class means drawn
from a memory bank of quantized training embeddings; a linear head scores the
quantized embedding directly. Both cross-entropies update the encoder and the
linear head, the token vocabulary stays frozen, and inference averages the two
probability vectors with the loss weights.
"""

from __future__ import annotations

import csv
import json
import os

import numpy as np
from sklearn.base import BaseEstimator

from . import autodiff as ad
from .codebook import Codebook
from .encoder import TreeEncoder, glorot
from .errors import ConfigError, DomainError, TrainingError
from .graph import Graph
from .optim import AdamW
from .pretrain import TreeVocabPretrainer
from .seeding import named_stream
from .tasks import TaskInstance
from .transforms import kshot_split

_SIM_MODES = ("distance", "similarity")


def task_embedding(encoder: TreeEncoder, instance: TaskInstance,
                   training: bool = False) -> ad.Tensor:
    """Embedding of one instance; the mean over its relevant node rows."""
    z = encoder.encode(instance.graph, training=training)
    rows = ad.gather_rows(z, np.asarray(instance.nodes, dtype=np.intp))
    return ad.tmean(rows, axis=0)


def _embedding_matrix(encoder: TreeEncoder, instances: list[TaskInstance],
                      training: bool) -> ad.Tensor:
    """Instance embeddings stacked into one matrix, one encoder pass per graph."""
    by_graph: dict[int, list[int]] = {}
    graphs: dict[int, Graph] = {}
    for i, inst in enumerate(instances):
        key = id(inst.graph)
        by_graph.setdefault(key, []).append(i)
        graphs[key] = inst.graph
    gathered = []
    instance_ids = []
    weights = []
    for key, members in by_graph.items():
        z = encoder.encode(graphs[key], training=training)
        nodes = []
        for i in members:
            inst = instances[i]
            nodes.extend(inst.nodes)
            instance_ids.extend([i] * len(inst.nodes))
            weights.extend([1.0 / len(inst.nodes)] * len(inst.nodes))
        gathered.append(ad.gather_rows(z, np.asarray(nodes, dtype=np.intp)))
    stacked = gathered[0] if len(gathered) == 1 else ad.concat_rows(gathered)
    weighted = ad.scale_rows(stacked, np.asarray(weights))
    return ad.segment_sum(weighted, np.asarray(instance_ids, dtype=np.intp),
                          len(instances))


# ----------------------------------------------------------------------
# memory bank and heads


class MemoryBank:
    """Per-class store of quantized training embeddings."""

    def __init__(self, by_class: dict[int, np.ndarray]):
        self.by_class = by_class

    @property
    def classes(self) -> list[int]:
        return sorted(self.by_class)

    def size(self) -> int:
        return sum(len(v) for v in self.by_class.values())

    def prototypes(self) -> np.ndarray:
        """Per-class means, ordered by class index."""
        return np.stack([self.by_class[k].mean(axis=0) for k in self.classes])


def build_memory_bank(encoder: TreeEncoder, codebook: Codebook,
                      instances: list[TaskInstance], cap: int | None,
                      rng: np.random.Generator) -> tuple[MemoryBank, np.ndarray]:
    """Quantize training embeddings, group by label, subsample to the cap."""
    if not instances:
        raise ConfigError("memory bank needs at least one instance")
    with ad.no_grad():
        emb = _embedding_matrix(encoder, instances, training=False).data
    _, tokens = codebook.lookup(emb)
    grouped: dict[int, list[np.ndarray]] = {}
    for inst, q in zip(instances, tokens):
        grouped.setdefault(inst.label, []).append(q)
    by_class = {}
    for label, rows in sorted(grouped.items()):
        rows = np.stack(rows)
        if cap is not None and len(rows) > cap:
            keep = rng.choice(len(rows), size=cap, replace=False)
            rows = rows[np.sort(keep)]
        by_class[label] = rows
    bank = MemoryBank(by_class)
    return bank, bank.prototypes()


def proto_logits(z: ad.Tensor, prototypes: np.ndarray, tau: float,
                 sim: str = "distance") -> ad.Tensor:
    """Class scores from cosine geometry against the prototypes.

    ``distance`` scores -(1 - cos)/tau as the paper words it; ``similarity``
    scores cos/tau. Softmax over either gives the head's distribution.
    """
    if sim not in _SIM_MODES:
        raise ConfigError(f"sim must be one of {_SIM_MODES}")
    norms = np.linalg.norm(prototypes, axis=1)
    if np.any(norms < 1e-12):
        raise DomainError("a class prototype has zero norm")
    cos = ad.matmul(ad.row_normalize(z),
                    ad.constant((prototypes / norms[:, None]).T))
    if sim == "distance":
        return ad.scale(ad.add(cos, -1.0), 1.0 / tau)
    return ad.scale(cos, 1.0 / tau)


class LinearHead:
    """Affine map over quantized embeddings with a softmax temperature."""

    def __init__(self, dim: int, num_classes: int, rng: np.random.Generator,
                 tau: float = 1.0):
        self.W = ad.Tensor(glorot(rng, dim, num_classes), requires_grad=True)
        self.b = ad.Tensor(np.zeros(num_classes), requires_grad=True)
        self.tau = tau

    def parameters(self) -> dict[str, ad.Tensor]:
        return {"W": self.W, "b": self.b}

    def logits(self, q: ad.Tensor) -> ad.Tensor:
        return ad.scale(ad.add_rowvec(ad.matmul(q, self.W), self.b),
                        1.0 / self.tau)


# ----------------------------------------------------------------------
# the classifier estimator


class TreeTaskClassifier(BaseEstimator):
    """Few-shot classifier over task instances with a frozen token vocabulary.

    With ``pretrained`` set, the encoder starts from (a copy of) the
    pre-trained encoder and the vocabulary from the pre-trained codebook;
    otherwise both are freshly initialized, which is the from-scratch arm of
    the negative-transfer experiment.
    """

    def __init__(self, pretrained: TreeVocabPretrainer | None = None,
                 hidden_dim: int = 32, num_layers: int = 2,
                 num_tokens: int = 128, lambda_proto: float = 1.0,
                 lambda_lin: float = 1.0, tau_proto: float = 1.0,
                 tau_lin: float = 1.0, sim: str = "distance",
                 lr: float = 1e-3, weight_decay: float = 1e-5,
                 epochs: int = 200, patience: int = 20,
                 bank_cap: int | None = None, refresh_bank: bool = False,
                 seed: int = 0):
        self.pretrained = pretrained
        self.hidden_dim = hidden_dim
        self.num_layers = num_layers
        self.num_tokens = num_tokens
        self.lambda_proto = lambda_proto
        self.lambda_lin = lambda_lin
        self.tau_proto = tau_proto
        self.tau_lin = tau_lin
        self.sim = sim
        self.lr = lr
        self.weight_decay = weight_decay
        self.epochs = epochs
        self.patience = patience
        self.bank_cap = bank_cap
        self.refresh_bank = refresh_bank
        self.seed = seed

    # ------------------------------------------------------------------
    def _init_components(self, train: list[TaskInstance]):
        if self.lambda_proto < 0 or self.lambda_lin < 0:
            raise ConfigError("head weights must be non-negative")
        if self.lambda_proto == 0 and self.lambda_lin == 0:
            raise ConfigError("at least one head weight must be positive")
        init_rng = named_stream(self.seed, "finetune-init")
        feature_dim = train[0].graph.feature_dim
        if self.pretrained is not None:
            self.encoder_ = self.pretrained.encoder_.clone()
            source = self.pretrained.codebook_
            self.codebook_ = Codebook(source.num_tokens, source.dim,
                                      metric=source.metric)
            self.codebook_.tokens = ad.Tensor(source.tokens.data.copy(),
                                              requires_grad=False)
        else:
            self.encoder_ = TreeEncoder(feature_dim, self.hidden_dim,
                                        self.num_layers, rng=init_rng)
            self.codebook_ = Codebook(self.num_tokens, self.hidden_dim,
                                      rng=init_rng)
            self.codebook_.tokens.requires_grad = False
        labels = sorted({inst.label for inst in train})
        self.classes_ = labels
        if labels != list(range(len(labels))):
            raise ConfigError(f"labels must be 0..C-1, got {labels}")
        self.head_ = LinearHead(self.codebook_.dim, len(labels), init_rng,
                                tau=self.tau_lin)
        params = dict(self.encoder_.parameters())
        if self.lambda_lin > 0:
            for name, p in self.head_.parameters().items():
                params[f"head.{name}"] = p
        self.optimizer_ = AdamW(params, lr=self.lr,
                                weight_decay=self.weight_decay)

    def _quantized(self, emb: ad.Tensor, training: bool) -> ad.Tensor:
        indices = self.codebook_.assign(emb.data)
        tokens = ad.gather_rows(self.codebook_.tokens, indices)
        if training:
            return ad.straight_through(tokens, emb)
        return tokens

    def _head_probabilities(self, emb: ad.Tensor) -> np.ndarray:
        parts = []
        if self.lambda_proto > 0:
            logits = proto_logits(emb, self.prototypes_, self.tau_proto,
                                  self.sim)
            parts.append(self.lambda_proto * ad.softmax(logits.data))
        if self.lambda_lin > 0:
            q = self._quantized(emb, training=False)
            parts.append(self.lambda_lin * ad.softmax(self.head_.logits(q).data))
        return sum(parts) / (self.lambda_proto + self.lambda_lin)

    # ------------------------------------------------------------------
    def fit(self, train: list[TaskInstance],
            eval_instances: list[TaskInstance] | None = None):
        if not train:
            raise ConfigError("fit needs training instances")
        self._init_components(train)
        bank_rng = named_stream(self.seed, "memory-bank")
        tokens_before = self.codebook_.tokens.data.copy()
        self.bank_, self.prototypes_ = build_memory_bank(
            self.encoder_, self.codebook_, train, self.bank_cap, bank_rng)
        if len(self.bank_.classes) != len(self.classes_):
            raise ConfigError("every class needs at least one training instance")
        labels = np.asarray([inst.label for inst in train], dtype=np.intp)
        best_acc, best_state, since_best = -1.0, None, 0
        self.history_ = []
        for epoch in range(self.epochs):
            with ad.GradTape() as tape:
                emb = _embedding_matrix(self.encoder_, train, training=True)
                pieces = []
                if self.lambda_proto > 0:
                    pieces.append(ad.scale(
                        ad.softmax_cross_entropy(
                            proto_logits(emb, self.prototypes_, self.tau_proto,
                                         self.sim), labels),
                        self.lambda_proto))
                if self.lambda_lin > 0:
                    q = self._quantized(emb, training=True)
                    pieces.append(ad.scale(
                        ad.softmax_cross_entropy(self.head_.logits(q), labels),
                        self.lambda_lin))
                loss = pieces[0] if len(pieces) == 1 else ad.add(*pieces)
            if not np.isfinite(loss.item()):
                raise TrainingError("non-finite fine-tuning loss")
            self.optimizer_.zero_grad()
            tape.backward(loss)
            self.optimizer_.step()
            if self.refresh_bank:
                self.bank_, self.prototypes_ = build_memory_bank(
                    self.encoder_, self.codebook_, train, self.bank_cap,
                    bank_rng)
            else:
                self.prototypes_ = self.bank_.prototypes()
            entry = {"epoch": epoch, "loss": loss.item()}
            if eval_instances:
                acc = self.score(eval_instances)
                entry["eval_acc"] = acc
                if acc > best_acc:
                    best_acc, since_best = acc, 0
                    best_state = self._snapshot()
                else:
                    since_best += 1
                if since_best > self.patience:
                    self.history_.append(entry)
                    break
            self.history_.append(entry)
        if best_state is not None:
            self._restore(best_state)
        if not np.array_equal(tokens_before, self.codebook_.tokens.data):
            raise TrainingError("token vocabulary changed during fine-tuning")
        return self

    def _snapshot(self):
        return {name: p.data.copy()
                for name, p in self.optimizer_.params.items()}, \
               {name: b.copy() for name, b in self.encoder_.buffers().items()}

    def _restore(self, state):
        params, buffers = state
        for name, p in self.optimizer_.params.items():
            p.data = params[name].copy()
        self.encoder_.set_buffers(buffers)

    # ------------------------------------------------------------------
    def predict_proba(self, instances: list[TaskInstance]) -> np.ndarray:
        with ad.no_grad():
            emb = _embedding_matrix(self.encoder_, instances, training=False)
        return self._head_probabilities(emb)

    def predict(self, instances: list[TaskInstance]) -> np.ndarray:
        return np.argmax(self.predict_proba(instances), axis=1)

    def score(self, instances: list[TaskInstance]) -> float:
        labels = np.asarray([inst.label for inst in instances])
        return float(np.mean(self.predict(instances) == labels))


# ----------------------------------------------------------------------
# experiments


def fewshot_run(instances: list[TaskInstance], k: int, seed: int,
                pretrained: TreeVocabPretrainer | None = None,
                **classifier_params) -> dict:
    """One k-shot episode: split, fine-tune, evaluate."""
    split_rng = named_stream(seed, "kshot-split")
    train, evals = kshot_split(instances, k, split_rng)
    clf = TreeTaskClassifier(pretrained=pretrained, seed=seed,
                             **classifier_params)
    clf.fit(train, eval_instances=evals)
    return {
        "task": train[0].kind,
        "k_shot": k,
        "seed": seed,
        "acc": clf.score(evals),
        "history": clf.history_,
    }


def nt_gap_experiment(instances: list[TaskInstance],
                      pretrained: TreeVocabPretrainer, k: int, seeds,
                      **classifier_params) -> list[dict]:
    """Accuracy with and without pre-training under identical seeds and splits.

    The reported gap is scratch-arm risk subtracted from pre-trained-arm
    risk, so zero or negative means pre-training did not hurt.
    """
    rows = []
    for seed in seeds:
        with_pre = fewshot_run(instances, k, seed, pretrained=pretrained,
                               **classifier_params)
        scratch = fewshot_run(instances, k, seed, pretrained=None,
                              **classifier_params)
        rows.append({
            "seed": int(seed),
            "acc_pre": with_pre["acc"],
            "acc_scratch": scratch["acc"],
            "gap": scratch["acc"] - with_pre["acc"],
        })
    return rows


def write_nt_gap_csv(rows: list[dict], path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seed", "acc_pre", "acc_scratch", "gap"])
        for row in rows:
            writer.writerow([row["seed"], f"{row['acc_pre']:.12g}",
                             f"{row['acc_scratch']:.12g}",
                             f"{row['gap']:.12g}"])


def write_metrics_json(result: dict, path, curve_path=None):
    payload = {
        "task": result["task"],
        "k_shot": result["k_shot"],
        "seed": result["seed"],
        "acc": float(f"{result['acc']:.12g}"),
        # name only, so re-runs into different directories stay bit-identical
        "loss_curve_path": os.path.basename(str(curve_path)) if curve_path
        else None,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")
    if curve_path:
        with open(curve_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "loss", "eval_acc"])
            for entry in result["history"]:
                writer.writerow([entry["epoch"], f"{entry['loss']:.12g}",
                                 f"{entry.get('eval_acc', float('nan')):.12g}"])
