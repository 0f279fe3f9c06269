"""Stochastic graph transforms: augmentation, subgraph sampling, splits."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, GraphError
from .graph import Graph
from .tasks import TaskInstance


@dataclass
class AugmentConfig:
    edge_drop_rate: float = 0.2
    feature_drop_rate: float = 0.2

    def __post_init__(self):
        for name in ("edge_drop_rate", "feature_drop_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate < 1.0:
                raise ConfigError(f"{name} must be in [0, 1), got {rate}")


def augment(graph: Graph, cfg: AugmentConfig, rng: np.random.Generator) -> Graph:
    """Drop undirected edges and zero feature entries, each independently.

    Labels and splits are carried over untouched; edge features follow their
    surviving edges.
    """
    keep = rng.random(len(graph.edges)) >= cfg.edge_drop_rate
    edges = [e for e, k in zip(graph.edges, keep) if k]
    edge_features = None
    if graph.edge_features is not None:
        edge_features = graph.edge_features[keep]
    features = graph.node_features.copy()
    if cfg.feature_drop_rate > 0.0:
        mask = rng.random(features.shape) < cfg.feature_drop_rate
        features[mask] = 0.0
    return Graph(num_nodes=graph.num_nodes, edges=edges, node_features=features,
                 edge_features=edge_features,
                 node_labels=None if graph.node_labels is None else list(graph.node_labels),
                 num_classes=graph.num_classes,
                 splits={k: list(v) for k, v in graph.splits.items()})


def sample_subgraph(graph: Graph, seed_nodes, fanout_per_layer,
                    rng: np.random.Generator) -> tuple[Graph, list[int]]:
    """Layered neighbor sampling around seed nodes.

    Starting from the seeds, each layer keeps at most ``fanout`` sampled
    neighbors per frontier node (``math.inf`` keeps all). Returns the induced
    subgraph on the kept nodes plus the mapping from new ids back to the
    original ones; the seeds always survive and come first in the mapping.
    """
    seeds = [int(v) for v in seed_nodes]
    if not seeds:
        raise ConfigError("sample_subgraph needs at least one seed node")
    for v in seeds:
        if not 0 <= v < graph.num_nodes:
            raise GraphError(f"seed node {v} outside the graph")
    adj = graph.neighbors()
    kept = list(dict.fromkeys(seeds))
    kept_set = set(kept)
    frontier = list(kept)
    for fanout in fanout_per_layer:
        nxt = []
        for v in frontier:
            candidates = adj[v]
            if not candidates:
                continue
            if math.isinf(fanout) or len(candidates) <= fanout:
                chosen = candidates
            else:
                chosen = rng.choice(len(candidates), size=int(fanout),
                                    replace=False)
                chosen = [candidates[i] for i in chosen]
            for u in chosen:
                if u not in kept_set:
                    kept_set.add(u)
                    kept.append(u)
                    nxt.append(u)
        frontier = nxt
    new_id = {orig: i for i, orig in enumerate(kept)}
    edges, efeat_rows = [], []
    for idx, (u, v) in enumerate(graph.edges):
        if u in kept_set and v in kept_set:
            edges.append((new_id[u], new_id[v]))
            if graph.edge_features is not None:
                efeat_rows.append(graph.edge_features[idx])
    sub = Graph(
        num_nodes=len(kept),
        edges=edges,
        node_features=graph.node_features[kept],
        edge_features=np.asarray(efeat_rows) if efeat_rows else None,
        node_labels=None if graph.node_labels is None
        else [graph.node_labels[v] for v in kept],
        num_classes=graph.num_classes,
    )
    return sub, kept


def negative_edge_sample(graph: Graph, k: int,
                         rng: np.random.Generator) -> list[tuple[int, int]]:
    """k uniformly sampled node pairs that are not edges (and not self-loops)."""
    n = graph.num_nodes
    present = graph.edge_set()
    universe = n * (n - 1) // 2 - len(present)
    if k > universe:
        raise GraphError(f"requested {k} negative edges but only {universe} "
                         "non-edges exist")
    out: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()
    while len(out) < k:
        u = int(rng.integers(n))
        v = int(rng.integers(n))
        if u == v:
            continue
        pair = (min(u, v), max(u, v))
        if pair in present or pair in seen:
            continue
        seen.add(pair)
        out.append(pair)
    return out


def kshot_split(instances: list[TaskInstance], k: int,
                rng: np.random.Generator) -> tuple[list[TaskInstance], list[TaskInstance]]:
    """Exactly k training instances per class, everything else held out."""
    by_class: dict[int, list[int]] = {}
    for i, inst in enumerate(instances):
        by_class.setdefault(inst.label, []).append(i)
    for label, members in sorted(by_class.items()):
        if len(members) < k:
            raise ConfigError(f"class {label} has only {len(members)} instances, "
                              f"need at least k={k}")
    train_idx: set[int] = set()
    for label in sorted(by_class):
        members = by_class[label]
        picked = rng.choice(len(members), size=k, replace=False)
        train_idx.update(members[i] for i in picked)
    train = [instances[i] for i in sorted(train_idx)]
    evals = [instances[i] for i in range(len(instances)) if i not in train_idx]
    return train, evals
