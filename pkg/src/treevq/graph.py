"""Graph container with JSON persistence and invariant validation.

Graphs are undirected; each edge is stored once and expanded to both
directions for message passing. Node features are a dense float matrix,
edge features an optional one. Instances are treated as immutable after
construction, so they can be shared freely.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import GraphError

_JSON_KEYS = ("num_nodes", "edges", "node_features", "edge_features",
              "labels", "num_classes", "splits")


@dataclass
class Graph:
    num_nodes: int
    edges: list[tuple[int, int]]
    node_features: np.ndarray
    edge_features: np.ndarray | None = None
    node_labels: list[int] | None = None
    num_classes: int | None = None
    splits: dict[str, list[int]] = field(default_factory=dict)

    def __post_init__(self):
        self.edges = [(int(u), int(v)) for u, v in self.edges]
        self.node_features = np.asarray(self.node_features, dtype=np.float64)
        if self.edge_features is not None:
            self.edge_features = np.asarray(self.edge_features, dtype=np.float64)
        if self.node_labels is not None:
            self.node_labels = [int(c) for c in self.node_labels]
        self.validate()

    # ------------------------------------------------------------------
    def validate(self, allow_self_loops: bool = False):
        if self.num_nodes < 0:
            raise GraphError("num_nodes must be non-negative")
        for u, v in self.edges:
            if not (0 <= u < self.num_nodes and 0 <= v < self.num_nodes):
                raise GraphError(f"edge ({u}, {v}) references a node >= "
                                 f"num_nodes={self.num_nodes}")
            if u == v and not allow_self_loops:
                raise GraphError(f"self-loop at node {u} is not allowed")
        if self.node_features.ndim != 2 or self.node_features.shape[0] != self.num_nodes:
            raise GraphError(
                f"node_features must have {self.num_nodes} rows, got shape "
                f"{self.node_features.shape}")
        if self.edge_features is not None:
            if self.edge_features.ndim != 2 or len(self.edge_features) != len(self.edges):
                raise GraphError(
                    f"edge_features must have {len(self.edges)} rows, got shape "
                    f"{self.edge_features.shape}")
        if self.node_labels is not None:
            if len(self.node_labels) != self.num_nodes:
                raise GraphError("node_labels length must equal num_nodes")
            if self.num_classes is not None and self.node_labels:
                worst = max(self.node_labels)
                if worst >= self.num_classes or min(self.node_labels) < 0:
                    raise GraphError(
                        f"node_labels contain index {worst} outside "
                        f"0..{self.num_classes - 1}")
        for name, members in self.splits.items():
            for i in members:
                if not 0 <= i < max(self.num_nodes, len(self.edges)):
                    raise GraphError(f"split '{name}' references invalid index {i}")

    # ------------------------------------------------------------------
    @property
    def feature_dim(self) -> int:
        return self.node_features.shape[1]

    @property
    def edge_feature_dim(self) -> int | None:
        return None if self.edge_features is None else self.edge_features.shape[1]

    def directed_edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
        """(src, dst, edge_features) with every undirected edge in both directions."""
        if not self.edges:
            empty = np.zeros(0, dtype=np.intp)
            efeat = None
            if self.edge_features is not None:
                efeat = np.zeros((0, self.edge_features.shape[1]))
            return empty, empty, efeat
        arr = np.asarray(self.edges, dtype=np.intp)
        src = np.concatenate([arr[:, 0], arr[:, 1]])
        dst = np.concatenate([arr[:, 1], arr[:, 0]])
        efeat = None
        if self.edge_features is not None:
            efeat = np.concatenate([self.edge_features, self.edge_features], axis=0)
        return src, dst, efeat

    def neighbors(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.num_nodes)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        return adj

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.num_nodes, dtype=np.intp)
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg

    def edge_set(self) -> set[tuple[int, int]]:
        return {(min(u, v), max(u, v)) for u, v in self.edges}

    def copy(self) -> "Graph":
        return Graph(
            num_nodes=self.num_nodes,
            edges=list(self.edges),
            node_features=self.node_features.copy(),
            edge_features=None if self.edge_features is None else self.edge_features.copy(),
            node_labels=None if self.node_labels is None else list(self.node_labels),
            num_classes=self.num_classes,
            splits={k: list(v) for k, v in self.splits.items()},
        )

    def to_dict(self) -> dict:
        return {
            "num_nodes": self.num_nodes,
            "edges": [[u, v] for u, v in self.edges],
            "node_features": self.node_features.tolist(),
            "edge_features": None if self.edge_features is None
            else self.edge_features.tolist(),
            "labels": self.node_labels,
            "num_classes": self.num_classes,
            "splits": {k: list(v) for k, v in self.splits.items()},
        }


def save_graph(graph: Graph, path):
    """Write the JSON form; keys always appear in the documented order."""
    payload = graph.to_dict()
    assert tuple(payload.keys()) == _JSON_KEYS
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_graph(path) -> Graph:
    """Read a graph JSON file; key order is irrelevant, invariants are checked."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as err:
            raise GraphError(f"cannot parse {path}: line {err.lineno}: {err.msg}") from err
    unknown = set(payload) - set(_JSON_KEYS)
    if unknown:
        raise GraphError(f"unknown graph-file keys: {sorted(unknown)}")
    missing = {"num_nodes", "edges", "node_features"} - set(payload)
    if missing:
        raise GraphError(f"graph file lacks required keys: {sorted(missing)}")
    return Graph(
        num_nodes=payload["num_nodes"],
        edges=[tuple(e) for e in payload["edges"]],
        node_features=np.asarray(payload["node_features"], dtype=np.float64),
        edge_features=None if payload.get("edge_features") is None
        else np.asarray(payload["edge_features"], dtype=np.float64),
        node_labels=payload.get("labels"),
        num_classes=payload.get("num_classes"),
        splits=payload.get("splits") or {},
    )
