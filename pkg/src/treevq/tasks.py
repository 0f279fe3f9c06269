"""Unified task instances: node, link, and graph examples as one record type."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError
from .graph import Graph

KINDS = ("node", "link", "graph")


@dataclass
class TaskInstance:
    """One classification example, reduced to the node set it depends on.

    ``nodes`` holds one index for node tasks, the two endpoints for link
    tasks, and every node of the graph for graph tasks.
    """

    kind: str
    nodes: list[int]
    graph: Graph
    label: int

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown task kind {self.kind!r}")
        expected = {"node": 1, "link": 2}.get(self.kind)
        if not self.nodes:
            raise ConfigError("instance has an empty node list")
        if expected is not None and len(self.nodes) != expected:
            raise ConfigError(
                f"{self.kind} instance needs {expected} node(s), got {len(self.nodes)}")
        for v in self.nodes:
            if not 0 <= v < self.graph.num_nodes:
                raise ConfigError(f"instance references node {v} outside the graph")


def node_instances(graph: Graph, nodes=None) -> list[TaskInstance]:
    """Node-classification instances from a labeled graph (all nodes by default)."""
    if graph.node_labels is None:
        raise ConfigError("graph has no node labels")
    nodes = range(graph.num_nodes) if nodes is None else nodes
    return [TaskInstance("node", [int(v)], graph, graph.node_labels[v])
            for v in nodes]
