"""Numeric checker for the tree-embedding stability bound.

For two nodes of one graph and a normalization-free ReLU encoder, the
Euclidean distance between their embeddings is bounded by

    2 * B_x * (C1 + sum_{l=1..L} C2^l * D_l)

with C1 = B_W1 and C2 = B_W2 (ReLU activation, sum aggregation, and identity
update each contribute Lipschitz factor 1), B_W the largest weight spectral
norm across layers, B_x the largest feature row norm, and D_l the l-th power
of the maximum degree. The checker evaluates both sides on a concrete graph.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import TreeEncoder
from .errors import ConfigError
from .graph import Graph


def spectral_norm(matrix: np.ndarray, iterations: int = 100) -> float:
    """Largest singular value by power iteration on A^T A."""
    a = np.asarray(matrix, dtype=np.float64)
    if a.size == 0 or not np.any(a):
        return 0.0
    v = np.ones(a.shape[1]) / np.sqrt(a.shape[1])
    for _ in range(iterations):
        w = a.T @ (a @ v)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
    return float(np.linalg.norm(a @ v))


@dataclass
class DistanceBoundReport:
    lhs: float
    rhs: float
    holds: bool
    b_x: float
    b_w1: float
    b_w2: float
    c1: float
    c2: float
    max_degree: int
    layer_terms: list[float]


def check_distance_bound(encoder: TreeEncoder, graph: Graph, v1: int,
                         v2: int) -> DistanceBoundReport:
    """Evaluate the stability bound for one node pair.

    The bound's constants assume plain affine-plus-ReLU layers, so encoders
    with batch normalization are rejected.
    """
    if encoder.normalize:
        raise ConfigError("the stability bound covers normalization-free "
                          "encoders only; build the encoder with normalize=False")
    if not (0 <= v1 < graph.num_nodes and 0 <= v2 < graph.num_nodes):
        raise ConfigError(f"nodes ({v1}, {v2}) outside the graph")
    z = encoder.encode(graph, training=False).data
    lhs = float(np.linalg.norm(z[v1] - z[v2]))

    b_w1 = max(spectral_norm(layer.W1.data) for layer in encoder.layers)
    b_w2 = max(spectral_norm(layer.W2.data) for layer in encoder.layers)
    b_x = float(np.linalg.norm(graph.node_features, axis=1).max())
    max_degree = int(graph.degrees().max()) if graph.num_nodes else 0
    c1, c2 = b_w1, b_w2
    layer_terms = [c2 ** l * max_degree ** l
                   for l in range(1, encoder.num_layers + 1)]
    rhs = 2.0 * b_x * (c1 + sum(layer_terms))
    return DistanceBoundReport(lhs=lhs, rhs=rhs, holds=lhs <= rhs, b_x=b_x,
                               b_w1=b_w1, b_w2=b_w2, c1=c1, c2=c2,
                               max_degree=max_degree, layer_terms=layer_terms)
