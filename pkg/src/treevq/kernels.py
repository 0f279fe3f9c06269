"""Graph similarity kernels: WL subtree refinement and graphlet frequencies.

Both kernels return a normalized similarity in [0, 1] with self-similarity
exactly 1. The WL kernel refines node labels by repeatedly hashing each
node's label together with the sorted multiset of its neighbors' labels and
sums histogram dot products over all refinement rounds. The graphlet kernel
compares frequency vectors of connected induced k-node subgraph types,
either by exhaustive enumeration on small graphs or by uniform subset
sampling.
"""

from __future__ import annotations

import itertools
import zlib
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigError, GraphError
from .graph import Graph


# ----------------------------------------------------------------------
# Weisfeiler-Lehman subtree kernel


@dataclass
class WlConfig:
    iterations: int = 2
    feature_buckets: int = 1
    redraws: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")
        if self.feature_buckets < 1:
            raise ConfigError("feature_buckets must be >= 1")
        if self.redraws < 1:
            raise ConfigError("redraws must be >= 1")


def _bucket_labels(features: np.ndarray, buckets: int) -> list[int]:
    """Discretize continuous features: round to 3 decimals, hash into buckets."""
    if buckets == 1:
        return [0] * len(features)
    rounded = np.round(np.asarray(features, dtype=np.float64), 3)
    return [zlib.crc32(row.tobytes()) % buckets for row in rounded]


def _wl_histograms(graph: Graph, labels: list[int], iterations: int,
                   lookup_per_round: list[dict]) -> list[Counter]:
    """Label histograms for rounds 0..iterations using shared relabel tables."""
    adj = graph.neighbors()
    hists = [Counter(labels)]
    current = labels
    for it in range(iterations):
        lookup = lookup_per_round[it]
        refined = []
        for v in range(graph.num_nodes):
            signature = (current[v], tuple(sorted(current[u] for u in adj[v])))
            if signature not in lookup:
                lookup[signature] = len(lookup)
            refined.append(lookup[signature])
        hists.append(Counter(refined))
        current = refined
    return hists


def _hist_dot(a: Counter, b: Counter) -> float:
    if len(b) < len(a):
        a, b = b, a
    return float(sum(c * b[k] for k, c in a.items()))


def _wl_raw(h1: list[Counter], h2: list[Counter]) -> float:
    return sum(_hist_dot(a, b) for a, b in zip(h1, h2))


def wl_subtree_similarity(g1: Graph, g2: Graph, cfg: WlConfig) -> float:
    """Normalized WL subtree kernel k(g1, g2) / sqrt(k(g1, g1) k(g2, g2)).

    With ``redraws > 1`` the node features of both graphs are resampled
    uniformly on [0, 1) for every draw and the normalized values averaged,
    which washes out the arbitrariness of discretizing continuous features.
    """
    if g1.num_nodes == 0 or g2.num_nodes == 0:
        raise GraphError("WL kernel is undefined for empty graphs")
    rng = np.random.default_rng(cfg.seed)
    total = 0.0
    for _ in range(cfg.redraws):
        if cfg.redraws > 1:
            f1 = rng.uniform(size=(g1.num_nodes, g1.feature_dim))
            f2 = rng.uniform(size=(g2.num_nodes, g2.feature_dim))
        else:
            f1, f2 = g1.node_features, g2.node_features
        l1 = _bucket_labels(f1, cfg.feature_buckets)
        l2 = _bucket_labels(f2, cfg.feature_buckets)
        lookups = [dict() for _ in range(cfg.iterations)]
        h1 = _wl_histograms(g1, l1, cfg.iterations, lookups)
        h2 = _wl_histograms(g2, l2, cfg.iterations, lookups)
        k12 = _wl_raw(h1, h2)
        k11 = _wl_raw(h1, h1)
        k22 = _wl_raw(h2, h2)
        total += k12 / np.sqrt(k11 * k22)
    return total / cfg.redraws


# ----------------------------------------------------------------------
# graphlet catalog


def _pair_positions(k: int) -> list[tuple[int, int]]:
    return list(itertools.combinations(range(k), 2))


def _canonical_form(n: int, edges: frozenset) -> frozenset:
    """Lexicographically smallest edge set over all node permutations."""
    best = None
    for perm in itertools.permutations(range(n)):
        mapped = frozenset((min(perm[u], perm[v]), max(perm[u], perm[v]))
                           for u, v in edges)
        key = tuple(sorted(mapped))
        if best is None or key < best[0]:
            best = (key, mapped)
    return best[1]


def _is_connected(n: int, edges) -> bool:
    if n == 1:
        return True
    adj = {i: [] for i in range(n)}
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    seen = {0}
    stack = [0]
    while stack:
        v = stack.pop()
        for u in adj[v]:
            if u not in seen:
                seen.add(u)
                stack.append(u)
    return len(seen) == n


def connected_graphlet_catalog(k: int) -> list[frozenset]:
    """All connected k-node graphs up to isomorphism, as canonical edge sets."""
    if k not in (3, 4, 5):
        raise ConfigError(f"graphlet size must be 3, 4, or 5, got {k}")
    pairs = _pair_positions(k)
    seen: set[frozenset] = set()
    catalog: list[frozenset] = []
    for r in range(k - 1, len(pairs) + 1):
        for subset in itertools.combinations(pairs, r):
            if not _is_connected(k, subset):
                continue
            canon = _canonical_form(k, frozenset(subset))
            if canon not in seen:
                seen.add(canon)
                catalog.append(canon)
    return catalog


class GraphletClassifier:
    """Maps induced k-node subgraphs to catalog indices in O(1).

    Every labeled graph on k nodes is a bitmask over the C(k, 2) node pairs;
    a table built once per k resolves the mask to its isomorphism type
    (-1 for disconnected masks).
    """

    def __init__(self, k: int):
        self.k = k
        self.pairs = _pair_positions(k)
        self.catalog = connected_graphlet_catalog(k)
        canon_index = {edges: i for i, edges in enumerate(self.catalog)}
        self.table = np.full(1 << len(self.pairs), -1, dtype=np.int16)
        for mask in range(self.table.size):
            edges = frozenset(p for bit, p in enumerate(self.pairs)
                              if mask >> bit & 1)
            if _is_connected(k, edges):
                self.table[mask] = canon_index[_canonical_form(k, edges)]

    @property
    def num_types(self) -> int:
        return len(self.catalog)

    def masks_of(self, adj: np.ndarray, node_sets: np.ndarray) -> np.ndarray:
        """Bitmask of each row of node indices under the graph adjacency."""
        masks = np.zeros(len(node_sets), dtype=np.int64)
        for bit, (i, j) in enumerate(self.pairs):
            masks |= adj[node_sets[:, i], node_sets[:, j]].astype(np.int64) << bit
        return masks

    def classify_edges(self, edges: frozenset) -> int:
        """Catalog index of an explicit edge set; -1 if disconnected."""
        mask = 0
        pos = {p: b for b, p in enumerate(self.pairs)}
        for u, v in edges:
            mask |= 1 << pos[(min(u, v), max(u, v))]
        return int(self.table[mask])


@lru_cache(maxsize=None)
def _classifier(k: int) -> GraphletClassifier:
    return GraphletClassifier(k)


@dataclass
class GraphletConfig:
    k: int = 5
    samples: int = 10_000
    seed: int = 0
    exact: bool = False

    def __post_init__(self):
        if self.k not in (3, 4, 5):
            raise ConfigError(f"graphlet size must be in {{3, 4, 5}}, got {self.k}")
        if self.samples < 1:
            raise ConfigError("samples must be >= 1")


def _adjacency(graph: Graph) -> np.ndarray:
    adj = np.zeros((graph.num_nodes, graph.num_nodes), dtype=bool)
    for u, v in graph.edges:
        adj[u, v] = adj[v, u] = True
    return adj


def _enumerate_connected_subsets(graph: Graph, k: int):
    """Yield every connected k-node subset exactly once (ESU enumeration).

    Each subset is grown from its smallest vertex, extending only through
    exclusive neighbors with larger ids, which guarantees no duplicates and
    never touches a disconnected candidate. Cost scales with the number of
    connected subsets, not with C(n, k).
    """
    adj = [set(ns) for ns in graph.neighbors()]

    def extend(sub: tuple, ext: set, root: int, sub_nbrs: set):
        if len(sub) == k:
            yield sub
            return
        ext = set(ext)
        while ext:
            w = ext.pop()
            new_nbrs = sub_nbrs | adj[w]
            grown = {u for u in adj[w]
                     if u > root and u not in sub_nbrs and u not in sub}
            yield from extend(sub + (w,), ext | grown, root, new_nbrs)

    for v in range(graph.num_nodes):
        first_ext = {u for u in adj[v] if u > v}
        yield from extend((v,), first_ext, v, adj[v] | {v})


def graphlet_frequencies(graph: Graph, cfg: GraphletConfig) -> np.ndarray:
    """Normalized frequency vector over connected graphlet types.

    Sampling mode draws uniform k-node subsets and re-draws any whose induced
    subgraph is disconnected, so frequencies are conditioned on connectivity.
    Exact mode enumerates connected subsets directly and produces the same
    vector as filtering a full C(n, k) enumeration down to connected types.
    """
    if graph.num_nodes < cfg.k:
        raise GraphError(f"graph has {graph.num_nodes} nodes, fewer than k={cfg.k}")
    cls = _classifier(cfg.k)
    adj = _adjacency(graph)
    counts = np.zeros(cls.num_types, dtype=np.float64)
    if cfg.exact:
        subsets = np.asarray(list(_enumerate_connected_subsets(graph, cfg.k)),
                             dtype=np.intp)
        if len(subsets):
            types = cls.table[cls.masks_of(adj, subsets)]
            np.add.at(counts, types, 1.0)
    else:
        rng = np.random.default_rng(cfg.seed)
        remaining = cfg.samples
        attempts = 0
        max_attempts = max(2000 * cfg.samples, 1_000_000)
        while remaining > 0:
            if attempts >= max_attempts:
                raise GraphError(
                    "could not sample enough connected induced subgraphs; "
                    "use exact mode for very sparse graphs")
            batch = int(min(max(4 * remaining, 4096), 200_000,
                            max_attempts - attempts))
            attempts += batch
            draw = rng.random((batch, graph.num_nodes))
            subsets = np.argpartition(draw, cfg.k - 1, axis=1)[:, :cfg.k]
            types = cls.table[cls.masks_of(adj, subsets)]
            types = types[types >= 0][:remaining]
            np.add.at(counts, types, 1.0)
            remaining -= len(types)
    total = counts.sum()
    if total == 0:
        raise GraphError("graph contains no connected induced subgraph of size k")
    return counts / total


def graphlet_similarity(g1: Graph, g2: Graph, cfg: GraphletConfig) -> float:
    """Cosine similarity of the two graphlet frequency vectors."""
    f1 = graphlet_frequencies(g1, cfg)
    f2 = graphlet_frequencies(g2, cfg)
    return float(f1 @ f2 / (np.linalg.norm(f1) * np.linalg.norm(f2)))
