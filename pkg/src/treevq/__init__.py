"""treevq: graph learning with a vector-quantized vocabulary of message-passing trees."""

from .bound import DistanceBoundReport, check_distance_bound
from .checkpoint import load_checkpoint, read_checkpoint, save_checkpoint
from .codebook import Codebook, QuantizeResult, VocabDiagnostics, vocab_diagnostics
from .discrepancy import CmdConfig, cmd, transferability
from .encoder import SageLayer, TreeEncoder
from .finetune import (LinearHead, MemoryBank, TreeTaskClassifier,
                       build_memory_bank, fewshot_run, nt_gap_experiment,
                       proto_logits, task_embedding)
from .gae import GraphAutoencoder
from .graph import Graph, load_graph, save_graph
from .kernels import (GraphletConfig, WlConfig, connected_graphlet_catalog,
                      graphlet_frequencies, graphlet_similarity,
                      wl_subtree_similarity)
from .pretrain import TreeVocabPretrainer
from .synthetic import SyntheticFamily, build_synthetic, make_community_graph
from .tasks import TaskInstance, node_instances
from .transfer import (TransferConfig, TransferRecord, run_synthetic_transfer,
                       spearman, write_transfer_csv)
from .transforms import (AugmentConfig, augment, kshot_split,
                         negative_edge_sample, sample_subgraph)

__all__ = [
    "AugmentConfig", "CmdConfig", "Codebook", "DistanceBoundReport",
    "Graph", "GraphAutoencoder", "GraphletConfig", "LinearHead", "MemoryBank",
    "QuantizeResult", "SageLayer", "SyntheticFamily", "TaskInstance",
    "TransferConfig", "TransferRecord", "TreeEncoder", "TreeTaskClassifier",
    "TreeVocabPretrainer", "VocabDiagnostics", "WlConfig", "augment",
    "build_memory_bank", "build_synthetic", "check_distance_bound", "cmd",
    "connected_graphlet_catalog", "fewshot_run", "graphlet_frequencies",
    "graphlet_similarity", "kshot_split", "load_checkpoint", "load_graph",
    "make_community_graph", "negative_edge_sample", "node_instances",
    "nt_gap_experiment", "proto_logits", "read_checkpoint",
    "run_synthetic_transfer", "sample_subgraph", "save_checkpoint",
    "save_graph", "spearman", "task_embedding", "transferability",
    "vocab_diagnostics", "wl_subtree_similarity",
]
