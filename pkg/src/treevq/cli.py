"""Command-line entry point.

Subcommands cover the full pipeline: synthetic graph generation, vocabulary
pre-training, fine-tuning and few-shot evaluation, kernel similarity
matrices, the synthetic transferability experiment, and vocabulary
inspection. Every command is deterministic given its configuration and
master seed; floats in emitted files carry 12 significant digits.

Exit codes: 0 success, 1 configuration or validation error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .codebook import vocab_diagnostics
from .errors import (CheckpointError, ConfigError, DomainError, GraphError,
                     ShapeError)
from .finetune import (TreeTaskClassifier, fewshot_run, write_metrics_json,
                       write_nt_gap_csv, nt_gap_experiment)
from .graph import load_graph, save_graph
from .kernels import (GraphletConfig, WlConfig, graphlet_similarity,
                      wl_subtree_similarity)
from .pretrain import TreeVocabPretrainer
from .synthetic import FAMILIES, SyntheticFamily, build_synthetic
from .seeding import named_stream
from .tasks import TaskInstance, node_instances
from .transfer import TransferConfig, run_synthetic_transfer, write_transfer_csv

_VALIDATION_ERRORS = (ConfigError, GraphError, CheckpointError, ShapeError,
                      DomainError, FileNotFoundError, NotADirectoryError)


def _fmt(value: float) -> str:
    return f"{float(value):.12g}"


def _load_config(path, required: set[str], optional: set[str]) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file {path} does not exist")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as err:
            raise ConfigError(f"cannot parse config {path}: {err}") from err
    if cfg.get("version") != 1:
        raise ConfigError(f"config {path} must declare \"version\": 1")
    allowed = required | optional | {"version"}
    unknown = set(cfg) - allowed
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    missing = required - set(cfg)
    if missing:
        raise ConfigError(f"config lacks required keys: {sorted(missing)}")
    return cfg


def _check_subkeys(name: str, sub: dict, allowed: set[str]):
    unknown = set(sub) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in '{name}': {sorted(unknown)}")


def _existing(path_str: str) -> Path:
    path = Path(path_str)
    if not path.exists():
        raise FileNotFoundError(f"input path {path} does not exist")
    return path


def _out_dir(args) -> Path:
    out = Path(args.out) if args.out else Path.cwd()
    out.mkdir(parents=True, exist_ok=True)
    return out


# ----------------------------------------------------------------------
# commands


def cmd_synth(args) -> int:
    spec = SyntheticFamily(args.family, args.blocks)
    graph = build_synthetic(spec, args.dim, named_stream(args.seed, "data"))
    save_graph(graph, args.out)
    print(f"wrote {args.out}: {graph.num_nodes} nodes, {len(graph.edges)} edges")
    return 0


def cmd_pretrain(args) -> int:
    cfg = _load_config(args.config, {"graphs"},
                       {"model", "checkpoint", "curve"})
    params = cfg.get("model", {})
    _check_subkeys("model", params, set(TreeVocabPretrainer().get_params()))
    graphs = [load_graph(_existing(p)) for p in cfg["graphs"]]
    if args.seed is not None:
        params = dict(params, seed=args.seed)
    model = TreeVocabPretrainer(**params)
    model.fit(graphs)
    out = _out_dir(args)
    ckpt_path = out / cfg.get("checkpoint", "pretrain.ckpt")
    save_checkpoint(model, ckpt_path)
    curve_path = out / cfg.get("curve", "pretrain_curve.csv")
    with open(curve_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "L_total", "L_feat", "L_sem", "L_topo",
                         "vocab", "commit", "ortho", "perplexity"])
        for epoch, rec in enumerate(model.history_):
            writer.writerow([epoch] + [_fmt(rec[k]) for k in
                                       ("total", "feat", "sem", "topo",
                                        "vocab", "commit", "ortho",
                                        "perplexity")])
    print(f"wrote {ckpt_path} and {curve_path}")
    return 0


def _instances_from_config(cfg) -> list[TaskInstance]:
    graph = load_graph(_existing(cfg["dataset"]))
    task = cfg.get("task", "node")
    if task != "node":
        raise ConfigError(f"only node tasks are wired into the CLI, got {task!r}")
    return node_instances(graph)


def _classifier_params(cfg) -> dict:
    params = cfg.get("classifier", {})
    allowed = set(TreeTaskClassifier().get_params()) - {"pretrained", "seed"}
    _check_subkeys("classifier", params, allowed)
    return params


def cmd_finetune(args) -> int:
    cfg = _load_config(args.config, {"dataset"},
                       {"checkpoint", "classifier", "task", "train_split",
                        "eval_split", "metrics", "curve"})
    instances = _instances_from_config(cfg)
    graph = instances[0].graph
    train_name = cfg.get("train_split", "train")
    eval_name = cfg.get("eval_split", "eval")
    for name in (train_name, eval_name):
        if name not in graph.splits:
            raise ConfigError(f"dataset has no split named {name!r}")
    train = [instances[i] for i in graph.splits[train_name]]
    evals = [instances[i] for i in graph.splits[eval_name]]
    pretrained = None
    if cfg.get("checkpoint"):
        pretrained = load_checkpoint(_existing(cfg["checkpoint"]))
    seed = args.seed if args.seed is not None else 0
    clf = TreeTaskClassifier(pretrained=pretrained, seed=seed,
                             **_classifier_params(cfg))
    clf.fit(train, eval_instances=evals)
    result = {"task": "node", "k_shot": None, "seed": seed,
              "acc": clf.score(evals), "history": clf.history_}
    out = _out_dir(args)
    curve = out / cfg.get("curve", "finetune_curve.csv")
    metrics = out / cfg.get("metrics", "finetune_metrics.json")
    write_metrics_json(result, metrics, curve_path=curve)
    print(f"accuracy {result['acc']:.4f}; wrote {metrics}")
    return 0


def cmd_fewshot(args) -> int:
    cfg = _load_config(args.config, {"dataset", "k_shot"},
                       {"checkpoint", "classifier", "task", "metrics",
                        "curve", "nt_gap", "seeds"})
    instances = _instances_from_config(cfg)
    pretrained = None
    if cfg.get("checkpoint"):
        pretrained = load_checkpoint(_existing(cfg["checkpoint"]))
    params = _classifier_params(cfg)
    seed = args.seed if args.seed is not None else 0
    out = _out_dir(args)
    if cfg.get("nt_gap"):
        if pretrained is None:
            raise ConfigError("the negative-transfer comparison needs a "
                              "checkpoint")
        seeds = range(int(cfg.get("seeds", 10)))
        rows = nt_gap_experiment(instances, pretrained, cfg["k_shot"], seeds,
                                 **params)
        path = out / cfg.get("metrics", "nt_gap.csv")
        write_nt_gap_csv(rows, path)
        mean_gap = float(np.mean([r["gap"] for r in rows]))
        print(f"mean NT gap {mean_gap:+.4f}; wrote {path}")
        return 0
    result = fewshot_run(instances, cfg["k_shot"], seed,
                         pretrained=pretrained, **params)
    curve = out / cfg.get("curve", "fewshot_curve.csv")
    metrics = out / cfg.get("metrics", "fewshot_metrics.json")
    write_metrics_json(result, metrics, curve_path=curve)
    print(f"accuracy {result['acc']:.4f}; wrote {metrics}")
    return 0


def cmd_kernel(args) -> int:
    cfg = _load_config(args.config, {"graphs", "kernel"},
                       {"wl", "graphlet", "out"})
    paths = [( _existing(p)) for p in cfg["graphs"]]
    graphs = [load_graph(p) for p in paths]
    kind = cfg["kernel"]
    if kind == "wl":
        sub = cfg.get("wl", {})
        _check_subkeys("wl", sub, {"iterations", "feature_buckets", "redraws",
                                   "seed"})
        kcfg = WlConfig(**sub)
        compare = lambda a, b: wl_subtree_similarity(a, b, kcfg)
    elif kind == "graphlet":
        sub = cfg.get("graphlet", {})
        _check_subkeys("graphlet", sub, {"k", "samples", "seed", "exact"})
        kcfg = GraphletConfig(**sub)
        compare = lambda a, b: graphlet_similarity(a, b, kcfg)
    else:
        raise ConfigError(f"kernel must be 'wl' or 'graphlet', got {kind!r}")
    out = _out_dir(args) / cfg.get("out", "similarity.csv")
    names = [p.name for p in paths]
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["graph"] + names)
        for i, g in enumerate(graphs):
            row = [names[i]]
            for h in graphs:
                row.append(_fmt(compare(g, h)))
            writer.writerow(row)
    print(f"wrote {out}")
    return 0


def cmd_transfer(args) -> int:
    cfg = _load_config(args.config, {"source", "target"},
                       {"num_blocks", "seeds", "out", "feature_dim",
                        "gae_epochs", "gae_lr", "wl", "graphlet"})
    for fam in (cfg["source"], cfg["target"]):
        if fam not in FAMILIES:
            raise ConfigError(f"unknown family {fam!r}")
    blocks = cfg.get("num_blocks", [2, 4, 6, 8, 10])
    if isinstance(blocks, int):
        blocks = [blocks]
    seeds = cfg.get("seeds", 100)
    base_seed = args.seed if args.seed is not None else 0
    seed_list = [base_seed * 100_003 + i for i in range(int(seeds))]
    tcfg = TransferConfig()
    if "feature_dim" in cfg:
        tcfg.feature_dim = int(cfg["feature_dim"])
    if "gae_epochs" in cfg:
        tcfg.gae_epochs = int(cfg["gae_epochs"])
    if "gae_lr" in cfg:
        tcfg.gae_lr = float(cfg["gae_lr"])
    if "wl" in cfg:
        _check_subkeys("wl", cfg["wl"], {"iterations", "feature_buckets",
                                         "redraws", "seed"})
        tcfg.wl = WlConfig(**cfg["wl"])
    if "graphlet" in cfg:
        _check_subkeys("graphlet", cfg["graphlet"], {"k", "samples", "seed",
                                                     "exact"})
        tcfg.graphlet = GraphletConfig(**cfg["graphlet"])
    records = []
    for nb in blocks:
        records.extend(run_synthetic_transfer(cfg["source"], cfg["target"],
                                              int(nb), seed_list, tcfg))
    out = _out_dir(args) / cfg.get("out", "transfer.csv")
    write_transfer_csv(records, out)
    print(f"wrote {out} ({len(records)} records)")
    return 0


def cmd_inspect_vocab(args) -> int:
    model = load_checkpoint(_existing(args.checkpoint))
    usage = model.usage_
    if usage.sum() == 0:
        raise ConfigError("checkpoint carries no token usage statistics")
    indices = np.repeat(np.arange(len(usage)), usage)
    diag = vocab_diagnostics(model.codebook_, [indices])
    k = model.codebook_.num_tokens
    print(f"tokens: {k}")
    print(f"perplexity: {diag.perplexity:.4f}")
    print(f"used fraction: {diag.used_fraction:.4f}")
    print(f"collapse: {'yes' if diag.perplexity < 0.05 * k else 'no'}")
    print(f"max off-diagonal token cosine: {diag.max_offdiag_cosine:.4f}")
    top = np.argsort(usage)[::-1][:10]
    print("top tokens (index: count):")
    for idx in top:
        print(f"  {int(idx)}: {int(usage[idx])}")
    return 0


# ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="treevq",
        description="Tree-vocabulary graph learning pipelines.")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate a synthetic block graph")
    synth.add_argument("--family", required=True, choices=FAMILIES)
    synth.add_argument("--blocks", type=int, required=True)
    synth.add_argument("--dim", type=int, default=4)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", required=True)
    synth.set_defaults(func=cmd_synth)

    for name, func, helptext in (
            ("pretrain", cmd_pretrain, "pre-train encoder and vocabulary"),
            ("finetune", cmd_finetune, "fine-tune on a labeled split"),
            ("fewshot", cmd_fewshot, "k-shot fine-tuning episode"),
            ("kernel", cmd_kernel, "pairwise graph similarity matrix"),
            ("transfer", cmd_transfer, "synthetic transferability experiment")):
        cmd = sub.add_parser(name, help=helptext)
        cmd.add_argument("--config", required=True)
        cmd.add_argument("--seed", type=int, default=None)
        cmd.add_argument("--out", default=None)
        cmd.set_defaults(func=func)

    inspect = sub.add_parser("inspect-vocab", help="token usage report")
    inspect.add_argument("--checkpoint", required=True)
    inspect.set_defaults(func=cmd_inspect_vocab)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _VALIDATION_ERRORS as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except Exception as err:  # noqa: BLE001 - surface anything else as runtime
        print(f"runtime error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
