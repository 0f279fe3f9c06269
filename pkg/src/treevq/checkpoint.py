"""Versioned binary checkpoints for the pre-trained model.

Layout: 7-byte magic, one version byte, a length-prefixed JSON header
(configuration echo, RNG state, token usage, and the ordered array
manifest), then the raw little-endian float64 bytes of every named array in
manifest order. A human-readable ``<path>.manifest.json`` sidecar mirrors
the shapes. Round trips are byte-exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .pretrain import TreeVocabPretrainer

MAGIC = b"TVQCKPT"
VERSION = 1


def _named_arrays(model: TreeVocabPretrainer,
                  include_optimizer: bool) -> dict[str, np.ndarray]:
    arrays: dict[str, np.ndarray] = {}
    for name, p in model._parameters().items():
        arrays[f"param.{name}"] = p.data
    for name, b in model.encoder_.buffers().items():
        arrays[f"buffer.encoder.{name}"] = b
    for name, p in model.target_encoder_.parameters().items():
        arrays[f"target.{name}"] = p.data
    for name, b in model.target_encoder_.buffers().items():
        arrays[f"buffer.target.{name}"] = b
    arrays["usage"] = model.usage_.astype(np.float64)
    if include_optimizer:
        for name, arr in model.optimizer_.state_arrays().items():
            arrays[f"opt.{name}"] = arr
        arrays["opt.step_count"] = np.asarray(
            [float(model.optimizer_.step_count)])
    return arrays


def save_checkpoint(model: TreeVocabPretrainer, path,
                    include_optimizer: bool = False,
                    rng_state: dict | None = None):
    """Serialize a fitted pre-trainer; writes the manifest sidecar too."""
    if not hasattr(model, "encoder_"):
        raise CheckpointError("cannot checkpoint an unfitted model")
    arrays = _named_arrays(model, include_optimizer)
    header = {
        "version": VERSION,
        "config": model.get_params(),
        "feature_dim": model.feature_dim_,
        "edge_feature_dim": model.edge_feature_dim_,
        "rng_state": rng_state,
        "include_optimizer": include_optimizer,
        "arrays": [{"name": k, "shape": list(v.shape)} for k, v in arrays.items()],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<B", VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for value in arrays.values():
            fh.write(np.ascontiguousarray(value, dtype="<f8").tobytes())
    manifest = {"version": VERSION, "arrays": header["arrays"],
                "config": header["config"]}
    with open(str(path) + ".manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Parse and fully validate a checkpoint file; no partial results."""
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 9 or raw[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint file")
    version = raw[len(MAGIC)]
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}, "
                              f"expected {VERSION}")
    offset = len(MAGIC) + 1
    (blob_len,) = struct.unpack_from("<Q", raw, offset)
    offset += 8
    if offset + blob_len > len(raw):
        raise CheckpointError(f"{path} is truncated inside the header")
    try:
        header = json.loads(raw[offset:offset + blob_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise CheckpointError(f"{path} has a corrupt header: {err}") from err
    offset += blob_len
    arrays: dict[str, np.ndarray] = {}
    for entry in header["arrays"]:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        nbytes = count * 8
        if offset + nbytes > len(raw):
            raise CheckpointError(f"{path} is truncated inside array "
                                  f"'{entry['name']}'")
        flat = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
        arrays[entry["name"]] = flat.reshape(entry["shape"]).copy()
        offset += nbytes
    if offset != len(raw):
        raise CheckpointError(f"{path} carries {len(raw) - offset} unexpected "
                              "trailing bytes")
    return header, arrays


def load_checkpoint(path, expect: dict | None = None) -> TreeVocabPretrainer:
    """Rebuild the pre-trainer from a checkpoint.

    ``expect`` optionally pins configuration fields (say hidden_dim); any
    disagreement with the stored configuration is an error.
    """
    header, arrays = read_checkpoint(path)
    config = header["config"]
    if expect:
        for key, wanted in expect.items():
            stored = config.get(key)
            if stored != wanted:
                raise CheckpointError(
                    f"checkpoint has {key}={stored}, caller expects {wanted}")
    model = TreeVocabPretrainer(**config)
    model._init_state(header["feature_dim"], header["edge_feature_dim"])
    for name, p in model._parameters().items():
        stored = arrays[f"param.{name}"]
        if stored.shape != p.data.shape:
            raise CheckpointError(f"array 'param.{name}' has shape "
                                  f"{stored.shape}, model expects {p.data.shape}")
        p.data = stored
    for name, p in model.target_encoder_.parameters().items():
        p.data = arrays[f"target.{name}"]
    model.encoder_.set_buffers({n: arrays[f"buffer.encoder.{n}"]
                                for n in model.encoder_.buffers()})
    model.target_encoder_.set_buffers({n: arrays[f"buffer.target.{n}"]
                                       for n in model.target_encoder_.buffers()})
    model.usage_ = arrays["usage"].astype(np.int64)
    if header.get("include_optimizer"):
        for name in model.optimizer_.params:
            model.optimizer_.m[name] = arrays[f"opt.m.{name}"]
            model.optimizer_.v[name] = arrays[f"opt.v.{name}"]
        model.optimizer_.step_count = int(arrays["opt.step_count"][0])
    model.rng_state_ = header.get("rng_state")
    return model
