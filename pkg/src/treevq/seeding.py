"""Named random streams derived from one master seed.

Each consumer (data generation, initialization, augmentation, sampling)
draws from its own stream, so toggling one stage never shifts the randomness
of another. Stream identity comes from a stable digest of the name, not from
Python's salted ``hash``.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _digest(name: str) -> int:
    return int.from_bytes(hashlib.sha256(name.encode()).digest()[:8], "little")


def named_stream(master_seed: int, name: str) -> np.random.Generator:
    """Independent generator for (master_seed, name)."""
    return np.random.default_rng(np.random.SeedSequence(
        entropy=int(master_seed), spawn_key=(_digest(name),)))


def stream_state(rng: np.random.Generator) -> dict:
    """JSON-serializable snapshot of a generator's state."""
    return rng.bit_generator.state


def restore_stream(state: dict) -> np.random.Generator:
    rng = np.random.default_rng(0)
    rng.bit_generator.state = state
    return rng
