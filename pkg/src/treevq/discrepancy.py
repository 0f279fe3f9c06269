"""Central moment discrepancy between two sample matrices.

The discrepancy sums the distance between means and between higher central
moments of two empirical distributions, each term scaled by the width of the
value interval raised to the moment order. Its floored inverse serves as the
transferability score in the synthetic experiments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError


@dataclass
class CmdConfig:
    moments: int = 5
    interval: tuple[float, float] | None = None  # None: per-dim min/max of X u Y
    eps: float = 1e-6

    def __post_init__(self):
        if self.moments < 1:
            raise ConfigError("moments must be >= 1")
        if self.interval is not None and self.interval[1] <= self.interval[0]:
            raise ConfigError("interval upper bound must exceed lower bound")
        if self.eps <= 0:
            raise ConfigError("eps must be positive")


def cmd(x: np.ndarray, y: np.ndarray, cfg: CmdConfig | None = None) -> float:
    """CMD_K(x, y) with per-dimension interval normalization.

    The first term is the scaled distance between means; orders 2..K add the
    scaled distances between elementwise central moments. Dimensions that are
    constant across both samples contribute nothing.
    """
    cfg = cfg or CmdConfig()
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[1] != y.shape[1]:
        raise ShapeError(f"cmd: incompatible sample shapes {x.shape} and {y.shape}")
    if x.shape[0] < 2 or y.shape[0] < 2:
        raise ShapeError("cmd needs at least 2 samples per distribution")
    if cfg.interval is not None:
        width = np.full(x.shape[1], cfg.interval[1] - cfg.interval[0])
    else:
        both = np.concatenate([x, y], axis=0)
        width = both.max(axis=0) - both.min(axis=0)
    width = np.maximum(width, 1e-12)
    mx, my = x.mean(axis=0), y.mean(axis=0)
    total = float(np.linalg.norm((mx - my) / width))
    cx, cy = x - mx, y - my
    for order in range(2, cfg.moments + 1):
        momx = np.mean(cx ** order, axis=0)
        momy = np.mean(cy ** order, axis=0)
        total += float(np.linalg.norm((momx - momy) / width ** order))
    return total


def transferability(x: np.ndarray, y: np.ndarray,
                    cfg: CmdConfig | None = None) -> float:
    """Inverse discrepancy with an epsilon floor, higher means more transferable."""
    cfg = cfg or CmdConfig()
    return 1.0 / (cmd(x, y, cfg) + cfg.eps)
