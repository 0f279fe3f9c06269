"""AdamW optimizer and exponential moving averages over named parameters."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor
from .errors import ShapeError, TrainingError


class AdamW:
    """Decoupled weight-decay Adam over a dict of named parameter tensors."""

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-4,
                 weight_decay: float = 1e-5, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = dict(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def step(self):
        """Apply one update from the ``.grad`` fields; missing grads count as zero."""
        self.step_count += 1
        t = self.step_count
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            if g.shape != p.data.shape:
                raise ShapeError(f"gradient shape {g.shape} does not match "
                                 f"parameter '{name}' shape {p.data.shape}")
            if not np.all(np.isfinite(g)):
                raise TrainingError(f"non-finite gradient for parameter '{name}'")
            p.data -= self.lr * self.weight_decay * p.data
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            m_hat = self.m[name] / (1.0 - self.beta1 ** t)
            v_hat = self.v[name] / (1.0 - self.beta2 ** t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Flat view of moment buffers for checkpointing."""
        out = {}
        for name in self.params:
            out[f"m.{name}"] = self.m[name]
            out[f"v.{name}"] = self.v[name]
        return out


def ema_update(target: dict[str, Tensor], source: dict[str, Tensor], decay: float):
    """In-place ``target <- decay * target + (1 - decay) * source``, by name."""
    if not 0.0 <= decay <= 1.0:
        raise ValueError(f"decay must be in [0, 1], got {decay}")
    if target.keys() != source.keys():
        raise ShapeError("target and source parameter names differ")
    for name, t in target.items():
        s = source[name]
        if t.data.shape != s.data.shape:
            raise ShapeError(f"shape mismatch for '{name}': "
                             f"{t.data.shape} vs {s.data.shape}")
        t.data *= decay
        t.data += (1.0 - decay) * s.data
