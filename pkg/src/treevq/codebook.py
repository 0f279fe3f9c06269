"""Discrete tree-token vocabulary learned by vector quantization.

A codebook holds K learnable token vectors. Embeddings are assigned to their
nearest token under cosine distance (Euclidean available as a config
switch); the squared-error pulls of the assignment are split stop-gradient
style so the vocabulary loss moves only the tokens and the commitment loss
only the encoder. Quantized rows reach downstream decoders through a
straight-through estimator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, DomainError, ShapeError

_METRICS = ("cosine", "euclidean")


@dataclass
class QuantizeResult:
    indices: np.ndarray          # chosen token per input row
    quantized: ad.Tensor         # straight-through tokens, gradient flows to z
    vocab_loss: ad.Tensor        # pulls tokens toward stopped embeddings
    commit_loss: ad.Tensor       # pulls embeddings toward stopped tokens
    tokens_raw: np.ndarray       # selected token rows before straight-through


class Codebook:
    """K learnable tokens of width d; rows are re-seeded if they degenerate."""

    def __init__(self, num_tokens: int, dim: int,
                 rng: np.random.Generator | None = None,
                 metric: str = "cosine"):
        if num_tokens < 1 or dim < 1:
            raise ConfigError("codebook needs at least one token and one dimension")
        if metric not in _METRICS:
            raise ConfigError(f"metric must be one of {_METRICS}, got {metric!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        raw = rng.normal(scale=1.0 / np.sqrt(dim), size=(num_tokens, dim))
        raw /= np.linalg.norm(raw, axis=1, keepdims=True)
        self.tokens = ad.Tensor(raw, requires_grad=True)
        self.metric = metric

    @property
    def num_tokens(self) -> int:
        return self.tokens.shape[0]

    @property
    def dim(self) -> int:
        return self.tokens.shape[1]

    def parameters(self) -> dict[str, ad.Tensor]:
        return {"tokens": self.tokens}

    # ------------------------------------------------------------------
    def assign(self, z: np.ndarray) -> np.ndarray:
        """Nearest-token index per row; ties break to the lowest index."""
        z = np.asarray(z, dtype=np.float64)
        if z.ndim != 2 or z.shape[1] != self.dim:
            raise ShapeError(f"embeddings {z.shape} do not match codebook "
                             f"dimension {self.dim}")
        c = self.tokens.data
        if self.metric == "cosine":
            norms = np.linalg.norm(z, axis=1)
            if np.any(norms < 1e-12):
                raise DomainError("cannot quantize a zero-norm embedding")
            zn = z / norms[:, None]
            cn = c / np.linalg.norm(c, axis=1, keepdims=True)
            distance = 1.0 - zn @ cn.T
        else:
            distance = (np.sum(z * z, axis=1)[:, None]
                        - 2.0 * z @ c.T + np.sum(c * c, axis=1)[None, :])
        return np.argmin(distance, axis=1)

    def quantize(self, z: ad.Tensor) -> QuantizeResult:
        """Assignment plus the two stop-gradient losses of the assignment."""
        indices = self.assign(z.data)
        selected = ad.gather_rows(self.tokens, indices)
        vocab_loss = ad.tmean(ad.sum_squares_rows(
            ad.sub(ad.stop_gradient(z), selected)))
        commit_loss = ad.tmean(ad.sum_squares_rows(
            ad.sub(z, ad.stop_gradient(selected))))
        quantized = ad.straight_through(selected, z)
        return QuantizeResult(indices=indices, quantized=quantized,
                              vocab_loss=vocab_loss, commit_loss=commit_loss,
                              tokens_raw=self.tokens.data[indices].copy())

    def lookup(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Plain (indices, token rows) without any gradient machinery."""
        indices = self.assign(z)
        return indices, self.tokens.data[indices].copy()

    # ------------------------------------------------------------------
    def ortho_loss(self, weight: float = 1.0) -> ad.Tensor:
        """weight * ||C C^T - I||_F^2 / K^2 on the raw token matrix."""
        k = self.num_tokens
        gram = ad.matmul(self.tokens, ad.transpose(self.tokens))
        diff = ad.sub(gram, ad.constant(np.eye(k)))
        return ad.scale(ad.tsum(ad.power(diff, 2.0)), weight / (k * k))

    def fix_degenerate_tokens(self, rng: np.random.Generator,
                              fallback: np.ndarray | None = None) -> int:
        """Re-seed near-zero rows (norm < 1e-8); returns how many were reset."""
        norms = np.linalg.norm(self.tokens.data, axis=1)
        bad = np.flatnonzero(norms < 1e-8)
        for row in bad:
            self.tokens.data[row] = _reseed_row(self.dim, rng, fallback)
        return len(bad)

    def reseed_dead_tokens(self, used: np.ndarray, rng: np.random.Generator,
                           recent: np.ndarray | None = None) -> int:
        """Re-seed tokens that received no assignments; returns the count."""
        dead = np.flatnonzero(~used)
        for row in dead:
            self.tokens.data[row] = _reseed_row(self.dim, rng, recent)
        return len(dead)


def _reseed_row(dim: int, rng: np.random.Generator,
                pool: np.ndarray | None) -> np.ndarray:
    """Fresh token: a recent embedding direction, or a random unit vector.

    Re-seeded rows are scaled to unit norm so a burst of replacements cannot
    blow up the orthogonality penalty; assignment is cosine-based, so only
    the direction matters.
    """
    if pool is not None and len(pool):
        row = pool[rng.integers(len(pool))].copy()
        norm = np.linalg.norm(row)
        if norm > 1e-8:
            return row / norm
    row = rng.normal(scale=1.0 / np.sqrt(dim), size=dim)
    return row / np.linalg.norm(row)


@dataclass
class VocabDiagnostics:
    usage: np.ndarray
    perplexity: float
    used_fraction: float
    collapsed: bool
    max_offdiag_cosine: float


def vocab_diagnostics(codebook: Codebook, index_batches) -> VocabDiagnostics:
    """Usage histogram, assignment perplexity, and a collapse flag.

    Perplexity is exp of the entropy of the empirical token distribution;
    collapse is flagged when fewer than 5% of tokens were ever used.
    """
    usage = np.zeros(codebook.num_tokens, dtype=np.int64)
    total = 0
    for indices in index_batches:
        np.add.at(usage, np.asarray(indices, dtype=np.intp), 1)
        total += len(indices)
    if total == 0:
        raise ConfigError("vocab_diagnostics needs at least one assignment batch")
    p = usage / total
    nz = p[p > 0]
    perplexity = float(np.exp(-np.sum(nz * np.log(nz))))
    used_fraction = float(np.mean(usage > 0))
    cn = codebook.tokens.data / np.linalg.norm(codebook.tokens.data, axis=1,
                                               keepdims=True)
    gram = cn @ cn.T
    np.fill_diagonal(gram, -np.inf)
    return VocabDiagnostics(
        usage=usage,
        perplexity=perplexity,
        used_fraction=used_fraction,
        collapsed=used_fraction < 0.05,
        max_offdiag_cosine=float(gram.max()) if codebook.num_tokens > 1 else 0.0,
    )
