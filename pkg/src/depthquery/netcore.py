"""Small dense-numerics toolkit: linear layers, two-layer MLPs, softmax, seeded init.

Weights are frozen numpy arrays; there is no autodiff.  Every initializer is
driven by numpy's PCG64 generator, which produces the same stream on every
platform for a given seed.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch


def _rng(seed, *tags: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, tags)])))


def seeded_init(seed: int, rows: int, cols: int, *tags: int) -> np.ndarray:
    """Uniform(-1/sqrt(cols), 1/sqrt(cols)) matrix, bit-identical for the same seed and tags."""
    if rows <= 0 or cols <= 0:
        raise ValueError("rows and cols must be positive")
    bound = 1.0 / np.sqrt(cols)
    return _rng(seed, *tags).uniform(-bound, bound, size=(rows, cols))


def linear(W: np.ndarray, b: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``W @ x + b`` for a single vector or a batch of row vectors (n, in)."""
    W = np.asarray(W, dtype=float)
    b = np.asarray(b, dtype=float)
    x = np.asarray(x, dtype=float)
    if W.ndim != 2 or b.shape != (W.shape[0],) or x.shape[-1] != W.shape[1]:
        raise DimensionMismatch(f"linear: W{W.shape}, b{b.shape}, x{x.shape}")
    return x @ W.T + b


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


@dataclass(frozen=True, eq=False)
class MlpWeights:
    """Two linear layers with a ReLU in between."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        if self.w1.shape[0] != self.w2.shape[1]:
            raise DimensionMismatch("layer-1 output width must equal layer-2 input width")
        if self.b1.shape != (self.w1.shape[0],) or self.b2.shape != (self.w2.shape[0],):
            raise DimensionMismatch("bias widths do not match their layers")

    @property
    def in_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    @property
    def out_dim(self) -> int:
        return self.w2.shape[0]

    def arrays(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2]

    @classmethod
    def seeded(cls, seed: int, in_dim: int, out_dim: int, hidden: int | None = None, *tags: int) -> "MlpWeights":
        hidden = in_dim if hidden is None else hidden
        return cls(
            w1=seeded_init(seed, hidden, in_dim, *tags, 0),
            b1=seeded_init(seed, 1, hidden, *tags, 1)[0] * 0.1,
            w2=seeded_init(seed, out_dim, hidden, *tags, 2),
            b2=seeded_init(seed, 1, out_dim, *tags, 3)[0] * 0.1,
        )

    @classmethod
    def zeros(cls, in_dim: int, out_dim: int, hidden: int | None = None) -> "MlpWeights":
        hidden = in_dim if hidden is None else hidden
        return cls(np.zeros((hidden, in_dim)), np.zeros(hidden), np.zeros((out_dim, hidden)), np.zeros(out_dim))


def mlp_forward(w: MlpWeights, x: np.ndarray) -> np.ndarray:
    return linear(w.w2, w.b2, relu(linear(w.w1, w.b1, x)))


def softmax(v: np.ndarray, axis: int = -1) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    e = np.exp(v - np.max(v, axis=axis, keepdims=True))
    return e / np.sum(e, axis=axis, keepdims=True)


def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gain + bias


def checksum(arrays) -> str:
    """SHA-256 over the raw bytes of a sequence of arrays (order-sensitive)."""
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a, dtype=np.float64)
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()
