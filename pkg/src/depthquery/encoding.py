"""3D point position encoder: per-axis sinusoids, concatenated, compressed by an MLP."""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch
from .netcore import MlpWeights, mlp_forward

TEMPERATURE = 10000.0


def sine_encode(t, half_dim: int, temperature: float = TEMPERATURE) -> np.ndarray:
    """Interleaved [sin, cos] encoding of scalar coordinate(s) ``t`` -> (..., half_dim).

    Inputs are scaled by pi, so a normalized coordinate in [0, 1] spans half a
    period of the lowest frequency and the cosine channel stays injective.
    """
    if half_dim % 2:
        raise ValueError("half_dim must be even")
    t = np.asarray(t, dtype=float)
    k = np.arange(half_dim // 2, dtype=float)
    div = temperature ** (2.0 * k / half_dim)
    arg = (t[..., None] * np.pi) / div
    out = np.empty(t.shape + (half_dim,))
    out[..., 0::2] = np.sin(arg)
    out[..., 1::2] = np.cos(arg)
    return out


def concat_sine(points, dim: int, temperature: float = TEMPERATURE) -> np.ndarray:
    """(..., 3) normalized points -> (..., 3*dim/2) concatenation of per-axis encodings."""
    p = np.asarray(points, dtype=float)
    half = dim // 2
    return np.concatenate([sine_encode(p[..., i], half, temperature) for i in range(3)], axis=-1)


def pe3d(points, weights: MlpWeights, temperature: float = TEMPERATURE) -> np.ndarray:
    """Position embedding of width C for normalized 3D point(s)."""
    dim = weights.out_dim
    if dim % 4 or weights.in_dim != 3 * dim // 2:
        raise DimensionMismatch(f"pe3d expects an MLP mapping {3 * dim // 2} -> {dim}, got {weights.in_dim} -> {dim}")
    return mlp_forward(weights, concat_sine(points, dim, temperature))


def pe3d_weights(seed: int, dim: int, hidden: int | None = None) -> MlpWeights:
    return MlpWeights.seeded(seed, 3 * dim // 2, dim, hidden, 11)
