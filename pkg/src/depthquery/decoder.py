"""Single-head transformer decoder with hybrid (temporal + current) attention.

Each layer runs

    hybrid attention -> add & norm -> cross attention to image tokens -> add & norm
    -> feed-forward -> add & norm

Depth-guided queries are the only rows that get updated.  Temporal queries
are concatenated in front of them as extra keys/values in every layer and
stay frozen.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .detections import REG_DIM, DetectionSet
from .encoding import pe3d
from .errors import DimensionMismatch
from .geometry import D_MAX, D_MIN, CameraModel, RoiBounds, denormalize_point, normalize_point, unproject
from .netcore import MlpWeights, checksum, layer_norm, mlp_forward, seeded_init, sigmoid, softmax
from .querygen import QuerySet
from .simworld import FeatureMap, wrap_angle


@dataclass(frozen=True, eq=False)
class AttentionWeights:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray

    @property
    def dim(self) -> int:
        return self.wq.shape[0]

    def arrays(self) -> list[np.ndarray]:
        return [self.wq, self.wk, self.wv, self.wo]

    @classmethod
    def seeded(cls, seed: int, dim: int, *tags: int) -> "AttentionWeights":
        return cls(*(seeded_init(seed, dim, dim, *tags, i) for i in range(4)))


@dataclass(frozen=True, eq=False)
class LayerWeights:
    hybrid: AttentionWeights
    cross: AttentionWeights
    ffn: MlpWeights
    norm_gain: np.ndarray  # (3, C)
    norm_bias: np.ndarray  # (3, C)

    def arrays(self) -> list[np.ndarray]:
        return self.hybrid.arrays() + self.cross.arrays() + self.ffn.arrays() + [self.norm_gain, self.norm_bias]


@dataclass(frozen=True, eq=False)
class HeadWeights:
    cls: MlpWeights
    reg: MlpWeights

    @property
    def n_classes(self) -> int:
        return self.cls.out_dim

    def arrays(self) -> list[np.ndarray]:
        return self.cls.arrays() + self.reg.arrays()

    @classmethod
    def seeded(cls, seed: int, dim: int, n_classes: int) -> "HeadWeights":
        return cls(MlpWeights.seeded(seed, dim, n_classes, dim, 61), MlpWeights.seeded(seed, dim, REG_DIM, dim, 62))

    @classmethod
    def zeros(cls, dim: int, n_classes: int) -> "HeadWeights":
        return cls(MlpWeights.zeros(dim, n_classes), MlpWeights.zeros(dim, REG_DIM))


@dataclass(frozen=True, eq=False)
class DecoderWeights:
    layers: tuple
    head: HeadWeights

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    def arrays(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out += layer.arrays()
        return out + self.head.arrays()

    def checksum(self) -> str:
        return checksum(self.arrays())

    @classmethod
    def seeded(cls, seed: int, dim: int, n_layers: int = 6, n_classes: int = 3, ffn_hidden: int | None = None):
        layers = tuple(
            LayerWeights(
                hybrid=AttentionWeights.seeded(seed, dim, 51, i, 0),
                cross=AttentionWeights.seeded(seed, dim, 51, i, 1),
                ffn=MlpWeights.seeded(seed, dim, dim, ffn_hidden, 52, i),
                norm_gain=np.ones((3, dim)),
                norm_bias=np.zeros((3, dim)),
            )
            for i in range(n_layers)
        )
        return cls(layers, HeadWeights.seeded(seed, dim, n_classes))


@dataclass(frozen=True, eq=False)
class ImageTokens:
    features: np.ndarray  # (T, C)
    pos: np.ndarray  # (T, C)
    camera: np.ndarray  # (T,)

    def __len__(self) -> int:
        return len(self.features)

    @property
    def values(self) -> np.ndarray:
        return self.features + self.pos


def scaled_dot_product_attention(q: np.ndarray, k: np.ndarray, v: np.ndarray, return_weights: bool = False):
    attn = softmax(q @ k.T / math.sqrt(q.shape[-1]), axis=-1)
    out = attn @ v
    return (out, attn) if return_weights else out


def _attend(x_query: np.ndarray, x_kv: np.ndarray, w: AttentionWeights, return_weights: bool = False):
    dim = w.dim
    if x_query.shape[-1] != dim or x_kv.shape[-1] != dim:
        raise DimensionMismatch(f"attention expects width {dim}, got {x_query.shape[-1]} / {x_kv.shape[-1]}")
    return scaled_dot_product_attention(x_query @ w.wq.T, x_kv @ w.wk.T, x_kv @ w.wv.T, return_weights)


def self_attention(x: np.ndarray, w: AttentionWeights, return_weights: bool = False):
    return _attend(x, x, w, return_weights)


def hybrid_attention(x_dep: np.ndarray, x_temp: np.ndarray, w: AttentionWeights, return_weights: bool = False):
    """Depth-guided rows attend over ``concat(temporal, depth-guided)``.

    Returns the attention output before the output projection (n_dep, C).
    """
    x_temp = np.asarray(x_temp, dtype=float).reshape(-1, x_dep.shape[-1])
    x_all = x_dep if len(x_temp) == 0 else np.concatenate([x_temp, x_dep], axis=0)
    return _attend(x_dep, x_all, w, return_weights)


def cross_attention(x: np.ndarray, tokens: ImageTokens, w: AttentionWeights, return_weights: bool = False):
    return _attend(x, tokens.values, w, return_weights)


def decode(q_dep: QuerySet, q_temp: QuerySet, tokens: ImageTokens, weights: DecoderWeights) -> np.ndarray:
    """Refine depth-guided queries; returns (n_dep, C) content embeddings."""
    h = q_dep.embeddings
    if len(h) == 0:
        return h
    pos = q_dep.q_pos
    temp = q_temp.embeddings
    for layer in weights.layers:
        g, b = layer.norm_gain, layer.norm_bias
        a = hybrid_attention(h + pos, temp, layer.hybrid) @ layer.hybrid.wo.T
        h = layer_norm(h + a, g[0], b[0])
        if len(tokens):
            c = cross_attention(h + pos, tokens, layer.cross) @ layer.cross.wo.T
            h = layer_norm(h + c, g[1], b[1])
        h = layer_norm(h + mlp_forward(layer.ffn, h), g[2], b[2])
    return h


def head(embeddings: np.ndarray, p_ref: np.ndarray, w: HeadWeights, roi: RoiBounds = RoiBounds()) -> DetectionSet:
    """Classification scores and boxes; centers are offsets from the normalized reference point."""
    embeddings = np.asarray(embeddings, dtype=float).reshape(-1, w.cls.in_dim)
    if len(embeddings) == 0:
        return DetectionSet.empty(w.n_classes)
    logits = mlp_forward(w.cls, embeddings)
    reg = mlp_forward(w.reg, embeddings)
    ref_n, _ = normalize_point(p_ref, roi)
    centers = denormalize_point(ref_n + reg[:, 0:3], roi)
    sizes = np.exp(reg[:, 3:6])
    yaws = wrap_angle(np.arctan2(reg[:, 6], reg[:, 7]))
    return DetectionSet(sigmoid(logits), centers, sizes, np.atleast_1d(yaws), reg[:, 8:10].copy(), logits)


def build_image_tokens(
    features: list[FeatureMap],
    rig: list[CameraModel],
    pe_weights: MlpWeights,
    roi: RoiBounds = RoiBounds(),
    depth: float = 0.5 * (D_MIN + D_MAX),
) -> ImageTokens:
    """Flatten feature maps; each node's position embedding comes from its pixel center at ``depth``."""
    feats, pts, cams = [], [], []
    for fm in sorted(features, key=lambda f: f.camera_index):
        c, hf, wf = fm.values.shape
        jj, ii = np.meshgrid(np.arange(wf), np.arange(hf))
        uv = np.stack([(jj + 0.5) * fm.stride, (ii + 0.5) * fm.stride], axis=-1).reshape(-1, 2)
        pts.append(unproject(rig[fm.camera_index], uv, depth))
        feats.append(fm.values.reshape(c, -1).T)
        cams.append(np.full(hf * wf, fm.camera_index))
    if not feats:
        dim = pe_weights.out_dim
        return ImageTokens(np.zeros((0, dim)), np.zeros((0, dim)), np.zeros(0, int))
    p = np.concatenate(pts)
    return ImageTokens(np.concatenate(feats), pe3d(normalize_point(p, roi)[0], pe_weights), np.concatenate(cams))
