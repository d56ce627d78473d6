from __future__ import annotations

import math

import numpy as np
import pytest

from depthquery.decoder import (
    AttentionWeights,
    DecoderWeights,
    HeadWeights,
    ImageTokens,
    build_image_tokens,
    cross_attention,
    decode,
    head,
    hybrid_attention,
    self_attention,
)
from depthquery.encoding import pe3d, pe3d_weights
from depthquery.errors import DimensionMismatch
from depthquery.geometry import RoiBounds, normalize_point, unproject
from depthquery.querygen import QuerySet
from depthquery.simworld import FeatureMap, surround_rig

DIM = 8


def loop_attention(xq, xkv, w):
    """Row-by-row scaled dot-product attention written with explicit loops."""
    q = [w.wq @ x for x in xq]
    k = [w.wk @ x for x in xkv]
    v = [w.wv @ x for x in xkv]
    out, weights = [], []
    for qi in q:
        scores = [float(qi @ kj) / math.sqrt(len(qi)) for kj in k]
        m = max(scores)
        e = [math.exp(s - m) for s in scores]
        z = sum(e)
        a = [x / z for x in e]
        weights.append(a)
        out.append(sum(aj * vj for aj, vj in zip(a, v)))
    return np.array(out), np.array(weights)


def _queries(rng, n, dim=DIM):
    return QuerySet(rng.standard_normal((n, dim)), rng.standard_normal((n, dim)), rng.uniform(-20, 20, (n, 3)))


def _tokens(rng, n, dim=DIM):
    return ImageTokens(rng.standard_normal((n, dim)), rng.standard_normal((n, dim)), np.zeros(n, int))


class TestHybridAttention:
    @pytest.mark.parametrize("seed", range(5))
    def test_empty_temporal_is_self_attention(self, seed):
        rng = np.random.default_rng(seed)
        w = AttentionWeights.seeded(seed, DIM)
        x = rng.standard_normal((6, DIM))
        assert np.array_equal(hybrid_attention(x, np.zeros((0, DIM)), w), self_attention(x, w))

    def test_single_query(self, rng):
        w = AttentionWeights.seeded(1, DIM)
        x = rng.standard_normal((1, DIM))
        np.testing.assert_allclose(hybrid_attention(x, [], w), (w.wv @ x[0])[None], atol=1e-15)

    def test_loop_oracle(self, rng):
        w = AttentionWeights.seeded(2, DIM)
        x_dep, x_temp = rng.standard_normal((3, DIM)), rng.standard_normal((2, DIM))
        out, attn = hybrid_attention(x_dep, x_temp, w, return_weights=True)
        ref_out, ref_attn = loop_attention(x_dep, np.concatenate([x_temp, x_dep]), w)
        assert attn.shape == (3, 5)
        np.testing.assert_allclose(out, ref_out, rtol=0, atol=1e-10)
        np.testing.assert_allclose(attn, ref_attn, rtol=0, atol=1e-10)
        np.testing.assert_allclose(attn.sum(axis=1), 1.0, atol=1e-12)

    def test_temporal_permutation_invariance(self, rng):
        w = AttentionWeights.seeded(3, DIM)
        x_dep, x_temp = rng.standard_normal((4, DIM)), rng.standard_normal((7, DIM))
        perm = rng.permutation(7)
        np.testing.assert_allclose(hybrid_attention(x_dep, x_temp[perm], w), hybrid_attention(x_dep, x_temp, w), atol=1e-12)

    def test_width_mismatch(self, rng):
        with pytest.raises(DimensionMismatch):
            hybrid_attention(rng.standard_normal((2, DIM + 1)), [], AttentionWeights.seeded(0, DIM))


class TestCrossAttention:
    def test_one_token(self, rng):
        w = AttentionWeights.seeded(4, DIM)
        tok = _tokens(rng, 1)
        out = cross_attention(rng.standard_normal((5, DIM)), tok, w)
        np.testing.assert_allclose(out, np.tile(w.wv @ tok.values[0], (5, 1)), atol=1e-14)

    def test_loop_oracle(self, rng):
        w = AttentionWeights.seeded(5, DIM)
        x, tok = rng.standard_normal((4, DIM)), _tokens(rng, 10)
        out, attn = cross_attention(x, tok, w, return_weights=True)
        ref_out, _ = loop_attention(x, tok.values, w)
        np.testing.assert_allclose(out, ref_out, rtol=0, atol=1e-10)
        np.testing.assert_allclose(attn.sum(axis=1), 1.0, atol=1e-12)


class TestDecode:
    weights = DecoderWeights.seeded(0, DIM, n_layers=2, n_classes=3)

    def test_zero_layers_identity(self, rng):
        q = _queries(rng, 5)
        out = decode(q, _queries(rng, 3), _tokens(rng, 4), DecoderWeights.seeded(0, DIM, n_layers=0))
        np.testing.assert_array_equal(out, q.embeddings)

    @pytest.mark.parametrize("n_temp", [0, 1, 9])
    def test_output_count(self, rng, n_temp):
        out = decode(_queries(rng, 6), _queries(rng, n_temp), _tokens(rng, 12), self.weights)
        assert out.shape == (6, DIM)

    def test_empty_depth_queries(self, rng):
        assert decode(_queries(rng, 0), _queries(rng, 4), _tokens(rng, 3), self.weights).shape == (0, DIM)

    def test_deterministic(self, rng):
        q, t, tok = _queries(rng, 5), _queries(rng, 3), _tokens(rng, 7)
        assert np.array_equal(decode(q, t, tok, self.weights), decode(q, t, tok, DecoderWeights.seeded(0, DIM, 2, 3)))

    def test_temporal_permutation_invariance(self, rng):
        q, t, tok = _queries(rng, 5), _queries(rng, 6), _tokens(rng, 7)
        out = decode(q, t, tok, self.weights)
        np.testing.assert_allclose(decode(q, t.take(rng.permutation(6)), tok, self.weights), out, atol=1e-12)

    def test_temporal_changes_output(self, rng):
        q, tok = _queries(rng, 5), _tokens(rng, 7)
        assert not np.allclose(decode(q, _queries(rng, 3), tok, self.weights), decode(q, _queries(rng, 0), tok, self.weights))

    def test_layer_oracle(self, rng):
        """One layer spelled out step by step."""
        w = DecoderWeights.seeded(7, DIM, n_layers=1)
        layer = w.layers[0]
        q, t, tok = _queries(rng, 3), _queries(rng, 2), _tokens(rng, 4)

        def ln(x):
            return (x - x.mean(-1, keepdims=True)) / np.sqrt(x.var(-1, keepdims=True) + 1e-5)

        h = q.embeddings
        a, _ = loop_attention(h + q.q_pos, np.concatenate([t.embeddings, h + q.q_pos]), layer.hybrid)
        h = ln(h + a @ layer.hybrid.wo.T)
        c, _ = loop_attention(h + q.q_pos, tok.values, layer.cross)
        h = ln(h + c @ layer.cross.wo.T)
        f = layer.ffn
        h = ln(h + (np.maximum(h @ f.w1.T + f.b1, 0) @ f.w2.T + f.b2))
        np.testing.assert_allclose(decode(q, t, tok, w), h, atol=1e-10)


class TestHead:
    def test_zero_case(self, rng):
        p_ref = rng.uniform(-30, 30, (4, 3))
        det = head(np.zeros((4, DIM)), p_ref, HeadWeights.zeros(DIM, 3))
        np.testing.assert_array_equal(det.scores, 0.5)
        np.testing.assert_allclose(det.centers, p_ref, atol=1e-12)
        np.testing.assert_array_equal(det.sizes, 1.0)
        np.testing.assert_array_equal(det.velocities, 0.0)

    def test_ranges(self, rng):
        w = HeadWeights.seeded(0, DIM, 3)
        det = head(rng.standard_normal((200, DIM)) * 20, rng.uniform(-30, 30, (200, 3)), w)
        assert (det.sizes > 0).all()
        assert ((det.scores >= 0) & (det.scores <= 1)).all()
        assert ((det.yaws > -np.pi) & (det.yaws <= np.pi)).all()

    def test_center_is_offset_from_reference(self, rng):
        w = HeadWeights.seeded(1, DIM, 3)
        emb, p_ref = rng.standard_normal((3, DIM)), rng.uniform(-30, 30, (3, 3))
        roi = RoiBounds()
        reg = np.maximum(emb @ w.reg.w1.T + w.reg.b1, 0) @ w.reg.w2.T + w.reg.b2
        expected = (normalize_point(p_ref, roi)[0] + reg[:, :3]) * (roi.hi - roi.lo) + roi.lo
        np.testing.assert_allclose(head(emb, p_ref, w).centers, expected, atol=1e-9)
        np.testing.assert_allclose(head(emb, p_ref, w).yaws, np.arctan2(reg[:, 6], reg[:, 7]), atol=1e-12)

    def test_empty(self):
        assert len(head(np.zeros((0, DIM)), np.zeros((0, 3)), HeadWeights.zeros(DIM, 3))) == 0


def test_image_tokens():
    rig = surround_rig()
    pe = pe3d_weights(0, DIM)
    feats = [FeatureMap(c, np.full((DIM, 20, 50), float(c)), 16) for c in (1, 0)]
    tok = build_image_tokens(feats, rig, pe)
    assert len(tok) == 2 * 20 * 50
    assert tok.camera[0] == 0 and tok.camera[-1] == 1
    # node (i=2, j=5) of camera 0 at pixel (88, 40), canonical depth 40.025
    idx = 2 * 50 + 5
    p = unproject(rig[0], [88.0, 40.0], 40.025)
    np.testing.assert_allclose(tok.pos[idx], pe3d(normalize_point(p, RoiBounds())[0], pe), atol=1e-12)
    np.testing.assert_array_equal(tok.values, tok.features + tok.pos)


def test_weights_checksum_stable():
    a = DecoderWeights.seeded(3, DIM, 2, 3)
    assert a.checksum() == DecoderWeights.seeded(3, DIM, 2, 3).checksum()
    assert a.checksum() != DecoderWeights.seeded(4, DIM, 2, 3).checksum()
