from __future__ import annotations

import numpy as np
import pytest

from depthquery.detections import DetectionSet
from depthquery.metrics import EvalConfig, center_distance_ap, interpolated_ap, mean_ap, precision_recall
from depthquery.simworld import GroundTruth


def gts_at(xy, classes=None):
    xy = np.asarray(xy, float).reshape(-1, 2)
    n = len(xy)
    classes = np.zeros(n, int) if classes is None else np.asarray(classes)
    return GroundTruth(np.arange(n), classes, np.c_[xy, np.zeros(n)], np.ones((n, 3)), np.zeros(n), np.zeros((n, 2)))


def dets_at(xy, scores, classes=None, n_classes=3, z=0.0):
    xy = np.asarray(xy, float).reshape(-1, 2)
    n = len(xy)
    classes = np.zeros(n, int) if classes is None else np.asarray(classes)
    s = np.zeros((n, n_classes))
    s[np.arange(n), classes] = scores
    return DetectionSet(s, np.c_[xy, np.full(n, z)], np.ones((n, 3)), np.zeros(n), np.zeros((n, 2)))


def hand_case():
    """G1, G2, G3 far apart. Ranked predictions:
    A (0.9) 0.3 m from G1, B (0.8) duplicate of A, C (0.7) 1.5 m from G2, D (0.6) 5 m from G3.
    """
    gt = gts_at([[0, 0], [20, 0], [40, 0]])
    det = dets_at([[0.3, 0], [0.3, 0], [20, 1.5], [45, 0]], [0.9, 0.8, 0.7, 0.6])
    return [det], [gt]


def brute_ap(preds, gts, class_id, threshold):
    """Independent matcher and 101-point AP written with plain loops."""
    ranked = []
    for f, det in enumerate(preds):
        for i in range(len(det)):
            if int(np.argmax(det.scores[i])) == class_id:
                ranked.append((-float(det.scores[i].max()), f, i))
    ranked.sort()
    used = {(f, j): False for f, g in enumerate(gts) for j in range(len(g)) if g.classes[j] == class_id}
    n_gt = len(used)
    if n_gt == 0:
        return None
    tps = []
    for _, f, i in ranked:
        best, best_d = None, None
        for j in range(len(gts[f])):
            if gts[f].classes[j] != class_id or used[(f, j)]:
                continue
            d = float(np.hypot(*(gts[f].centers[j, :2] - preds[f].centers[i, :2])))
            if best_d is None or d < best_d:
                best, best_d = j, d
        ok = best is not None and best_d <= threshold
        if ok:
            used[(f, best)] = True
        tps.append(ok)
    prec, rec, tp = [], [], 0
    for k, ok in enumerate(tps, 1):
        tp += ok
        prec.append(tp / k)
        rec.append(tp / n_gt)
    total = 0.0
    for i in range(101):
        r = i / 100
        total += max([p for p, rr in zip(prec, rec) if rr >= r], default=0.0)
    return total / 101


class TestHandCase:
    def test_pr_curve_at_1m(self):
        preds, gts = hand_case()
        p, r, n = precision_recall(preds, gts, 0, 1.0)
        assert n == 3
        np.testing.assert_allclose(p, [1, 1 / 2, 1 / 3, 1 / 4])
        np.testing.assert_allclose(r, [1 / 3] * 4)
        # precision 1 for the 34 recall levels 0.00..0.33, nothing beyond
        assert center_distance_ap(preds, gts, 0, 1.0) == pytest.approx(34 / 101, abs=1e-15)

    def test_pr_curve_at_2m(self):
        preds, gts = hand_case()
        p, r, _ = precision_recall(preds, gts, 0, 2.0)
        np.testing.assert_allclose(p, [1, 1 / 2, 2 / 3, 1 / 2])
        np.testing.assert_allclose(r, [1 / 3, 1 / 3, 2 / 3, 2 / 3])
        # 34 levels at precision 1, then 33 levels (0.34..0.66) at 2/3
        assert center_distance_ap(preds, gts, 0, 2.0) == pytest.approx((34 + 33 * 2 / 3) / 101, abs=1e-15)

    @pytest.mark.parametrize("threshold,expected", [(0.5, 34 / 101), (4.0, 56 / 101)])
    def test_other_thresholds(self, threshold, expected):
        preds, gts = hand_case()
        assert center_distance_ap(preds, gts, 0, threshold) == pytest.approx(expected, abs=1e-15)


class TestAp:
    def test_perfect_detector(self, rng):
        gts = [gts_at(rng.uniform(-40, 40, (6, 2)), rng.integers(0, 3, 6)) for _ in range(3)]
        preds = [dets_at(g.centers[:, :2], np.ones(len(g)), g.classes) for g in gts]
        res = mean_ap(preds, gts)
        assert res.mAP == 1.0
        assert all(v == 1.0 for per in res.ap.values() for v in per.values() if v is not None)

    def test_no_predictions(self):
        assert center_distance_ap([DetectionSet.empty(3)], [gts_at([[1, 1]])], 0, 2.0) == 0.0

    def test_class_without_gt_excluded(self):
        gt = gts_at([[0, 0]])
        res = mean_ap([dets_at([[0, 0]], [1.0])], [gt])
        assert res.ap[1][0.5] is None and res.ap[2][4.0] is None
        assert res.mAP == 1.0

    def test_no_gt_at_all(self):
        res = mean_ap([dets_at([[0, 0]], [0.7])], [GroundTruth.empty()])
        assert res.mAP is None

    def test_mean_is_arithmetic(self):
        preds, gts = hand_case()
        res = mean_ap(preds, gts, EvalConfig(class_ids=(0,)))
        assert res.mAP == pytest.approx(np.mean([34, 34, 56, 56]) / 101, abs=1e-15)

    def test_z_ignored(self):
        gt = gts_at([[5, 5]])
        assert center_distance_ap([dets_at([[5, 5]], [0.5], z=30.0)], [gt], 0, 0.5) == 1.0

    def test_boundary_inclusive(self):
        assert center_distance_ap([dets_at([[1.0, 0]], [0.5])], [gts_at([[0, 0]])], 0, 1.0) == 1.0

    def test_class_must_agree(self):
        assert center_distance_ap([dets_at([[0, 0]], [0.9], classes=[1])], [gts_at([[0, 0]])], 0, 1.0) == 0.0

    def test_interpolated_ap_empty(self):
        assert interpolated_ap(np.zeros(0), np.zeros(0)) == 0.0

    def test_bad_eval_config(self):
        with pytest.raises(ValueError):
            EvalConfig(thresholds=(2.0, 1.0))


def _jittered(rng, n_frames=4):
    gts, preds = [], []
    for _ in range(n_frames):
        n = int(rng.integers(3, 9))
        g = gts_at(rng.uniform(-40, 40, (n, 2)), rng.integers(0, 3, n))
        m = int(rng.integers(0, 14))
        idx = rng.integers(0, n, m)
        xy = g.centers[idx, :2] + rng.normal(0, 1.5, (m, 2))
        cls = np.where(rng.uniform(size=m) < 0.85, g.classes[idx], rng.integers(0, 3, m))
        gts.append(g)
        preds.append(dets_at(xy, rng.uniform(0.05, 1.0, m), cls))
    return preds, gts


class TestProperties:
    @pytest.mark.parametrize("seed", range(6))
    def test_dual_implementation(self, seed):
        preds, gts = _jittered(np.random.default_rng(seed))
        for cid in range(3):
            for t in (0.5, 1.0, 2.0, 4.0):
                fast, slow = center_distance_ap(preds, gts, cid, t), brute_ap(preds, gts, cid, t)
                assert (fast is None and slow is None) or fast == pytest.approx(slow, abs=1e-12)

    @pytest.mark.parametrize("seed", range(6))
    def test_monotone_in_threshold(self, seed):
        preds, gts = _jittered(np.random.default_rng(100 + seed))
        for cid in range(3):
            aps = [center_distance_ap(preds, gts, cid, t) for t in (0.25, 0.5, 1.0, 2.0, 4.0, 8.0)]
            if aps[0] is not None:
                assert all(a <= b + 1e-15 for a, b in zip(aps, aps[1:]))

    def test_score_rescaling_invariant(self, rng):
        preds, gts = _jittered(rng)
        rescaled = [DetectionSet(d.scores**3 * 0.5, d.centers, d.sizes, d.yaws, d.velocities) for d in preds]
        assert mean_ap(preds, gts).mAP == mean_ap(rescaled, gts).mAP

    def test_prediction_order_invariant(self, rng):
        preds, gts = _jittered(rng)
        shuffled = []
        for d in preds:
            p = rng.permutation(len(d))
            shuffled.append(DetectionSet(d.scores[p], d.centers[p], d.sizes[p], d.yaws[p], d.velocities[p]))
        assert mean_ap(preds, gts).mAP == mean_ap(shuffled, gts).mAP


def test_csv_table():
    preds, gts = hand_case()
    text = mean_ap(preds, gts).to_csv()
    lines = text.strip().split("\n")
    assert lines[0] == "class,AP@0.5m,AP@1m,AP@2m,AP@4m"
    assert lines[1].startswith("car,") and lines[2] == "truck,,,,"
    assert lines[-1].startswith("mAP,")
