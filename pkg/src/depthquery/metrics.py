"""Center-distance average precision in bird's-eye view.

A prediction matches a ground-truth object of the same class when their
ground-plane (x, y) centers are within a distance threshold; z is ignored.
AP is the 101-point interpolated area under the precision/recall curve.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .detections import DetectionSet
from .simworld import CLASS_NAMES, GroundTruth

DEFAULT_THRESHOLDS = (0.5, 1.0, 2.0, 4.0)
RECALL_GRID = np.linspace(0.0, 1.0, 101)


@dataclass(frozen=True)
class EvalConfig:
    thresholds: tuple = DEFAULT_THRESHOLDS
    class_ids: tuple = tuple(range(len(CLASS_NAMES)))

    def __post_init__(self):
        th = list(self.thresholds)
        if not th or any(t <= 0 for t in th) or th != sorted(th):
            raise ValueError("thresholds must be positive and ascending")


@dataclass
class ApResult:
    ap: dict = field(default_factory=dict)  # {class_id: {threshold: AP or None}}
    mAP: float | None = None

    def to_csv(self, class_names=CLASS_NAMES) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        thresholds = sorted({t for per in self.ap.values() for t in per})
        writer.writerow(["class"] + [f"AP@{t:g}m" for t in thresholds])
        for cid in sorted(self.ap):
            name = class_names[cid] if cid < len(class_names) else str(cid)
            writer.writerow([name] + ["" if self.ap[cid][t] is None else repr(self.ap[cid][t]) for t in thresholds])
        writer.writerow(["mAP", "" if self.mAP is None else repr(self.mAP)])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "mAP": self.mAP,
            "ap": {str(c): {repr(t): v for t, v in per.items()} for c, per in self.ap.items()},
        }


def precision_recall(preds: list[DetectionSet], gts: list[GroundTruth], class_id: int, threshold: float):
    """Greedy matching in descending score order across all frames.

    Returns (precision, recall, n_gt); precision/recall are listed per
    prediction in rank order.
    """
    entries = []  # (score, frame, xy)
    for f, det in enumerate(preds):
        if len(det) == 0:
            continue
        labels, scores = det.labels, det.top_scores
        for i in np.nonzero(labels == class_id)[0]:
            entries.append((float(scores[i]), f, det.centers[i, :2]))
    # stable sort: equal scores keep (frame, index) order
    entries.sort(key=lambda e: -e[0])
    gt_xy = [g.centers[g.classes == class_id, :2] for g in gts]
    n_gt = sum(len(x) for x in gt_xy)
    taken = [np.zeros(len(x), dtype=bool) for x in gt_xy]
    tp = np.zeros(len(entries))
    for r, (_, f, xy) in enumerate(entries):
        if f >= len(gt_xy) or len(gt_xy[f]) == 0:
            continue
        d = np.hypot(*(gt_xy[f] - xy).T)
        d[taken[f]] = np.inf
        j = int(np.argmin(d))
        if d[j] <= threshold:
            taken[f][j] = True
            tp[r] = 1.0
    ctp = np.cumsum(tp)
    ranks = np.arange(1, len(entries) + 1)
    precision = ctp / ranks if len(entries) else np.zeros(0)
    recall = ctp / n_gt if n_gt else np.zeros(len(entries))
    return precision, recall, n_gt


def interpolated_ap(precision: np.ndarray, recall: np.ndarray) -> float:
    """Mean over 101 recall levels of the best precision achieved at or beyond each level."""
    if len(precision) == 0:
        return 0.0
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_GRID, side="left")
    vals = np.where(idx < len(recall), envelope[np.minimum(idx, len(recall) - 1)], 0.0)
    return float(vals.mean())


def center_distance_ap(preds: list[DetectionSet], gts: list[GroundTruth], class_id: int, threshold: float) -> float | None:
    """AP for one class at one BEV distance threshold, or None when the class has no ground truth."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    precision, recall, n_gt = precision_recall(preds, gts, class_id, threshold)
    if n_gt == 0:
        return None
    return interpolated_ap(precision, recall)


def mean_ap(preds: list[DetectionSet], gts: list[GroundTruth], cfg: EvalConfig = EvalConfig()) -> ApResult:
    result = ApResult()
    defined = []
    for cid in cfg.class_ids:
        result.ap[cid] = {}
        for t in cfg.thresholds:
            ap = center_distance_ap(preds, gts, cid, t)
            result.ap[cid][t] = ap
            if ap is not None:
                defined.append(ap)
    result.mAP = float(np.mean(defined)) if defined else None
    return result
