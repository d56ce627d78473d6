"""Hungarian label assignment, focal + L1 detection losses with analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .detections import DetectionSet, regression_vector
from .errors import DimensionMismatch, InfeasibleShape
from .simworld import GroundTruth

P_CLAMP = 1e-7


@dataclass(frozen=True)
class Assignment:
    rows: np.ndarray  # matched prediction indices, ordered by column
    cols: np.ndarray  # ground-truth indices 0..n_cols-1
    cost: float

    def as_dict(self) -> dict[int, int]:
        return {int(r): int(c) for r, c in zip(self.rows, self.cols)}


def _assign_rows_to_cols(a: np.ndarray) -> np.ndarray:
    """Shortest-augmenting-path Hungarian method for an (n, m) matrix with n <= m.

    Returns, for every row, the column it is assigned to.  Ties in the
    augmenting step are broken toward the lowest column index.
    """
    n, m = a.shape
    inf = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=int)  # p[j]: row (1-based) assigned to column j; 0 = free
    way = np.zeros(m + 1, dtype=int)
    cost = np.zeros((n + 1, m + 1))
    cost[1:, 1:] = a
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used
            free[0] = False
            cur = cost[i0] - u[i0] - v
            better = free & (cur < minv)
            minv[better] = cur[better]
            way[better] = j0
            cand = np.where(free, minv, inf)
            j1 = int(np.argmin(cand))  # first index among equal minima
            delta = cand[j1]
            u[p[used]] += delta
            v[used] -= delta
            minv[free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    row_to_col = np.empty(n, dtype=int)
    for j in range(1, m + 1):
        if p[j]:
            row_to_col[p[j] - 1] = j - 1
    return row_to_col


def hungarian(cost) -> Assignment:
    """Minimum-cost assignment of every column (ground truth) to a distinct row (prediction)."""
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2:
        raise DimensionMismatch("cost matrix must be 2-D")
    n_rows, n_cols = cost.shape
    if n_rows < n_cols:
        raise InfeasibleShape(f"{n_rows} predictions cannot cover {n_cols} ground-truth objects")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix must be finite")
    if n_cols == 0:
        return Assignment(np.zeros(0, int), np.zeros(0, int), 0.0)
    col_to_row = _assign_rows_to_cols(cost.T)
    cols = np.arange(n_cols)
    return Assignment(col_to_row, cols, float(cost[col_to_row, cols].sum()))


def _one_hot(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    t = np.zeros((len(labels), n_classes))
    pos = labels >= 0
    t[np.nonzero(pos)[0], labels[pos]] = 1.0
    return t


def focal_loss(probs, targets, gamma: float = 2.0) -> tuple[float, np.ndarray]:
    """Sigmoid focal loss summed over queries and classes.

    ``targets`` is either an (n,) label array (-1 = background) or an (n, K)
    binary matrix.  Returns the loss and its gradient with respect to the
    logits behind ``probs``.  Probabilities are clamped to [1e-7, 1 - 1e-7];
    clamped entries get zero gradient.
    """
    p_raw = np.asarray(probs, dtype=float)
    t = np.asarray(targets)
    if t.ndim == 1:
        t = _one_hot(t, p_raw.shape[1])
    t = t.astype(float)
    if t.shape != p_raw.shape:
        raise DimensionMismatch("targets and probabilities differ in shape")
    p = np.clip(p_raw, P_CLAMP, 1.0 - P_CLAMP)
    q = 1.0 - p
    log_p, log_q = np.log(p), np.log(q)
    pos = t > 0.5
    loss = np.where(pos, -(q**gamma) * log_p, -(p**gamma) * log_q)
    # d/dz with dp/dz = p q
    g_pos = gamma * p * q**gamma * log_p - q ** (gamma + 1)
    g_neg = p ** (gamma + 1) - gamma * p**gamma * q * log_q
    grad = np.where(pos, g_pos, g_neg)
    grad[(p_raw <= P_CLAMP) | (p_raw >= 1.0 - P_CLAMP)] = 0.0
    return float(loss.sum()), grad


def l1_loss(pred, gt) -> tuple[float, np.ndarray]:
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if pred.shape != gt.shape:
        raise DimensionMismatch(f"l1_loss: {pred.shape} vs {gt.shape}")
    diff = pred - gt
    return float(np.abs(diff).sum()), np.sign(diff)


def focal_cost(probs: np.ndarray, gt_classes: np.ndarray, gamma: float = 2.0) -> np.ndarray:
    """(n_pred, n_gt) cost: positive-minus-negative focal term of each gt's class."""
    p = np.clip(probs[:, gt_classes], P_CLAMP, 1.0 - P_CLAMP)
    pos = -((1 - p) ** gamma) * np.log(p)
    neg = -(p**gamma) * np.log(1 - p)
    return pos - neg


def l1_cost(pred_reg: np.ndarray, gt_reg: np.ndarray) -> np.ndarray:
    return np.abs(pred_reg[:, None, :] - gt_reg[None, :, :]).sum(axis=-1)


@dataclass(frozen=True)
class LossConfig:
    gamma: float = 2.0
    lambda_cls: float = 2.0


@dataclass(frozen=True, eq=False)
class LossReport:
    cls_loss: float
    reg_loss: float
    total: float
    grad_logits: np.ndarray  # (n, K)
    grad_reg: np.ndarray  # (n, 10)
    matched_pred: np.ndarray
    matched_gt: np.ndarray

    def to_dict(self) -> dict:
        return {
            "cls_loss": self.cls_loss,
            "reg_loss": self.reg_loss,
            "total": self.total,
            "matched_pred": self.matched_pred.tolist(),
            "matched_gt": self.matched_gt.tolist(),
        }


def match(preds: DetectionSet, gts: GroundTruth, cfg: LossConfig = LossConfig()) -> tuple[np.ndarray, np.ndarray]:
    """Prediction/ground-truth index pairs minimizing the combined matching cost."""
    n, m = len(preds), len(gts)
    if n == 0 or m == 0:
        return np.zeros(0, int), np.zeros(0, int)
    gt_reg = regression_vector(gts.centers, gts.sizes, gts.yaws, gts.velocities)
    cost = cfg.lambda_cls * focal_cost(preds.scores, gts.classes, cfg.gamma) + l1_cost(preds.regression_targets(), gt_reg)
    if n >= m:
        a = hungarian(cost)
        return a.rows, a.cols
    # fewer predictions than objects: every prediction gets one object
    a = hungarian(cost.T)
    order = np.argsort(a.cols)
    return a.cols[order], a.rows[order]


def detection_loss(preds: DetectionSet, gts: GroundTruth, cfg: LossConfig = LossConfig()) -> LossReport:
    n = len(preds)
    n_classes = preds.scores.shape[1]
    rows, cols = match(preds, gts, cfg)
    labels = np.full(n, -1)
    labels[rows] = gts.classes[cols]
    cls_loss, grad_logits = focal_loss(preds.scores, _one_hot(labels, n_classes), cfg.gamma) if n else (0.0, np.zeros((0, n_classes)))
    grad_reg = np.zeros((n, 10))
    reg_loss = 0.0
    if len(rows):
        gt_reg = regression_vector(gts.centers[cols], gts.sizes[cols], gts.yaws[cols], gts.velocities[cols])
        reg_loss, g = l1_loss(preds.regression_targets()[rows], gt_reg)
        grad_reg[rows] = g
    total = cfg.lambda_cls * cls_loss + reg_loss
    return LossReport(cls_loss, reg_loss, total, grad_logits, grad_reg, rows, cols)
