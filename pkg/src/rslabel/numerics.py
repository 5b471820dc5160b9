"""Reference implementations of the scene-feature construction and the
classification / localization / scene-alignment losses, plus a central
finite-difference gradient checker.

Everything here is plain double-precision numpy; the softmax paths are
log-sum-exp stabilized so extreme temperature sweeps stay finite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import BBox, giou


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 1.0
    beta: float = 10.0
    tau: float = 0.07
    lambda_l1: float = 5.0
    lambda_giou: float = 2.0

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError(f"temperature must be positive: {self.tau}")


def scene_feature(positive_feats: np.ndarray, token_lengths) -> np.ndarray:
    """Token-length-weighted mean of positive-category text features:
    s = (1/n) * sum_i L_i * f_i over the n positive categories."""
    feats = np.asarray(positive_feats, dtype=np.float64)
    lengths = np.asarray(token_lengths, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[0] == 0:
        raise ValueError("positive feature matrix must be non-empty and 2-D")
    if lengths.shape != (feats.shape[0],):
        raise ValueError(
            f"token_lengths has shape {lengths.shape}, expected ({feats.shape[0]},)"
        )
    return (lengths[:, None] * feats).sum(axis=0) / feats.shape[0]


def visual_mean_pool(visual: np.ndarray) -> np.ndarray:
    """Component-wise mean over visual tokens (the first mapping layer)."""
    v = np.asarray(visual, dtype=np.float64)
    if v.ndim != 2 or v.shape[0] == 0:
        raise ValueError("visual feature matrix must be non-empty and 2-D")
    return v.mean(axis=0)


def _log_softmax(z: np.ndarray) -> np.ndarray:
    zmax = z.max(axis=1, keepdims=True)
    shifted = z - zmax
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def visgt_loss(pred_scenes: np.ndarray, true_scenes: np.ndarray, tau: float) -> float:
    """Contrastive alignment of predicted vs reference scene features.

    With similarity phi[i, j] = pred_i . true_j, each item's probability is
    the temperature-scaled softmax of its own row evaluated on the diagonal;
    the loss is the mean negative log probability over the batch.
    """
    loss, _ = visgt_loss_grad(pred_scenes, true_scenes, tau)
    return loss


def visgt_loss_grad(
    pred_scenes: np.ndarray, true_scenes: np.ndarray, tau: float
) -> tuple[float, np.ndarray]:
    """visgt_loss plus its analytic gradient with respect to pred_scenes."""
    pred = np.asarray(pred_scenes, dtype=np.float64)
    true = np.asarray(true_scenes, dtype=np.float64)
    if pred.shape != true.shape or pred.ndim != 2 or pred.shape[0] == 0:
        raise ValueError(
            f"scene matrices must be matching non-empty 2-D, got {pred.shape} vs {true.shape}"
        )
    if tau <= 0:
        raise ValueError(f"temperature must be positive: {tau}")
    n = pred.shape[0]
    phi = pred @ true.T
    log_p = _log_softmax(phi / tau)
    loss = -np.diagonal(log_p).mean()
    softmax = np.exp(log_p)
    dphi = (softmax - np.eye(n)) / (n * tau)
    grad = dphi @ true
    return float(loss), grad


def cls_loss(pred_logits: np.ndarray, labels) -> float:
    """Cross-entropy summed over objects; zero for an empty object list."""
    loss, _ = cls_loss_grad(pred_logits, labels)
    return loss


def cls_loss_grad(pred_logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """cls_loss plus its analytic gradient with respect to the logits."""
    logits = np.asarray(pred_logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        return 0.0, np.zeros_like(logits)
    if logits.ndim != 2 or logits.shape[0] != labels.shape[0]:
        raise ValueError(
            f"logits shape {logits.shape} does not match {labels.shape[0]} labels"
        )
    if labels.min() < 0 or labels.max() >= logits.shape[1]:
        raise IndexError(f"label out of range for {logits.shape[1]} classes")
    log_p = _log_softmax(logits)
    rows = np.arange(labels.shape[0])
    loss = -log_p[rows, labels].sum()
    grad = np.exp(log_p)
    grad[rows, labels] -= 1.0
    return float(loss), grad


def loc_loss(pred: list[BBox], gt: list[BBox], w: LossWeights) -> float:
    """L1 box regression plus GIoU penalty, each with its own weight."""
    if len(pred) != len(gt):
        raise ValueError(f"box list length mismatch: {len(pred)} vs {len(gt)}")
    l1 = 0.0
    giou_term = 0.0
    for p, g in zip(pred, gt):
        l1 += abs(p.x - g.x) + abs(p.y - g.y) + abs(p.w - g.w) + abs(p.h - g.h)
        giou_term += 1.0 - giou(p, g)
    return w.lambda_l1 * l1 + w.lambda_giou * giou_term


def total_loss(cls: float, loc: float, visgt: float, w: LossWeights) -> float:
    """Weighted sum of the three loss components."""
    for v in (cls, loc, visgt):
        if not np.isfinite(v):
            raise ValueError(f"non-finite loss component: {v}")
    return cls + w.alpha * loc + w.beta * visgt


def grad_check(fn, point: np.ndarray, eps: float = 1e-5) -> float:
    """Worst relative error between fn's analytic gradient and central
    finite differences at every coordinate of point.

    fn maps a matrix to (scalar value, gradient matrix).
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive: {eps}")
    x = np.array(point, dtype=np.float64)
    _, grad = fn(x)
    worst = 0.0
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + eps
        f_plus, _ = fn(x)
        x[idx] = orig - eps
        f_minus, _ = fn(x)
        x[idx] = orig
        numeric = (f_plus - f_minus) / (2.0 * eps)
        analytic = grad[idx]
        denom = max(abs(numeric), abs(analytic), 1.0)
        worst = max(worst, abs(numeric - analytic) / denom)
    return worst
