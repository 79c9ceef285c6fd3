"""Reference values for the four training loss terms and their weighted sum.

These are forward-only computations (no gradients): their job is to give
training code an independent number to check against. Conventions:

* cross entropy over the segmentation map averages across all pixels;
  cross entropy over the direction map averages across foreground pixels
  only (0.0 when there is no foreground)
* probabilities are clamped to 1e-12 before the log
* Dice is the per-class soft Dice with smoothing eps = 1e-6, background
  channel excluded, averaged over the classes present in the ground truth
* the count term is the mean squared error over the 6 count entries
* default weights are (1.0, 4.0, 2.0, 0.005) for (ce, dice, dir_ce, l2)

All math runs in float64 regardless of input dtype.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mapio import (
    DIRECTION_SENTINEL,
    NUM_CLASSES,
    NUM_SEG_CHANNELS,
    validate_class_map,
    validate_counts,
    validate_direction_map,
    validate_prob_tensor,
)

LOG_CLAMP = 1e-12
DICE_EPS = 1e-6


@dataclass(frozen=True)
class LossWeights:
    """Term weights for the combined loss; defaults follow the training recipe."""

    w_ce: float = 1.0
    w_dice: float = 4.0
    w_dir: float = 2.0
    w_l2: float = 0.005

    def __post_init__(self):
        for name in ("w_ce", "w_dice", "w_dir", "w_l2"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {value}")


@dataclass(frozen=True)
class LossBreakdown:
    """Individual loss terms, the weights used, and the weighted total."""

    ce: float
    dice: float
    dir_ce: float
    l2: float
    total: float
    weights: LossWeights = LossWeights()

    def to_json_dict(self) -> dict:
        return {
            "ce": self.ce,
            "dice": self.dice,
            "dir_ce": self.dir_ce,
            "l2": self.l2,
            "total": self.total,
            "weights": {
                "ce": self.weights.w_ce,
                "dice": self.weights.w_dice,
                "dir_ce": self.weights.w_dir,
                "l2": self.weights.w_l2,
            },
        }


def _check_pair(pred: np.ndarray, gt: np.ndarray, channels: int | None) -> np.ndarray:
    pred = np.asarray(pred, dtype=np.float64)
    if pred.ndim != 3:
        raise ValueError(f"prediction must be 3-D (H, W, C), got shape {pred.shape}")
    if channels is not None and pred.shape[2] != channels:
        raise ValueError(f"prediction must have {channels} channels, got {pred.shape[2]}")
    if pred.shape[:2] != np.asarray(gt).shape:
        raise ValueError(
            f"shape mismatch: prediction {pred.shape[:2]} vs ground truth "
            f"{np.asarray(gt).shape}")
    return pred


def seg_cross_entropy(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean cross entropy of the 7-channel segmentation map over all pixels.

    Parameters
    ----------
    pred : numpy.ndarray
        (H, W, 7) normalized probabilities.
    gt : numpy.ndarray
        2-D class map with values 0..6.
    """
    validate_class_map(gt)
    pred = _check_pair(pred, gt, NUM_SEG_CHANNELS)
    validate_prob_tensor(pred, normalized=True)
    gt = np.asarray(gt)
    rows, cols = np.indices(gt.shape)
    p = pred[rows, cols, gt.astype(np.int64)]
    return float(np.mean(-np.log(np.maximum(p, LOG_CLAMP))))


def dir_cross_entropy(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean cross entropy of the direction map over foreground pixels only.

    Background (sentinel) pixels are excluded; an all-background ground
    truth scores 0.0 regardless of the prediction.
    """
    pred = _check_pair(pred, gt, None)
    validate_prob_tensor(pred, normalized=True)
    n_directions = pred.shape[2]
    validate_direction_map(gt, n_directions)
    gt = np.asarray(gt)
    fg = gt != DIRECTION_SENTINEL
    if not fg.any():
        return 0.0
    rows, cols = np.nonzero(fg)
    p = pred[rows, cols, gt[fg].astype(np.int64)]
    return float(np.mean(-np.log(np.maximum(p, LOG_CLAMP))))


def dice_loss(pred: np.ndarray, gt: np.ndarray) -> float:
    """Soft Dice loss over the six foreground classes, averaged over the
    classes present in the ground truth.

    Per present class c: D_c = 1 - (2 * sum(p_c * g_c) + eps) /
    (sum(p_c) + sum(g_c) + eps) with one-hot g and eps = 1e-6. The
    background channel never participates. Returns 0.0 when the ground
    truth has no foreground class at all.
    """
    validate_class_map(gt)
    pred = _check_pair(pred, gt, NUM_SEG_CHANNELS)
    validate_prob_tensor(pred)
    gt = np.asarray(gt)
    present = np.unique(gt)
    present = present[present > 0]
    if present.size == 0:
        return 0.0
    terms = []
    for cls in present:
        g = (gt == cls).astype(np.float64)
        p = pred[:, :, int(cls)]
        inter = float(np.sum(p * g))
        denom = float(np.sum(p)) + float(np.sum(g)) + DICE_EPS
        terms.append(1.0 - (2.0 * inter + DICE_EPS) / denom)
    return float(np.mean(terms))


def count_l2(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean squared error over the 6 count entries."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    validate_counts(pred)
    validate_counts(gt)
    return float(np.mean((pred - gt) ** 2))


def combine_terms(ce: float, dice: float, dir_ce: float, l2: float,
                  weights: LossWeights = LossWeights()) -> LossBreakdown:
    """Weighted sum of precomputed loss terms."""
    for name, value in (("ce", ce), ("dice", dice), ("dir_ce", dir_ce), ("l2", l2)):
        if not math.isfinite(value):
            raise ValueError(f"loss term {name} is not finite: {value}")
    total = (weights.w_ce * ce + weights.w_dice * dice
             + weights.w_dir * dir_ce + weights.w_l2 * l2)
    return LossBreakdown(ce=float(ce), dice=float(dice), dir_ce=float(dir_ce),
                         l2=float(l2), total=float(total), weights=weights)


def total_loss(seg_pred: np.ndarray, class_gt: np.ndarray,
               dir_pred: np.ndarray, direction_gt: np.ndarray,
               count_pred: np.ndarray, count_gt: np.ndarray,
               weights: LossWeights = LossWeights()) -> LossBreakdown:
    """All four loss terms of one image plus their weighted total."""
    ce = seg_cross_entropy(seg_pred, class_gt)
    dice = dice_loss(seg_pred, class_gt)
    dir_ce = dir_cross_entropy(dir_pred, direction_gt)
    l2 = count_l2(count_pred, count_gt)
    return combine_terms(ce, dice, dir_ce, l2, weights)
