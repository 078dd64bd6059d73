"""Evaluation metrics: depth criteria, SSIM summaries, mask overlap, and
2D point error statistics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyInput,
    EmptyOverlap,
    LengthMismatch,
    NonPositiveValue,
)
from .losses import DepthMap, ssim_block3


@dataclass(frozen=True)
class DepthEvalReport:
    """The seven standard depth criteria (delta thresholds 1.25^k)."""

    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    delta1: float
    delta2: float
    delta3: float

    def rows(self) -> list[list]:
        return [
            ["abs_rel", self.abs_rel],
            ["sq_rel", self.sq_rel],
            ["rmse", self.rmse],
            ["rmse_log", self.rmse_log],
            ["delta1", self.delta1],
            ["delta2", self.delta2],
            ["delta3", self.delta3],
        ]


def depth_metrics(pred: DepthMap, gt: DepthMap) -> DepthEvalReport:
    """Evaluate prediction against ground truth on the overlap of the two
    validity masks.  All compared values must be positive."""
    if pred.data.shape != gt.data.shape:
        raise DimensionMismatch("prediction and ground truth shapes differ")
    overlap = pred.valid & gt.valid
    if not overlap.any():
        raise EmptyOverlap("no pixel is valid in both maps")
    p = pred.data[overlap]
    g = gt.data[overlap]
    if np.any(p <= 0) or np.any(g <= 0):
        raise NonPositiveValue("depth values must be positive on the overlap")
    diff = p - g
    ratio = np.maximum(p / g, g / p)
    return DepthEvalReport(
        abs_rel=float(np.mean(np.abs(diff) / g)),
        sq_rel=float(np.mean(diff * diff / g)),
        rmse=float(np.sqrt(np.mean(diff * diff))),
        rmse_log=float(np.sqrt(np.mean((np.log(p) - np.log(g)) ** 2))),
        delta1=float(np.mean(ratio < 1.25)),
        delta2=float(np.mean(ratio < 1.25**2)),
        delta3=float(np.mean(ratio < 1.25**3)),
    )


def ssim_summary(pairs) -> tuple[float, float]:
    """Mean/population-std of per-pair mean SSIM over (recon, orig) pairs."""
    if len(pairs) == 0:
        raise EmptyInput("no image pairs")
    scores = [float(ssim_block3(a, b).mean()) for a, b in pairs]
    return float(np.mean(scores)), float(np.std(scores))


def iou_dice(pred_mask: np.ndarray, gt_mask: np.ndarray) -> tuple[float, float]:
    """Jaccard index and Dice score of two boolean masks; both are
    defined as 1 when the masks are both empty."""
    pred = np.asarray(pred_mask, dtype=bool)
    gt = np.asarray(gt_mask, dtype=bool)
    if pred.shape != gt.shape:
        raise DimensionMismatch("mask shapes differ")
    inter = float(np.count_nonzero(pred & gt))
    union = float(np.count_nonzero(pred | gt))
    size_sum = float(np.count_nonzero(pred) + np.count_nonzero(gt))
    if union == 0:
        return 1.0, 1.0
    return inter / union, 2.0 * inter / size_sum


def point_error_stats(pred, gt) -> tuple[float, float, float, float]:
    """Euclidean error statistics between paired 2D points.

    Returns (mean, population std, median) of per-sample distances plus
    an R2 score computed per coordinate against the mean predictor and
    averaged over coordinates.
    """
    p = np.asarray(pred, dtype=float).reshape(-1, 2)
    g = np.asarray(gt, dtype=float).reshape(-1, 2)
    if len(p) != len(g) or len(p) == 0:
        raise LengthMismatch("need equal nonzero point counts")
    dist = np.linalg.norm(p - g, axis=1)
    r2_terms = []
    for c in range(2):
        ss_res = float(np.sum((p[:, c] - g[:, c]) ** 2))
        ss_tot = float(np.sum((g[:, c] - g[:, c].mean()) ** 2))
        if ss_tot < 1e-15:
            r2_terms.append(1.0 if ss_res < 1e-15 else 0.0)
        else:
            r2_terms.append(1.0 - ss_res / ss_tot)
    return (
        float(dist.mean()),
        float(dist.std()),
        float(np.median(dist)),
        float(np.mean(r2_terms)),
    )
