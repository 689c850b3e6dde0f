"""Segmentation scoring: view-averaged IoU matrix, optimal label
assignment, precision/recall at IoU > 0.5, boundary IoU, and the
relative IoU drop under reduced training data.

Predicted and ground-truth label maps use arbitrary label values; the
scorer matches them by maximizing summed view-averaged IoU over a matrix
padded with zero columns to max(n_gt, n_pred), so every ground-truth
mask receives exactly one partner (possibly a zero-IoU padding column).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.optimize import linear_sum_assignment

from .scene_io import LabelMap

CORRECT_IOU = 0.5
DEFAULT_BAND_FRAC = 0.02


@dataclass
class EvalReport:
    mean_iou: float
    precision: float
    recall: float
    pairs: list[tuple[int, int | None, float]]  # (gt label, pred label, IoU)
    n_gt: int
    n_pred: int

    def to_dict(self) -> dict:
        return {
            "mean_iou": self.mean_iou,
            "precision": self.precision,
            "recall": self.recall,
            "n_gt": self.n_gt,
            "n_pred": self.n_pred,
            "pairs": [
                {"gt": g, "pred": p, "iou": v} for g, p, v in self.pairs
            ],
        }


def iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union of two binary masks; 0 when both empty."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 0.0
    return float(np.logical_and(a, b).sum() / union)


def _label_union(maps: list[LabelMap]) -> list[int]:
    out: set[int] = set()
    for lm in maps:
        out.update(lm.labels_present().tolist())
    return sorted(out)


def evaluate(pred: list[LabelMap], gt: list[LabelMap]) -> EvalReport:
    """Score predicted against ground-truth label maps.

    Per (gt, pred) label pair the IoU is computed per view and averaged;
    views where the pair is absent on both sides are skipped so
    out-of-frame objects do not dilute the average. The best one-to-one
    assignment then fixes mean IoU, precision, and recall.
    """
    if len(pred) == 0 or len(pred) != len(gt):
        raise ValueError("need the same positive number of views on both sides")
    for p, g in zip(pred, gt):
        if (p.height, p.width) != (g.height, g.width):
            raise ValueError("per-view dimensions differ")
    gt_labels = _label_union(gt)
    pred_labels = _label_union(pred)
    n_gt, n_pred = len(gt_labels), len(pred_labels)
    n_cols = max(n_gt, n_pred)
    matrix = np.zeros((n_gt, n_cols))
    for i, gl in enumerate(gt_labels):
        gt_masks = [lm.labels == gl for lm in gt]
        for j, pl in enumerate(pred_labels):
            vals = []
            for gm, plm in zip(gt_masks, pred):
                pm = plm.labels == pl
                if gm.any() or pm.any():
                    vals.append(iou(gm, pm))
            matrix[i, j] = np.mean(vals) if vals else 0.0
    if n_gt == 0:
        return EvalReport(0.0, 0.0, 0.0, [], 0, n_pred)
    rows, cols = linear_sum_assignment(matrix, maximize=True)
    paired = matrix[rows, cols]
    n_correct = int((paired > CORRECT_IOU).sum())
    pairs = [
        (
            gt_labels[r],
            pred_labels[c] if c < n_pred else None,
            float(paired[k]),
        )
        for k, (r, c) in enumerate(zip(rows, cols))
    ]
    return EvalReport(
        mean_iou=float(paired.mean()),
        precision=n_correct / n_pred if n_pred else 0.0,
        recall=n_correct / n_gt,
        pairs=pairs,
        n_gt=n_gt,
        n_pred=n_pred,
    )


def boundary_band(mask: np.ndarray, dist: int) -> np.ndarray:
    """Pixels of the mask within ``dist`` of its boundary (the image
    border counts as boundary)."""
    mask = np.asarray(mask, dtype=bool)
    eroded = ndimage.binary_erosion(
        mask, structure=np.ones((3, 3), dtype=bool), iterations=dist, border_value=0
    )
    return mask & ~eroded


def boundary_iou(
    a: np.ndarray, b: np.ndarray, band_frac: float = DEFAULT_BAND_FRAC
) -> float:
    """IoU restricted to a band around each mask's boundary, with band
    width ceil(band_frac * image diagonal)."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    if band_frac <= 0:
        raise ValueError("band_frac must be positive")
    h, w = a.shape
    dist = int(np.ceil(band_frac * np.hypot(h, w)))
    return iou(boundary_band(a, dist), boundary_band(b, dist))


def evaluate_boundary(
    pred: list[LabelMap], gt: list[LabelMap], band_frac: float = DEFAULT_BAND_FRAC
) -> float:
    """Mean boundary IoU over the pairs chosen by ``evaluate``."""
    report = evaluate(pred, gt)
    vals = []
    for gl, pl, _ in report.pairs:
        if pl is None:
            vals.append(0.0)
            continue
        per_view = []
        for gm, pm in zip(gt, pred):
            ga = gm.labels == gl
            pa = pm.labels == pl
            if ga.any() or pa.any():
                per_view.append(boundary_iou(ga, pa, band_frac))
        vals.append(float(np.mean(per_view)) if per_view else 0.0)
    return float(np.mean(vals)) if vals else 0.0


def iou_drop(iou_full: float, iou_partial: float) -> float:
    """Relative IoU loss against the full-data run."""
    if iou_full <= 0:
        raise ValueError("iou_full must be positive")
    return (iou_full - iou_partial) / iou_full


def format_report(report: EvalReport) -> str:
    lines = [
        f"{'metric':<12}{'value':>10}",
        f"{'mean_iou':<12}{report.mean_iou:>10.4f}",
        f"{'precision':<12}{report.precision:>10.4f}",
        f"{'recall':<12}{report.recall:>10.4f}",
        f"{'n_gt':<12}{report.n_gt:>10d}",
        f"{'n_pred':<12}{report.n_pred:>10d}",
        "",
        f"{'gt':>6} {'pred':>6} {'iou':>8}",
    ]
    for g, p, v in report.pairs:
        lines.append(f"{g:>6} {str(p) if p is not None else '-':>6} {v:>8.4f}")
    return "\n".join(lines)
