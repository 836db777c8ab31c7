"""Segmentation quality metrics: mIoU, trimap IoU, and boundary F-measure.

Boundary pixels are label-map pixels with a 4-neighbor of a different
label; image borders are not boundaries by themselves.  Bands and matching
tolerances use Chebyshev (8-connected) distance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import shift2d


def _check_label_pair(pred, gt):
    p = np.asarray(pred)
    g = np.asarray(gt)
    if p.shape != g.shape or p.ndim != 2:
        raise ValueError(f"label maps must be 2-D with equal shapes, got {p.shape} vs {g.shape}")
    return p, g


def miou(pred_labels, gt_labels, num_classes: int) -> tuple[np.ndarray, float]:
    """Per-class IoU (NaN for classes absent from both maps) and their mean."""
    p, g = _check_label_pair(pred_labels, gt_labels)
    ious = np.full(num_classes, np.nan)
    for c in range(num_classes):
        pc = p == c
        gc = g == c
        union = int(np.logical_or(pc, gc).sum())
        if union == 0:
            continue
        ious[c] = float(np.logical_and(pc, gc).sum()) / union
    with np.errstate(invalid="ignore"):
        mean = float(np.nanmean(ious))
    return ious, mean


def transition_mask(labels) -> np.ndarray:
    """Pixels with at least one 4-neighbor of a different label."""
    lab = np.asarray(labels)
    t = np.zeros(lab.shape, dtype=bool)
    diff_v = lab[:-1, :] != lab[1:, :]
    t[:-1, :] |= diff_v
    t[1:, :] |= diff_v
    diff_h = lab[:, :-1] != lab[:, 1:]
    t[:, :-1] |= diff_h
    t[:, 1:] |= diff_h
    return t


def chebyshev_dilate(mask, dist: int) -> np.ndarray:
    """Grow a boolean mask to all pixels within Chebyshev distance dist."""
    out = np.asarray(mask, dtype=bool).copy()
    for _ in range(dist):
        grown = out.copy()
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dy or dx:
                    grown |= shift2d(out, dy, dx)
        out = grown
    return out


def boundary_band(gt_labels, width: int) -> np.ndarray:
    """Mask of pixels within Chebyshev distance width of a label transition."""
    if width < 1:
        raise ValueError(f"band width must be >= 1, got {width}")
    return chebyshev_dilate(transition_mask(gt_labels), width)


def trimap_iou(pred_labels, gt_labels, num_classes: int, width: int) -> float:
    """mIoU restricted to the boundary band; NaN when the band is empty."""
    p, g = _check_label_pair(pred_labels, gt_labels)
    band = boundary_band(g, width)
    if not band.any():
        return float("nan")
    pb = p[band]
    gb = g[band]
    ious = []
    for c in range(num_classes):
        pc = pb == c
        gc = gb == c
        union = int(np.logical_or(pc, gc).sum())
        if union == 0:
            continue
        ious.append(float(np.logical_and(pc, gc).sum()) / union)
    return float(np.mean(ious))


def boundary_fmeasure(pred_labels, gt_labels, tol: int) -> float:
    """Boundary precision/recall harmonic mean under a class-matched tolerance.

    A predicted boundary pixel counts as correct when a ground-truth
    boundary pixel of the same class lies within Chebyshev distance tol,
    and symmetrically for recall.  Returns 1 when both boundary sets are
    empty and 0 when exactly one is.
    """
    if tol < 0:
        raise ValueError(f"tolerance must be >= 0, got {tol}")
    p, g = _check_label_pair(pred_labels, gt_labels)
    trans_p = transition_mask(p)
    trans_g = transition_mask(g)
    n_pred = n_gt = tp_pred = tp_gt = 0
    classes = np.union1d(np.unique(p[trans_p]), np.unique(g[trans_g]))
    for c in classes:
        bp = trans_p & (p == c)
        bg = trans_g & (g == c)
        n_pred += int(bp.sum())
        n_gt += int(bg.sum())
        if tol > 0:
            tp_pred += int((bp & chebyshev_dilate(bg, tol)).sum())
            tp_gt += int((bg & chebyshev_dilate(bp, tol)).sum())
        else:
            hits = int((bp & bg).sum())
            tp_pred += hits
            tp_gt += hits
    if n_pred == 0 and n_gt == 0:
        return 1.0
    if n_pred == 0 or n_gt == 0:
        return 0.0
    precision = tp_pred / n_pred
    recall = tp_gt / n_gt
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


@dataclass
class EvalReport:
    """Per-pair evaluation: class IoUs, mIoU, trimap IoU per width, F per tolerance."""

    per_class_iou: list[float]
    miou: float
    trimap: dict[int, float] = field(default_factory=dict)
    boundary_f: dict[int, float] = field(default_factory=dict)

    def to_json(self) -> dict:
        def _clean(x):
            return None if isinstance(x, float) and np.isnan(x) else x

        return {
            "per_class_iou": [_clean(v) for v in self.per_class_iou],
            "miou": _clean(self.miou),
            "trimap_iou": {str(k): _clean(v) for k, v in self.trimap.items()},
            "boundary_f": {str(k): _clean(v) for k, v in self.boundary_f.items()},
        }


def evaluate_pair(pred_labels, gt_labels, num_classes: int,
                  trimap_widths=(1, 3, 5, 10), f_tolerances=(1, 3, 5, 10)) -> EvalReport:
    """Full metric sweep for one prediction/ground-truth pair."""
    ious, mean = miou(pred_labels, gt_labels, num_classes)
    report = EvalReport(per_class_iou=[float(v) for v in ious], miou=mean)
    for w in trimap_widths:
        report.trimap[int(w)] = trimap_iou(pred_labels, gt_labels, num_classes, int(w))
    for t in f_tolerances:
        report.boundary_f[int(t)] = boundary_fmeasure(pred_labels, gt_labels, int(t))
    return report
