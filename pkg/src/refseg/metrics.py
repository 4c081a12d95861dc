"""Evaluation metrics: mask IoU and precision-at-threshold.

Two IoU aggregations are reported side by side: `overall` accumulates
intersection and union counts over the whole dataset before dividing;
`mean` averages per-sample IoUs. Pr@X is the percentage of samples whose
IoU strictly exceeds X/100.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, InputError

PR_THRESHOLDS = (50, 60, 70, 80, 90)


def iou(pred, gt):
    """|pred & gt| / |pred | gt|; defined as 1.0 when both masks are empty."""
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise DimensionError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    union = np.logical_or(pred, gt).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(pred, gt).sum() / union)


def precision_at(ious, x):
    """Percentage of IoUs strictly greater than x/100."""
    if x not in PR_THRESHOLDS:
        raise InputError(f"Pr threshold must be one of {PR_THRESHOLDS}")
    if len(ious) == 0:
        raise InputError("precision_at needs at least one IoU")
    arr = np.asarray(ious, dtype=np.float64)
    return 100.0 * float((arr > x / 100.0).sum()) / arr.size


@dataclass
class EvalReport:
    iou: float                      # overall: cumulative intersection / union
    mean_iou: float
    pr: dict                        # X -> percentage
    per_sample: list = field(default_factory=list)

    def lines(self):
        out = [f"overall_iou,{self.iou:.6f}", f"mean_iou,{self.mean_iou:.6f}"]
        out += [f"pr@{x},{self.pr[x]:.4f}" for x in PR_THRESHOLDS]
        return out

    def serialize(self):
        return "\n".join(["metric,value"] + self.lines()) + "\n"


def build_report(preds, gts):
    """Per-sample binary masks -> EvalReport with both IoU aggregations."""
    if len(preds) != len(gts) or not preds:
        raise InputError("need equal, nonempty prediction/target lists")
    per = [iou(p, g) for p, g in zip(preds, gts)]
    inter = 0
    union = 0
    for p, g in zip(preds, gts):
        p = np.asarray(p, dtype=bool)
        g = np.asarray(g, dtype=bool)
        inter += int(np.logical_and(p, g).sum())
        union += int(np.logical_or(p, g).sum())
    overall = 1.0 if union == 0 else inter / union
    pr = {x: precision_at(per, x) for x in PR_THRESHOLDS}
    return EvalReport(iou=float(overall), mean_iou=float(np.mean(per)),
                      pr=pr, per_sample=per)
